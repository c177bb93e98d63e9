#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "expattack/image.hpp"

namespace expattack {

struct SyntheticSpec {
  int num_classes = 5;
  int train_per_class = 300;
  int test_per_class = 60;
  int height = 64;
  int width = 64;
  int channels = 3;

  void validate() const;
  bool operator==(const SyntheticSpec&) const = default;
};

struct SyntheticDataset {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
};

/// One fundus-like image: dark circular field on black, optic disc, vessels,
/// and `label` bright lesion blobs whose radius grows with the label.
Image render_fundus(const SyntheticSpec& spec, int label, std::uint64_t seed);

/// Balanced train/test splits; label = index mod num_classes. Bitwise
/// reproducible for a given seed.
SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed);

/// Number of lesion blobs drawn for `label`.
inline int lesion_count(int label) { return 2 * label; }

}  // namespace expattack

#pragma once

#include <string>
#include <vector>

#include "expattack/image.hpp"

namespace expattack {

/// Reads an 8-bit PNG (gray or RGB; alpha is dropped) or binary PGM/PPM.
/// Intensities are divided by 255.
Image load_image(const std::string& path);

/// Writes an 8-bit PNG, rounding v * 255 to the nearest byte after clamping.
void save_image(const Image& img, const std::string& path);

/// Reads a `filename,label` CSV manifest; paths are relative to the manifest.
std::vector<LabeledSample> load_dataset(const std::string& manifest_path, int num_classes);

/// Writes every sample as `<dir>/<id>` plus `<dir>/manifest.csv`.
void save_dataset(const std::vector<LabeledSample>& samples, const std::string& dir);

}  // namespace expattack

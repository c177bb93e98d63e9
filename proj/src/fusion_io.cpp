#include <cstdint>
#include <fstream>
#include <vector>

#include "binary_io.hpp"
#include "expattack/fusion.hpp"

namespace expattack {

namespace {

constexpr char kMagic[5] = "EXFP";
constexpr std::uint32_t kVersion = 1;

void write_planes(std::ofstream& out, const ImageD& img) {
  for (const auto& p : img.planes())
    for (Eigen::Index i = 0; i < p.size(); ++i) binio::put<float>(out, static_cast<float>(p.data()[i]));
}

ImageD read_planes(std::ifstream& in, int h, int w, int c) {
  ImageD img(h, w, c);
  for (auto& p : img.planes())
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = binio::get<float>(in, "fusion parameters");
  return img;
}

template <typename Band>
void write_common(std::ofstream& out, std::uint32_t kind, int levels, int exposures, int kernel, Band band) {
  binio::put_magic(out, kMagic);
  binio::put<std::uint32_t>(out, kVersion);
  binio::put<std::uint32_t>(out, kind);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(levels));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(exposures));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(kernel));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(levels > 0 ? band(0).channels() : 0));
  for (int l = 0; l < levels; ++l) {
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(band(l).height()));
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(band(l).width()));
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write fusion parameters to " + path);
  return out;
}

}  // namespace

void save_fusion_params(const WeightMaps& w, const std::string& path) {
  auto out = open_out(path);
  write_common(out, 0, w.levels(), w.exposures(), 1, [&](int l) -> const ImageD& { return w.maps[l][0]; });
  for (const auto& level : w.maps)
    for (const auto& m : level) write_planes(out, m);
  if (!out) throw IoError("failed writing " + path);
}

void save_fusion_params(const KernelField& k, const std::string& path) {
  auto out = open_out(path);
  write_common(out, 1, k.levels(), k.exposures(), k.kernel_size,
               [&](int l) -> const ImageD& { return k.taps[l][0][0]; });
  for (const auto& level : k.taps)
    for (const auto& exposure : level)
      for (const auto& tap : exposure) write_planes(out, tap);
  if (!out) throw IoError("failed writing " + path);
}

FusionParamDump load_fusion_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open fusion parameters " + path);
  binio::expect_magic(in, kMagic);
  if (binio::get<std::uint32_t>(in, "version") != kVersion) throw FormatError("unsupported fusion dump version");
  const auto kind = binio::get<std::uint32_t>(in, "kind");
  const auto levels = static_cast<int>(binio::get<std::uint32_t>(in, "levels"));
  const auto exposures = static_cast<int>(binio::get<std::uint32_t>(in, "exposures"));
  const auto kernel = static_cast<int>(binio::get<std::uint32_t>(in, "kernel size"));
  const auto channels = static_cast<int>(binio::get<std::uint32_t>(in, "channels"));
  if (kind > 1 || levels < 1 || levels > 32 || exposures < 1 || kernel < 1 || kernel % 2 == 0 || channels < 1)
    throw FormatError("invalid fusion dump header in " + path);
  if (kind == 0 && kernel != 1) throw FormatError("weight-map dump must have kernel size 1");
  std::vector<std::pair<int, int>> sizes;
  for (int l = 0; l < levels; ++l) {
    const auto h = static_cast<int>(binio::get<std::uint32_t>(in, "band height"));
    const auto w = static_cast<int>(binio::get<std::uint32_t>(in, "band width"));
    sizes.emplace_back(h, w);
  }
  FusionParamDump dump;
  dump.is_kernel_field = kind == 1;
  if (kind == 0) {
    dump.weights.maps.resize(levels);
    for (int l = 0; l < levels; ++l)
      for (int i = 0; i < exposures; ++i)
        dump.weights.maps[l].push_back(read_planes(in, sizes[l].first, sizes[l].second, channels));
  } else {
    dump.kernels.kernel_size = kernel;
    dump.kernels.taps.resize(levels);
    for (int l = 0; l < levels; ++l) {
      dump.kernels.taps[l].resize(exposures);
      for (int i = 0; i < exposures; ++i)
        for (int t = 0; t < kernel * kernel; ++t)
          dump.kernels.taps[l][i].push_back(read_planes(in, sizes[l].first, sizes[l].second, channels));
    }
  }
  if (in.peek() != EOF) throw FormatError("trailing bytes in fusion dump " + path);
  return dump;
}

}  // namespace expattack

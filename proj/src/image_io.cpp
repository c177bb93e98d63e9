#include "expattack/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace expattack {

namespace {

namespace fs = std::filesystem;

Image from_bytes(const std::vector<std::uint8_t>& bytes, int h, int w, int c) {
  Image img(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k)
        img(y, x, k) = static_cast<float>(bytes[(static_cast<std::size_t>(y) * w + x) * c + k]) / 255.0f;
  return img;
}

Image load_png(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw FormatError("cannot decode PNG " + path + ": " + png.message);
  if (png.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&png);
    throw FormatError("unsupported PNG bit depth (only 8-bit) in " + path);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw FormatError("cannot decode PNG " + path + ": " + msg);
  }
  return from_bytes(bytes, static_cast<int>(png.height), static_cast<int>(png.width), channels);
}

// Next whitespace-delimited token of a PNM header, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  while (true) {
    const int ch = in.get();
    if (ch == EOF) break;
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

Image load_pnm(const std::string& path, std::ifstream& in) {
  const std::string magic = pnm_token(in);
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw FormatError("unsupported PNM variant '" + magic + "' in " + path);
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pnm_token(in));
    h = std::stoi(pnm_token(in));
    maxval = std::stoi(pnm_token(in));
  } catch (const std::exception&) {
    throw FormatError("malformed PNM header in " + path);
  }
  if (w <= 0 || h <= 0) throw FormatError("bad PNM dimensions in " + path);
  if (maxval != 255) throw FormatError("unsupported PNM depth (maxval must be 255) in " + path);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw FormatError("truncated PNM data in " + path);
  return from_bytes(bytes, h, w, channels);
}

}  // namespace

Image load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  if (in.gcount() >= 2 && sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6')) {
    in.clear();
    in.seekg(0);
    return load_pnm(path, in);
  }
  if (in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0) {
    in.close();
    return load_png(path);
  }
  throw FormatError("unrecognised image format: " + path);
}

void save_image(const Image& img, const std::string& path) {
  if (img.channels() != 1 && img.channels() != 3) throw DimensionError("save_image needs 1 or 3 channels");
  const int h = img.height();
  const int w = img.width();
  const int c = img.channels();
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(h) * w * c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) {
        const float v = std::clamp(img(y, x, k), 0.0f, 1.0f);
        bytes[(static_cast<std::size_t>(y) * w + x) * c + k] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(w);
  png.height = static_cast<png_uint_32>(h);
  png.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path + ": " + png.message);
}

std::vector<LabeledSample> load_dataset(const std::string& manifest_path, int num_classes) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty manifest " + manifest_path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "filename,label") throw FormatError("manifest header must be 'filename,label'");
  std::vector<LabeledSample> samples;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw FormatError("manifest row without label: " + line);
    LabeledSample s;
    s.id = line.substr(0, comma);
    try {
      s.label = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw FormatError("manifest label is not an integer: " + line);
    }
    if (s.label < 0 || s.label >= num_classes)
      throw FormatError("manifest label out of range: " + line);
    s.image = load_image((base / s.id).string());
    samples.push_back(std::move(s));
  }
  return samples;
}

void save_dataset(const std::vector<LabeledSample>& samples, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir);
  std::ofstream manifest(fs::path(dir) / "manifest.csv");
  if (!manifest) throw IoError("cannot write manifest in " + dir);
  manifest << "filename,label\n";
  for (const auto& s : samples) {
    save_image(s.image, (fs::path(dir) / s.id).string());
    manifest << s.id << ',' << s.label << '\n';
  }
}

}  // namespace expattack

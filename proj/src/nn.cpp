#include "expattack/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"

namespace expattack::nn {

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::A: return "A";
    case Architecture::B: return "B";
    case Architecture::C: return "C";
  }
  throw ConfigError("unknown architecture");
}

Architecture architecture_from_string(const std::string& name) {
  if (name == "A" || name == "a") return Architecture::A;
  if (name == "B" || name == "b") return Architecture::B;
  if (name == "C" || name == "c") return Architecture::C;
  throw ConfigError("unknown architecture '" + name + "' (expected A, B or C)");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be > 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0, 1)");
  if (clip_norm < 0) throw ConfigError("clip norm must be >= 0");
}

Model train(Model model, std::span<const LabeledSample> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ConfigError("training data is empty");
  for (const auto& s : data)
    if (s.label < 0 || s.label >= model.num_classes) throw ConfigError("training label out of range");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Model velocity = model.zeros_like();
  const auto lr = static_cast<float>(cfg.learning_rate);
  const auto mu = static_cast<float>(cfg.momentum);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Model grad = model.zeros_like();
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = data[order[k]];
        model.accumulate_param_gradient(s.image, s.label, grad);
      }
      const float scale = 1.0f / static_cast<float>(end - start);
      // Parameters, velocities and gradients are visited in the same order.
      std::vector<float*> g_ptrs;
      double sq = 0.0;
      grad.for_each_param([&](auto& p) {
        g_ptrs.push_back(p.data());
        sq += static_cast<double>(p.matrix().squaredNorm());
      });
      // Clip the mean-gradient norm; keeps deeper nets from blowing up early on.
      float step = lr * scale;
      const double norm = std::sqrt(sq) * scale;
      if (cfg.clip_norm > 0 && norm > cfg.clip_norm) step *= static_cast<float>(cfg.clip_norm / norm);
      std::vector<float*> v_ptrs;
      velocity.for_each_param([&](auto& p) { v_ptrs.push_back(p.data()); });
      std::size_t idx = 0;
      model.for_each_param([&](auto& p) {
        float* g = g_ptrs[idx];
        float* v = v_ptrs[idx];
        ++idx;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          v[i] = mu * v[i] - step * g[i];
          p.data()[i] += v[i];
        }
      });
    }
  }
  return model;
}

double accuracy(const Model& model, std::span<const LabeledSample> data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : data) hits += model.predict(s.image) == s.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

namespace {

constexpr char kMagic[5] = "EXNN";
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model " + path);
  binio::put_magic(out, kMagic);
  binio::put<std::uint32_t>(out, kVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.architecture));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.input.channels));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.input.height));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.input.width));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.num_classes));
  binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(model.parameter_count()));
  model.for_each_param([&](const auto& p) {
    out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(float)));
  });
  if (!out) throw IoError("failed writing model " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model " + path);
  binio::expect_magic(in, kMagic);
  if (binio::get<std::uint32_t>(in, "version") != kVersion) throw FormatError("unsupported model version");
  const auto arch_id = binio::get<std::uint32_t>(in, "architecture");
  if (arch_id < 1 || arch_id > 3) throw FormatError("unknown architecture id in " + path);
  InputSpec input;
  input.channels = static_cast<int>(binio::get<std::uint32_t>(in, "channels"));
  input.height = static_cast<int>(binio::get<std::uint32_t>(in, "height"));
  input.width = static_cast<int>(binio::get<std::uint32_t>(in, "width"));
  const auto classes = static_cast<int>(binio::get<std::uint32_t>(in, "classes"));
  const auto count = binio::get<std::uint64_t>(in, "parameter count");
  if (input.channels < 1 || input.height < 1 || input.width < 1 || classes < 2 || classes > 1000)
    throw FormatError("invalid model dimensions in " + path);
  Model model = make_classifier<float>(static_cast<Architecture>(arch_id), input, classes, 0);
  if (model.parameter_count() != count) throw FormatError("parameter count does not match architecture in " + path);
  model.for_each_param([&](auto& p) {
    const auto bytes = static_cast<std::streamsize>(p.size() * sizeof(float));
    in.read(reinterpret_cast<char*>(p.data()), bytes);
    if (in.gcount() != bytes) throw FormatError("truncated model file " + path);
  });
  if (in.peek() != EOF) throw FormatError("trailing bytes in model file " + path);
  return model;
}

Model load_model(const std::string& path, Architecture expected) {
  Model m = load_model(path);
  if (m.architecture != expected)
    throw FormatError("model " + path + " holds architecture " + to_string(m.architecture) + ", expected " +
                      to_string(expected));
  return m;
}

}  // namespace expattack::nn

#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "mdcsrn/tensor.hpp"

namespace mdcsrn {

/// Reconstruction head: a single 1x1x1 conv over every feature map
/// ("direct"), or an 8k bottleneck, BN and a 3x3x3 conv ("-r").
enum class ReconHead { kDirect, kBottleneck };

struct GeneratorConfig {
  std::int64_t blocks = 4;
  std::int64_t units = 4;
  std::int64_t growth = 12;
  ReconHead head = ReconHead::kDirect;
  /// A unit gets a 4k bottleneck when its input width is strictly above this.
  /// Unset means 5k.
  std::optional<std::int64_t> bottleneck_threshold;
  std::int64_t in_channels = 1;

  std::int64_t threshold() const { return bottleneck_threshold.value_or(5 * growth); }

  void validate() const {
    if (blocks < 1 || units < 1 || growth < 1 || in_channels < 1)
      throw ConfigError("generator: blocks, units, growth and input channels must all be >= 1");
    if (bottleneck_threshold && *bottleneck_threshold < 0)
      throw ConfigError("generator: bottleneck threshold must be non-negative");
  }

  /// "b4u4k12", "b8u4", "b1u16-r", "b4u4k8-r". k defaults to 12.
  static GeneratorConfig parse(const std::string& name) {
    static const std::regex re(R"(b(\d+)u(\d+)(?:k(\d+))?(-r)?)");
    std::smatch m;
    if (!std::regex_match(name, m, re)) throw ConfigError("generator: cannot parse configuration name '" + name + "'");
    GeneratorConfig c;
    c.blocks = std::stoll(m[1]);
    c.units = std::stoll(m[2]);
    if (m[3].matched) c.growth = std::stoll(m[3]);
    c.head = m[4].matched ? ReconHead::kBottleneck : ReconHead::kDirect;
    c.validate();
    return c;
  }

  std::string name() const {
    return "b" + std::to_string(blocks) + "u" + std::to_string(units) + "k" + std::to_string(growth) +
           (head == ReconHead::kBottleneck ? "-r" : "");
  }
};

namespace gen {

struct ConvSpec {
  std::string name;
  std::int64_t in = 0, out = 0, kernel = 1;
  std::int64_t params() const { return out * in * kernel * kernel * kernel + out; }
};

struct BnSpec {
  std::string name;
  std::int64_t channels = 0;
  std::int64_t params() const { return 2 * channels; }
};

struct UnitSpec {
  std::int64_t in = 0;
  BnSpec bn;
  std::optional<ConvSpec> bottleneck;
  std::optional<BnSpec> bottleneck_bn;
  ConvSpec conv;
};

struct BlockSpec {
  std::optional<ConvSpec> compressor;
  std::vector<UnitSpec> units;
};

}  // namespace gen

/// Layer-by-layer wiring of a generator. This is what the network is built
/// from, so the report and the parameters cannot disagree.
struct Topology {
  GeneratorConfig cfg;
  gen::ConvSpec stem;
  std::vector<gen::BlockSpec> blocks;
  std::int64_t head_in = 0;
  gen::ConvSpec head_first;
  std::optional<gen::BnSpec> head_bn;
  std::optional<gen::ConvSpec> head_second;

  struct Row {
    std::string name, kind;
    std::int64_t in, out, kernel, params;
    bool bottleneck;
  };

  std::vector<Row> rows() const {
    std::vector<Row> r;
    auto conv = [&r](const gen::ConvSpec& c, bool bneck) {
      r.push_back({c.name, "conv", c.in, c.out, c.kernel, c.params(), bneck});
    };
    auto bn = [&r](const gen::BnSpec& b) { r.push_back({b.name, "bn", b.channels, b.channels, 0, b.params(), false}); };
    conv(stem, false);
    for (const auto& b : blocks) {
      if (b.compressor) conv(*b.compressor, false);
      for (const auto& u : b.units) {
        bn(u.bn);
        if (u.bottleneck) {
          conv(*u.bottleneck, true);
          bn(*u.bottleneck_bn);
        }
        conv(u.conv, false);
      }
    }
    conv(head_first, false);
    if (head_bn) bn(*head_bn);
    if (head_second) conv(*head_second, false);
    return r;
  }

  std::int64_t total_params() const {
    std::int64_t n = 0;
    for (const auto& row : rows()) n += row.params;
    return n;
  }

  std::vector<std::int64_t> compressor_inputs() const {
    std::vector<std::int64_t> v;
    for (const auto& b : blocks)
      if (b.compressor) v.push_back(b.compressor->in);
    return v;
  }

  std::string text() const {
    std::ostringstream os;
    os << cfg.name() << "  (bottleneck when input > " << cfg.threshold() << " channels)\n";
    for (const auto& row : rows()) {
      os << "  " << row.name << "  " << row.kind;
      if (row.kind == "conv") os << " " << row.kernel << "x" << row.kernel << "x" << row.kernel;
      os << "  " << row.in << " -> " << row.out << "  params " << row.params;
      if (row.bottleneck) os << "  [bottleneck]";
      os << "\n";
    }
    os << "  head input " << head_in << "\n";
    os << "  total " << total_params() << "\n";
    return os.str();
  }
};

inline Topology describe(const GeneratorConfig& cfg) {
  cfg.validate();
  const std::int64_t k = cfg.growth;
  Topology t;
  t.cfg = cfg;
  t.stem = {"stem", cfg.in_channels, 2 * k, 3};
  std::int64_t acc = 2 * k;
  for (std::int64_t i = 1; i <= cfg.blocks; ++i) {
    const std::string bname = "block" + std::to_string(i);
    gen::BlockSpec b;
    if (i > 1) b.compressor = gen::ConvSpec{bname + ".compress", acc, 2 * k, 1};
    std::int64_t w = 2 * k;
    for (std::int64_t j = 1; j <= cfg.units; ++j) {
      const std::string uname = bname + ".unit" + std::to_string(j);
      gen::UnitSpec u;
      u.in = w;
      u.bn = {uname + ".bn", w};
      std::int64_t c = w;
      if (w > cfg.threshold()) {
        u.bottleneck = gen::ConvSpec{uname + ".bottleneck", w, 4 * k, 1};
        u.bottleneck_bn = gen::BnSpec{uname + ".bottleneck_bn", 4 * k};
        c = 4 * k;
      }
      u.conv = {uname + ".conv", c, k, 3};
      b.units.push_back(u);
      w += k;
    }
    t.blocks.push_back(b);
    acc += cfg.units * k;
  }
  t.head_in = acc;
  if (cfg.head == ReconHead::kDirect) {
    t.head_first = {"head.conv", acc, 1, 1};
  } else {
    t.head_first = {"head.bottleneck", acc, 8 * k, 1};
    t.head_bn = gen::BnSpec{"head.bn", 8 * k};
    t.head_second = gen::ConvSpec{"head.conv", 8 * k, 1, 3};
  }
  return t;
}

/// Closed-form parameter count, independent of describe().
inline std::int64_t count_params(const GeneratorConfig& cfg) {
  cfg.validate();
  const std::int64_t k = cfg.growth, u = cfg.units, b = cfg.blocks;
  std::int64_t n = 27 * cfg.in_channels * 2 * k + 2 * k;
  // compressors of blocks 2..b read 2k + (i-1)uk channels
  for (std::int64_t i = 1; i < b; ++i) n += (2 * k + i * u * k) * 2 * k + 2 * k;
  std::int64_t per_block = 0;
  for (std::int64_t j = 0; j < u; ++j) {
    const std::int64_t w = 2 * k + j * k;
    per_block += 2 * w;
    if (w > cfg.threshold())
      per_block += w * 4 * k + 4 * k + 8 * k + 27 * 4 * k * k + k;
    else
      per_block += 27 * w * k + k;
  }
  n += b * per_block;
  const std::int64_t acc = 2 * k + b * u * k;
  if (cfg.head == ReconHead::kDirect)
    n += acc + 1;
  else
    n += acc * 8 * k + 8 * k + 16 * k + 27 * 8 * k + 1;
  return n;
}

/// The mDCSRN generator: densely connected blocks of pre-activation units,
/// no upsampling, output the same size as the input.
template <typename T>
class Generator {
 public:
  explicit Generator(const GeneratorConfig& cfg, std::uint64_t seed = 0) : topo_(describe(cfg)) {
    std::mt19937_64 rng(seed);
    auto conv = [&](const gen::ConvSpec& c) {
      const std::int64_t fan_in = c.in * c.kernel * c.kernel * c.kernel;
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      Tensor<T> w = Tensor<T>::empty({c.out, c.in, c.kernel, c.kernel, c.kernel});
      for (auto& v : w.mutable_data()) v = static_cast<T>(u(rng));
      params_.add(c.name + ".w", w);
      params_.add(c.name + ".b", Tensor<T>::zeros({c.out}));
    };
    auto bn = [&](const gen::BnSpec& b) {
      params_.add(b.name + ".scale", Tensor<T>::ones({b.channels}));
      params_.add(b.name + ".shift", Tensor<T>::zeros({b.channels}));
      bn_.emplace(b.name, BatchNormState<T>(b.channels));
    };
    conv(topo_.stem);
    for (const auto& b : topo_.blocks) {
      if (b.compressor) conv(*b.compressor);
      for (const auto& u : b.units) {
        bn(u.bn);
        if (u.bottleneck) {
          conv(*u.bottleneck);
          bn(*u.bottleneck_bn);
        }
        conv(u.conv);
      }
    }
    conv(topo_.head_first);
    if (topo_.head_bn) bn(*topo_.head_bn);
    if (topo_.head_second) conv(*topo_.head_second);
  }

  const GeneratorConfig& config() const { return topo_.cfg; }
  const Topology& topology() const { return topo_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  std::map<std::string, BatchNormState<T>>& bn_states() { return bn_; }
  const std::map<std::string, BatchNormState<T>>& bn_states() const { return bn_; }

  /// x: [B, Cin, D, H, W] with every spatial extent >= 3. Train mode uses
  /// batch statistics and updates the running ones.
  Tensor<T> forward(const Tensor<T>& x, BnMode mode) {
    if (x.rank() != 5) throw ShapeError("generator: input must be [B,C,D,H,W], got " + to_string(x.shape()));
    if (x.dim(1) != topo_.cfg.in_channels)
      throw ShapeError("generator: expected " + std::to_string(topo_.cfg.in_channels) + " input channels, got " +
                       std::to_string(x.dim(1)));
    for (int a = 2; a < 5; ++a)
      if (x.dim(a) < 3) throw ShapeError("generator: spatial extent below kernel support in " + to_string(x.shape()));

    Tensor<T> stem = conv(topo_.stem, x);
    std::vector<Tensor<T>> features{stem};
    for (const auto& b : topo_.blocks) {
      Tensor<T> block_in = b.compressor ? conv(*b.compressor, concat_channels(features)) : stem;
      std::vector<Tensor<T>> local{block_in};
      for (const auto& u : b.units) {
        Tensor<T> h = local.size() == 1 ? local[0] : concat_channels(local);
        h = elu(norm(u.bn, h, mode));
        if (u.bottleneck) h = elu(norm(*u.bottleneck_bn, conv(*u.bottleneck, h), mode));
        Tensor<T> out = conv(u.conv, h);
        local.push_back(out);
        features.push_back(out);
      }
    }
    Tensor<T> y = conv(topo_.head_first, concat_channels(features));
    if (topo_.head_bn) y = conv(*topo_.head_second, norm(*topo_.head_bn, y, mode));
    return y;
  }

 private:
  Tensor<T> conv(const gen::ConvSpec& c, const Tensor<T>& x) {
    return conv3d(x, params_.at(c.name + ".w"), params_.at(c.name + ".b"));
  }
  Tensor<T> norm(const gen::BnSpec& b, const Tensor<T>& x, BnMode mode) {
    return batch_norm3d(x, params_.at(b.name + ".scale"), params_.at(b.name + ".shift"), bn_.at(b.name), mode);
  }

  Topology topo_;
  ParameterSet<T> params_;
  std::map<std::string, BatchNormState<T>> bn_;
};

}  // namespace mdcsrn

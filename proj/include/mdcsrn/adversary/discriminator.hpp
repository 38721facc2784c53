#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mdcsrn/tensor.hpp"

namespace mdcsrn {

/// SRGAN-style critic adapted to 3-D: conv stages whose width doubles every
/// second stage and which downsample (stride 2) on every second stage, layer
/// norm instead of batch norm, then two dense layers down to one unbounded
/// score per sample.
struct DiscriminatorConfig {
  std::int64_t base_width = 64;
  std::int64_t stages = 8;
  std::int64_t head_width = 1024;
  Index3 patch{40, 40, 40};
  double slope = 0.2;
  /// When the stride chain would shrink the patch below 3 voxels, drop the
  /// remaining stages (with a warning) instead of rejecting the config.
  bool allow_truncation = false;

  void validate() const {
    if (base_width < 1 || stages < 1 || head_width < 1)
      throw ConfigError("discriminator: widths and stage count must be >= 1");
    for (auto p : patch)
      if (p < 3) throw ConfigError("discriminator: patch extents must be >= 3");
    if (!(slope >= 0 && slope < 1)) throw ConfigError("discriminator: leaky slope must be in [0, 1)");
  }
};

namespace disc {

struct Stage {
  std::int64_t in, out, stride;
  bool norm;
  Index3 out_size;
};

inline std::int64_t strided(std::int64_t n, std::int64_t stride) { return (n - 1) / stride + 1; }

/// Stage list for a config; throws or truncates when the patch runs out.
inline std::vector<Stage> plan(const DiscriminatorConfig& cfg, std::vector<std::string>* warnings = nullptr) {
  cfg.validate();
  std::vector<Stage> st;
  Index3 size = cfg.patch;
  std::int64_t in = 1;
  for (std::int64_t s = 0; s < cfg.stages; ++s) {
    const std::int64_t stride = s % 2 == 1 ? 2 : 1;
    Index3 next = size;
    for (auto& n : next) n = strided(n, stride);
    if (next[0] < 3 || next[1] < 3 || next[2] < 3) {
      const std::string msg = "discriminator: patch " + to_string(Shape(cfg.patch.begin(), cfg.patch.end())) +
                              " is too small for stage " + std::to_string(s + 1) + " of " +
                              std::to_string(cfg.stages) + " (would reach " +
                              to_string(Shape(next.begin(), next.end())) + ")";
      if (!cfg.allow_truncation) throw ConfigError(msg);
      if (warnings) warnings->push_back(msg + "; keeping " + std::to_string(s) + " stages");
      break;
    }
    const std::int64_t out = cfg.base_width << (s / 2);
    st.push_back({in, out, stride, s > 0, next});
    in = out;
    size = next;
  }
  return st;
}

}  // namespace disc

template <typename T>
class Discriminator {
 public:
  explicit Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed = 0)
      : cfg_(cfg), stages_(disc::plan(cfg, &warnings_)) {
    std::mt19937_64 rng(seed);
    auto uniform = [&rng](Shape shape, std::int64_t fan_in) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      Tensor<T> t = Tensor<T>::empty(std::move(shape));
      for (auto& v : t.mutable_data()) v = static_cast<T>(u(rng));
      return t;
    };
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      const auto& st = stages_[s];
      const std::string n = "stage" + std::to_string(s + 1);
      params_.add(n + ".w", uniform({st.out, st.in, 3, 3, 3}, st.in * 27));
      params_.add(n + ".b", Tensor<T>::zeros({st.out}));
      if (st.norm) {
        params_.add(n + ".ln.scale", Tensor<T>::ones({st.out}));
        params_.add(n + ".ln.shift", Tensor<T>::zeros({st.out}));
      }
    }
    const auto& last = stages_.back();
    flat_ = last.out * last.out_size[0] * last.out_size[1] * last.out_size[2];
    params_.add("dense1.w", uniform({cfg.head_width, flat_}, flat_));
    params_.add("dense1.b", Tensor<T>::zeros({cfg.head_width}));
    params_.add("dense2.w", uniform({1, cfg.head_width}, cfg.head_width));
    params_.add("dense2.b", Tensor<T>::zeros({1}));
  }

  const DiscriminatorConfig& config() const { return cfg_; }
  const std::vector<disc::Stage>& stages() const { return stages_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  /// Operation sequence, for architecture assertions.
  std::vector<std::string> ops() const {
    std::vector<std::string> o;
    for (const auto& st : stages_) {
      o.push_back(st.stride == 2 ? "conv3x3x3/2" : "conv3x3x3");
      if (st.norm) o.push_back("layer_norm");
      o.push_back("leaky_relu");
    }
    o.insert(o.end(), {"flatten", "dense", "leaky_relu", "dense"});
    return o;
  }

  /// x: [B, 1, D, H, W] at the configured patch size -> [B] scores.
  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.rank() != 5 || x.dim(1) != 1 || x.dim(2) != cfg_.patch[0] || x.dim(3) != cfg_.patch[1] ||
        x.dim(4) != cfg_.patch[2])
      throw ShapeError("discriminator: expected [B,1," + std::to_string(cfg_.patch[0]) + "," +
                       std::to_string(cfg_.patch[1]) + "," + std::to_string(cfg_.patch[2]) + "], got " +
                       to_string(x.shape()));
    const T slope = static_cast<T>(cfg_.slope);
    Tensor<T> h = x;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      const std::string n = "stage" + std::to_string(s + 1);
      Conv3dOptions opt;
      opt.stride = {stages_[s].stride, stages_[s].stride, stages_[s].stride};
      h = conv3d(h, params_.at(n + ".w"), params_.at(n + ".b"), opt);
      if (stages_[s].norm) h = layer_norm(h, params_.at(n + ".ln.scale"), params_.at(n + ".ln.shift"));
      h = leaky_relu(h, slope);
    }
    h = reshape(h, {x.dim(0), flat_});
    h = leaky_relu(linear(h, params_.at("dense1.w"), params_.at("dense1.b")), slope);
    h = linear(h, params_.at("dense2.w"), params_.at("dense2.b"));
    return reshape(h, {x.dim(0)});
  }

 private:
  DiscriminatorConfig cfg_;
  std::vector<std::string> warnings_;
  std::vector<disc::Stage> stages_;
  ParameterSet<T> params_;
  std::int64_t flat_ = 0;
};

}  // namespace mdcsrn

#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdcsrn/adversary/discriminator.hpp"
#include "mdcsrn/harness/io.hpp"
#include "mdcsrn/model/generator.hpp"

namespace mdcsrn {

/// One named array. Values are held as double in memory; `dtype` says how
/// they are stored, and float -> double -> float is exact, so round trips are
/// bit-identical.
struct Blob {
  std::vector<std::int64_t> shape;
  std::string dtype = "float32";
  std::vector<double> values;
};

// File layout: "MDCKPT <version>\n", the byte length of a JSON header on its
// own line, the JSON header (metadata plus the ordered blob directory), then
// each blob's values as little-endian scalars in directory order.
struct Checkpoint {
  static constexpr int kVersion = 1;

  int version = kVersion;
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Blob> blobs;

  template <typename T>
  void put(const std::string& name, std::vector<std::int64_t> shape, const T* data, std::size_t n) {
    Blob b{std::move(shape), std::is_same_v<T, double> ? "float64" : "float32", std::vector<double>(data, data + n)};
    blobs[name] = std::move(b);
  }
  const Blob& get(const std::string& name) const {
    auto it = blobs.find(name);
    if (it == blobs.end()) throw ConfigError("checkpoint has no entry '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return blobs.count(name) != 0; }

  void save(const std::string& path) const {
    nlohmann::json head = meta;
    head["__blobs"] = nlohmann::json::array();
    for (const auto& [name, b] : blobs) head["__blobs"].push_back({{"name", name}, {"shape", b.shape}, {"dtype", b.dtype}, {"n", b.values.size()}});
    const std::string text = head.dump();
    io::write_atomically(path, [&](std::ofstream& f) {
      f << "MDCKPT " << version << '\n' << text.size() << '\n' << text;
      for (const auto& [name, b] : blobs) {
        if (b.dtype == "float64") {
          io::write_le(f, b.values.data(), b.values.size());
        } else {
          std::vector<float> v(b.values.begin(), b.values.end());
          io::write_le(f, v.data(), v.size());
        }
      }
    });
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read checkpoint " + path);
    std::string magic;
    int version = 0;
    std::size_t len = 0;
    f >> magic >> version >> len;
    if (magic != "MDCKPT") throw IoError(path + ": not a checkpoint");
    if (version != kVersion)
      throw IoError(path + ": checkpoint version " + std::to_string(version) + ", this build reads " +
                    std::to_string(kVersion));
    f.get();
    std::string text(len, '\0');
    f.read(text.data(), static_cast<std::streamsize>(len));
    if (f.gcount() != static_cast<std::streamsize>(len)) throw IoError(path + ": truncated header");
    Checkpoint c;
    c.version = version;
    try {
      c.meta = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ": " + e.what());
    }
    const auto dir = c.meta.at("__blobs");
    c.meta.erase("__blobs");
    for (const auto& d : dir) {
      Blob b;
      b.shape = d.at("shape").get<std::vector<std::int64_t>>();
      b.dtype = d.at("dtype").get<std::string>();
      const auto n = d.at("n").get<std::size_t>();
      if (b.dtype == "float64") {
        b.values.resize(n);
        io::read_le(f, b.values.data(), n);
        if (f.gcount() != static_cast<std::streamsize>(n * 8)) throw IoError(path + ": truncated blob");
      } else if (b.dtype == "float32") {
        std::vector<float> v(n);
        io::read_le(f, v.data(), n);
        if (f.gcount() != static_cast<std::streamsize>(n * 4)) throw IoError(path + ": truncated blob");
        b.values.assign(v.begin(), v.end());
      } else {
        throw IoError(path + ": unknown dtype " + b.dtype);
      }
      c.blobs[d.at("name").get<std::string>()] = std::move(b);
    }
    return c;
  }
};

namespace ckpt {

inline nlohmann::json to_json(const GeneratorConfig& c) {
  return {{"blocks", c.blocks},
          {"units", c.units},
          {"growth", c.growth},
          {"head", c.head == ReconHead::kBottleneck ? "r" : "direct"},
          {"threshold", c.threshold()},
          {"in_channels", c.in_channels}};
}

inline GeneratorConfig generator_config(const nlohmann::json& j) {
  GeneratorConfig c;
  c.blocks = j.at("blocks");
  c.units = j.at("units");
  c.growth = j.at("growth");
  c.head = j.at("head") == "r" ? ReconHead::kBottleneck : ReconHead::kDirect;
  c.bottleneck_threshold = j.at("threshold").get<std::int64_t>();
  c.in_channels = j.at("in_channels");
  c.validate();
  return c;
}

inline nlohmann::json to_json(const DiscriminatorConfig& c) {
  return {{"base_width", c.base_width}, {"stages", c.stages},   {"head_width", c.head_width},
          {"patch", c.patch},           {"slope", c.slope},     {"allow_truncation", c.allow_truncation}};
}

inline DiscriminatorConfig discriminator_config(const nlohmann::json& j) {
  DiscriminatorConfig c;
  c.base_width = j.at("base_width");
  c.stages = j.at("stages");
  c.head_width = j.at("head_width");
  c.patch = j.at("patch").get<Index3>();
  c.slope = j.at("slope");
  c.allow_truncation = j.at("allow_truncation");
  return c;
}

template <typename T>
void put_params(Checkpoint& c, const std::string& prefix, const ParameterSet<T>& ps) {
  for (const auto& p : ps.items()) {
    auto d = p.tensor.data();
    c.put(prefix + p.name, p.tensor.shape(), d.data(), d.size());
  }
}

template <typename T>
void get_params(const Checkpoint& c, const std::string& prefix, ParameterSet<T>& ps) {
  for (auto& p : ps.items()) {
    const Blob& b = c.get(prefix + p.name);
    if (b.shape != p.tensor.shape())
      throw ShapeError("checkpoint entry '" + prefix + p.name + "' has shape " + to_string(b.shape) + ", model expects " +
                       to_string(p.tensor.shape()));
    auto w = p.tensor.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(b.values[i]);
  }
}

template <typename T>
void put_adam(Checkpoint& c, const std::string& prefix, const Adam<T>& opt) {
  for (const auto& [name, st] : opt.states()) {
    c.put(prefix + name + "/m", {static_cast<std::int64_t>(st.m.size())}, st.m.data(), st.m.size());
    c.put(prefix + name + "/v", {static_cast<std::int64_t>(st.v.size())}, st.v.data(), st.v.size());
    const double step = static_cast<double>(st.step);
    c.put(prefix + name + "/step", {1}, &step, 1);
  }
}

template <typename T>
void get_adam(const Checkpoint& c, const std::string& prefix, Adam<T>& opt) {
  opt.states().clear();
  for (const auto& [key, blob] : c.blobs) {
    if (key.rfind(prefix, 0) != 0 || key.size() < prefix.size() + 5 || key.compare(key.size() - 5, 5, "/step") != 0)
      continue;
    const std::string name = key.substr(prefix.size(), key.size() - prefix.size() - 5);
    AdamState<T> st;
    const auto& m = c.get(prefix + name + "/m").values;
    const auto& v = c.get(prefix + name + "/v").values;
    st.m.assign(m.begin(), m.end());
    st.v.assign(v.begin(), v.end());
    st.step = static_cast<std::int64_t>(blob.values.at(0));
    opt.states()[name] = std::move(st);
  }
}

}  // namespace ckpt

template <typename T>
void store_generator(Checkpoint& c, const Generator<T>& g) {
  c.meta["generator"] = ckpt::to_json(g.config());
  ckpt::put_params(c, "G/", g.params());
  for (const auto& [name, st] : g.bn_states()) {
    c.put("G.bn/" + name + "/mean", {static_cast<std::int64_t>(st.running_mean.size())}, st.running_mean.data(),
          st.running_mean.size());
    c.put("G.bn/" + name + "/var", {static_cast<std::int64_t>(st.running_var.size())}, st.running_var.data(),
          st.running_var.size());
  }
}

/// Builds a generator with the stored configuration and weights.
template <typename T>
Generator<T> restore_generator(const Checkpoint& c) {
  if (!c.meta.contains("generator")) throw ConfigError("checkpoint holds no generator");
  Generator<T> g(ckpt::generator_config(c.meta.at("generator")));
  ckpt::get_params(c, "G/", g.params());
  for (auto& [name, st] : g.bn_states()) {
    const auto& m = c.get("G.bn/" + name + "/mean").values;
    const auto& v = c.get("G.bn/" + name + "/var").values;
    if (m.size() != st.running_mean.size()) throw ShapeError("checkpoint: BN state size mismatch for " + name);
    st.running_mean.assign(m.begin(), m.end());
    st.running_var.assign(v.begin(), v.end());
  }
  return g;
}

template <typename T>
void store_discriminator(Checkpoint& c, const Discriminator<T>& d) {
  c.meta["discriminator"] = ckpt::to_json(d.config());
  ckpt::put_params(c, "D/", d.params());
}

template <typename T>
Discriminator<T> restore_discriminator(const Checkpoint& c) {
  if (!c.meta.contains("discriminator")) throw ConfigError("checkpoint holds no discriminator");
  Discriminator<T> d(ckpt::discriminator_config(c.meta.at("discriminator")));
  ckpt::get_params(c, "D/", d.params());
  return d;
}

}  // namespace mdcsrn

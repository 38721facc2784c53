#pragma once

#include <cstring>
#include <sstream>

#include "mdcsrn/degrade/volume.hpp"
#include "mdcsrn/harness/io.hpp"

namespace mdcsrn {

// File layout: a text header of `key values` lines
//
//   MDVOL 1
//   shape D H W
//   spacing sd sh sw
//   phase_axes 0 1 1
//   dtype float32 | float64
//   scale s
//   end
//
// followed immediately (after the newline that ends "end") by D*H*W
// little-endian scalars in D-major order. Stored values times `scale` give
// the intensities.

template <typename T>
void write_volume(const std::string& path, const Volume<T>& v) {
  v.validate();
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  io::write_atomically(path, [&](std::ofstream& f) {
    char buf[160];
    f << "MDVOL 1\n";
    f << "shape " << v.shape[0] << ' ' << v.shape[1] << ' ' << v.shape[2] << '\n';
    std::snprintf(buf, sizeof buf, "spacing %.17g %.17g %.17g\n", v.spacing[0], v.spacing[1], v.spacing[2]);
    f << buf;
    f << "phase_axes " << v.phase_axes[0] << ' ' << v.phase_axes[1] << ' ' << v.phase_axes[2] << '\n';
    f << "dtype " << (std::is_same_v<T, float> ? "float32" : "float64") << '\n';
    f << "scale 1\nend\n";
    io::write_le(f, v.data.data(), v.data.size());
  });
}

namespace volume_io {

template <typename S, typename T>
void read_payload(std::istream& in, Volume<T>& v, double scale, const std::string& path) {
  std::vector<S> raw(v.data.size());
  io::read_le(in, raw.data(), raw.size());
  if (in.gcount() != static_cast<std::streamsize>(raw.size() * sizeof(S)))
    throw IoError(path + ": truncated payload");
  for (std::size_t i = 0; i < raw.size(); ++i)
    v.data[i] = static_cast<T>(scale == 1.0 ? static_cast<double>(raw[i]) : static_cast<double>(raw[i]) * scale);
}

}  // namespace volume_io

template <typename T = float>
Volume<T> read_volume(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read volume file " + path);
  std::string line;
  if (!std::getline(f, line) || line != "MDVOL 1") throw IoError(path + ": not an MDVOL 1 file");
  Volume<T> v;
  std::string dtype;
  double scale = 1.0;
  bool have_shape = false;
  while (true) {
    if (!std::getline(f, line)) throw IoError(path + ": header ends without 'end'");
    if (line == "end") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "shape") {
      ls >> v.shape[0] >> v.shape[1] >> v.shape[2];
      have_shape = true;
    } else if (key == "spacing") {
      ls >> v.spacing[0] >> v.spacing[1] >> v.spacing[2];
    } else if (key == "phase_axes") {
      int a, b, c;
      ls >> a >> b >> c;
      v.phase_axes = {a != 0, b != 0, c != 0};
    } else if (key == "dtype") {
      ls >> dtype;
    } else if (key == "scale") {
      ls >> scale;
    } else {
      throw IoError(path + ": unknown header key '" + key + "'");
    }
    if (ls.fail()) throw IoError(path + ": malformed header line '" + line + "'");
  }
  if (!have_shape) throw IoError(path + ": header has no shape");
  for (auto n : v.shape)
    if (n < 1) throw IoError(path + ": invalid shape " + to_string(v.shape));
  v.data.assign(static_cast<std::size_t>(voxels(v.shape)), T(0));
  if (dtype == "float32")
    volume_io::read_payload<float>(f, v, scale, path);
  else if (dtype == "float64")
    volume_io::read_payload<double>(f, v, scale, path);
  else
    throw IoError(path + ": unsupported dtype '" + dtype + "'");
  if (f.peek() != std::char_traits<char>::eof()) throw IoError(path + ": trailing bytes after payload");
  try {
    v.validate();
  } catch (const std::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return v;
}

}  // namespace mdcsrn

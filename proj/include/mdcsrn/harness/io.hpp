#pragma once

#include <algorithm>
#include <bit>
#include <cstring>
#include <ostream>
#include <istream>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "mdcsrn/tensor/error.hpp"

namespace mdcsrn::io {

/// Writes through `path + ".tmp"` and renames over the target, so readers
/// never see a half-written file and a failed write leaves the old one intact.
template <typename Writer>
void write_atomically(const std::string& path, Writer&& write) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp + " for writing");
    write(f);
    f.flush();
    if (!f) {
      f.close();
      std::remove(tmp.c_str());
      throw IoError("write failed for " + path + " (disk full?)");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
  }
}

template <typename T>
void write_le(std::ostream& out, const T* data, std::size_t n) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      char b[sizeof(T)];
      std::memcpy(b, data + i, sizeof(T));
      for (std::size_t k = 0; k < sizeof(T); ++k) out.put(b[sizeof(T) - 1 - k]);
    }
  }
}

template <typename T>
void read_le(std::istream& in, T* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < n; ++i) {
      char* b = reinterpret_cast<char*>(data + i);
      std::reverse(b, b + sizeof(T));
    }
  }
}

}  // namespace mdcsrn::io

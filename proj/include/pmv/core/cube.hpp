#pragma once

// Raw beat-sample container and its "RDC1" binary encoding.
//
// Layout (little-endian):
//   "RDC1" | u16 version=1 | u32 frames, subframes, chirps, rx, samples | f32 I, f32 Q ...
// Samples are ordered frame -> subframe -> chirp -> rx -> sample.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>
#include <vector>

#include "pmv/core/constants.hpp"
#include "pmv/core/error.hpp"

namespace pmv {

struct CubeDims {
  std::uint32_t frames = 0;
  std::uint32_t subframes = 0;
  std::uint32_t chirps = 0;
  std::uint32_t rx = 0;
  std::uint32_t samples = 0;

  std::size_t total() const {
    return static_cast<std::size_t>(frames) * subframes * chirps * rx * samples;
  }
  bool operator==(const CubeDims&) const = default;
};

struct CubeIndex {
  std::uint32_t frame = 0, subframe = 0, chirp = 0, rx = 0, sample = 0;
  bool operator==(const CubeIndex&) const = default;
};

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
};

class RadarDataCube {
 public:
  RadarDataCube() = default;
  explicit RadarDataCube(CubeDims dims) : dims_(dims), data_(dims.total(), cf{}) {}
  RadarDataCube(CubeDims dims, std::vector<cf> data) : dims_(dims), data_(std::move(data)) {
    if (data_.size() != dims_.total())
      throw DimensionError("cube payload has " + std::to_string(data_.size()) +
                           " samples, dims require " + std::to_string(dims_.total()));
  }

  const CubeDims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }

  std::size_t offset(std::uint32_t f, std::uint32_t s, std::uint32_t c, std::uint32_t r,
                     std::uint32_t k) const {
    return (((static_cast<std::size_t>(f) * dims_.subframes + s) * dims_.chirps + c) * dims_.rx +
            r) * dims_.samples + k;
  }
  std::size_t offset(const CubeIndex& i) const {
    return offset(i.frame, i.subframe, i.chirp, i.rx, i.sample);
  }
  CubeIndex index_of(std::size_t off) const {
    CubeIndex i;
    i.sample = static_cast<std::uint32_t>(off % dims_.samples);
    off /= dims_.samples;
    i.rx = static_cast<std::uint32_t>(off % dims_.rx);
    off /= dims_.rx;
    i.chirp = static_cast<std::uint32_t>(off % dims_.chirps);
    off /= dims_.chirps;
    i.subframe = static_cast<std::uint32_t>(off % dims_.subframes);
    i.frame = static_cast<std::uint32_t>(off / dims_.subframes);
    return i;
  }

  cf& at(std::uint32_t f, std::uint32_t s, std::uint32_t c, std::uint32_t r, std::uint32_t k) {
    return data_[offset(f, s, c, r, k)];
  }
  const cf& at(std::uint32_t f, std::uint32_t s, std::uint32_t c, std::uint32_t r,
               std::uint32_t k) const {
    return data_[offset(f, s, c, r, k)];
  }

  /// The N_s samples of one chirp on one receiver.
  const cf* chirp_ptr(std::uint32_t f, std::uint32_t s, std::uint32_t c, std::uint32_t r) const {
    return data_.data() + offset(f, s, c, r, 0);
  }
  cf* chirp_ptr(std::uint32_t f, std::uint32_t s, std::uint32_t c, std::uint32_t r) {
    return data_.data() + offset(f, s, c, r, 0);
  }

  const std::vector<cf>& data() const { return data_; }
  std::vector<cf>& data() { return data_; }

  Provenance provenance;

  bool all_finite() const {
    for (const auto& z : data_)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
  }

 private:
  CubeDims dims_;
  std::vector<cf> data_;
};

inline constexpr std::array<char, 4> kCubeMagic{'R', 'D', 'C', '1'};
inline constexpr std::uint16_t kCubeVersion = 1;
inline constexpr std::size_t kCubeHeaderBytes = 4 + 2 + 5 * 4;

namespace detail {

template <typename T>
void put_le(std::vector<char>& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace detail

inline std::vector<char> encode_cube(const RadarDataCube& cube) {
  std::vector<char> out;
  out.reserve(kCubeHeaderBytes + cube.size() * 8);
  out.insert(out.end(), kCubeMagic.begin(), kCubeMagic.end());
  detail::put_le(out, kCubeVersion);
  const auto& d = cube.dims();
  for (std::uint32_t v : {d.frames, d.subframes, d.chirps, d.rx, d.samples}) detail::put_le(out, v);
  if constexpr (std::endian::native == std::endian::little) {
    const char* p = reinterpret_cast<const char*>(cube.data().data());
    out.insert(out.end(), p, p + cube.size() * sizeof(cf));
  } else {
    for (const auto& z : cube.data()) {
      detail::put_le(out, z.real());
      detail::put_le(out, z.imag());
    }
  }
  return out;
}

/// Writes the cube and returns the number of bytes emitted.
inline std::size_t write_cube(const RadarDataCube& cube, std::ostream& sink) {
  const auto bytes = encode_cube(cube);
  sink.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw Error("write_cube: stream write failed");
  return bytes.size();
}

inline RadarDataCube decode_cube(const char* p, std::size_t n) {
  if (n < 4) throw FormatError(n, "truncated magic: expected 4 bytes, got " + std::to_string(n));
  if (std::memcmp(p, kCubeMagic.data(), 4) != 0) throw FormatError(0, "bad magic, expected RDC1");
  if (n < 6) throw FormatError(n, "truncated version field");
  const auto version = detail::get_le<std::uint16_t>(p + 4);
  if (version != kCubeVersion)
    throw FormatError(4, "unsupported version " + std::to_string(version));
  if (n < kCubeHeaderBytes)
    throw FormatError(n, "truncated header: expected " + std::to_string(kCubeHeaderBytes) +
                             " bytes, got " + std::to_string(n));
  CubeDims d;
  d.frames = detail::get_le<std::uint32_t>(p + 6);
  d.subframes = detail::get_le<std::uint32_t>(p + 10);
  d.chirps = detail::get_le<std::uint32_t>(p + 14);
  d.rx = detail::get_le<std::uint32_t>(p + 18);
  d.samples = detail::get_le<std::uint32_t>(p + 22);
  const std::size_t expected = kCubeHeaderBytes + d.total() * 8;
  if (n != expected)
    throw FormatError(std::min(n, expected),
                      (n < expected ? "truncated payload" : "trailing bytes") +
                          std::string(": expected ") + std::to_string(expected) +
                          " bytes, got " + std::to_string(n));
  std::vector<cf> data(d.total());
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(data.data(), p + kCubeHeaderBytes, d.total() * sizeof(cf));
  } else {
    for (std::size_t i = 0; i < data.size(); ++i)
      data[i] = {detail::get_le<float>(p + kCubeHeaderBytes + 8 * i),
                 detail::get_le<float>(p + kCubeHeaderBytes + 8 * i + 4)};
  }
  RadarDataCube cube(d, std::move(data));
  if (!cube.all_finite()) throw FormatError(kCubeHeaderBytes, "non-finite sample in payload");
  return cube;
}

inline RadarDataCube read_cube(std::istream& source) {
  std::vector<char> bytes((std::istreambuf_iterator<char>(source)),
                          std::istreambuf_iterator<char>());
  return decode_cube(bytes.data(), bytes.size());
}

inline RadarDataCube read_cube_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open cube file " + path);
  return read_cube(in);
}

}  // namespace pmv

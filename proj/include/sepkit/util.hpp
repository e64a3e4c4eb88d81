// sepkit/util.hpp

// Copyright 2026  sepkit authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SEPKIT_UTIL_HPP_
#define SEPKIT_UTIL_HPP_

#include <bit>
#include <cmath>
#include <utility>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace sepkit {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

/// Every recoverable failure in the library is reported with this type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown for bad user input (missing files, malformed CSV); the CLI maps it
/// to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

// Deterministic generator: SplitMix64 seeding a xoshiro256** core. Unlike the
// std distributions, the mapping to doubles is fixed, so results are
// identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t z = seed;
    for (auto &s : state_) s = SplitMix(z);
  }

  uint64_t NextU64() {
    const uint64_t result = Rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = Rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double Uniform() { return static_cast<double>(NextU64() >> 11) * 0x1.0p-53; }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Uniform integer in [0, n).
  uint64_t Below(uint64_t n) {
    if (n == 0) throw Error("Rng::Below: empty range");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do { x = NextU64(); } while (x >= limit);
    return x % n;
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  // Box-Muller; one value per call keeps the stream position predictable.
  double Normal() {
    double u1 = Uniform();
    while (u1 <= 0.0) u1 = Uniform();
    const double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <class T>
  void Shuffle(std::vector<T> &v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(Below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t Rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  static uint64_t SplitMix(uint64_t &z) {
    uint64_t r = (z += 0x9e3779b97f4a7c15ULL);
    r = (r ^ (r >> 30)) * 0xbf58476d1ce4e5b9ULL;
    r = (r ^ (r >> 27)) * 0x94d049bb133111ebULL;
    return r ^ (r >> 31);
  }
  uint64_t state_[4];
};

// ---------------------------------------------------------------------------
// Little-endian binary helpers.

template <class T>
void WritePod(std::ostream &os, T value) {
  os.write(reinterpret_cast<const char *>(&value), sizeof(T));
}

template <class T>
T ReadPod(std::istream &is, const char *what) {
  T value{};
  is.read(reinterpret_cast<char *>(&value), sizeof(T));
  if (!is) throw InputError(std::string("truncated file while reading ") + what);
  return value;
}

// ---------------------------------------------------------------------------
// CSV. Fields in our formats never contain commas or quotes, so a plain split
// is sufficient; quoted fields are rejected rather than misparsed.

inline std::vector<std::string> SplitCsvLine(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    std::string_view f = line.substr(start, comma == std::string_view::npos
                                                ? std::string_view::npos
                                                : comma - start);
    if (f.find('"') != std::string_view::npos)
      throw InputError("quoted CSV fields are not supported: " + std::string(line));
    fields.emplace_back(f);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<size_t> line_numbers;

  // Index of a header column, or throws naming the file.
  size_t Column(const std::string &name, const std::string &source) const {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw InputError(source + ": missing column '" + name + "'");
  }
  bool HasColumn(const std::string &name) const {
    for (const auto &h : header)
      if (h == name) return true;
    return false;
  }
};

inline CsvTable ReadCsv(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  CsvTable table;
  std::string line;
  size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty() || line == "\r") continue;
    auto fields = SplitCsvLine(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size())
      throw InputError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(table.header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(lineno);
  }
  if (!have_header) throw InputError(path + ": missing header row");
  return table;
}

template <class T>
T ParseNumber(std::string_view s, const std::string &context) {
  T value{};
  const char *end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw InputError(context + ": cannot parse number '" + std::string(s) + "'");
  return value;
}

// Shortest representation that round-trips exactly.
inline std::string FormatDouble(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

inline std::string FormatFixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

inline void WriteTextFile(const std::string &path, const std::string &contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << contents;
  if (!out) throw Error("write failed: " + path);
}

inline std::string ReadTextFile(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Training allocates and frees matrices of tens of megabytes per batch.
// glibc serves those with fresh mmap()s, so every batch pays for page faults
// on memory it just released. Keeping them on the heap avoids that. Call once
// at program start; a no-op elsewhere.
inline void KeepLargeAllocationsOnHeap() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace sepkit

#endif  // SEPKIT_UTIL_HPP_

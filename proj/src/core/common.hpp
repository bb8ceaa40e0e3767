// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace infinet {

// Error taxonomy. Everything non-numeric maps to a "data" exit at the CLI;
// numeric failures (NaN/Inf, failed gradient checks) map to their own code.
enum class ErrorKind { Config, Data, Io, Shape, Version, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

// Dense 4D shape, batch-major: N x C x H x W.
struct Shape4 {
  int64_t n = 0, c = 0, h = 0, w = 0;

  int64_t size() const { return n * c * h * w; }
  int64_t plane() const { return h * w; }

  bool operator==(const Shape4& o) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

inline int64_t flat_index(const Shape4& s, int64_t n, int64_t c, int64_t h, int64_t w) {
  return ((n * s.c + c) * s.h + h) * s.w + w;
}

}  // namespace infinet

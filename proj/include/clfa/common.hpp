#pragma once
// common.hpp - error taxonomy and small shared helpers.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace clfa {

// Every failure surfaced to a caller is one of these four kinds. The CLI
// maps them to a one-line "error[kind]: message" on stderr and a nonzero
// exit code.
struct Error : std::runtime_error {
  explicit Error(const std::string& kind, const std::string& msg)
      : std::runtime_error("error[" + kind + "]: " + msg), kind_(kind) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& msg) : Error("argument", msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error("data", msg) {}
};

inline void require_arg(bool cond, const std::string& msg) {
  if (!cond) throw ArgumentError(msg);
}

inline void require_cfg(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

template <typename T>
T clamp01(T v) {
  return v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
}

}  // namespace clfa

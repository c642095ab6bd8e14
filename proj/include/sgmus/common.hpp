#pragma once

// Shared error types and small utilities used across the library.

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace sgmus {

// Thrown when a simulated state leaves the tracked region (non-finite or
// |component| > divergence_bound()). Carries the step at which it happened.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& what_arg)
      : std::runtime_error(what_arg), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Thrown when a fixed-point iteration fails to reach tolerance. Carries the
// final residual so callers can report how far off it was.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(double residual, const std::string& what_arg)
      : std::runtime_error(what_arg), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Configuration rejected at validation time; names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

inline constexpr double divergence_bound() { return 1e6; }

// printf-style formatting into std::string (libstdc++ 11 has no <format>).
template <typename... Args>
std::string strfmt(const char* fmt, Args... args) {
  int n = std::snprintf(nullptr, 0, fmt, args...);
  std::string out(n > 0 ? static_cast<std::size_t>(n) : 0, '\0');
  if (n > 0) std::snprintf(out.data(), out.size() + 1, fmt, args...);
  return out;
}

}  // namespace sgmus

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace csvqr {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

// Error hierarchy. The CLI maps data-side failures (parse, integrity,
// validation, coverage, io) to exit status 3.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class ValidationError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class IntegrityError : public Error {
public:
  using Error::Error;
};

class CoverageError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// Sorted quantile proportions 0 < tau_1 < ... < tau_M < 1.
template <typename Scalar = double>
class QuantileLevels {
public:
  QuantileLevels() = default;

  explicit QuantileLevels(std::vector<Scalar> levels) : levels_(std::move(levels)) {
    if (levels_.empty())
      throw ValidationError("quantile levels: at least one level is required");
    for (std::size_t m = 0; m < levels_.size(); ++m) {
      const Scalar tau = levels_[m];
      if (!(tau > Scalar(0) && tau < Scalar(1)))
        throw ValidationError("quantile levels: " + std::to_string(double(tau)) +
                              " is outside (0,1)");
      if (m > 0 && !(levels_[m - 1] < tau))
        throw ValidationError("quantile levels: levels must be strictly increasing");
    }
  }

  static QuantileLevels deciles() {
    std::vector<Scalar> v;
    for (int k = 1; k <= 9; ++k) v.push_back(Scalar(k) / Scalar(10));
    return QuantileLevels(std::move(v));
  }

  /// Parses "lo:hi:step" (inclusive, e.g. 0.1:0.9:0.1) or a comma list.
  static QuantileLevels parse(std::string_view text) {
    auto to_scalar = [&](std::string_view s) -> Scalar {
      try {
        std::size_t used = 0;
        const std::string owned(s);
        const double v = std::stod(owned, &used);
        if (used != owned.size()) throw std::invalid_argument("trailing");
        return Scalar(v);
      } catch (const std::exception&) {
        throw ValidationError("quantile levels: cannot parse '" + std::string(text) + "'");
      }
    };
    std::vector<Scalar> out;
    if (text.find(':') != std::string_view::npos) {
      const auto c1 = text.find(':');
      const auto c2 = text.find(':', c1 + 1);
      if (c2 == std::string_view::npos)
        throw ValidationError("quantile levels: expected lo:hi:step, got '" + std::string(text) + "'");
      const Scalar lo = to_scalar(text.substr(0, c1));
      const Scalar hi = to_scalar(text.substr(c1 + 1, c2 - c1 - 1));
      const Scalar step = to_scalar(text.substr(c2 + 1));
      if (!(step > Scalar(0)))
        throw ValidationError("quantile levels: step must be positive");
      const long count = std::lround(double((hi - lo) / step));
      for (long k = 0; k <= count; ++k) {
        // Snap to 12 decimals so 0.1:0.9:0.1 yields exact-looking deciles.
        const double raw = double(lo) + double(k) * double(step);
        out.push_back(Scalar(std::round(raw * 1e12) / 1e12));
      }
    } else {
      std::size_t start = 0;
      while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto piece = text.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                               : comma - start);
        out.push_back(to_scalar(piece));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
    }
    return QuantileLevels(std::move(out));
  }

  Index size() const noexcept { return Index(levels_.size()); }
  Scalar operator[](Index m) const { return levels_[std::size_t(m)]; }
  const std::vector<Scalar>& values() const noexcept { return levels_; }

  /// Index of tau within 1e-9, or -1.
  Index index_of(Scalar tau) const noexcept {
    for (std::size_t m = 0; m < levels_.size(); ++m)
      if (std::abs(double(levels_[m] - tau)) <= 1e-9) return Index(m);
    return -1;
  }

  bool operator==(const QuantileLevels&) const = default;

private:
  std::vector<Scalar> levels_;
};

}  // namespace csvqr

#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace evop {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Index = Eigen::Index;
using Complex = std::complex<double>;

constexpr double kPi = 3.14159265358979323846;

// Thrown when a computation produces or receives non-finite numbers, a
// solver fails to converge, or a numerical precondition is violated at
// runtime. Distinct from std::invalid_argument (caller/config errors) so
// the CLI can map the two classes to different exit codes.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// std::mt19937_64 is bit-exact across platforms, but the standard
// distributions are not; the transforms below are pinned so that seeded runs
// reproduce to the bit everywhere.
// ---------------------------------------------------------------------------
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (cached spare).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = 0;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Fisher-Yates; deterministic given the engine state.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

  std::string state_string() const {
    std::ostringstream os;
    os << engine_;
    if (has_spare_) os << " 1 " << format_double(spare_);
    return os.str();
  }

  void set_state_string(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    int flag = 0;
    if (is >> flag && flag == 1) {
      std::string val;
      is >> val;
      spare_ = parse_double(val);
      has_spare_ = true;
    } else {
      has_spare_ = false;
    }
  }

  // Shortest decimal string that round-trips the exact binary double.
  static std::string format_double(double x) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
  }

  static double parse_double(const std::string& s) {
    double x = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc{}) {
      throw std::invalid_argument("parse_double: bad literal '" + s + "'");
    }
    return x;
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Shortest round-trip decimal form, shared by the CSV writers.
inline std::string format_double(double x) { return Rng::format_double(x); }

}  // namespace evop

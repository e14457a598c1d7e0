#pragma once

// Scalar reverse-mode differentiation used to push gradients through the
// hand rig and the hand losses. Every Real records its value and, unless it
// is a constant, a node on the thread's active ScalarTape whose partials
// point at earlier nodes.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace evego::ad {

class ScalarTape {
 public:
  // Returns the new node id.
  std::int32_t push(std::span<const std::int32_t> parents, std::span<const double> weights) {
    const auto id = static_cast<std::int32_t>(begin_.size());
    begin_.push_back(static_cast<std::uint32_t>(parents_.size()));
    for (std::size_t i = 0; i < parents.size(); ++i) {
      parents_.push_back(parents[i]);
      weights_.push_back(weights[i]);
    }
    return id;
  }
  std::int32_t push1(std::int32_t p, double w) { return push({&p, 1}, {&w, 1}); }
  std::int32_t push2(std::int32_t p, double w, std::int32_t q, double v) {
    const std::int32_t ps[2] = {p, q};
    const double ws[2] = {w, v};
    return push(ps, ws);
  }

  std::size_t size() const { return begin_.size(); }

  // Adjoint of every node w.r.t. `output`.
  std::vector<double> adjoints(std::int32_t output) const {
    std::vector<double> adj(begin_.size(), 0.0);
    if (output < 0) return adj;
    adj[static_cast<std::size_t>(output)] = 1.0;
    for (std::size_t n = static_cast<std::size_t>(output) + 1; n-- > 0;) {
      const double a = adj[n];
      if (a == 0.0) continue;
      const std::size_t end = n + 1 < begin_.size() ? begin_[n + 1] : parents_.size();
      for (std::size_t k = begin_[n]; k < end; ++k) adj[static_cast<std::size_t>(parents_[k])] += a * weights_[k];
    }
    return adj;
  }

 private:
  std::vector<std::uint32_t> begin_;
  std::vector<std::int32_t> parents_;
  std::vector<double> weights_;
};

ScalarTape*& active_tape();

// Installs a fresh tape for the current thread for the scope's lifetime.
class TapeScope {
 public:
  TapeScope() : previous_(active_tape()) { active_tape() = &tape_; }
  ~TapeScope() { active_tape() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ScalarTape& tape() { return tape_; }

 private:
  ScalarTape tape_;
  ScalarTape* previous_;
};

struct Real {
  double v = 0.0;
  std::int32_t id = -1;  // -1: constant

  Real() = default;
  Real(double value) : v(value) {}  // NOLINT: implicit constants are the point
  Real(double value, std::int32_t node) : v(value), id(node) {}

  // A fresh independent variable on the active tape.
  static Real variable(double value) { return {value, active_tape()->push({}, {})}; }
};

inline double value(double x) { return x; }
inline double value(const Real& x) { return x.v; }

namespace detail {
inline Real unary(double v, const Real& a, double da) {
  if (a.id < 0) return Real(v);
  return {v, active_tape()->push1(a.id, da)};
}
inline Real binary(double v, const Real& a, double da, const Real& b, double db) {
  if (a.id < 0 && b.id < 0) return Real(v);
  if (a.id < 0) return {v, active_tape()->push1(b.id, db)};
  if (b.id < 0) return {v, active_tape()->push1(a.id, da)};
  return {v, active_tape()->push2(a.id, da, b.id, db)};
}
}  // namespace detail

inline Real operator+(const Real& a, const Real& b) { return detail::binary(a.v + b.v, a, 1.0, b, 1.0); }
inline Real operator-(const Real& a, const Real& b) { return detail::binary(a.v - b.v, a, 1.0, b, -1.0); }
inline Real operator*(const Real& a, const Real& b) { return detail::binary(a.v * b.v, a, b.v, b, a.v); }
inline Real operator/(const Real& a, const Real& b) {
  const double q = a.v / b.v;
  return detail::binary(q, a, 1.0 / b.v, b, -q / b.v);
}
inline Real operator-(const Real& a) { return detail::unary(-a.v, a, -1.0); }
inline Real& operator+=(Real& a, const Real& b) { return a = a + b; }
inline Real& operator-=(Real& a, const Real& b) { return a = a - b; }
inline Real& operator*=(Real& a, const Real& b) { return a = a * b; }

inline Real sin(const Real& a) { return detail::unary(std::sin(a.v), a, std::cos(a.v)); }
inline Real cos(const Real& a) { return detail::unary(std::cos(a.v), a, -std::sin(a.v)); }
inline Real abs(const Real& a) { return detail::unary(std::abs(a.v), a, a.v > 0 ? 1.0 : (a.v < 0 ? -1.0 : 0.0)); }
// d sqrt at 0 is taken as 0 so zero-length residuals stay finite.
inline Real sqrt(const Real& a) {
  const double r = std::sqrt(a.v);
  return detail::unary(r, a, r > 0 ? 0.5 / r : 0.0);
}
inline Real log(const Real& a) { return detail::unary(std::log(a.v), a, 1.0 / a.v); }

// base + sum_i w[i] * x[i * stride], recorded as one node.
inline double lincomb(double base, const double* w, const double* x, std::size_t n, std::size_t stride = 1) {
  double s = base;
  for (std::size_t i = 0; i < n; ++i) s += w[i] * x[i * stride];
  return s;
}
Real lincomb(const Real& base, const double* w, const Real* x, std::size_t n, std::size_t stride = 1);

// c + sum_i a[i] * b[i], recorded as one node.
inline double dot(const double* a, const double* b, std::size_t n, double c) {
  double s = c;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}
Real dot(const Real* a, const Real* b, std::size_t n, const Real& c);

inline double sqrt_safe(double x) { return std::sqrt(x); }
inline Real sqrt_safe(const Real& x) { return sqrt(x); }

}  // namespace evego::ad

#include "evego/scalar_ad.hpp"

namespace evego::ad {

ScalarTape*& active_tape() {
  thread_local ScalarTape* tape = nullptr;
  return tape;
}

namespace {
thread_local std::vector<std::int32_t> scratch_parents;
thread_local std::vector<double> scratch_weights;
}  // namespace

Real lincomb(const Real& base, const double* w, const Real* x, std::size_t n, std::size_t stride) {
  double s = base.v;
  scratch_parents.clear();
  scratch_weights.clear();
  if (base.id >= 0) {
    scratch_parents.push_back(base.id);
    scratch_weights.push_back(1.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Real& xi = x[i * stride];
    s += w[i] * xi.v;
    if (xi.id >= 0 && w[i] != 0.0) {
      scratch_parents.push_back(xi.id);
      scratch_weights.push_back(w[i]);
    }
  }
  if (scratch_parents.empty()) return Real(s);
  return {s, active_tape()->push(scratch_parents, scratch_weights)};
}

Real dot(const Real* a, const Real* b, std::size_t n, const Real& c) {
  double s = c.v;
  scratch_parents.clear();
  scratch_weights.clear();
  if (c.id >= 0) {
    scratch_parents.push_back(c.id);
    scratch_weights.push_back(1.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    s += a[i].v * b[i].v;
    if (a[i].id >= 0) {
      scratch_parents.push_back(a[i].id);
      scratch_weights.push_back(b[i].v);
    }
    if (b[i].id >= 0) {
      scratch_parents.push_back(b[i].id);
      scratch_weights.push_back(a[i].v);
    }
  }
  if (scratch_parents.empty()) return Real(s);
  return {s, active_tape()->push(scratch_parents, scratch_weights)};
}

}  // namespace evego::ad

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rlaux/nn/autograd.hpp"

namespace rlaux::nn {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Coordinates whose ±h probes landed on different sides of a relu/clamp/min
  // boundary. Central differences are meaningless there, so they are counted
  // but not scored.
  std::size_t straddled = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool passed = true;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
  std::size_t straddled() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.straddled;
    return n;
  }
};

/// |a − n| / max(|a|, |n|), with pairs below `abs_floor` in both magnitudes
/// treated as agreeing.
inline double relative_error(double analytic, double numeric, double abs_floor = 1e-8) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < abs_floor) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

/// Compares backward() against central differences for every coordinate of
/// every parameter. `loss_fn` must build the loss on the tape it is given and
/// must be deterministic. Run it on double-precision copies of a network: in
/// float32 the rounding noise of a central difference with h = 1e-3 is of the
/// same order as the tolerance.
template <typename Scalar>
GradCheckReport gradient_check(std::span<Parameter<Scalar>* const> params,
                               const std::function<Var<Scalar>(Tape<Scalar>&)>& loss_fn, double tolerance,
                               double h = 1e-3) {
  GradCheckReport report;
  report.tolerance = tolerance;
  if (params.empty()) return report;

  for (auto* p : params) p->zero_grad();
  {
    Tape<Scalar> tape;
    tape.backward(loss_fn(tape));
  }
  std::vector<Matrix<Scalar>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  auto probe = [&](std::uint64_t& signature) {
    Tape<Scalar> tape(/*track_branches=*/true);
    const double v = static_cast<double>(loss_fn(tape).value()(0, 0));
    signature = tape.branch_signature();
    return v;
  };

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto* p = params[pi];
    GradCheckEntry entry{p->name, 0.0, 0, 0};
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      Scalar& w = p->value.data()[i];
      const Scalar saved = w;
      std::uint64_t sig_plus = 0, sig_minus = 0;
      w = saved + static_cast<Scalar>(h);
      const double f_plus = probe(sig_plus);
      w = saved - static_cast<Scalar>(h);
      const double f_minus = probe(sig_minus);
      w = saved;
      if (sig_plus != sig_minus) {
        ++entry.straddled;
        continue;
      }
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double err = relative_error(static_cast<double>(analytic[pi].data()[i]), numeric);
      entry.max_rel_error = std::max(entry.max_rel_error, err);
      ++entry.checked;
    }
    if (entry.max_rel_error > tolerance) report.passed = false;
    report.entries.push_back(std::move(entry));
  }
  for (auto* p : params) p->zero_grad();
  return report;
}

}  // namespace rlaux::nn

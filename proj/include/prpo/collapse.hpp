#pragma once

#include <cstddef>
#include <vector>

#include "prpo/policy.hpp"
#include "prpo/types.hpp"

namespace prpo {

enum class DeltaSign { Negative, NonNegative };

const char* to_string(DeltaSign s);

// Premature-collapse diagnosis at one position t_star of a per-token
// advantage vector: the prefix [0, t_star) averages -a < 0 while adv[t_star]
// = b > 0. The collapse condition additionally requires a * t_star > b.
struct CollapseReport {
  std::size_t t_star = 0;
  double a = 0.0;
  double b = 0.0;
  bool condition_holds = false;
  DeltaSign delta_p_sign = DeltaSign::NonNegative;
};

// One report per qualifying position, in increasing t_star.
std::vector<CollapseReport> detect_collapse(const AdvantageVector& adv);

// First-order change of the prefix probability after one process-only
// ascent step of size alpha, with squared gradient norms approximated by C:
// alpha * (-a * t_star + b) * C.
double estimate_delta_p(double a, std::size_t t_star, double b, double alpha, double c);

struct DeltaPCheck {
  std::size_t t_star = 0;  // relative to the generated span
  DeltaSign predicted = DeltaSign::NonNegative;
  DeltaSign observed = DeltaSign::NonNegative;
  double predicted_change = 0.0;
  double observed_change = 0.0;  // p_after - p_before
  double c_estimate = 0.0;       // mean squared grad-log-prob norm over the prefix
};

// Takes one gradient-ascent step of size alpha on sum_t adv_t log pi(x_t)
// using a private copy of `policy` and compares the sign predicted by
// estimate_delta_p with the observed change of p(x[gen_start .. t_star]).
// t_star is the first detected collapse position; without one the whole
// generated span is used.
DeltaPCheck verify_delta_p_empirically(const Policy& policy, const Trajectory& tr,
                                       const AdvantageVector& adv, double alpha);

}  // namespace prpo

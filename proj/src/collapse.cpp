#include "prpo/collapse.hpp"

#include <cmath>

namespace prpo {

const char* to_string(DeltaSign s) {
  return s == DeltaSign::Negative ? "Negative" : "NonNegative";
}

std::vector<CollapseReport> detect_collapse(const AdvantageVector& adv) {
  std::vector<CollapseReport> out;
  double prefix_sum = 0.0;
  for (std::size_t t = 0; t < adv.size(); ++t) {
    if (t >= 1) {
      const double mean = prefix_sum / static_cast<double>(t);
      const double b = adv[t];
      if (mean < 0.0 && b > 0.0) {
        CollapseReport r;
        r.t_star = t;
        r.a = -mean;
        r.b = b;
        r.condition_holds = r.a * static_cast<double>(t) > b;
        r.delta_p_sign = r.condition_holds ? DeltaSign::Negative : DeltaSign::NonNegative;
        out.push_back(r);
      }
    }
    prefix_sum += adv[t];
  }
  return out;
}

double estimate_delta_p(double a, std::size_t t_star, double b, double alpha, double c) {
  return alpha * (-a * static_cast<double>(t_star) + b) * c;
}

DeltaPCheck verify_delta_p_empirically(const Policy& policy, const Trajectory& tr,
                                       const AdvantageVector& adv, double alpha) {
  const std::size_t T = tr.tokens.size() - tr.gen_start;
  if (adv.size() != T) {
    throw Error(ErrorCode::MisalignedAdvantage, "advantage does not match generated span");
  }
  DeltaPCheck out;
  if (T == 0) return out;

  const auto reports = detect_collapse(adv);
  double a = 0.0;
  double b = 0.0;
  if (!reports.empty()) {
    out.t_star = reports.front().t_star;
    a = reports.front().a;
    b = reports.front().b;
  } else {
    out.t_star = T - 1;
    double s = 0.0;
    for (std::size_t i = 0; i < out.t_star; ++i) s += adv[i];
    a = out.t_star == 0 ? 0.0 : -s / static_cast<double>(out.t_star);
    b = adv[out.t_star];
  }
  const std::size_t prefix_end = tr.gen_start + out.t_star + 1;

  // C: mean squared norm of grad log pi(x_i) over the prefix.
  double c = 0.0;
  for (std::size_t i = 0; i <= out.t_star; ++i) {
    AdvantageVector one{std::vector<double>(T, 0.0)};
    one.values[i] = static_cast<double>(T);
    c += grad_weighted_logratio(policy, policy, tr, one).grad.squared_norm();
  }
  out.c_estimate = c / static_cast<double>(out.t_star + 1);
  out.predicted_change = estimate_delta_p(a, out.t_star, b, alpha, out.c_estimate);
  out.predicted = out.predicted_change < 0.0 ? DeltaSign::Negative : DeltaSign::NonNegative;

  // Sum-form process objective: scale the per-token-mean gradient by T.
  Policy stepped = policy;
  const Objective obj = grad_weighted_logratio(policy, policy, tr, adv);
  stepped.weights().axpy(alpha * static_cast<double>(T), obj.grad);

  const double before = std::exp(prefix_logprob(policy, tr.tokens, tr.gen_start, prefix_end));
  const double after = std::exp(prefix_logprob(stepped, tr.tokens, tr.gen_start, prefix_end));
  out.observed_change = after - before;
  out.observed = out.observed_change < 0.0 ? DeltaSign::Negative : DeltaSign::NonNegative;
  return out;
}

}  // namespace prpo

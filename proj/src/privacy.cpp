#include "fedperm/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedperm/errors.hpp"

namespace fedperm {

namespace {

void check_positive(double v, const char* name) {
  if (!(v > 0.0)) {
    throw ParameterError(std::string(name) + " must be positive");
  }
}

}  // namespace

std::vector<double> clip_normalize(const std::vector<double>& theta,
                                   double clip_c) {
  check_positive(clip_c, "clip threshold");
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double x = theta[i];
    if (!std::isfinite(x)) throw DataError("clip_normalize: non-finite value");
    out[i] = (std::clamp(x, -clip_c, clip_c) + clip_c) / (2.0 * clip_c);
  }
  return out;
}

std::vector<double> laplace_randomize(const std::vector<double>& normalized,
                                      double eps_d, std::size_t d, Rng& rng) {
  if (std::isinf(eps_d)) return normalized;
  check_positive(eps_d, "eps_d");
  if (d == 0) throw ParameterError("laplace_randomize: d must be positive");
  // l1 sensitivity of a [0,1]^d vector is d, so the per-coordinate scale is
  // d / eps_d.
  const double scale = static_cast<double>(d) / eps_d;
  std::vector<double> out(normalized.size());
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    out[i] = std::clamp(normalized[i] + rng.laplace(scale), 0.0, 1.0);
  }
  return out;
}

double amplify_full(double eps_wd, double delta_l, std::size_t d,
                    double constant) {
  check_positive(eps_wd, "eps_wd");
  check_positive(delta_l, "delta_l");
  if (d == 0) throw ParameterError("amplify_full: d must be positive");
  const double log_inv_delta = std::log(1.0 / delta_l);
  if (log_inv_delta <= 0.0 ||
      static_cast<double>(d) <= log_inv_delta) {
    throw DomainError("amplify_full: no valid regime for this (d, delta_l)",
                      0.0);
  }
  const double bound =
      std::log(static_cast<double>(d) / log_inv_delta) / 2.0;
  if (eps_wd > bound) {
    throw DomainError("amplify_full: eps_wd exceeds validity bound", bound);
  }
  return constant * std::min(1.0, eps_wd) * std::exp(eps_wd) *
         std::sqrt(log_inv_delta / static_cast<double>(d));
}

double amplify_window(double eps_w, double delta_l, std::size_t k1,
                      double constant) {
  return amplify_full(eps_w, delta_l, k1, constant);
}

double amplify_multi(double eps_w, double delta_l, std::size_t k1,
                     std::size_t k2, double constant) {
  check_positive(eps_w, "eps_w");
  check_positive(delta_l, "delta_l");
  if (k1 == 0 || k2 == 0) {
    throw ParameterError("amplify_multi: k1, k2 must be positive");
  }
  const double log_term =
      std::log((static_cast<double>(k2) + 1.0) / delta_l);
  if (log_term <= 0.0 || static_cast<double>(k1) <= log_term) {
    throw DomainError("amplify_multi: no valid regime for this (k1, k2, "
                      "delta_l)",
                      0.0);
  }
  const double bound =
      std::log(static_cast<double>(k1) / log_term) / 2.0;
  if (eps_w > bound) {
    throw DomainError("amplify_multi: eps_w exceeds validity bound", bound);
  }
  return constant * std::min(1.0, eps_w) * std::exp(eps_w) *
         std::log(static_cast<double>(k2) / delta_l) *
         std::sqrt(static_cast<double>(k2) / static_cast<double>(k1));
}

double amplify_for_geometry(double eps_w, double delta_l, std::size_t k1,
                            std::size_t k2, double constant) {
  return k2 == 1 ? amplify_window(eps_w, delta_l, k1, constant)
                 : amplify_multi(eps_w, delta_l, k1, k2, constant);
}

double compose_naive(double eps, std::uint64_t t) {
  if (eps < 0.0) throw ParameterError("compose_naive: eps must be >= 0");
  if (t == 0) throw ParameterError("compose_naive: t must be >= 1");
  return static_cast<double>(t) * eps;
}

ComposedBudget compose_strong(double eps_l, double delta_l, std::uint64_t T,
                              double delta_prime) {
  check_positive(eps_l, "eps_l");
  check_positive(delta_l, "delta_l");
  check_positive(delta_prime, "delta_prime");
  if (T == 0) throw ParameterError("compose_strong: T must be >= 1");
  const double t = static_cast<double>(T);
  ComposedBudget out;
  out.eps = std::sqrt(2.0 * t * std::log(1.0 / delta_prime)) * eps_l +
            t * eps_l * std::expm1(eps_l);
  out.delta = t * delta_l + delta_prime;
  return out;
}

double invert_strong_composition(double eps_target, std::uint64_t T,
                                 double delta_prime) {
  check_positive(eps_target, "eps_target");
  const double t = static_cast<double>(T);
  const double lead = std::sqrt(2.0 * t * std::log(1.0 / delta_prime));
  auto composed = [&](double e) {
    return lead * e + t * e * std::expm1(e);
  };
  double lo = 0.0, hi = eps_target / lead;
  while (composed(hi) < eps_target) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (composed(mid) <= eps_target ? lo : hi) = mid;
    if (hi - lo <= 1e-9 * std::max(lo, 1e-300)) break;
  }
  return lo;
}

double calibrate(double eps_target, double delta_target, std::uint64_t T,
                 std::size_t d, std::size_t k1, std::size_t k2,
                 double constant) {
  check_positive(eps_target, "eps_target");
  check_positive(delta_target, "delta_target");
  if (T == 0) throw ParameterError("calibrate: T must be >= 1");
  if (d == 0 || k1 == 0 || k2 == 0 || d % (k1 * k2) != 0) {
    throw ParameterError("calibrate: k1*k2 must divide d");
  }
  const double delta_l = delta_target / (2.0 * static_cast<double>(T));
  const double delta_prime = delta_target / 2.0;

  // Validity ceiling for eps_w under the applicable amplification form.
  const double log_term =
      k2 == 1 ? std::log(1.0 / delta_l)
              : std::log((static_cast<double>(k2) + 1.0) / delta_l);
  if (log_term <= 0.0 || static_cast<double>(k1) <= log_term) {
    throw DomainError("calibrate: geometry admits no valid amplification",
                      0.0);
  }
  const double eps_w_max =
      std::log(static_cast<double>(k1) / log_term) / 2.0;

  auto total_eps = [&](double eps_w) {
    const double eps_l =
        amplify_for_geometry(eps_w, delta_l, k1, k2, constant);
    return compose_strong(eps_l, delta_l, T, delta_prime).eps;
  };

  double eps_w;
  if (total_eps(eps_w_max) <= eps_target) {
    eps_w = eps_w_max;
  } else {
    double lo = 0.0, hi = eps_w_max;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (total_eps(mid) <= eps_target ? lo : hi) = mid;
      if (hi - lo <= 1e-9 * std::max(lo, 1e-300)) break;
    }
    eps_w = lo;
  }
  if (!(eps_w > 0.0)) {
    throw DomainError("calibrate: no positive eps_d meets the target", 0.0);
  }
  return eps_w * static_cast<double>(k1) * static_cast<double>(k2);
}

PrivacyBudget derive_budget(double eps_d, std::size_t true_dim,
                            std::size_t padded_dim, std::size_t k1,
                            std::size_t k2, double delta_l, double constant) {
  check_positive(eps_d, "eps_d");
  if (true_dim == 0 || padded_dim < true_dim ||
      padded_dim % (k1 * k2) != 0) {
    throw ParameterError("derive_budget: inconsistent dimensions");
  }
  PrivacyBudget budget;
  budget.eps_d = eps_d;
  budget.delta_l = delta_l;
  budget.eps_wd = eps_d / static_cast<double>(true_dim);
  const double width = static_cast<double>(padded_dim) /
                       static_cast<double>(k1 * k2);
  budget.eps_w = budget.eps_wd * width;
  budget.eps_l =
      amplify_for_geometry(budget.eps_w, delta_l, k1, k2, constant);
  return budget;
}

double l2_norm(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

std::vector<double> norm_bound(const std::vector<double>& y, double m_bound) {
  check_positive(m_bound, "norm bound");
  const double norm = l2_norm(y);
  // The slack keeps reapplication a no-op when rounding lands the scaled
  // norm a few ulp above the bound.
  if (norm <= m_bound * (1.0 + 1e-12)) return y;
  const double scale = m_bound / norm;
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * scale;
  return out;
}

}  // namespace fedperm

#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "fedperm/rng.hpp"

namespace fedperm {

// Derived per-round and per-unit budgets for a given geometry. With no
// padding, eps_wd * d == eps_d and eps_w * k1 * k2 == eps_d exactly.
struct PrivacyBudget {
  double eps_d = 0.0;    // per-update LDP budget before amplification
  double eps_wd = 0.0;   // per-parameter budget
  double eps_w = 0.0;    // per-superwindow budget
  double delta_l = 0.0;  // amplification failure probability
  double eps_l = 0.0;    // amplified per-round budget
};

// eps_wd splits eps_d over the true parameter count; eps_w scales it by the
// (possibly padded) superwindow width; eps_l applies the amplification form
// for the geometry (window form for k2 = 1, multi-pattern otherwise).
PrivacyBudget derive_budget(double eps_d, std::size_t true_dim,
                            std::size_t padded_dim, std::size_t k1,
                            std::size_t k2, double delta_l,
                            double constant = 1.0);

struct ClipSpec {
  double clip_c = 1.0;  // elementwise clipping threshold C
  double norm_bound_m =
      std::numeric_limits<double>::infinity();  // server-side l2 bound M
};

struct ComposedBudget {
  double eps = 0.0;
  double delta = 0.0;
};

// Elementwise clamp to [-C, C] followed by the affine map (x + C) / (2C).
std::vector<double> clip_normalize(const std::vector<double>& theta,
                                   double clip_c);

// Adds i.i.d. Laplace(0, d / eps_d) noise to each coordinate, then clamps
// back to [0, 1] (post-processing, guarantee preserving). eps_d = +infinity
// means no noise.
std::vector<double> laplace_randomize(const std::vector<double>& normalized,
                                      double eps_d, std::size_t d, Rng& rng);

// Amplified per-round budget after full-model shuffling of d parameters,
// each eps_wd-LDP. Valid for eps_wd <= log(d / log(1/delta_l)) / 2.
double amplify_full(double eps_wd, double delta_l, std::size_t d,
                    double constant = 1.0);

// Window variant: shuffling k1 superwindows, each eps_w-LDP.
double amplify_window(double eps_w, double delta_l, std::size_t k1,
                      double constant = 1.0);

// Multi-pattern variant: k2 patterns of size k1. Valid for
// eps_w <= log(k1 / log((k2+1)/delta_l)) / 2.
double amplify_multi(double eps_w, double delta_l, std::size_t k1,
                     std::size_t k2, double constant = 1.0);

double compose_naive(double eps, std::uint64_t t);

// Strong composition over T adaptive rounds:
//   eps   = sqrt(2 T log(1/delta')) eps_l + T eps_l (e^eps_l - 1)
//   delta = T delta_l + delta'
ComposedBudget compose_strong(double eps_l, double delta_l, std::uint64_t T,
                              double delta_prime);

// Largest per-round eps whose strong T-fold composition stays within
// eps_target (bisection, relative tolerance 1e-9).
double invert_strong_composition(double eps_target, std::uint64_t T,
                                 double delta_prime);

// Largest eps_d whose amplified (window form for k2 = 1, multi-pattern form
// otherwise), T-composed budget stays within (eps_target, delta_target).
// Splits delta_target as delta_l = delta_target / (2T), delta' =
// delta_target / 2. The result is capped by the amplification validity bound.
double calibrate(double eps_target, double delta_target, std::uint64_t T,
                 std::size_t d, std::size_t k1, std::size_t k2,
                 double constant = 1.0);

// Per-round amplified budget for a geometry, window form for k2 = 1.
double amplify_for_geometry(double eps_w, double delta_l, std::size_t k1,
                            std::size_t k2, double constant = 1.0);

double l2_norm(const std::vector<double>& v);

// Scales by min(1, M / ||y||_2); returns y unchanged when within bound.
std::vector<double> norm_bound(const std::vector<double>& y, double m_bound);

}  // namespace fedperm

#pragma once

// Test-only reference computations. Nothing here calls into the code paths it
// is used to check (projection, backward pass, classify).

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "tuap/nn/classifier.hpp"
#include "tuap/tensor.hpp"

namespace oracle {

using tuap::Tensor;

inline double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Projection onto the L1 ball by enumerating every face of the cross-polytope
// in the orthant of v. On a face with support S the nearest point of its affine
// hull is x_i = sign(v_i) (|v_i| - lambda), lambda = (sum_S |v_i| - xi) / |S|;
// it lies on the face iff every |v_i| - lambda >= 0. The minimum over feasible
// faces (and v itself when already inside) is the projection. O(2^d d).
inline std::vector<double> project_l1_bruteforce(const std::vector<double>& v, double xi) {
  double n1 = 0;
  for (double a : v) n1 += std::abs(a);
  if (n1 <= xi) return v;
  const std::size_t d = v.size();
  std::vector<double> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 1; mask < (1u << d); ++mask) {
    double sum = 0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < d; ++i)
      if (mask >> i & 1u) {
        sum += std::abs(v[i]);
        ++k;
      }
    const double lambda = (sum - xi) / static_cast<double>(k);
    std::vector<double> x(d, 0.0);
    bool feasible = lambda >= 0;
    for (std::size_t i = 0; i < d && feasible; ++i)
      if (mask >> i & 1u) {
        const double m = std::abs(v[i]) - lambda;
        if (m < 0) feasible = false;
        x[i] = v[i] < 0 ? -m : m;
      }
    if (!feasible) continue;
    const double dist = l2_distance(x, v);
    if (dist < best_dist) {
      best_dist = dist;
      best = x;
    }
  }
  return best;
}

// Projection onto the Linf ball by enumerating, per coordinate, the three
// candidate states {free, +xi, -xi}; free coordinates must already be feasible.
inline std::vector<double> project_linf_bruteforce(const std::vector<double>& v, double xi) {
  const std::size_t d = v.size();
  std::size_t patterns = 1;
  for (std::size_t i = 0; i < d; ++i) patterns *= 3;
  std::vector<double> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t code = 0; code < patterns; ++code) {
    std::vector<double> x(d);
    std::size_t c = code;
    bool feasible = true;
    for (std::size_t i = 0; i < d; ++i, c /= 3) {
      switch (c % 3) {
        case 0:
          if (std::abs(v[i]) > xi) feasible = false;
          x[i] = v[i];
          break;
        case 1: x[i] = xi; break;
        case 2: x[i] = -xi; break;
      }
    }
    if (!feasible) continue;
    const double dist = l2_distance(x, v);
    if (dist < best_dist) {
      best_dist = dist;
      best = x;
    }
  }
  return best;
}

// Projection onto the L2 ball via its KKT system: x(mu) = v / (1 + mu) with
// ||x(mu)|| = xi, mu found by bisection on the (monotone) constraint residual.
inline std::vector<double> project_l2_kkt(const std::vector<double>& v, double xi) {
  auto norm_at = [&](double mu) {
    double s = 0;
    for (double a : v) s += (a / (1 + mu)) * (a / (1 + mu));
    return std::sqrt(s);
  };
  if (norm_at(0) <= xi) return v;
  double lo = 0, hi = 1;
  while (norm_at(hi) > xi) hi *= 2;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (norm_at(mid) > xi ? lo : hi) = mid;
  }
  std::vector<double> x(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) x[i] = v[i] / (1 + hi);
  return x;
}

// Softmax cross-entropy from logits, computed directly (no shared helper).
inline double cross_entropy(const Tensor& z, std::size_t y) {
  double m = z[0];
  for (auto v : z) m = std::max(m, v);
  double s = 0;
  for (auto v : z) s += std::exp(v - m);
  return std::log(s) + m - z[y];
}

struct FdResult {
  double analytic;
  double numeric;
  double rel_error;
};

// Central difference of the loss toward y at coordinate i. Returns nullopt when
// x +- h lands in a different linear piece of the network (a relu or maxpool
// switch), where the difference quotient does not estimate the derivative.
inline std::optional<double> central_difference(const tuap::nn::Classifier& c, const Tensor& x, std::size_t y,
                                                std::size_t i, double h) {
  Tensor xp = x, xm = x;
  xp[i] += h;
  xm[i] -= h;
  const auto base = tuap::nn::activation_pattern(c, x);
  if (tuap::nn::activation_pattern(c, xp) != base || tuap::nn::activation_pattern(c, xm) != base)
    return std::nullopt;
  return (cross_entropy(tuap::nn::logits(c, xp), y) - cross_entropy(tuap::nn::logits(c, xm), y)) / (2 * h);
}

inline double relative_error(double a, double b, double floor = 1e-7) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Number of images whose logits put y strictly first (ties to the lower index),
// computed from raw logits without classify().
inline std::size_t recount_hits(const tuap::nn::Classifier& c, const std::vector<Tensor>& images, const Tensor& rho,
                                std::size_t y) {
  std::size_t hits = 0;
  for (const auto& x : images) {
    Tensor p = x;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += rho[i];
    const Tensor z = tuap::nn::logits(c, p);
    bool wins = true;
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (k < y && z[k] >= z[y]) wins = false;
      if (k > y && z[k] > z[y]) wins = false;
    }
    hits += wins;
  }
  return hits;
}

inline Tensor random_tensor(const tuap::Shape& shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (auto& v : t) v = u(rng);
  return t;
}

}  // namespace oracle

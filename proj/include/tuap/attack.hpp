#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "tuap/nn/classifier.hpp"
#include "tuap/random.hpp"
#include "tuap/tensor.hpp"

namespace tuap {

/// Anything that can predict a class for an image and differentiate its loss
/// toward a chosen class with respect to the image pixels.
template <typename M>
concept TargetableModel = requires(const M& m, const Tensor& x, std::size_t y) {
  { classify(m, x) } -> std::convertible_to<std::size_t>;
  { loss_and_input_grad(m, x, y) } -> std::same_as<nn::LossGradient>;
};

struct AttackConfig {
  std::size_t target_class = 0;
  double epsilon = 0.02;  // tFGSM step length, [0,1]-pixel units
  double xi = 1.0;        // budget on ||rho||_p
  NormType p = NormType::l2;
  std::size_t i_max = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(epsilon > 0) || !std::isfinite(epsilon)) throw domain_error("epsilon must be a positive finite number");
    if (!(xi > 0) || !std::isfinite(xi)) throw domain_error("xi must be a positive finite number");
    if (i_max < 1) throw domain_error("i_max must be at least 1");
  }
};

enum class Generator : std::uint8_t { targeted_uap = 0, random_sphere = 1 };

inline std::string_view to_string(Generator g) {
  return g == Generator::targeted_uap ? "targeted" : "random";
}

struct Perturbation {
  Tensor rho;
  NormType p = NormType::l2;
  double xi = 0;
  Generator generator = Generator::targeted_uap;
  double epsilon = 0;  // 0 for random perturbations
  std::uint64_t seed = 0;

  friend bool operator==(const Perturbation&, const Perturbation&) = default;
};

enum class Termination { success_rate_reached_one, max_iterations };

inline std::string_view to_string(Termination t) {
  return t == Termination::success_rate_reached_one ? "success-rate-reached-one" : "max-iterations";
}

struct EpochRecord {
  std::size_t epoch;  // 0-based
  double r_ts;        // success rate on the input set after the sweep
  std::size_t updates;
  std::size_t degenerate_skips;
};

struct UapRunReport {
  std::vector<EpochRecord> epochs;
  Termination termination = Termination::max_iterations;
  std::size_t images_visited = 0;
  std::size_t updates = 0;
  std::size_t degenerate_skips = 0;
};

struct UapResult {
  Perturbation perturbation;
  UapRunReport report;
};

/// Optional hooks into generate_targeted_uap; both may be empty.
struct UapObserver {
  std::function<void(const Tensor& rho)> on_update;
  std::function<void(const EpochRecord&, const Tensor& rho)> on_epoch_end;
};

/// One targeted FGSM step psi(x, y): a move of length epsilon (in the chosen
/// norm's dual sense) against the loss gradient toward class y.
///   p = inf:   -eps * sign(g)
///   p = 1, 2:  -eps * g / ||g||_p   (throws degenerate_gradient_error if ||g||_p == 0)
template <TargetableModel Model>
Tensor tfgsm_step(const Model& model, const Tensor& x, std::size_t y, double epsilon, NormType p) {
  if (!(epsilon > 0)) throw domain_error("tfgsm epsilon must be positive");
  Tensor g = loss_and_input_grad(model, x, y).grad_input;
  if (p == NormType::linf) return -epsilon * sign(g);
  const double n = lp_norm(g, p);
  if (!(n > 0)) throw degenerate_gradient_error("loss gradient has zero L" + std::string(to_string(p)) + " norm");
  return (-epsilon / n) * std::move(g);
}

namespace detail {

// Euclidean projection onto {w : ||w||_1 <= xi} by soft thresholding |v| at the
// level theta that puts the result on the boundary (sort-based simplex projection).
inline Tensor project_l1(const Tensor& v, double xi) {
  std::vector<double> mag(v.size());
  std::transform(v.begin(), v.end(), mag.begin(), [](double a) { return std::abs(a); });
  std::sort(mag.begin(), mag.end(), std::greater<>());
  long double prefix = 0;
  double theta = 0;
  for (std::size_t j = 0; j < mag.size(); ++j) {
    prefix += mag[j];
    const double t = static_cast<double>((prefix - xi) / static_cast<long double>(j + 1));
    if (mag[j] - t > 0) theta = t;
    else break;
  }
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double m = std::max(std::abs(v[i]) - theta, 0.0);
    out[i] = v[i] < 0 ? -m : m;
  }
  return out;
}

}  // namespace detail

/// Nearest point (in L2 distance) to v inside the Lp ball of radius xi.
inline Tensor project(const Tensor& v, NormType p, double xi) {
  if (!(xi > 0)) throw domain_error("projection radius must be positive");
  switch (p) {
    case NormType::l2: {
      const double n = lp_norm(v, NormType::l2);
      if (n <= xi) return v;
      return (xi / n) * v;
    }
    case NormType::linf: {
      Tensor out = v;
      for (auto& a : out) a = std::clamp(a, -xi, xi);
      return out;
    }
    case NormType::l1:
      if (lp_norm(v, NormType::l1) <= xi) return v;
      return detail::project_l1(v, xi);
  }
  return v;
}

/// Fraction of images classified into y after adding rho.
template <TargetableModel Model>
double success_rate(const Model& model, std::span<const Tensor> images, const Tensor& rho, std::size_t y) {
  if (images.empty()) throw domain_error("success rate of an empty image set");
  std::size_t hits = 0;
  for (const auto& x : images) hits += classify(model, x + rho) == y;
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

/// Targeted universal perturbation by iterated single tFGSM steps.
///
/// Starting from rho = 0, each epoch visits the images in a fresh seeded
/// random order. An image not yet sent to the target gets one tFGSM step at
/// x + rho; when that step lands in the target class, rho becomes the
/// projection of the accumulated perturbation (rho + psi) onto the budget
/// ball. Stops once every input image is sent to the target or after i_max
/// epochs. Images whose gradient is degenerate are skipped and counted.
template <TargetableModel Model>
UapResult generate_targeted_uap(const Model& model, std::span<const Tensor> images, const AttackConfig& cfg,
                                const UapObserver& observer = {}) {
  cfg.validate();
  if (images.empty()) throw domain_error("cannot generate a UAP from an empty image set");
  const Shape& shape = images.front().shape();
  for (const auto& x : images)
    if (x.shape() != shape) throw shape_error("input images do not share one shape");

  const std::size_t y = cfg.target_class;
  Tensor rho(shape);
  UapRunReport report;
  std::vector<std::size_t> order(images.size());

  double r_ts = 0;
  for (std::size_t epoch = 0; r_ts < 1.0 && epoch < cfg.i_max; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng(cfg.seed, {stream::uap_order, epoch});
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec{epoch, 0.0, 0, 0};
    for (auto i : order) {
      const Tensor& x = images[i];
      ++report.images_visited;
      Tensor perturbed = x + rho;
      if (classify(model, perturbed) == y) continue;
      Tensor psi;
      try {
        psi = tfgsm_step(model, perturbed, y, cfg.epsilon, cfg.p);
      } catch (const degenerate_gradient_error&) {
        ++rec.degenerate_skips;
        continue;
      }
      Tensor x_adv = perturbed + psi;
      if (classify(model, x_adv) != y) continue;
      rho = project(x_adv - x, cfg.p, cfg.xi);
      ++rec.updates;
      if (observer.on_update) observer.on_update(rho);
    }

    r_ts = success_rate(model, images, rho, y);
    rec.r_ts = r_ts;
    report.updates += rec.updates;
    report.degenerate_skips += rec.degenerate_skips;
    report.epochs.push_back(rec);
    if (observer.on_epoch_end) observer.on_epoch_end(rec, rho);
  }
  report.termination = r_ts >= 1.0 ? Termination::success_rate_reached_one : Termination::max_iterations;

  return {Perturbation{std::move(rho), cfg.p, cfg.xi, Generator::targeted_uap, cfg.epsilon, cfg.seed},
          std::move(report)};
}

/// Control perturbation on the Lp sphere of radius xi.
///
/// p = 2: standard normal direction scaled to length xi (uniform on the sphere).
/// p = 1: Laplace draw rescaled to the L1 sphere; p = inf: uniform cube draw
/// rescaled to the Linf sphere.
inline Perturbation random_uap(const Shape& shape, NormType p, double xi, std::uint64_t seed) {
  if (!(xi > 0)) throw domain_error("random UAP radius must be positive");
  auto rng = make_rng(seed, {stream::random_uap});
  Tensor t(shape);
  switch (p) {
    case NormType::l2: {
      std::normal_distribution<double> n(0.0, 1.0);
      for (auto& v : t) v = n(rng);
      break;
    }
    case NormType::l1: {
      std::exponential_distribution<double> e(1.0);
      std::bernoulli_distribution s(0.5);
      for (auto& v : t) v = s(rng) ? e(rng) : -e(rng);
      break;
    }
    case NormType::linf: {
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (auto& v : t) v = u(rng);
      break;
    }
  }
  const double n = lp_norm(t, p);
  if (!(n > 0)) throw domain_error("random direction has zero norm");
  return {(xi / n) * std::move(t), p, xi, Generator::random_sphere, 0.0, seed};
}

}  // namespace tuap

#pragma once

#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "tuap/attack.hpp"
#include "tuap/data.hpp"

namespace tuap {

/// Mean L2 norm of the images.
inline double mean_l2_norm(std::span<const Tensor> images) {
  if (images.empty()) throw domain_error("mean norm of an empty image set");
  long double sum = 0;
  for (const auto& x : images) sum += lp_norm(x, NormType::l2);
  return static_cast<double>(sum / static_cast<long double>(images.size()));
}

/// Perturbation rate in percent: 100 * ||rho||_2 / mean_x ||x||_2.
inline double zeta(const Tensor& rho, std::span<const Tensor> images) {
  return 100.0 * lp_norm(rho, NormType::l2) / mean_l2_norm(images);
}

/// Budget xi whose L2 perturbation has rate `target_zeta` percent on `images`.
inline double xi_for_zeta(double target_zeta, std::span<const Tensor> images) {
  if (!(target_zeta > 0) || !std::isfinite(target_zeta)) throw domain_error("target zeta must be positive");
  return target_zeta / 100.0 * mean_l2_norm(images);
}

struct EvalReport {
  Generator generator = Generator::targeted_uap;
  std::string set;  // "input" or "test"
  std::size_t target_class = 0;
  NormType p = NormType::l2;
  double xi = 0;
  std::uint64_t seed = 0;
  std::size_t n_images = 0;
  std::size_t hits = 0;
  double r_ts = 0;
  double zeta = 0;  // percent, against the reference mean image norm
  double l2_of_rho = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [source label][prediction under rho]
  std::size_t out_of_range_pixels = 0;              // entries of x + rho outside [0,1]
};

/// Success rate, perturbation rate, confusion counts and pixel-range diagnostics of
/// `pert` on one labeled set. `reference_mean_norm` is the mean image norm ζ is taken against.
template <TargetableModel Model>
EvalReport evaluate(const Model& model, const data::LabeledDataset& set, std::string label,
                    const Perturbation& pert, std::size_t target, double reference_mean_norm,
                    std::size_t num_classes) {
  if (set.empty()) throw domain_error("cannot evaluate on an empty " + label + " set");
  if (set.image_shape() != pert.rho.shape())
    throw shape_error("perturbation shape " + shape_string(pert.rho.shape()) + " does not match images " +
                      shape_string(set.image_shape()));
  if (target >= num_classes) throw domain_error("target class out of range");
  EvalReport rep;
  rep.generator = pert.generator;
  rep.set = std::move(label);
  rep.target_class = target;
  rep.p = pert.p;
  rep.xi = pert.xi;
  rep.seed = pert.seed;
  rep.n_images = set.size();
  rep.l2_of_rho = lp_norm(pert.rho, NormType::l2);
  rep.zeta = 100.0 * rep.l2_of_rho / reference_mean_norm;
  rep.confusion.assign(std::max(set.class_count, num_classes), std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < set.size(); ++i) {
    Tensor x = set.images[i] + pert.rho;
    for (auto v : x) rep.out_of_range_pixels += (v < 0.0 || v > 1.0);
    const auto pred = classify(model, x);
    rep.hits += pred == target;
    ++rep.confusion[set.labels[i]][pred];
  }
  rep.r_ts = static_cast<double>(rep.hits) / static_cast<double>(rep.n_images);
  return rep;
}

struct SweepRow {
  double requested_zeta;
  EvalReport report;
};

/// For every ζ in the grid: derive xi from the input set, build a targeted UAP
/// and a random-sphere UAP of that budget, and evaluate both on the input and
/// test sets. Emits four rows per grid point in the order
/// (targeted, input), (targeted, test), (random, input), (random, test).
template <TargetableModel Model>
std::vector<SweepRow> sweep(const Model& model, std::size_t num_classes, const data::LabeledDataset& input,
                            const data::LabeledDataset& test, std::size_t target, std::span<const double> zeta_grid,
                            const AttackConfig& base) {
  if (zeta_grid.empty()) throw domain_error("zeta grid is empty");
  for (std::size_t i = 1; i < zeta_grid.size(); ++i)
    if (!(zeta_grid[i] > zeta_grid[i - 1])) throw domain_error("zeta grid must be strictly ascending");
  if (input.empty()) throw domain_error("input set is empty");
  if (test.empty()) throw domain_error("test set is empty");
  data::require_disjoint(input, test);

  const double ref = mean_l2_norm(input.images);
  std::vector<SweepRow> rows;
  for (double z : zeta_grid) {
    AttackConfig cfg = base;
    cfg.target_class = target;
    cfg.xi = xi_for_zeta(z, input.images);
    auto targeted = generate_targeted_uap(model, input.images, cfg).perturbation;
    auto random = random_uap(input.image_shape(), cfg.p, cfg.xi, cfg.seed);
    for (const auto* pert : {&targeted, &random}) {
      rows.push_back({z, evaluate(model, input, "input", *pert, target, ref, num_classes)});
      rows.push_back({z, evaluate(model, test, "test", *pert, target, ref, num_classes)});
    }
  }
  return rows;
}

inline constexpr const char* kReportCsvHeader = "generator,set,target_class,p,xi,zeta_pct,r_ts,n_images,seed";

inline std::string csv_row(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%zu,%s,%.6f,%.2f,%.6f,%zu,%llu", std::string(to_string(r.generator)).c_str(),
                r.set.c_str(), r.target_class, std::string(to_string(r.p)).c_str(), r.xi, r.zeta, r.r_ts,
                r.n_images, static_cast<unsigned long long>(r.seed));
  return buf;
}

/// UTF-8, LF line endings, '.' decimals.
inline std::string to_csv(std::span<const EvalReport> rows) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto& r : rows) out += csv_row(r) + "\n";
  return out;
}

inline std::string to_csv(std::span<const SweepRow> rows) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto& r : rows) out += csv_row(r.report) + "\n";
  return out;
}

/// source_class,predicted_class,count for every nonzero confusion cell.
inline std::string confusion_csv(const EvalReport& r) {
  std::string out = "source_class,predicted_class,count\n";
  for (std::size_t s = 0; s < r.confusion.size(); ++s)
    for (std::size_t p = 0; p < r.confusion[s].size(); ++p)
      if (r.confusion[s][p]) out += std::to_string(s) + "," + std::to_string(p) + "," + std::to_string(r.confusion[s][p]) + "\n";
  return out;
}

}  // namespace tuap

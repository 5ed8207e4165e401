#pragma once

#include "rgp/methods.hpp"
#include "rgp/simulate.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rgp {

struct ExperimentConfig {
  SimulationConfig sim;
  std::vector<ContaminationScheme> schemes{ContaminationScheme::none()};
  std::vector<MethodSpec> methods;
  int n_reps = 1;
  std::uint64_t base_seed = 1;
  double train_fraction = 0.7;
  MethodOptions options;
  int jobs = 1;

  void validate() const;
};

/// One method on one scheme in one replication. Metrics are computed against
/// the uncontaminated phenotypes.
struct CellResult {
  int rep = 0;
  std::string method;  ///< label, e.g. "mdpde1(alpha=1)"
  std::string method_name;
  std::optional<double> alpha;
  std::string scheme;
  bool ok = false;
  std::string error;
  double rho_train = 0.0;
  double rho_test = 0.0;
  double mad_train = 0.0;
  double mad_test = 0.0;
  double h_estimate = 0.0;
  double h_true = 0.0;
};

struct Aggregate {
  std::string method;
  std::string method_name;
  std::optional<double> alpha;
  std::string scheme;
  int n_ok = 0;
  int n_failed = 0;
  double rho_train = 0.0;
  double rho_test = 0.0;
  double mad_train = 0.0;
  double mad_test = 0.0;
  double h_estimate = 0.0;
  double h_msd = 0.0;  ///< mean of (h_estimate - h_true)^2
};

struct EvaluationReport {
  std::vector<CellResult> cells;  ///< ordered by rep, scheme, method
  std::uint64_t base_seed = 0;
  int n_reps = 0;
  std::string config_hash;

  /// Means over successful replications, one entry per (scheme, method).
  std::vector<Aggregate> aggregates() const;
  const Aggregate* find(const std::vector<Aggregate>& aggs, const std::string& method,
                        const std::string& scheme) const;
  /// Per-replication values of one cell column, NaN where the fit failed.
  std::vector<double> series(const std::string& method, const std::string& scheme,
                             double CellResult::*field) const;
};

/// Seeds: replication k uses derive_seed(base_seed, k) for its simulation;
/// contamination and the split derive from that, independently of the method
/// and scheme lists.
EvaluationReport run_experiment(const ExperimentConfig& cfg);

/// rep,method,alpha,scheme,split,metric,value
void write_report_csv(const EvaluationReport& report, const std::filesystem::path& path);
/// Accuracy and heritability tables, methods as rows and schemes as columns.
void write_summary_md(const EvaluationReport& report, const std::filesystem::path& path);

struct SweepPoint {
  double sigma2_g = 0.0;
  double sigma2_e = 0.0;
  std::vector<Aggregate> results;
};

/// One experiment per (sigma2_g, sigma2_e) point on uncontaminated data.
std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg,
                                  const std::vector<std::pair<double, double>>& points);
/// sigma2_g,sigma2_e,method,alpha,n_ok,rho_test,mad_test,h_estimate,h_msd
void write_sweep_csv(const std::vector<SweepPoint>& sweep, const std::filesystem::path& path);

}  // namespace rgp

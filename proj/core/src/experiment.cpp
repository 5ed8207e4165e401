#include "rgp/experiment.hpp"

#include "rgp/csv.hpp"
#include "rgp/cv.hpp"
#include "rgp/error.hpp"
#include "rgp/metrics.hpp"
#include "rgp/random.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <thread>

namespace rgp {

namespace {

constexpr std::uint64_t kSplitStream = 0x5b11;
constexpr std::uint64_t kContaminationStream = 0xc047;

std::string format_alpha(const std::optional<double>& a) { return a ? csv::format_double(*a) : "NA"; }

std::string config_hash(const ExperimentConfig& cfg) {
  std::string text = fmt::format("{:.17g};{:.17g};{:.17g};{:.17g};{};{};{};{:.17g};{};{};{:.17g};",
                                 cfg.sim.phi, cfg.sim.sigma2_g, cfg.sim.sigma2_b, cfg.sim.sigma2_e,
                                 cfg.sim.n_genotypes, cfg.sim.replicates, cfg.sim.n_markers,
                                 cfg.sim.marker_maf, format_block_layout(cfg.sim.block_layout), cfg.n_reps,
                                 cfg.train_fraction);
  for (const auto& s : cfg.schemes) {
    text += fmt::format("{}:{:.17g}:{}:{:.17g};", s.name(), s.fraction, s.n_blocks, s.shift_multiplier);
  }
  for (const auto& m : cfg.methods) text += m.label() + ";";
  std::uint64_t h = 0;
  for (unsigned char c : text) h = mix64(h ^ c);
  return fmt::format("{:016x}", h);
}

std::vector<CellResult> run_replication(const ExperimentConfig& cfg, int rep) {
  std::vector<CellResult> cells;
  for (const auto& scheme : cfg.schemes) {
    for (const auto& m : cfg.methods) {
      CellResult c;
      c.rep = rep;
      c.method = m.label();
      c.method_name = m.name();
      if (m.has_alpha()) c.alpha = m.alpha;
      c.scheme = scheme.name();
      cells.push_back(std::move(c));
    }
  }
  auto fail_all = [&](const std::string& why) {
    for (auto& c : cells) c.error = why;
    return cells;
  };

  const std::uint64_t rep_seed = derive_seed(cfg.base_seed, static_cast<std::uint64_t>(rep));
  SimulationConfig sim_cfg = cfg.sim;
  sim_cfg.seed = rep_seed;
  Simulation sim;
  CvSplit split;
  try {
    sim = simulate(sim_cfg);
    split = cv_split(sim.dataset, cfg.train_fraction, derive_seed(rep_seed, kSplitStream));
  } catch (const std::exception& e) {
    return fail_all(e.what());
  }

  std::size_t idx = 0;
  for (const auto& scheme : cfg.schemes) {
    PhenotypeDataset train;
    std::string scheme_error;
    try {
      const auto stream = kContaminationStream + static_cast<std::uint64_t>(scheme.kind);
      const auto cont = contaminate(sim.dataset, scheme, std::sqrt(cfg.sim.sigma2_e), derive_seed(rep_seed, stream));
      train = subset_rows(cont.dataset, split.train_rows);
    } catch (const std::exception& e) {
      scheme_error = e.what();
    }
    for (const auto& m : cfg.methods) {
      auto& c = cells[idx++];
      c.h_true = sim.truth.heritability;
      if (!scheme_error.empty()) {
        c.error = scheme_error;
        continue;
      }
      try {
        const auto fit = fit_method(train, m, cfg.options);
        const VectorXd pred_test = predict_dataset(fit, split.test, split.block_in_train);
        c.rho_train = pearson_rho(split.train.y, fit.fitted);
        c.mad_train = mad(split.train.y, fit.fitted);
        c.rho_test = pearson_rho(split.test.y, pred_test);
        c.mad_test = mad(split.test.y, pred_test);
        c.h_estimate = fit.heritability;
        c.ok = true;
      } catch (const std::exception& e) {
        c.error = e.what();
      }
    }
  }
  return cells;
}

}  // namespace

void ExperimentConfig::validate() const {
  sim.validate();
  if (n_reps < 1) throw DataError("replications must be positive");
  if (methods.empty()) throw DataError("no methods configured");
  if (schemes.empty()) throw DataError("no contamination schemes configured");
  for (const auto& s : schemes) s.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw DataError("train fraction must lie in (0, 1)");
  if (jobs < 1) throw DataError("jobs must be positive");
  for (const auto& m : methods) {
    if (m.has_alpha() && !(m.alpha >= 0.0)) throw DataError("alpha must be >= 0");
  }
}

EvaluationReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<CellResult>> per_rep(static_cast<std::size_t>(cfg.n_reps));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int rep = next++; rep < cfg.n_reps; rep = next++) {
      per_rep[static_cast<std::size_t>(rep)] = run_replication(cfg, rep);
    }
  };
  const int n_threads = std::min(cfg.jobs, cfg.n_reps);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  EvaluationReport report;
  report.base_seed = cfg.base_seed;
  report.n_reps = cfg.n_reps;
  report.config_hash = config_hash(cfg);
  for (auto& cells : per_rep) {
    for (auto& c : cells) report.cells.push_back(std::move(c));
  }
  return report;
}

std::vector<Aggregate> EvaluationReport::aggregates() const {
  std::vector<Aggregate> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& c : cells) {
    const auto key = std::make_pair(c.scheme, c.method);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      Aggregate a;
      a.method = c.method;
      a.method_name = c.method_name;
      a.alpha = c.alpha;
      a.scheme = c.scheme;
      out.push_back(a);
    }
    auto& a = out[it->second];
    if (!c.ok) {
      ++a.n_failed;
      continue;
    }
    ++a.n_ok;
    a.rho_train += c.rho_train;
    a.rho_test += c.rho_test;
    a.mad_train += c.mad_train;
    a.mad_test += c.mad_test;
    a.h_estimate += c.h_estimate;
    a.h_msd += (c.h_estimate - c.h_true) * (c.h_estimate - c.h_true);
  }
  for (auto& a : out) {
    if (a.n_ok == 0) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      a.rho_train = a.rho_test = a.mad_train = a.mad_test = a.h_estimate = a.h_msd = nan;
      continue;
    }
    const double n = a.n_ok;
    a.rho_train /= n;
    a.rho_test /= n;
    a.mad_train /= n;
    a.mad_test /= n;
    a.h_estimate /= n;
    a.h_msd /= n;
  }
  return out;
}

const Aggregate* EvaluationReport::find(const std::vector<Aggregate>& aggs, const std::string& method,
                                        const std::string& scheme) const {
  for (const auto& a : aggs) {
    if (a.method == method && a.scheme == scheme) return &a;
  }
  return nullptr;
}

std::vector<double> EvaluationReport::series(const std::string& method, const std::string& scheme,
                                             double CellResult::*field) const {
  std::vector<double> out;
  for (const auto& c : cells) {
    if (c.method == method && c.scheme == scheme) {
      out.push_back(c.ok ? c.*field : std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

void write_report_csv(const EvaluationReport& report, const std::filesystem::path& path) {
  csv::Table t;
  t.header = {"rep", "method", "alpha", "scheme", "split", "metric", "value"};
  for (const auto& c : report.cells) {
    auto add = [&](const char* split, const char* metric, double v) {
      t.rows.push_back({std::to_string(c.rep), c.method_name, format_alpha(c.alpha), c.scheme, split, metric,
                        c.ok ? csv::format_double(v) : "NA"});
    };
    add("train", "rho", c.rho_train);
    add("train", "mad", c.mad_train);
    add("test", "rho", c.rho_test);
    add("test", "mad", c.mad_test);
    add("fit", "h_estimate", c.h_estimate);
    t.rows.push_back({std::to_string(c.rep), c.method_name, format_alpha(c.alpha), c.scheme, "truth", "h_true",
                      csv::format_double(c.h_true)});
  }
  csv::write(path, t);
}

void write_summary_md(const EvaluationReport& report, const std::filesystem::path& path) {
  const auto aggs = report.aggregates();
  std::vector<std::string> schemes;
  std::vector<std::string> methods;
  for (const auto& a : aggs) {
    if (std::find(schemes.begin(), schemes.end(), a.scheme) == schemes.end()) schemes.push_back(a.scheme);
    if (std::find(methods.begin(), methods.end(), a.method) == methods.end()) methods.push_back(a.method);
  }
  auto num = [](double v, int digits) { return std::isnan(v) ? std::string("NA") : fmt::format("{:.{}f}", v, digits); };

  auto out = fmt::output_file(path.string());
  out.print("# Evaluation summary\n\n");
  out.print("Replications: {}; base seed: {}; config hash: {}\n\n", report.n_reps, report.base_seed,
            report.config_hash);

  out.print("## Test prediction accuracy\n\n| Method |");
  for (const auto& s : schemes) out.print(" {} rho | {} MAD |", s, s);
  out.print("\n|---|");
  for (std::size_t i = 0; i < schemes.size(); ++i) out.print("---|---|");
  out.print("\n");
  for (const auto& m : methods) {
    out.print("| {} |", m);
    for (const auto& s : schemes) {
      const auto* a = report.find(aggs, m, s);
      out.print(" {} | {} |", num(a ? a->rho_test : NAN, 3), num(a ? a->mad_test : NAN, 3));
    }
    out.print("\n");
  }

  out.print("\n## Heritability\n\n| Method |");
  for (const auto& s : schemes) out.print(" {} H | {} MSD |", s, s);
  out.print("\n|---|");
  for (std::size_t i = 0; i < schemes.size(); ++i) out.print("---|---|");
  out.print("\n");
  for (const auto& m : methods) {
    out.print("| {} |", m);
    for (const auto& s : schemes) {
      const auto* a = report.find(aggs, m, s);
      out.print(" {} | {} |", num(a ? a->h_estimate : NAN, 4), a ? fmt::format("{:.4e}", a->h_msd) : "NA");
    }
    out.print("\n");
  }

  bool any_failed = false;
  for (const auto& a : aggs) any_failed = any_failed || a.n_failed > 0;
  if (any_failed) {
    out.print("\n## Failed fits\n\n| Method | Scheme | Failed |\n|---|---|---|\n");
    for (const auto& a : aggs) {
      if (a.n_failed > 0) out.print("| {} | {} | {} |\n", a.method, a.scheme, a.n_failed);
    }
  }
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg,
                                  const std::vector<std::pair<double, double>>& points) {
  if (points.empty()) throw DataError("sweep needs at least one point");
  std::vector<SweepPoint> out;
  for (const auto& [s2g, s2e] : points) {
    ExperimentConfig c = cfg;
    c.sim.sigma2_g = s2g;
    c.sim.sigma2_e = s2e;
    c.schemes = {ContaminationScheme::none()};
    out.push_back({s2g, s2e, run_experiment(c).aggregates()});
  }
  return out;
}

void write_sweep_csv(const std::vector<SweepPoint>& sweep, const std::filesystem::path& path) {
  csv::Table t;
  t.header = {"sigma2_g", "sigma2_e", "method", "alpha", "n_ok", "rho_test", "mad_test", "h_estimate", "h_msd"};
  for (const auto& pt : sweep) {
    for (const auto& a : pt.results) {
      t.rows.push_back({csv::format_double(pt.sigma2_g), csv::format_double(pt.sigma2_e), a.method_name,
                        format_alpha(a.alpha), std::to_string(a.n_ok), csv::format_double(a.rho_test),
                        csv::format_double(a.mad_test), csv::format_double(a.h_estimate),
                        csv::format_double(a.h_msd)});
    }
  }
  csv::write(path, t);
}

}  // namespace rgp

#include "fit_io.hpp"
#include "run_config.hpp"

#include "rgp/csv.hpp"
#include "rgp/error.hpp"
#include "rgp/experiment.hpp"
#include "rgp/heritability.hpp"
#include "rgp/methods.hpp"
#include "rgp/simulate.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <filesystem>
#include <optional>

namespace fs = std::filesystem;
using namespace rgp;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct ConfigFlags {
  std::string preset = "paper";
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  int jobs = 1;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f, bool experiment) {
  cmd->add_option("--preset", f.preset, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--config", f.config, "INI configuration file");
  cmd->add_option("--seed", f.seed, "override the seed");
  if (experiment) {
    cmd->add_option("--reps", f.reps, "override the replication count");
    cmd->add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
  }
}

cli::RunConfig load_config(const ConfigFlags& f) {
  auto cfg = cli::preset(f.preset);
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) throw DataError(fmt::format("config file '{}' does not exist", f.config));
    cli::apply_ini(cfg, f.config);
  }
  if (f.reps) cfg.experiment.n_reps = *f.reps;
  cfg.experiment.jobs = f.jobs;
  return cfg;
}

struct DataFlags {
  std::string phenotypes;
  std::string markers;
  std::string coding = "binary";
};

void add_data_flags(CLI::App* cmd, DataFlags& d) {
  cmd->add_option("--phenotypes", d.phenotypes, "phenotype CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--markers", d.markers, "marker CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--coding", d.coding, "marker coding: binary {0,1} or ternary {-1,0,1}");
}

PhenotypeDataset load(const DataFlags& d) {
  return load_dataset(d.phenotypes, d.markers, parse_marker_coding(d.coding));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust genomic prediction with mixed models"};
  app.require_subcommand(1);

  ConfigFlags sim_flags;
  std::string sim_out = ".";
  auto* simulate_cmd = app.add_subcommand("simulate", "simulate a dataset (phenotypes.csv, markers.csv, truth.csv)");
  add_config_flags(simulate_cmd, sim_flags, false);
  simulate_cmd->add_option("--out", sim_out, "output directory");

  DataFlags cont_data;
  std::string cont_scheme = "random";
  double cont_sigma_e = 0.0;
  std::uint64_t cont_seed = 1;
  std::string cont_out = ".";
  auto* contaminate_cmd = app.add_subcommand("contaminate", "shift observations to create outliers");
  add_data_flags(contaminate_cmd, cont_data);
  contaminate_cmd->add_option("--scheme", cont_scheme, "none, random or block");
  contaminate_cmd->add_option("--sigma-e", cont_sigma_e, "residual standard deviation used for the shift")->required();
  contaminate_cmd->add_option("--seed", cont_seed, "seed");
  contaminate_cmd->add_option("--out", cont_out, "output directory");

  DataFlags fit_data;
  std::string fit_method_name;
  std::optional<double> fit_alpha;
  std::string fit_out = ".";
  auto* fit_cmd = app.add_subcommand("fit", "fit one method (fit.csv, effects.csv, predictions.csv)");
  add_data_flags(fit_cmd, fit_data);
  fit_cmd->add_option("--method", fit_method_name,
                      "rmla, rmlv, rob-rmla, rob-rmlv, mdpde1, mle, rob1, rob2 or mdpde2")->required();
  fit_cmd->add_option("--alpha", fit_alpha, "DPD tuning parameter (mdpde1, mdpde2)");
  fit_cmd->add_option("--out", fit_out, "output directory");

  DataFlags pred_data;
  std::string pred_fit;
  std::string pred_out = "predictions.csv";
  auto* predict_cmd = app.add_subcommand("predict", "apply a saved fit to a dataset");
  add_data_flags(predict_cmd, pred_data);
  predict_cmd->add_option("--fit", pred_fit, "directory holding fit.csv and effects.csv")->required();
  predict_cmd->add_option("--out", pred_out, "output CSV");

  ConfigFlags eval_flags;
  std::string eval_out = ".";
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Monte-Carlo evaluation (report.csv, summary.md)");
  add_config_flags(evaluate_cmd, eval_flags, true);
  evaluate_cmd->add_option("--out", eval_out, "output directory");

  ConfigFlags sweep_flags;
  std::string sweep_out = ".";
  std::string sweep_g;
  std::optional<double> sweep_e;
  auto* sweep_cmd = app.add_subcommand("sweep", "accuracy over a grid of sigma2_g (sweep.csv)");
  add_config_flags(sweep_cmd, sweep_flags, true);
  sweep_cmd->add_option("--sigma2-g", sweep_g, "comma-separated sigma2_g values");
  sweep_cmd->add_option("--sigma2-e", sweep_e, "fixed sigma2_e");
  sweep_cmd->add_option("--out", sweep_out, "output directory");

  double h_g = 0.0, h_e = 0.0;
  Index h_r = 1;
  auto* herit_cmd = app.add_subcommand("heritability", "H = s2_g / (s2_g + s2_e / r)");
  herit_cmd->add_option("--sigma2-g", h_g, "genetic variance")->required();
  herit_cmd->add_option("--sigma2-e", h_e, "residual variance")->required();
  herit_cmd->add_option("--replicates", h_r, "replicates")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*simulate_cmd) {
      auto cfg = load_config(sim_flags);
      if (sim_flags.seed) cfg.experiment.sim.seed = *sim_flags.seed;
      const auto sim = simulate(cfg.experiment.sim);
      fs::create_directories(sim_out);
      write_dataset(sim.dataset, fs::path(sim_out) / "phenotypes.csv", fs::path(sim_out) / "markers.csv");
      write_truth(sim.truth, fs::path(sim_out) / "truth.csv");
      fmt::print("{} observations, {} markers, {} blocks; H_p_true = {:.4f}\n", sim.dataset.n_obs(),
                 sim.dataset.n_markers(), sim.dataset.n_blocks(), sim.truth.heritability);
    } else if (*contaminate_cmd) {
      const auto ds = load(cont_data);
      const auto out = contaminate(ds, ContaminationScheme::parse(cont_scheme), cont_sigma_e, cont_seed);
      fs::create_directories(cont_out);
      write_dataset(out.dataset, fs::path(cont_out) / "phenotypes.csv", fs::path(cont_out) / "markers.csv");
      csv::Table t;
      t.header = {"id"};
      for (Index i : out.indices) t.rows.push_back({ds.ids[static_cast<std::size_t>(i)]});
      csv::write(fs::path(cont_out) / "contaminated.csv", t);
      fmt::print("{} of {} observations shifted\n", out.indices.size(), ds.n_obs());
    } else if (*fit_cmd) {
      const auto spec = MethodSpec::parse(fit_method_name, fit_alpha);
      const auto ds = load(fit_data);
      const auto fit = fit_method(ds, spec);
      cli::write_fit(fit, ds, fit_out);
      fmt::print("{}: H_p = {:.4f}, converged = {}\n", fit.method, fit.heritability, fit.diagnostics.converged);
    } else if (*predict_cmd) {
      const auto ds = load(pred_data);
      const VectorXd yhat = cli::predict_saved(cli::read_fit(pred_fit), ds);
      csv::Table t;
      t.header = {"id", "fitted"};
      for (Index i = 0; i < ds.n_obs(); ++i) t.rows.push_back({ds.ids[static_cast<std::size_t>(i)], csv::format_double(yhat(i))});
      csv::write(pred_out, t);
    } else if (*evaluate_cmd) {
      auto cfg = load_config(eval_flags);
      if (eval_flags.seed) cfg.experiment.base_seed = *eval_flags.seed;
      const auto report = run_experiment(cfg.experiment);
      fs::create_directories(eval_out);
      write_report_csv(report, fs::path(eval_out) / "report.csv");
      write_summary_md(report, fs::path(eval_out) / "summary.md");
      int failed = 0;
      for (const auto& c : report.cells) failed += c.ok ? 0 : 1;
      fmt::print("{} cells, {} failed; config hash {}\n", report.cells.size(), failed, report.config_hash);
    } else if (*sweep_cmd) {
      auto cfg = load_config(sweep_flags);
      if (sweep_flags.seed) cfg.experiment.base_seed = *sweep_flags.seed;
      if (!sweep_g.empty()) cfg.sweep_sigma2_g = cli::parse_number_list(sweep_g, "sigma2-g");
      const double s2e = sweep_e.value_or(cfg.sweep_sigma2_e.value_or(cfg.experiment.sim.sigma2_e));
      std::vector<std::pair<double, double>> points;
      for (double g : cfg.sweep_sigma2_g) points.emplace_back(g, s2e);
      const auto sweep = run_sweep(cfg.experiment, points);
      fs::create_directories(sweep_out);
      write_sweep_csv(sweep, fs::path(sweep_out) / "sweep.csv");
    } else if (*herit_cmd) {
      fmt::print("{}\n", csv::format_double(heritability(h_g, h_e, h_r)));
    }
  } catch (const DataError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const NumericError& e) {
    fmt::print(stderr, "numeric failure: {}\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitNumeric;
  }
  return 0;
}

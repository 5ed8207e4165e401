#include "fit_io.hpp"

#include "rgp/csv.hpp"
#include "rgp/error.hpp"
#include "rgp/mme.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>

namespace rgp::cli {

namespace {

constexpr const char* kGammaPrefix = "gamma:";

void add_diagnostics(csv::Table& t, const std::string& prefix, const FitDiagnostics& d) {
  t.rows.push_back({prefix + "converged", d.converged ? "true" : "false"});
  t.rows.push_back({prefix + "iterations", std::to_string(d.iterations)});
  t.rows.push_back({prefix + "objective", csv::format_double(d.objective)});
  t.rows.push_back({prefix + "note", d.note});
}

}  // namespace

void write_fit(const FitResult& fit, const PhenotypeDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  csv::Table f;
  f.header = {"quantity", "value"};
  auto num = [&f](const std::string& k, double v) { f.rows.push_back({k, csv::format_double(v)}); };
  f.rows.push_back({"method", fit.method});
  for (Index c = 0; c < fit.gamma_hat.size(); ++c) {
    num(kGammaPrefix + ds.confounder_names[static_cast<std::size_t>(c)], fit.gamma_hat(c));
  }
  num("sigma2_g", fit.variances.sigma2_g);
  num("sigma2_b", fit.variances.sigma2_b);
  num("sigma2_e", fit.variances.sigma2_e);
  num("sigma2_u_total", fit.variances.sigma2_u_total);
  num("block_lambda", fit.block_shrinkage);
  num("H_p", fit.heritability);
  f.rows.push_back({"H_p_convention", fit.heritability_convention});
  add_diagnostics(f, fit.stage_one ? "stage2_" : "", fit.diagnostics);
  if (fit.stage_one) add_diagnostics(f, "stage1_", *fit.stage_one);
  csv::write(dir / "fit.csv", f);

  csv::Table e;
  e.header = {"effect", "label", "value", "lambda"};
  for (Index j = 0; j < fit.effects.u_g.size(); ++j) {
    e.rows.push_back({"marker", fmt::format("m_{}", j + 1), csv::format_double(fit.effects.u_g(j)),
                      csv::format_double(fit.shrinkage(j))});
  }
  for (Index b = 0; b < fit.effects.u_b.size(); ++b) {
    e.rows.push_back({"block", ds.block_labels[static_cast<std::size_t>(b)], csv::format_double(fit.effects.u_b(b)),
                      csv::format_double(fit.block_shrinkage)});
  }
  csv::write(dir / "effects.csv", e);

  csv::Table p;
  p.header = {"id", "y", "fitted", "breeding_value"};
  for (Index i = 0; i < ds.n_obs(); ++i) {
    p.rows.push_back({ds.ids[static_cast<std::size_t>(i)], csv::format_double(ds.y(i)),
                      csv::format_double(fit.fitted(i)), csv::format_double(fit.breeding_values(i))});
  }
  csv::write(dir / "predictions.csv", p);
}

SavedFit read_fit(const std::filesystem::path& dir) {
  SavedFit s;
  const auto f = csv::read(dir / "fit.csv");
  std::vector<double> gamma;
  for (const auto& row : f.rows) {
    const std::string& key = row.at(0);
    if (key.rfind(kGammaPrefix, 0) == 0) {
      s.gamma_names.push_back(key.substr(std::string(kGammaPrefix).size()));
      gamma.push_back(csv::parse_double(row.at(1), key));
    }
  }
  s.gamma = Eigen::Map<VectorXd>(gamma.data(), static_cast<Index>(gamma.size()));

  const auto e = csv::read(dir / "effects.csv");
  std::vector<double> ug, ub;
  for (const auto& row : e.rows) {
    if (row.at(0) == "marker") {
      ug.push_back(csv::parse_double(row.at(2), "marker effect"));
    } else if (row.at(0) == "block") {
      s.block_labels.push_back(row.at(1));
      ub.push_back(csv::parse_double(row.at(2), "block effect"));
    } else {
      throw DataError(fmt::format("unknown effect kind '{}'", row.at(0)));
    }
  }
  s.u_g = Eigen::Map<VectorXd>(ug.data(), static_cast<Index>(ug.size()));
  s.u_b = Eigen::Map<VectorXd>(ub.data(), static_cast<Index>(ub.size()));
  return s;
}

VectorXd predict_saved(const SavedFit& fit, const PhenotypeDataset& ds) {
  if (fit.u_g.size() != ds.n_markers()) {
    throw DataError(fmt::format("fit has {} marker effects but the dataset has {} markers", fit.u_g.size(),
                                ds.n_markers()));
  }
  VectorXd gamma = VectorXd::Zero(ds.n_fixed());
  for (Index c = 0; c < ds.n_fixed(); ++c) {
    const auto& name = ds.confounder_names[static_cast<std::size_t>(c)];
    const auto it = std::find(fit.gamma_names.begin(), fit.gamma_names.end(), name);
    if (it == fit.gamma_names.end()) throw DataError(fmt::format("fit has no coefficient for '{}'", name));
    gamma(c) = fit.gamma(it - fit.gamma_names.begin());
  }
  std::map<std::string, double> block;
  for (std::size_t b = 0; b < fit.block_labels.size(); ++b) block[fit.block_labels[b]] = fit.u_b(static_cast<Index>(b));
  RandomEffects u{fit.u_g, VectorXd::Zero(ds.n_blocks())};
  for (Index b = 0; b < ds.n_blocks(); ++b) {
    const auto it = block.find(ds.block_labels[static_cast<std::size_t>(b)]);
    if (it != block.end()) u.u_b(b) = it->second;
  }
  return predict(ds, gamma, u);
}

}  // namespace rgp::cli

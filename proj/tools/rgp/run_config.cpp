#include "run_config.hpp"

#include "rgp/csv.hpp"
#include "rgp/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include <map>
#include <set>

namespace rgp::cli {

namespace pt = boost::property_tree;

RunConfig preset(const std::string& name) {
  RunConfig cfg;
  auto& e = cfg.experiment;
  e.sim.block_layout = reference_block_layout();
  e.methods = parse_method_list(
      "rmla,rmlv,rob-rmla,rob-rmlv,mdpde1:0.1,mdpde1:0.3,mdpde1:0.5,mdpde1:0.7,mdpde1:1,"
      "rob1,rob2,mdpde2:0.1,mdpde2:0.3,mdpde2:0.5,mdpde2:0.7,mdpde2:1");
  e.schemes = {ContaminationScheme::none(), ContaminationScheme::random(), ContaminationScheme::block()};
  if (name == "paper") {
    e.n_reps = 100;
  } else if (name == "desk") {
    e.sim.n_genotypes = 100;
    e.sim.replicates = 2;
    e.sim.n_markers = 100;
    e.sim.block_layout = std::vector<Index>(20, 5);
    // Scaled so that the expected heritability is about 0.7.
    e.sim.sigma2_g = 2.58;
    e.n_reps = 30;
    cfg.sweep_sigma2_g = {0.5, 1.5, 4.5};
  } else {
    throw DataError(fmt::format("unknown preset '{}'", name));
  }
  if (cfg.sweep_sigma2_g.empty()) {
    cfg.sweep_sigma2_g = {0.5 * e.sim.sigma2_g, e.sim.sigma2_g, 2.0 * e.sim.sigma2_g};
  }
  return cfg;
}

double expected_marker_scale(const SimulationConfig& sim) {
  const double het = 2.0 * sim.marker_maf * (1.0 - sim.marker_maf);
  return static_cast<double>(sim.n_markers) * het * (1.0 - het);
}

std::vector<double> parse_number_list(const std::string& text, const char* what) {
  std::vector<double> out;
  for (const auto& item : csv::split(text)) {
    if (!csv::trim(item).empty()) out.push_back(csv::parse_double(csv::trim(item), what));
  }
  if (out.empty()) throw DataError(fmt::format("empty list for '{}'", what));
  return out;
}

std::vector<ContaminationScheme> parse_scheme_list(const std::string& text, const ContaminationScheme& random,
                                                   const ContaminationScheme& block) {
  std::vector<ContaminationScheme> out;
  for (const auto& item : csv::split(text)) {
    const auto name = std::string(csv::trim(item));
    if (name.empty()) continue;
    auto s = ContaminationScheme::parse(name);
    if (s.kind == ContaminationKind::Random) s = random;
    if (s.kind == ContaminationKind::Block) s = block;
    out.push_back(s);
  }
  if (out.empty()) throw DataError("empty contamination scheme list");
  return out;
}

namespace {

class Section {
 public:
  Section(const pt::ptree& tree, std::string name) : name_(std::move(name)) {
    if (const auto child = tree.get_child_optional(name_)) {
      for (const auto& [key, value] : *child) values_[key] = value.get_value<std::string>();
    }
  }

  std::optional<std::string> take(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    std::string v(csv::trim(it->second));
    values_.erase(it);
    return v;
  }
  void num(const std::string& key, double& out) {
    if (auto v = take(key)) out = csv::parse_double(*v, field(key));
  }
  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (auto v = take(key)) out = static_cast<Int>(csv::parse_int(*v, field(key)));
  }
  void finish() const {
    if (!values_.empty()) {
      throw DataError(fmt::format("unknown configuration key '{}'", field(values_.begin()->first)));
    }
  }
  std::string field(const std::string& key) const { return name_ + "." + key; }

 private:
  std::string name_;
  std::map<std::string, std::string> values_;
};

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "auto") return OptimizerKind::Auto;
  if (s == "simplex" || s == "nelder-mead") return OptimizerKind::Simplex;
  if (s == "bfgs" || s == "quasi-newton") return OptimizerKind::QuasiNewton;
  throw DataError(fmt::format("invalid field 'mdpde.optimizer': unknown optimizer '{}'", s));
}

}  // namespace

void apply_ini(RunConfig& cfg, const std::filesystem::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw DataError(fmt::format("cannot read config: {}", e.what()));
  }
  const std::set<std::string> known{"simulation", "contamination", "experiment", "mdpde", "robust", "rmlv", "sweep"};
  for (const auto& [name, child] : tree) {
    if (!known.count(name)) throw DataError(fmt::format("unknown configuration section '{}'", name));
  }
  auto& e = cfg.experiment;

  Section sim(tree, "simulation");
  sim.num("phi", e.sim.phi);
  sim.num("sigma2_g", e.sim.sigma2_g);
  sim.num("sigma2_b", e.sim.sigma2_b);
  sim.num("sigma2_e", e.sim.sigma2_e);
  sim.integer("genotypes", e.sim.n_genotypes);
  sim.integer("replicates", e.sim.replicates);
  sim.integer("markers", e.sim.n_markers);
  sim.num("maf", e.sim.marker_maf);
  sim.integer("seed", e.sim.seed);
  if (auto v = sim.take("block_layout")) {
    try {
      e.sim.block_layout = parse_block_layout(*v);
    } catch (const DataError& err) {
      throw DataError(fmt::format("invalid simulation field 'block_layout': {}", err.what()));
    }
  }
  sim.finish();

  Section con(tree, "contamination");
  auto random = ContaminationScheme::random();
  auto block = ContaminationScheme::block();
  con.num("random_fraction", random.fraction);
  con.num("random_shift", random.shift_multiplier);
  con.integer("block_count", block.n_blocks);
  con.num("block_shift", block.shift_multiplier);
  for (auto& s : e.schemes) {
    if (s.kind == ContaminationKind::Random) s = random;
    if (s.kind == ContaminationKind::Block) s = block;
  }
  if (auto v = con.take("schemes")) e.schemes = parse_scheme_list(*v, random, block);
  con.finish();

  Section ex(tree, "experiment");
  if (auto v = ex.take("methods")) e.methods = parse_method_list(*v);
  ex.integer("replications", e.n_reps);
  ex.integer("seed", e.base_seed);
  ex.num("train_fraction", e.train_fraction);
  ex.integer("jobs", e.jobs);
  ex.finish();

  Section md(tree, "mdpde");
  md.integer("max_iter", e.options.dpd.max_iter);
  md.num("obj_tol", e.options.dpd.obj_tol);
  md.num("param_tol", e.options.dpd.param_tol);
  if (auto v = md.take("optimizer")) e.options.dpd.optimizer = parse_optimizer(*v);
  md.finish();

  Section rb(tree, "robust");
  rb.num("huber_k", e.options.robust.huber_k);
  rb.integer("max_iter", e.options.robust.max_iter);
  rb.num("tol", e.options.robust.tol);
  rb.finish();

  Section rv(tree, "rmlv");
  rv.integer("max_iter", e.options.rmlv.max_iter);
  rv.num("tol", e.options.rmlv.tol);
  if (auto v = rv.take("literal_update")) e.options.rmlv.literal_update = (*v == "true" || *v == "1");
  rv.finish();

  Section sw(tree, "sweep");
  if (auto v = sw.take("sigma2_g")) cfg.sweep_sigma2_g = parse_number_list(*v, "sweep.sigma2_g");
  if (auto v = sw.take("sigma2_e")) cfg.sweep_sigma2_e = csv::parse_double(*v, "sweep.sigma2_e");
  sw.finish();
}

}  // namespace rgp::cli

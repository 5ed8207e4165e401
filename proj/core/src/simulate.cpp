#include "rgp/simulate.hpp"

#include "rgp/csv.hpp"
#include "rgp/error.hpp"
#include "rgp/random.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rgp {

double RandomSource::uniform() {
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomSource::normal() {
  const double u = uniform();
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
}

std::uint64_t RandomSource::index(std::uint64_t n) {
  if (n <= 1) return 0;
  // Reject the tail so that every residue is equally likely.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<Index> reference_block_layout() {
  std::vector<Index> layout(5, 13);
  layout.insert(layout.end(), 65, 10);
  return layout;
}

std::vector<Index> parse_block_layout(const std::string& text) {
  std::vector<Index> layout;
  for (const auto& item : csv::split(text)) {
    if (item.empty()) continue;
    const auto x = item.find_first_of("xX*");
    if (x == std::string::npos) {
      layout.push_back(csv::parse_int(item, "block_layout"));
      continue;
    }
    const auto count = csv::parse_int(std::string_view(item).substr(0, x), "block_layout");
    const auto size = csv::parse_int(std::string_view(item).substr(x + 1), "block_layout");
    if (count < 0) throw DataError("block_layout: negative block count");
    layout.insert(layout.end(), static_cast<std::size_t>(count), size);
  }
  return layout;
}

std::string format_block_layout(const std::vector<Index>& layout) {
  std::string out;
  for (std::size_t i = 0; i < layout.size();) {
    std::size_t j = i;
    while (j < layout.size() && layout[j] == layout[i]) ++j;
    if (!out.empty()) out += ", ";
    out += fmt::format("{}x{}", j - i, layout[i]);
    i = j;
  }
  return out;
}

void SimulationConfig::validate() const {
  auto fail = [](const char* field, const std::string& why) {
    throw DataError(fmt::format("invalid simulation field '{}': {}", field, why));
  };
  if (!std::isfinite(phi)) fail("phi", "must be finite");
  if (!(sigma2_g >= 0.0)) fail("sigma2_g", "must be >= 0");
  if (!(sigma2_b >= 0.0)) fail("sigma2_b", "must be >= 0");
  if (!(sigma2_e > 0.0)) fail("sigma2_e", "must be > 0");
  if (n_genotypes < 1) fail("genotypes", "must be positive");
  if (replicates < 1) fail("replicates", "must be positive");
  if (n_markers < 1) fail("markers", "must be positive");
  if (!(marker_maf > 0.0 && marker_maf <= 0.5)) fail("maf", "must lie in (0, 0.5]");
  if (block_layout.empty()) fail("block_layout", "must list at least one block");
  Index total = 0;
  for (Index s : block_layout) {
    if (s < 1) fail("block_layout", "block sizes must be positive");
    total += s;
  }
  if (total != n_genotypes) {
    fail("block_layout", fmt::format("block sizes sum to {} but genotypes = {}", total, n_genotypes));
  }
}

Simulation simulate(const SimulationConfig& cfg) {
  cfg.validate();
  RandomSource rng(cfg.seed);
  const Index G = cfg.n_genotypes;
  const Index p = cfg.n_markers;
  const Index B = cfg.n_blocks();
  const Index r = cfg.replicates;

  // Heterozygote indicator from two independent allele draws.
  MatrixXd markers(G, p);
  for (Index i = 0; i < G; ++i) {
    for (Index l = 0; l < p; ++l) {
      const bool a1 = rng.uniform() < cfg.marker_maf;
      const bool a2 = rng.uniform() < cfg.marker_maf;
      markers(i, l) = a1 != a2 ? 1.0 : 0.0;
    }
  }
  Simulation sim;
  auto& truth = sim.truth;
  truth.phi = cfg.phi;
  truth.sigma2_g = cfg.sigma2_g;
  truth.sigma2_b = cfg.sigma2_b;
  truth.sigma2_e = cfg.sigma2_e;
  truth.u_g.resize(p);
  for (Index l = 0; l < p; ++l) truth.u_g(l) = rng.normal(0.0, std::sqrt(cfg.sigma2_g));
  truth.genotypic_values = markers * truth.u_g;
  truth.block_effects.resize(B);
  for (Index b = 0; b < B; ++b) truth.block_effects(b) = rng.normal(0.0, std::sqrt(cfg.sigma2_b));

  ObservationTable t;
  t.coding = MarkerCoding::Binary;
  const Index N = G * r;
  t.markers.resize(N, p);
  const double sd_e = std::sqrt(cfg.sigma2_e);
  Index row = 0;
  for (Index k = 0; k < r; ++k) {
    std::vector<Index> order(static_cast<std::size_t>(G));
    for (Index i = 0; i < G; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    std::size_t pos = 0;
    for (Index b = 0; b < B; ++b) {
      for (Index s = 0; s < cfg.block_layout[static_cast<std::size_t>(b)]; ++s, ++row) {
        const Index i = order[pos++];
        const double e = rng.normal(0.0, sd_e);
        t.ids.push_back(fmt::format("G{}_r{}", i + 1, k + 1));
        t.replicate.push_back(fmt::format("{}", k + 1));
        t.block.push_back(fmt::format("B{}", b + 1));
        t.genotype.push_back(fmt::format("G{}", i + 1));
        t.y.push_back(cfg.phi + truth.genotypic_values(i) + truth.block_effects(b) + e);
        t.markers.row(row) = markers.row(i);
      }
    }
  }
  sim.dataset = assemble_dataset(t);

  double var_g = 0.0;
  if (G > 1) {
    const double mean = truth.genotypic_values.mean();
    var_g = (truth.genotypic_values.array() - mean).square().sum() / static_cast<double>(G - 1);
  }
  truth.heritability = var_g / (var_g + cfg.sigma2_e / static_cast<double>(r));
  return sim;
}

void write_truth(const SimulationTruth& truth, const std::filesystem::path& path) {
  csv::Table t;
  t.header = {"quantity", "value"};
  auto add = [&t](std::string name, double v) { t.rows.push_back({std::move(name), csv::format_double(v)}); };
  add("phi", truth.phi);
  add("sigma2_g", truth.sigma2_g);
  add("sigma2_b", truth.sigma2_b);
  add("sigma2_e", truth.sigma2_e);
  add("H_p_true", truth.heritability);
  for (Index l = 0; l < truth.u_g.size(); ++l) add(fmt::format("u_g_{}", l + 1), truth.u_g(l));
  for (Index b = 0; b < truth.block_effects.size(); ++b) add(fmt::format("u_b_{}", b + 1), truth.block_effects(b));
  csv::write(path, t);
}

ContaminationScheme ContaminationScheme::parse(const std::string& name) {
  if (name == "none" || name == "pure") return none();
  if (name == "random") return random();
  if (name == "block") return block();
  throw DataError(fmt::format("unknown contamination scheme '{}'", name));
}

std::string ContaminationScheme::name() const {
  switch (kind) {
    case ContaminationKind::None: return "none";
    case ContaminationKind::Random: return "random";
    case ContaminationKind::Block: return "block";
  }
  return "none";
}

void ContaminationScheme::validate() const {
  if (kind == ContaminationKind::Random && !(fraction > 0.0 && fraction < 1.0)) {
    throw DataError("contamination fraction must lie in (0, 1)");
  }
  if (kind == ContaminationKind::Block && n_blocks < 1) {
    throw DataError("contamination block count must be positive");
  }
  if (kind != ContaminationKind::None && !(shift_multiplier > 0.0)) {
    throw DataError("contamination shift multiplier must be positive");
  }
}

Contaminated contaminate(const PhenotypeDataset& ds, const ContaminationScheme& scheme,
                         double sigma_e, std::uint64_t seed) {
  scheme.validate();
  if (scheme.kind != ContaminationKind::None && !(sigma_e > 0.0)) {
    throw DataError("sigma_e must be positive");
  }
  Contaminated out{ds, {}};
  if (scheme.kind == ContaminationKind::None) return out;

  RandomSource rng(seed);
  const Index N = ds.n_obs();
  const double shift = scheme.shift_multiplier * sigma_e;
  if (scheme.kind == ContaminationKind::Random) {
    const auto count = std::max<Index>(1, static_cast<Index>(std::floor(scheme.fraction * static_cast<double>(N) + 0.5)));
    std::vector<Index> rows(static_cast<std::size_t>(N));
    for (Index i = 0; i < N; ++i) rows[static_cast<std::size_t>(i)] = i;
    for (Index i = 0; i < count; ++i) {
      const auto j = i + static_cast<Index>(rng.index(static_cast<std::uint64_t>(N - i)));
      std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(j)]);
    }
    out.indices.assign(rows.begin(), rows.begin() + count);
  } else {
    const Index B = ds.n_blocks();
    if (scheme.n_blocks > B) {
      throw DataError(fmt::format("requested {} contaminated blocks but the dataset has {}",
                                  scheme.n_blocks, B));
    }
    std::vector<Index> blocks(static_cast<std::size_t>(B));
    for (Index b = 0; b < B; ++b) blocks[static_cast<std::size_t>(b)] = b;
    for (Index i = 0; i < scheme.n_blocks; ++i) {
      const auto j = i + static_cast<Index>(rng.index(static_cast<std::uint64_t>(B - i)));
      std::swap(blocks[static_cast<std::size_t>(i)], blocks[static_cast<std::size_t>(j)]);
    }
    std::vector<bool> chosen(static_cast<std::size_t>(B), false);
    for (Index i = 0; i < scheme.n_blocks; ++i) chosen[static_cast<std::size_t>(blocks[static_cast<std::size_t>(i)])] = true;
    for (Index i = 0; i < N; ++i) {
      if (chosen[static_cast<std::size_t>(ds.block_of[static_cast<std::size_t>(i)])]) out.indices.push_back(i);
    }
  }
  std::sort(out.indices.begin(), out.indices.end());
  for (Index i : out.indices) out.dataset.y(i) += shift;
  return out;
}

}  // namespace rgp

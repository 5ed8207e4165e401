#include "rgp/dataset.hpp"

#include "rgp/csv.hpp"
#include "rgp/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

namespace rgp {

MarkerCoding parse_marker_coding(const std::string& name) {
  if (name == "ternary" || name == "0,1,-1" || name == "{0,1,-1}") return MarkerCoding::Ternary;
  if (name == "binary" || name == "0,1" || name == "{0,1}") return MarkerCoding::Binary;
  throw DataError(fmt::format("unknown marker coding '{}' (expected 'binary' or 'ternary')", name));
}

std::string to_string(MarkerCoding coding) {
  return coding == MarkerCoding::Ternary ? "ternary" : "binary";
}

bool is_valid_code(MarkerCoding coding, double value) {
  if (value == 0.0 || value == 1.0) return true;
  return coding == MarkerCoding::Ternary && value == -1.0;
}

Index PhenotypeDataset::replicate_offset(Index k) const {
  Index offset = 0;
  for (Index i = 0; i < k; ++i) offset += replicate_sizes[static_cast<std::size_t>(i)];
  return offset;
}

Index numerical_rank(const MatrixXd& A, double tol) {
  if (A.size() == 0) return 0;
  Eigen::BDCSVD<MatrixXd> svd(A);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  Index rank = 0;
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > tol * s(0)) ++rank;
  }
  return rank;
}

double marker_variance_scale(const MatrixXd& Xg) {
  if (Xg.rows() < 2 || Xg.cols() == 0) return 0.0;
  const VectorXd mean = Xg.colwise().mean();
  double total = 0.0;
  for (Index j = 0; j < Xg.cols(); ++j) {
    total += (Xg.col(j).array() - mean(j)).square().sum() / static_cast<double>(Xg.rows() - 1);
  }
  return total;
}

void VarianceComponents::validate(Index n_markers) const {
  auto bad = [](double v) { return !std::isfinite(v) || v < 0.0; };
  if (!std::isfinite(sigma2_e) || sigma2_e <= 0.0) {
    throw NumericError(fmt::format("residual variance must be positive, got {}", sigma2_e));
  }
  if (bad(sigma2_g) || bad(sigma2_b) || bad(sigma2_u_total)) {
    throw NumericError("variance components must be finite and nonnegative");
  }
  if (sigma2_g_per_marker) {
    if (n_markers >= 0 && sigma2_g_per_marker->size() != n_markers) {
      throw NumericError("per-marker variance vector has the wrong length");
    }
    if ((sigma2_g_per_marker->array() < 0.0).any() || !sigma2_g_per_marker->allFinite()) {
      throw NumericError("per-marker variances must be finite and nonnegative");
    }
  }
}

void validate_dataset(const PhenotypeDataset& ds) {
  const Index n = ds.y.size();
  if (ds.replicate_sizes.empty()) throw DataError("dataset has no replicates");
  Index total = 0;
  for (Index s : ds.replicate_sizes) {
    if (s < 1) throw DataError("every replicate needs at least one observation");
    total += s;
  }
  if (total != n) {
    throw DataError(fmt::format("dimension mismatch: replicate sizes sum to {}, y has {}", total, n));
  }
  if (ds.Z.rows() != n || ds.Xg.rows() != n || ds.Xb.rows() != n) {
    throw DataError(fmt::format("dimension mismatch: y has {} rows, Z {}, Xg {}, Xb {}", n,
                                ds.Z.rows(), ds.Xg.rows(), ds.Xb.rows()));
  }
  if (static_cast<Index>(ds.block_of.size()) != n || static_cast<Index>(ds.genotype_of.size()) != n ||
      static_cast<Index>(ds.ids.size()) != n) {
    throw DataError("dimension mismatch in row labels");
  }
  for (Index i = 0; i < n; ++i) {
    const auto b = ds.block_of[static_cast<std::size_t>(i)];
    if (b < 0 || b >= ds.Xb.cols() || ds.Xb(i, b) != 1.0 || ds.Xb.row(i).sum() != 1.0) {
      throw DataError(fmt::format("row {} of the block design must contain exactly one 1", i));
    }
    const auto g = ds.genotype_of[static_cast<std::size_t>(i)];
    if (g < 0 || g >= ds.n_genotypes()) throw DataError("genotype index out of range");
  }
  for (Index i = 0; i < ds.Xg.rows(); ++i) {
    for (Index j = 0; j < ds.Xg.cols(); ++j) {
      if (!is_valid_code(ds.coding, ds.Xg(i, j))) {
        throw DataError(fmt::format("unknown marker code {} at row {}, marker {}", ds.Xg(i, j), i,
                                    j + 1));
      }
    }
  }
  if (!ds.y.allFinite()) throw DataError("phenotype values must be finite");
  if (numerical_rank(ds.Z) < ds.Z.cols()) {
    throw DataError(fmt::format("rank-deficient Z: rank {} < {} columns", numerical_rank(ds.Z),
                                ds.Z.cols()));
  }
}

namespace {

template <typename Labels>
std::vector<Index> index_labels(const Labels& labels, std::vector<std::string>& unique) {
  std::unordered_map<std::string, Index> lookup;
  std::vector<Index> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    auto [it, inserted] = lookup.try_emplace(l, static_cast<Index>(unique.size()));
    if (inserted) unique.push_back(l);
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

PhenotypeDataset assemble_dataset(const ObservationTable& t) {
  const std::size_t n = t.y.size();
  if (t.ids.size() != n || t.replicate.size() != n || t.block.size() != n ||
      (!t.genotype.empty() && t.genotype.size() != n)) {
    throw DataError("dimension mismatch between observation columns");
  }
  if (static_cast<std::size_t>(t.markers.rows()) != n) {
    throw DataError(fmt::format("dimension mismatch: {} phenotype rows, {} marker rows", n,
                                t.markers.rows()));
  }
  if (t.confounders.cols() > 0 && static_cast<std::size_t>(t.confounders.rows()) != n) {
    throw DataError("dimension mismatch: confounder rows");
  }
  if (n == 0) throw DataError("dataset has no observations");
  {
    std::unordered_set<std::string> seen;
    for (const auto& id : t.ids) {
      if (!seen.insert(id).second) throw DataError(fmt::format("duplicate observation id '{}'", id));
    }
  }

  PhenotypeDataset ds;
  ds.coding = t.coding;
  const auto rep_index = index_labels(t.replicate, ds.replicate_labels);
  const auto block_index = index_labels(t.block, ds.block_labels);
  std::vector<Index> geno_index;
  if (t.genotype.empty()) {
    geno_index = index_labels(t.ids, ds.genotype_labels);
  } else {
    geno_index = index_labels(t.genotype, ds.genotype_labels);
  }

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return rep_index[static_cast<std::size_t>(a)] < rep_index[static_cast<std::size_t>(b)];
  });

  const auto N = static_cast<Index>(n);
  const Index B = static_cast<Index>(ds.block_labels.size());
  const Index p = t.markers.cols();

  bool has_intercept = false;
  for (Index c = 0; c < t.confounders.cols(); ++c) {
    if ((t.confounders.col(c).array() == 1.0).all()) has_intercept = true;
  }
  const Index L = t.confounders.cols() + (has_intercept ? 0 : 1);

  ds.y.resize(N);
  ds.Z.resize(N, L);
  ds.Xg.resize(N, p);
  ds.Xb = MatrixXd::Zero(N, B);
  ds.replicate_sizes.assign(ds.replicate_labels.size(), 0);
  if (!has_intercept) ds.confounder_names.push_back(kInterceptName);
  for (const auto& name : t.confounder_names) ds.confounder_names.push_back(name);

  for (Index row = 0; row < N; ++row) {
    const auto src = static_cast<std::size_t>(order[static_cast<std::size_t>(row)]);
    ds.y(row) = t.y[src];
    ds.ids.push_back(t.ids[src]);
    ds.block_of.push_back(block_index[src]);
    ds.genotype_of.push_back(geno_index[src]);
    ds.Xb(row, block_index[src]) = 1.0;
    ++ds.replicate_sizes[static_cast<std::size_t>(rep_index[src])];
    Index c = 0;
    if (!has_intercept) ds.Z(row, c++) = 1.0;
    for (Index k = 0; k < t.confounders.cols(); ++k) ds.Z(row, c++) = t.confounders(static_cast<Index>(src), k);
    ds.Xg.row(row) = t.markers.row(static_cast<Index>(src));
  }
  validate_dataset(ds);
  return ds;
}

PhenotypeDataset load_dataset(const std::filesystem::path& phenotype_file,
                              const std::filesystem::path& marker_file, MarkerCoding coding) {
  const auto pheno = csv::read(phenotype_file);
  const int c_id = pheno.column("id");
  const int c_rep = pheno.column("replicate");
  const int c_block = pheno.column("block");
  const int c_y = pheno.column("y");
  const int c_geno = pheno.column("genotype");
  if (c_id < 0 || c_rep < 0 || c_block < 0 || c_y < 0) {
    throw DataError(fmt::format("'{}' must have columns id,replicate,block,y",
                                phenotype_file.string()));
  }
  std::vector<int> conf_cols;
  ObservationTable t;
  t.coding = coding;
  for (int c = 0; c < static_cast<int>(pheno.header.size()); ++c) {
    if (c == c_id || c == c_rep || c == c_block || c == c_y || c == c_geno) continue;
    conf_cols.push_back(c);
    t.confounder_names.push_back(pheno.header[static_cast<std::size_t>(c)]);
  }
  const auto n = pheno.rows.size();
  t.confounders.resize(static_cast<Index>(n), static_cast<Index>(conf_cols.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = pheno.rows[i];
    t.ids.push_back(row[static_cast<std::size_t>(c_id)]);
    t.replicate.push_back(row[static_cast<std::size_t>(c_rep)]);
    t.block.push_back(row[static_cast<std::size_t>(c_block)]);
    if (c_geno >= 0) t.genotype.push_back(row[static_cast<std::size_t>(c_geno)]);
    t.y.push_back(csv::parse_double(row[static_cast<std::size_t>(c_y)], "y"));
    for (std::size_t k = 0; k < conf_cols.size(); ++k) {
      t.confounders(static_cast<Index>(i), static_cast<Index>(k)) = csv::parse_double(
          row[static_cast<std::size_t>(conf_cols[k])], t.confounder_names[k]);
    }
  }

  const auto markers = csv::read(marker_file);
  const int m_id = markers.column("id");
  if (m_id != 0) throw DataError(fmt::format("'{}' must start with an id column", marker_file.string()));
  const auto p = static_cast<Index>(markers.header.size()) - 1;
  std::unordered_map<std::string, std::size_t> marker_row;
  for (std::size_t i = 0; i < markers.rows.size(); ++i) {
    if (!marker_row.emplace(markers.rows[i][0], i).second) {
      throw DataError(fmt::format("duplicate observation id '{}' in marker file", markers.rows[i][0]));
    }
  }
  if (markers.rows.size() != n) {
    throw DataError(fmt::format("dimension mismatch: {} phenotype rows, {} marker rows", n,
                                markers.rows.size()));
  }
  t.markers.resize(static_cast<Index>(n), p);
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = marker_row.find(t.ids[i]);
    if (it == marker_row.end()) throw DataError(fmt::format("no marker row for id '{}'", t.ids[i]));
    const auto& row = markers.rows[it->second];
    for (Index j = 0; j < p; ++j) {
      const auto& field = row[static_cast<std::size_t>(j + 1)];
      const double code = static_cast<double>(csv::parse_int(field, "marker code"));
      if (!is_valid_code(coding, code)) {
        throw DataError(fmt::format("unknown marker code '{}' for id '{}' under {} coding", field,
                                    t.ids[i], to_string(coding)));
      }
      t.markers(static_cast<Index>(i), j) = code;
    }
  }
  return assemble_dataset(t);
}

void write_dataset(const PhenotypeDataset& ds, const std::filesystem::path& phenotype_file,
                   const std::filesystem::path& marker_file) {
  csv::Table pheno;
  pheno.header = {"id", "replicate", "block", "genotype", "y"};
  std::vector<Index> conf;
  for (Index c = 0; c < ds.Z.cols(); ++c) {
    if (ds.confounder_names[static_cast<std::size_t>(c)] == kInterceptName) continue;
    conf.push_back(c);
    pheno.header.push_back(ds.confounder_names[static_cast<std::size_t>(c)]);
  }
  Index row = 0;
  for (Index k = 0; k < ds.n_replicates(); ++k) {
    for (Index i = 0; i < ds.replicate_sizes[static_cast<std::size_t>(k)]; ++i, ++row) {
      const auto r = static_cast<std::size_t>(row);
      std::vector<std::string> fields{
          ds.ids[r], ds.replicate_labels[static_cast<std::size_t>(k)],
          ds.block_labels[static_cast<std::size_t>(ds.block_of[r])],
          ds.genotype_labels[static_cast<std::size_t>(ds.genotype_of[r])], csv::format_double(ds.y(row))};
      for (Index c : conf) fields.push_back(csv::format_double(ds.Z(row, c)));
      pheno.rows.push_back(std::move(fields));
    }
  }
  csv::write(phenotype_file, pheno);

  csv::Table markers;
  markers.header.push_back("id");
  for (Index j = 0; j < ds.n_markers(); ++j) markers.header.push_back(fmt::format("m_{}", j + 1));
  for (Index i = 0; i < ds.n_obs(); ++i) {
    std::vector<std::string> fields{ds.ids[static_cast<std::size_t>(i)]};
    for (Index j = 0; j < ds.n_markers(); ++j) {
      fields.push_back(fmt::format("{}", static_cast<int>(ds.Xg(i, j))));
    }
    markers.rows.push_back(std::move(fields));
  }
  csv::write(marker_file, markers);
}

MatrixXd stack_design(const PhenotypeDataset& ds) {
  MatrixXd X(ds.n_obs(), ds.n_markers() + ds.n_blocks());
  X << ds.Xg, ds.Xb;
  return X;
}

PhenotypeDataset subset_rows(const PhenotypeDataset& ds, const std::vector<Index>& rows) {
  PhenotypeDataset out;
  out.coding = ds.coding;
  out.block_labels = ds.block_labels;
  out.confounder_names = ds.confounder_names;
  const auto m = static_cast<Index>(rows.size());
  out.y.resize(m);
  out.Z.resize(m, ds.Z.cols());
  out.Xg.resize(m, ds.Xg.cols());
  out.Xb.resize(m, ds.Xb.cols());

  std::vector<Index> rep_of(static_cast<std::size_t>(ds.n_obs()));
  for (Index k = 0, row = 0; k < ds.n_replicates(); ++k) {
    for (Index i = 0; i < ds.replicate_sizes[static_cast<std::size_t>(k)]; ++i) {
      rep_of[static_cast<std::size_t>(row++)] = k;
    }
  }
  std::vector<Index> geno_map(static_cast<std::size_t>(ds.n_genotypes()), -1);
  Index last_rep = -1;
  for (Index i = 0; i < m; ++i) {
    const auto src = rows[static_cast<std::size_t>(i)];
    const auto s = static_cast<std::size_t>(src);
    out.y(i) = ds.y(src);
    out.Z.row(i) = ds.Z.row(src);
    out.Xg.row(i) = ds.Xg.row(src);
    out.Xb.row(i) = ds.Xb.row(src);
    out.ids.push_back(ds.ids[s]);
    out.block_of.push_back(ds.block_of[s]);
    auto& g = geno_map[static_cast<std::size_t>(ds.genotype_of[s])];
    if (g < 0) {
      g = static_cast<Index>(out.genotype_labels.size());
      out.genotype_labels.push_back(ds.genotype_labels[static_cast<std::size_t>(ds.genotype_of[s])]);
    }
    out.genotype_of.push_back(g);
    const Index k = rep_of[s];
    if (k != last_rep) {
      if (k < last_rep) throw DataError("subset rows must preserve replicate grouping");
      out.replicate_sizes.push_back(0);
      out.replicate_labels.push_back(ds.replicate_labels[static_cast<std::size_t>(k)]);
      last_rep = k;
    }
    ++out.replicate_sizes.back();
  }
  return out;
}

}  // namespace rgp

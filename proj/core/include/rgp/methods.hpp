#pragma once

#include "rgp/dataset.hpp"
#include "rgp/mdpde.hpp"
#include "rgp/robust_m.hpp"
#include "rgp/shrinkage.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rgp {

enum class MethodKind { Rmla, Rmlv, RobRmla, RobRmlv, Mdpde1, Rob1, Rob2, Mdpde2 };

struct MethodSpec {
  MethodKind kind = MethodKind::Mdpde1;
  double alpha = 1.0;  ///< mdpde1 / mdpde2 only

  /// rmla, rmlv, rob-rmla, rob-rmlv, rob1, rob2, mdpde1, mdpde2 and mle
  /// (mdpde1 at alpha 0). The alpha may be appended as "mdpde1:0.5" or passed
  /// separately; it is required for the mdpde methods.
  static MethodSpec parse(const std::string& text, std::optional<double> alpha = std::nullopt);
  std::string name() const;
  bool has_alpha() const { return kind == MethodKind::Mdpde1 || kind == MethodKind::Mdpde2; }
  /// name plus alpha, e.g. "mdpde1(alpha=1)"; "mle" for mdpde1 at alpha 0.
  std::string label() const;
};

std::vector<MethodSpec> parse_method_list(const std::string& text);

struct MethodOptions {
  DpdConfig dpd;
  RobustFitConfig robust;
  RmlvOptions rmlv;
};

FitResult fit_method(const PhenotypeDataset& ds, const MethodSpec& spec,
                     const MethodOptions& opts = {});

/// Applies fitted gamma and u_g to another dataset with the same columns.
/// Blocks flagged false in known_blocks contribute 0; empty means all known.
VectorXd predict_dataset(const FitResult& fit, const PhenotypeDataset& ds,
                         const std::vector<bool>& known_blocks = {});

}  // namespace rgp

#pragma once

#include "rgp/experiment.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rgp::cli {

/// Layered configuration: preset defaults, then an INI file, then flags.
struct RunConfig {
  ExperimentConfig experiment;
  std::vector<double> sweep_sigma2_g;
  std::optional<double> sweep_sigma2_e;
};

/// "paper" (the published simulation design, 100 replications) or "desk"
/// (G = 100, r = 2, p = 100, 20 blocks of 5, 30 replications).
RunConfig preset(const std::string& name);

/// Sections [simulation], [contamination], [experiment], [mdpde], [robust],
/// [rmlv] and [sweep]. Unknown keys are errors.
void apply_ini(RunConfig& cfg, const std::filesystem::path& path);

/// Genotypic variance per unit sigma2_g for the simulator's marker model.
double expected_marker_scale(const SimulationConfig& sim);

std::vector<double> parse_number_list(const std::string& text, const char* what);
std::vector<ContaminationScheme> parse_scheme_list(const std::string& text, const ContaminationScheme& random,
                                                   const ContaminationScheme& block);

}  // namespace rgp::cli

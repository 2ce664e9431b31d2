#pragma once

#include "luq/clustering.hpp"
#include "luq/experiments.hpp"
#include "luq/kpca.hpp"
#include "luq/spline_filter.hpp"
#include "luq/svm.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace luq {

/// External data in place of a synthetic experiment.
struct InputFiles {
  std::filesystem::path predicted;
  std::filesystem::path observed;
  std::filesystem::path predicted_params;
  std::optional<std::filesystem::path> observed_params;
  std::vector<ParameterDistribution> initial;
  std::vector<ParameterDistribution> data_generating;  ///< may be empty
};

struct PipelineConfig {
  std::optional<ExperimentConfig> experiment;
  std::optional<InputFiles> inputs;
  FilterConfig filter;
  KMeansOptions clustering;
  std::vector<KernelSpec> svm_proposals;
  int k_folds = 10;
  SvmOptions svm;
  QoiMode qoi_mode;
  std::vector<KernelSpec> qoi_proposals;
  std::size_t grid_n = 1000;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;

  /// Parses a config document. Relative input paths resolve against
  /// `base_dir`. Missing required fields are reported together.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  /// Every semantic field with defaults filled in; output_dir excluded.
  nlohmann::json semantic_json() const;
  /// FNV-1a of the canonical semantic JSON, as 16 hex digits.
  std::string hash() const;
};

PipelineConfig load_config(const std::filesystem::path& path);

enum class Stage { generate, filter, dynamics, qoi, invert, metrics };

const std::vector<Stage>& all_stages();
std::string to_string(Stage stage);
Stage stage_from_string(const std::string& name);

/// Runs one stage: reads its inputs from the output directory, writes its
/// artifacts there and records them in manifest.json.
void run_stage(Stage stage, const PipelineConfig& cfg, std::ostream& log);
void run_all(const PipelineConfig& cfg, std::ostream& log);

/// Seeds handed to the randomized stages.
struct StageSeeds {
  std::uint64_t data;
  std::uint64_t clustering;
  std::uint64_t folds;
  std::uint64_t rejection;
};
StageSeeds stage_seeds(std::uint64_t seed);

/// FNV-1a 64-bit hash of a file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

/// Process exit code for an exception thrown by the pipeline.
int exit_code_for(const std::exception& e);

}  // namespace luq

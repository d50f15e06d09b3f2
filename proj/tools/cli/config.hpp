#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "deltaphi/datagen.hpp"
#include "deltaphi/model.hpp"
#include "deltaphi/residual.hpp"
#include "deltaphi/retrieval.hpp"

namespace dphi::cli {

/// Invalid config file. `key` is the dotted path of the offending entry and
/// `line` its 1-based line (0 when unknown).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, int line, const std::string& what)
      : std::runtime_error("key '" + key + "'" + (line > 0 ? " (line " + std::to_string(line) + ")" : "") + ": " + what),
        key_(key),
        line_(line) {}
  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

enum class Problem { darcy, timeseries };

struct DataSection {
  Problem problem = Problem::darcy;
  std::size_t train_samples = 120;
  std::size_t test_samples = 60;
  std::size_t resolution = 32;
  /// Grid of the zero-shot test set; 0 disables it.
  std::size_t high_resolution = 0;
  DarcyConfig darcy;
  TimeSeriesConfig timeseries;
  std::filesystem::path train_path, test_path, high_res_test_path;
};

struct RetrievalSection {
  SimilarityMetric metric = SimilarityMetric::cosine_distance;
  AuxiliaryPolicy policy;
  std::size_t robust_repeats = 5;
  std::size_t robust_top_k = 10;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  DataSection data;
  OperatorSpec model;  // channel counts are derived from the data and mode
  TrainConfig train;   // k, seed and policy are filled from the other sections
  RetrievalSection retrieval;
  std::size_t max_rank = 40;
};

/// Strict YAML loading: unknown keys, wrong types and invalid values are
/// ConfigErrors. Relative paths resolve against the config file's directory.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);

/// Seeds of the three generated sets; the test salts differ in the high bits
/// so seed ^ index never collides across sets.
std::uint64_t train_seed(const ExperimentConfig& c);
std::uint64_t test_seed(const ExperimentConfig& c);
std::uint64_t high_res_test_seed(const ExperimentConfig& c);

Dataset generate_dataset(const ExperimentConfig& c, std::size_t samples, std::size_t resolution, std::uint64_t seed);

/// Model spec with channel counts for the given mode.
OperatorSpec model_spec(const ExperimentConfig& c, TrainingMode mode, const Dataset& train_set);
TrainConfig train_config(const ExperimentConfig& c, TrainingMode mode);

}  // namespace dphi::cli

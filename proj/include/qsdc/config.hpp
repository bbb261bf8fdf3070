#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "qsdc/corruption.hpp"
#include "qsdc/evaluation.hpp"
#include "qsdc/reduction.hpp"

namespace qsdc {

inline constexpr const char* kOutputDirEnv = "QSDC_OUTPUT_DIR";

// Every knob of the experiment, loadable from a "key = value" text file.
struct CampaignConfig {
  // dataset and classifier
  std::size_t train_images = 4000;
  std::size_t test_images = 1000;
  std::uint64_t data_seed = 7;
  std::string topology = "builtin";  // "builtin" or a topology file path (working-directory relative)
  std::uint64_t net_seed = 1;
  std::size_t net_epochs = 3;

  // campaign
  std::size_t images = 100;
  std::size_t fis_per_image = 100;
  std::size_t accelerated_epochs = 500;
  std::vector<FaultClass> classes{FaultClass::noise, FaultClass::blur, FaultClass::contrast, FaultClass::memory};
  std::vector<Magnitude> magnitudes{Magnitude::low, Magnitude::med, Magnitude::high};
  std::vector<MemoryTarget> targets{MemoryTarget::weight, MemoryTarget::neuron};
  CorruptionParams corruption;
  std::uint64_t campaign_seed = 11;

  // detector pipeline
  std::size_t split_train = 2;
  std::size_t split_test = 1;
  double bounds_fraction = 0.2;
  double faulty_to_free = 2.0;  // target ratio; 0 keeps every fault-free record
  std::size_t seeds = 10;
  std::uint64_t seed_base = 100;
  std::vector<double> ccp_alphas{1.0e-5, 1.25e-5, 1.5e-5, 1.75e-5, 2.0e-5};
  double retention = 0.95;
  EvalMode retention_mode = EvalMode::cls;
  std::size_t search_depth = 24;
  DepthUnit depth_unit = DepthUnit::rounds;

  // overhead benchmark
  std::size_t bench_images = 20;
  std::size_t bench_batch = 10;
  std::size_t bench_warmup = 5;
  std::size_t bench_repetitions = 1000;

  // paths (relative paths resolve against output_dir)
  std::filesystem::path output_dir = "out";
  std::filesystem::path data_dir = "data_idx";
  std::filesystem::path network = "net.qsnt";
  std::filesystem::path records = "records.csv";

  [[nodiscard]] std::filesystem::path resolve(const std::filesystem::path& p) const;
  // Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Parses "key = value" lines; '#' starts a comment, lists are
/// comma-separated. Unknown keys and malformed values throw ConfigError.
[[nodiscard]] CampaignConfig parse_config(std::istream& in, CampaignConfig base = {});
[[nodiscard]] CampaignConfig load_config(const std::filesystem::path& path, CampaignConfig base = {});
// Serializes every field; parse_config(write_config(c)) == c field by field.
[[nodiscard]] std::string write_config(const CampaignConfig& c);

// Replaces output_dir with $QSDC_OUTPUT_DIR when it is set and non-empty.
void apply_env_overrides(CampaignConfig& c);

}  // namespace qsdc

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qsdc/campaign.hpp"
#include "qsdc/config.hpp"
#include "qsdc/detector.hpp"
#include "qsdc/evaluation.hpp"
#include "qsdc/monitor.hpp"
#include "qsdc/reduction.hpp"

namespace qsdc {

struct DatasetSplit {
  std::vector<std::size_t> train;   // image ids, sorted
  std::vector<std::size_t> test;
  std::vector<std::size_t> bounds;  // subset of train
};

/// Image-level split: train gets round(n * train_parts / (train_parts +
/// test_parts)) of the shuffled ids, bounds the first ceil(fraction * |train|)
/// of a second shuffle of the train ids.
[[nodiscard]] DatasetSplit split_dataset(std::span<const std::size_t> image_ids, std::size_t train_parts,
                                         std::size_t test_parts, double bounds_fraction, std::uint64_t seed);

/// Indices of the non-DUE records to train and test on. Fault-free
/// ("none") records are randomly thinned so that faulty:free is at most
/// `faulty_to_free` (0 keeps them all).
[[nodiscard]] std::vector<std::size_t> balance_records(const std::vector<OutcomeRecord>& records,
                                                       double faulty_to_free, std::uint64_t seed);

// Bounds from the dedicated fault-free records of the given images.
[[nodiscard]] QuantileBounds bounds_from_records(const std::vector<OutcomeRecord>& records,
                                                 std::span<const std::size_t> images, std::string provenance);

// Rows for the selected records whose image is in `images`.
[[nodiscard]] LabeledDataset build_dataset(const std::vector<OutcomeRecord>& records,
                                           std::span<const std::size_t> selected,
                                           std::span<const std::size_t> images, const QuantileBounds& bounds);

struct SeedData {
  std::uint64_t seed = 0;
  DatasetSplit split;
  QuantileBounds bounds;
  LabeledDataset train{0, kFaultClassCount};
  LabeledDataset test{0, kFaultClassCount};
  LabeledDataset inner_train{0, kFaultClassCount};  // alpha selection
  LabeledDataset inner_val{0, kFaultClassCount};
};

// Throws ConfigError when the training data holds a single class.
[[nodiscard]] SeedData prepare_seed(const std::vector<OutcomeRecord>& records, std::size_t layers,
                                    const CampaignConfig& config, std::size_t seed_index);

// Alpha with the best mean of cls precision and recall on the inner
// validation split; ties go to the earlier alpha.
[[nodiscard]] double select_alpha(const SeedData& data, const CampaignConfig& config);

struct SeedResult {
  std::uint64_t seed = 0;
  double alpha = 0.0;
  SeedData data;
  DecisionTree full_tree;
  EvalReport full;
  ReductionResult reduction;
  std::optional<CandidatePool> pool;
};

[[nodiscard]] SeedResult run_seed(const std::vector<OutcomeRecord>& records, std::size_t layers,
                                  const CampaignConfig& config, std::size_t seed_index, bool with_search);

struct MetricSummary {
  std::string name;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (0 for one seed)
};

struct PipelineReport {
  std::size_t layers = 0;
  std::vector<SeedResult> seeds;  // seeds[0] also carries the minimal search
  std::vector<MetricSummary> full_summary;
  std::vector<MetricSummary> reduced_summary;

  [[nodiscard]] const MetricSummary& metric(bool reduced, std::string_view name) const;
};

// Column order of metrics_table.csv.
inline constexpr std::array<const char*, 8> kTableMetrics{"P_cls", "P_cat", "P_sdc", "R_cls",
                                                          "R_cat", "R_sdc", "N_ft",  "N_l"};

using PipelineProgress = std::function<void(const std::string& message)>;

/// Trains, tunes and evaluates a detector for each of config.seeds seeds,
/// reduces every model, runs the minimal search on the first seed, and
/// averages the metrics.
[[nodiscard]] PipelineReport train_eval_pipeline(const std::vector<OutcomeRecord>& records, std::size_t layers,
                                                 const CampaignConfig& config, const PipelineProgress& progress = {});

/// Writes metrics_table.csv, metrics_long.csv, eval_report.{csv,json},
/// reduction_trace.csv, search_trace.csv, pool.json, tree.json,
/// tree_rules.txt, reduced_tree.json, reduced_rules.txt, bounds.csv and
/// dataset_stats.csv into `dir`. Returns the written paths.
std::vector<std::filesystem::path> emit_report(const PipelineReport& report, const std::filesystem::path& dir);

[[nodiscard]] std::string metrics_table_csv(const PipelineReport& report);
[[nodiscard]] std::string tree_rules(const DecisionTree& tree, std::size_t layers);

}  // namespace qsdc

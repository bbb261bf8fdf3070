#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qsdc/detector.hpp"
#include "qsdc/evaluation.hpp"

namespace qsdc {

struct ReductionOptions {
  double retention = 0.95;
  EvalMode mode = EvalMode::cls;  // metric the retention rule is measured on
  double ccp_alpha = 1.5e-5;
  std::uint64_t seed = 0;
  std::size_t layers = 1;  // monitored layers, to count N_l
};

struct ReducedModel {
  std::vector<std::size_t> features;  // ranked order, most important first
  DecisionTree tree;
  EvalReport report;
  double retention_precision = 0.0;  // reduced / reference
  double retention_recall = 0.0;

  [[nodiscard]] std::size_t n_ft() const { return features.size(); }
  [[nodiscard]] std::size_t n_l(std::size_t layers) const;
};

struct ReductionStep {
  std::size_t round = 0;
  std::size_t k = 0;
  std::vector<std::size_t> features;
  double precision = 0.0;
  double recall = 0.0;
  bool accepted = false;
};

struct ReductionResult {
  bool success = false;
  ReducedModel model;  // the accepted model, or the best one tried on failure
  std::vector<ReductionStep> trace;
};

// Features of the tree ranked by Gini importance, ties by lower index.
// Only features the fit was allowed to use are listed.
[[nodiscard]] std::vector<std::size_t> rank_features(const DecisionTree& tree);

[[nodiscard]] EvalReport evaluate_tree(const DecisionTree& tree, const LabeledDataset& data);

/// Retrains on the top-1, top-2, ... ranked features of `full` and returns
/// the smallest k whose precision and recall (in options.mode) on `eval`
/// both reach retention times the reference values. The reference is the
/// full model's own score on `eval` unless `reference` is given.
[[nodiscard]] ReductionResult reduce_features(const DecisionTree& full, const LabeledDataset& train,
                                              const LabeledDataset& eval, const ReductionOptions& options,
                                              const EvalReport* reference = nullptr, std::size_t round = 0);

enum class DepthUnit : std::uint8_t { rounds = 0, features = 1 };

struct CandidatePool {
  std::vector<ReducedModel> candidates;  // pairwise disjoint feature sets
  std::vector<ReductionStep> trace;
  std::size_t rounds = 0;
  std::size_t eliminated = 0;  // features removed from the search so far
  std::string stop_reason;
};

/// Repeatedly fits a model on the features not yet in the pool, reduces it,
/// and adds the accepted set to the pool. Every candidate is held to the
/// retention rule against the unrestricted model's score. Stops when the
/// round count (or eliminated-feature count) reaches `depth`, when no
/// features remain, or when a reduction fails.
[[nodiscard]] CandidatePool minimal_feature_search(const LabeledDataset& train, const LabeledDataset& eval,
                                                   const ReductionOptions& options, std::size_t depth = 24,
                                                   DepthUnit unit = DepthUnit::rounds);

struct MinimalCandidateSummary {
  std::vector<std::size_t> layers;       // 1-based
  std::vector<double> normalized_depth;  // layer / L
  std::vector<int> percentiles;
  std::size_t n_ft = 0;
  std::size_t n_l = 0;
};

struct MinimalSummary {
  std::vector<MinimalCandidateSummary> candidates;
  double mean_n_ft = 0.0;
  double mean_n_l = 0.0;
  double last_quartile_fraction = 0.0;  // candidates touching a layer with normalized depth > 0.75
  std::vector<std::size_t> percentile_histogram;  // per decile index, over all candidate features
};

// Throws ConfigError on an empty pool.
[[nodiscard]] MinimalSummary summarize_minimal(const CandidatePool& pool, std::size_t layers);

// round,k,features,P,R,accepted; features joined with ';'.
[[nodiscard]] std::string reduction_trace_csv(std::span<const ReductionStep> trace);
[[nodiscard]] nlohmann::json pool_json(const CandidatePool& pool, std::size_t layers);

}  // namespace qsdc

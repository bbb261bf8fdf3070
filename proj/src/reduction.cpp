#include "qsdc/reduction.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "qsdc/csv.hpp"
#include "qsdc/errors.hpp"
#include "qsdc/monitor.hpp"

namespace qsdc {

std::size_t ReducedModel::n_l(std::size_t layers) const {
  std::set<std::size_t> s;
  for (std::size_t f : features) s.insert(feature_layer(f, layers));
  return s.size();
}

std::vector<std::size_t> rank_features(const DecisionTree& tree) {
  std::vector<std::size_t> allowed = tree.feature_subset;
  if (allowed.empty()) {
    allowed.resize(tree.num_features);
    std::iota(allowed.begin(), allowed.end(), std::size_t{0});
  }
  const auto imp = gini_importances(tree);
  std::stable_sort(allowed.begin(), allowed.end(), [&](std::size_t a, std::size_t b) {
    if (imp[a] != imp[b]) return imp[a] > imp[b];
    return a < b;
  });
  return allowed;
}

EvalReport evaluate_tree(const DecisionTree& tree, const LabeledDataset& data) {
  std::vector<int> pred(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) pred[i] = predict(tree, data.row(i));
  return evaluate_modes(std::span<const int>(pred), std::span<const int>(data.labels()));
}

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 1.0; }

}  // namespace

ReductionResult reduce_features(const DecisionTree& full, const LabeledDataset& train, const LabeledDataset& eval,
                                const ReductionOptions& options, const EvalReport* reference, std::size_t round) {
  const EvalReport ref = reference ? *reference : evaluate_tree(full, eval);
  const double p_ref = ref.precision(options.mode), r_ref = ref.recall(options.mode);
  const auto ranked = rank_features(full);
  ReductionResult result;
  double best_score = -1.0;
  for (std::size_t k = 1; k <= ranked.size(); ++k) {
    std::vector<std::size_t> subset(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k));
    ReducedModel m;
    m.features = subset;
    m.tree = fit_tree(train, options.ccp_alpha, options.seed, subset);
    m.report = evaluate_tree(m.tree, eval);
    const double p = m.report.precision(options.mode), r = m.report.recall(options.mode);
    m.retention_precision = ratio(p, p_ref);
    m.retention_recall = ratio(r, r_ref);
    const bool ok = p >= options.retention * p_ref && r >= options.retention * r_ref;
    result.trace.push_back(ReductionStep{round, k, subset, p, r, ok});
    const double score = std::min(m.retention_precision, m.retention_recall);
    if (ok) {
      result.success = true;
      result.model = std::move(m);
      return result;
    }
    if (score > best_score) {
      best_score = score;
      result.model = std::move(m);
    }
  }
  return result;
}

CandidatePool minimal_feature_search(const LabeledDataset& train, const LabeledDataset& eval,
                                     const ReductionOptions& options, std::size_t depth, DepthUnit unit) {
  CandidatePool pool;
  const DecisionTree full = fit_tree(train, options.ccp_alpha, options.seed);
  const EvalReport reference = evaluate_tree(full, eval);
  std::vector<char> excluded(train.cols(), 0);
  while (true) {
    const std::size_t progress = unit == DepthUnit::rounds ? pool.rounds : pool.eliminated;
    if (progress >= depth) {
      pool.stop_reason = "depth";
      break;
    }
    std::vector<std::size_t> available;
    for (std::size_t j = 0; j < train.cols(); ++j) {
      if (!excluded[j]) available.push_back(j);
    }
    if (available.empty()) {
      pool.stop_reason = "exhausted";
      break;
    }
    const DecisionTree restricted = fit_tree(train, options.ccp_alpha, options.seed, available);
    ReductionResult red = reduce_features(restricted, train, eval, options, &reference, pool.rounds);
    pool.trace.insert(pool.trace.end(), red.trace.begin(), red.trace.end());
    ++pool.rounds;
    if (!red.success) {
      pool.stop_reason = "reduction failed";
      break;
    }
    for (std::size_t f : red.model.features) excluded[f] = 1;
    pool.eliminated += red.model.features.size();
    pool.candidates.push_back(std::move(red.model));
  }
  return pool;
}

MinimalSummary summarize_minimal(const CandidatePool& pool, std::size_t layers) {
  if (pool.candidates.empty()) throw ConfigError("summarize_minimal: empty candidate pool");
  MinimalSummary s;
  s.percentile_histogram.assign(kQuantileCount, 0);
  std::size_t touching = 0;
  for (const auto& c : pool.candidates) {
    MinimalCandidateSummary cs;
    bool late = false;
    for (std::size_t f : c.features) {
      const std::size_t l = feature_layer(f, layers) + 1;
      const std::size_t pi = feature_percentile_index(f, layers);
      const double d = static_cast<double>(l) / static_cast<double>(layers);
      cs.layers.push_back(l);
      cs.normalized_depth.push_back(d);
      cs.percentiles.push_back(kPercentiles[pi]);
      ++s.percentile_histogram[pi];
      late = late || d > 0.75;
    }
    cs.n_ft = c.n_ft();
    cs.n_l = c.n_l(layers);
    s.mean_n_ft += static_cast<double>(cs.n_ft);
    s.mean_n_l += static_cast<double>(cs.n_l);
    if (late) ++touching;
    s.candidates.push_back(std::move(cs));
  }
  const auto n = static_cast<double>(pool.candidates.size());
  s.mean_n_ft /= n;
  s.mean_n_l /= n;
  s.last_quartile_fraction = static_cast<double>(touching) / n;
  return s;
}

namespace {

std::string join_features(std::span<const std::size_t> f) {
  std::string out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(f[i]);
  }
  return out;
}

}  // namespace

std::string reduction_trace_csv(std::span<const ReductionStep> trace) {
  std::ostringstream os;
  os << "round,k,features,P,R,accepted\n";
  for (const auto& s : trace) {
    os << s.round << ',' << s.k << ',' << join_features(s.features) << ',' << csv::format(s.precision) << ','
       << csv::format(s.recall) << ',' << (s.accepted ? 1 : 0) << "\n";
  }
  return os.str();
}

nlohmann::json pool_json(const CandidatePool& pool, std::size_t layers) {
  nlohmann::json doc;
  doc["rounds"] = pool.rounds;
  doc["eliminated"] = pool.eliminated;
  doc["stop_reason"] = pool.stop_reason;
  doc["candidates"] = nlohmann::json::array();
  for (const auto& c : pool.candidates) {
    nlohmann::json jc;
    jc["features"] = c.features;
    std::vector<std::string> names;
    for (std::size_t f : c.features) names.push_back(feature_name(f, layers));
    jc["names"] = names;
    jc["n_ft"] = c.n_ft();
    jc["n_l"] = c.n_l(layers);
    for (EvalMode m : kAllEvalModes) {
      jc["P_" + std::string(to_string(m))] = c.report.precision(m);
      jc["R_" + std::string(to_string(m))] = c.report.recall(m);
    }
    doc["candidates"].push_back(std::move(jc));
  }
  if (!pool.candidates.empty()) {
    const auto s = summarize_minimal(pool, layers);
    nlohmann::json js;
    js["mean_n_ft"] = s.mean_n_ft;
    js["mean_n_l"] = s.mean_n_l;
    js["last_quartile_fraction"] = s.last_quartile_fraction;
    js["percentile_histogram"] = s.percentile_histogram;
    nlohmann::json per = nlohmann::json::array();
    for (const auto& c : s.candidates) {
      per.push_back({{"layers", c.layers}, {"normalized_depth", c.normalized_depth}, {"percentiles", c.percentiles}});
    }
    js["candidates"] = per;
    doc["summary"] = js;
  }
  return doc;
}

}  // namespace qsdc

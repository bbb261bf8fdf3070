#include "qsdc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "qsdc/csv.hpp"
#include "qsdc/errors.hpp"

namespace qsdc {

DatasetSplit split_dataset(std::span<const std::size_t> image_ids, std::size_t train_parts, std::size_t test_parts,
                           double bounds_fraction, std::uint64_t seed) {
  if (image_ids.empty()) throw ConfigError("split_dataset: no images");
  if (train_parts == 0 || test_parts == 0) throw ConfigError("split_dataset: ratio parts must be positive");
  std::vector<std::size_t> ids(image_ids.begin(), image_ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const double share = static_cast<double>(train_parts) / static_cast<double>(train_parts + test_parts);
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(ids.size()) * share));
  DatasetSplit s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::vector<std::size_t> pool = s.train;
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto n_bounds = std::min(
      pool.size(), static_cast<std::size_t>(std::ceil(bounds_fraction * static_cast<double>(pool.size()) - 1e-9)));
  s.bounds.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_bounds));
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.bounds.begin(), s.bounds.end());
  return s;
}

std::vector<std::size_t> balance_records(const std::vector<OutcomeRecord>& records, double faulty_to_free,
                                         std::uint64_t seed) {
  std::vector<std::size_t> faulty, free;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].outcome == Outcome::due) continue;
    (records[i].label == FaultClass::none ? free : faulty).push_back(i);
  }
  if (faulty_to_free > 0.0) {
    const auto keep = static_cast<std::size_t>(std::llround(static_cast<double>(faulty.size()) / faulty_to_free));
    if (free.size() > keep) {
      std::mt19937_64 rng(seed);
      std::shuffle(free.begin(), free.end(), rng);
      free.resize(keep);
    }
  }
  std::vector<std::size_t> out = faulty;
  out.insert(out.end(), free.begin(), free.end());
  std::sort(out.begin(), out.end());
  return out;
}

QuantileBounds bounds_from_records(const std::vector<OutcomeRecord>& records, std::span<const std::size_t> images,
                                   std::string provenance) {
  const std::set<std::size_t> wanted(images.begin(), images.end());
  std::vector<QuantileSet> sets;
  for (const auto& r : records) {
    if (r.kind == RunKind::fault_free && wanted.count(r.image)) sets.push_back(r.quantiles);
  }
  if (sets.size() != wanted.size()) throw ConfigError("bounds_from_records: missing fault-free records for some images");
  return extract_bounds(sets, std::move(provenance));
}

LabeledDataset build_dataset(const std::vector<OutcomeRecord>& records, std::span<const std::size_t> selected,
                             std::span<const std::size_t> images, const QuantileBounds& bounds) {
  const std::set<std::size_t> wanted(images.begin(), images.end());
  LabeledDataset data(bounds.layers * kQuantileCount, kFaultClassCount);
  for (std::size_t i : selected) {
    const OutcomeRecord& r = records[i];
    if (r.outcome == Outcome::due) throw ConfigError("build_dataset: DUE records cannot be used for training");
    if (!wanted.count(r.image)) continue;
    data.add_row(anomaly_vector(r.quantiles, bounds), static_cast<int>(r.label));
  }
  return data;
}

namespace {

std::vector<std::size_t> image_ids(const std::vector<OutcomeRecord>& records) {
  std::set<std::size_t> s;
  for (const auto& r : records) s.insert(r.image);
  return {s.begin(), s.end()};
}

void require_classes(const LabeledDataset& d, const char* what) {
  std::set<int> s(d.labels().begin(), d.labels().end());
  if (s.size() < 2) throw ConfigError(std::string(what) + " holds fewer than two classes");
}

std::string join_ids(std::span<const std::size_t> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? " " : "") + std::to_string(ids[i]);
  return out;
}

}  // namespace

SeedData prepare_seed(const std::vector<OutcomeRecord>& records, std::size_t layers, const CampaignConfig& config,
                      std::size_t seed_index) {
  SeedData d;
  d.seed = config.seed_base + seed_index;
  const auto ids = image_ids(records);
  d.split = split_dataset(ids, config.split_train, config.split_test, config.bounds_fraction, d.seed);
  d.bounds = bounds_from_records(records, d.split.bounds, "fault-free references of images " + join_ids(d.split.bounds));
  if (d.bounds.layers != layers) throw ConfigError("prepare_seed: records and network disagree on layer count");
  const auto selected = balance_records(records, config.faulty_to_free, d.seed ^ 0x5bd1e995ull);
  d.train = build_dataset(records, selected, d.split.train, d.bounds);
  d.test = build_dataset(records, selected, d.split.test, d.bounds);
  require_classes(d.train, "training data");
  const DatasetSplit inner = split_dataset(d.split.train, config.split_train, config.split_test, 1.0, d.seed + 0x9e37);
  d.inner_train = build_dataset(records, selected, inner.train, d.bounds);
  d.inner_val = build_dataset(records, selected, inner.test, d.bounds);
  return d;
}

double select_alpha(const SeedData& data, const CampaignConfig& config) {
  double best_alpha = config.ccp_alphas.front();
  if (config.ccp_alphas.size() == 1 || data.inner_val.rows() == 0) return best_alpha;
  // prune one fully grown tree at every alpha instead of refitting
  const DecisionTree grown = fit_tree(data.inner_train, 0.0, data.seed);
  double best = -1.0;
  for (double a : config.ccp_alphas) {
    const EvalReport r = evaluate_tree(ccp_prune(grown, a), data.inner_val);
    const double score = 0.5 * (r.precision(EvalMode::cls) + r.recall(EvalMode::cls));
    if (score > best) {
      best = score;
      best_alpha = a;
    }
  }
  return best_alpha;
}

SeedResult run_seed(const std::vector<OutcomeRecord>& records, std::size_t layers, const CampaignConfig& config,
                    std::size_t seed_index, bool with_search) {
  SeedResult res;
  res.data = prepare_seed(records, layers, config, seed_index);
  res.seed = res.data.seed;
  res.alpha = select_alpha(res.data, config);
  res.full_tree = fit_tree(res.data.train, res.alpha, res.seed);
  res.full = evaluate_tree(res.full_tree, res.data.test);
  ReductionOptions opt;
  opt.retention = config.retention;
  opt.mode = config.retention_mode;
  opt.ccp_alpha = res.alpha;
  opt.seed = res.seed;
  opt.layers = layers;
  res.reduction = reduce_features(res.full_tree, res.data.train, res.data.test, opt);
  if (with_search) {
    res.pool = minimal_feature_search(res.data.train, res.data.test, opt, config.search_depth, config.depth_unit);
  }
  return res;
}

namespace {

std::size_t distinct_layers(std::span<const std::size_t> features, std::size_t layers) {
  std::set<std::size_t> s;
  for (std::size_t f : features) s.insert(feature_layer(f, layers));
  return s.size();
}

// Table metrics of one model, in kTableMetrics order.
std::array<double, 8> table_values(const EvalReport& r, std::size_t n_ft, std::size_t n_l) {
  return {r.precision(EvalMode::cls), r.precision(EvalMode::cat), r.precision(EvalMode::sdc),
          r.recall(EvalMode::cls),    r.recall(EvalMode::cat),    r.recall(EvalMode::sdc),
          static_cast<double>(n_ft),  static_cast<double>(n_l)};
}

std::array<double, 8> full_values(const SeedResult& s, std::size_t layers) {
  const auto used = s.full_tree.used_features();
  return table_values(s.full, used.size(), distinct_layers(used, layers));
}

std::array<double, 8> reduced_values(const SeedResult& s, std::size_t layers) {
  const auto& m = s.reduction.model;
  return table_values(m.report, m.n_ft(), m.n_l(layers));
}

std::vector<MetricSummary> summarize(const std::vector<std::array<double, 8>>& rows) {
  std::vector<MetricSummary> out;
  const auto n = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < kTableMetrics.size(); ++j) {
    MetricSummary m;
    m.name = kTableMetrics[j];
    for (const auto& r : rows) m.mean += r[j];
    m.mean /= n;
    if (rows.size() > 1) {
      double ss = 0.0;
      for (const auto& r : rows) ss += (r[j] - m.mean) * (r[j] - m.mean);
      m.stddev = std::sqrt(ss / (n - 1.0));
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace

const MetricSummary& PipelineReport::metric(bool reduced, std::string_view name) const {
  const auto& v = reduced ? reduced_summary : full_summary;
  for (const auto& m : v) {
    if (m.name == name) return m;
  }
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

PipelineReport train_eval_pipeline(const std::vector<OutcomeRecord>& records, std::size_t layers,
                                   const CampaignConfig& config, const PipelineProgress& progress) {
  config.validate();
  PipelineReport rep;
  rep.layers = layers;
  std::vector<std::array<double, 8>> full_rows, reduced_rows;
  for (std::size_t s = 0; s < config.seeds; ++s) {
    rep.seeds.push_back(run_seed(records, layers, config, s, s == 0));
    const SeedResult& r = rep.seeds.back();
    full_rows.push_back(full_values(r, layers));
    reduced_rows.push_back(reduced_values(r, layers));
    if (progress) {
      std::ostringstream os;
      os << "seed " << r.seed << ": alpha=" << r.alpha << " P_sdc=" << r.full.precision(EvalMode::sdc)
         << " R_sdc=" << r.full.recall(EvalMode::sdc) << " reduced N_ft=" << r.reduction.model.n_ft()
         << (r.reduction.success ? "" : " (reduction failed)");
      progress(os.str());
    }
  }
  rep.full_summary = summarize(full_rows);
  rep.reduced_summary = summarize(reduced_rows);
  return rep;
}

std::string metrics_table_csv(const PipelineReport& report) {
  std::ostringstream os;
  os << "model,seeds";
  for (const char* m : kTableMetrics) os << ',' << m;
  for (const char* m : kTableMetrics) os << ',' << m << "_std";
  os << "\n";
  for (bool reduced : {false, true}) {
    const auto& v = reduced ? report.reduced_summary : report.full_summary;
    os << (reduced ? "reduced" : "full") << ',' << report.seeds.size();
    for (const auto& m : v) os << ',' << csv::format(m.mean);
    for (const auto& m : v) os << ',' << csv::format(m.stddev);
    os << "\n";
  }
  return os.str();
}

std::string tree_rules(const DecisionTree& tree, std::size_t layers) {
  return export_rules(
      tree, [layers](std::size_t f) { return feature_name(f, layers); },
      [](int c) { return std::string(to_string(fault_class_from_id(c))); });
}

namespace {

std::string metrics_long_csv(const PipelineReport& report) {
  std::ostringstream os;
  os << "seed,model,metric,value\n";
  for (const auto& s : report.seeds) {
    const auto fv = full_values(s, report.layers);
    const auto rv = reduced_values(s, report.layers);
    for (std::size_t j = 0; j < kTableMetrics.size(); ++j) {
      os << s.seed << ",full," << kTableMetrics[j] << ',' << csv::format(fv[j]) << "\n";
    }
    os << s.seed << ",full,ccp_alpha," << csv::format(s.alpha) << "\n";
    for (std::size_t j = 0; j < kTableMetrics.size(); ++j) {
      os << s.seed << ",reduced," << kTableMetrics[j] << ',' << csv::format(rv[j]) << "\n";
    }
    os << s.seed << ",reduced,retention_P," << csv::format(s.reduction.model.retention_precision) << "\n";
    os << s.seed << ",reduced,retention_R," << csv::format(s.reduction.model.retention_recall) << "\n";
    os << s.seed << ",reduced,accepted," << (s.reduction.success ? 1 : 0) << "\n";
  }
  return os.str();
}

std::string dataset_stats_csv(const PipelineReport& report) {
  std::ostringstream os;
  os << "seed,train_images,test_images,bounds_images,train_rows,test_rows";
  for (FaultClass c : kAllFaultClasses) os << ",train_" << to_string(c);
  for (FaultClass c : kAllFaultClasses) os << ",test_" << to_string(c);
  os << "\n";
  for (const auto& s : report.seeds) {
    const auto& d = s.data;
    os << s.seed << ',' << d.split.train.size() << ',' << d.split.test.size() << ',' << d.split.bounds.size() << ','
       << d.train.rows() << ',' << d.test.rows();
    for (const auto* set : {&d.train, &d.test}) {
      std::array<std::size_t, kFaultClassCount> counts{};
      for (int l : set->labels()) ++counts[static_cast<std::size_t>(l)];
      for (auto c : counts) os << ',' << c;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace

std::vector<std::filesystem::path> emit_report(const PipelineReport& report, const std::filesystem::path& dir) {
  if (report.seeds.empty()) throw ConfigError("emit_report: no seeds in report");
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& content) {
    const auto p = dir / name;
    csv::write_text(p, content);
    written.push_back(p);
  };
  const SeedResult& first = report.seeds.front();
  put("metrics_table.csv", metrics_table_csv(report));
  put("metrics_long.csv", metrics_long_csv(report));
  put("dataset_stats.csv", dataset_stats_csv(report));
  put("eval_report.csv", eval_report_csv(first.full));
  put("eval_report.json", eval_report_json(first.full).dump(2) + "\n");
  put("reduction_trace.csv", reduction_trace_csv(first.reduction.trace));
  put("tree.json", export_tree(first.full_tree).dump(2) + "\n");
  put("tree_rules.txt", tree_rules(first.full_tree, report.layers));
  put("reduced_tree.json", export_tree(first.reduction.model.tree).dump(2) + "\n");
  put("reduced_rules.txt", tree_rules(first.reduction.model.tree, report.layers));
  if (first.pool) {
    put("search_trace.csv", reduction_trace_csv(first.pool->trace));
    put("pool.json", pool_json(*first.pool, report.layers).dump(2) + "\n");
  }
  write_bounds_csv(first.data.bounds, dir / "bounds.csv");
  written.push_back(dir / "bounds.csv");
  return written;
}

}  // namespace qsdc

// qsdc: fault-injection campaigns and quantile-monitor SDC detection.
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "qsdc/bench.hpp"
#include "qsdc/campaign.hpp"
#include "qsdc/config.hpp"
#include "qsdc/csv.hpp"
#include "qsdc/errors.hpp"
#include "qsdc/experiment.hpp"
#include "qsdc/pipeline.hpp"

using namespace qsdc;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

CampaignConfig effective_config(const Common& c) {
  CampaignConfig cfg;
  if (!c.config_path.empty()) cfg = load_config(c.config_path);
  if (!c.overrides.empty()) {
    std::string text;
    for (const auto& o : c.overrides) text += o + "\n";
    std::istringstream in(text);
    cfg = parse_config(in, cfg);
  }
  apply_env_overrides(cfg);
  cfg.validate();
  return cfg;
}

void say(const std::string& msg) { std::cerr << msg << std::endl; }

Network load_net(const CampaignConfig& cfg) {
  const auto path = cfg.resolve(cfg.network);
  if (!std::filesystem::exists(path)) throw IoError("no network at " + path.string() + "; run train-net first");
  return load_network(path);
}

std::vector<OutcomeRecord> load_records(const CampaignConfig& cfg) {
  const auto path = cfg.resolve(cfg.records);
  if (!std::filesystem::exists(path)) throw IoError("no records at " + path.string() + "; run campaign first");
  return read_records_csv(path);
}

std::size_t record_layers(const std::vector<OutcomeRecord>& r) {
  if (r.empty()) throw ConfigError("records file is empty");
  return r.front().quantiles.layers;
}

DecisionTree load_tree(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return import_tree(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write(const std::filesystem::path& p, const std::string& content) {
  csv::write_text(p, content);
  say("wrote " + p.string());
}

int cmd_gen_data(const CampaignConfig& cfg) {
  const auto sets = generate_datasets(cfg);
  const auto dir = cfg.resolve(cfg.data_dir);
  save_idx_set(sets.train, dir, "train");
  save_idx_set(sets.test, dir, "test");
  say("wrote " + std::to_string(sets.train.size()) + " train and " + std::to_string(sets.test.size()) +
      " test images to " + dir.string());
  return 0;
}

int cmd_train_net(const CampaignConfig& cfg) {
  const auto sets = load_or_generate_datasets(cfg);
  double acc = 0.0;
  const Network net = train_network(cfg, sets, acc, [](std::size_t e, double loss) {
    say("epoch " + std::to_string(e + 1) + " loss " + csv::format(loss));
  });
  const auto path = cfg.resolve(cfg.network);
  std::filesystem::create_directories(path.parent_path());
  save_network(net, path);
  std::cout << describe(net) << "test accuracy " << csv::format(acc) << "\n";
  say("wrote " + path.string());
  return acc >= 0.95 ? 0 : 3;
}

int cmd_extract_bounds(const CampaignConfig& cfg, std::size_t count, const std::string& out) {
  const Network net = load_net(cfg);
  const auto sets = load_or_generate_datasets(cfg);
  if (count == 0) count = static_cast<std::size_t>(cfg.bounds_fraction * static_cast<double>(sets.train.size()));
  count = std::min(std::max<std::size_t>(count, 1), sets.train.size());
  const auto b = extract_bounds(net, sets.train.images.slice(0, count),
                                "first " + std::to_string(count) + " training images");
  write_bounds_csv(b, cfg.resolve(out));
  say("wrote " + cfg.resolve(out).string());
  return 0;
}

int cmd_campaign(const CampaignConfig& cfg) {
  const Network net = load_net(cfg);
  const auto sets = load_or_generate_datasets(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto records = run_campaign(net, sets.test.images, cfg, [](std::size_t done, std::size_t total) {
    if (done % 10 == 0 || done == total) say("campaign: " + std::to_string(done) + "/" + std::to_string(total) + " images");
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_records_csv(records, net.conv_count(), cfg.resolve(cfg.records));
  const auto s = campaign_stats(records);
  std::cout << "records " << s.total << " masked " << s.masked << " sdc " << s.sdc << " due " << s.due
            << "\nrandom memory SDC " << s.random_memory_sdc << "/" << s.random_memory << ", accelerated SDC "
            << s.accelerated_sdc << "/" << s.accelerated << "\ncampaign time " << csv::format(secs) << " s\n";
  return 0;
}

int cmd_train_detector(const CampaignConfig& cfg, std::size_t seed_index) {
  const auto records = load_records(cfg);
  const std::size_t layers = record_layers(records);
  const SeedData data = prepare_seed(records, layers, cfg, seed_index);
  const double alpha = select_alpha(data, cfg);
  const DecisionTree tree = fit_tree(data.train, alpha, data.seed);
  const EvalReport rep = evaluate_tree(tree, data.test);
  write(cfg.resolve("tree.json"), export_tree(tree).dump(2) + "\n");
  write(cfg.resolve("tree_rules.txt"), tree_rules(tree, layers));
  write(cfg.resolve("eval_report.csv"), eval_report_csv(rep));
  write_bounds_csv(data.bounds, cfg.resolve("bounds.csv"));
  std::cout << "seed " << data.seed << " alpha " << csv::format(alpha) << " nodes " << tree.node_count() << "\n";
  for (EvalMode m : kAllEvalModes) {
    std::cout << "P_" << to_string(m) << " " << csv::format(rep.precision(m)) << "  R_" << to_string(m) << " "
              << csv::format(rep.recall(m)) << "\n";
  }
  return 0;
}

ReductionOptions reduction_options(const CampaignConfig& cfg, const DecisionTree& tree, std::uint64_t seed,
                                   std::size_t layers) {
  ReductionOptions opt;
  opt.retention = cfg.retention;
  opt.mode = cfg.retention_mode;
  opt.ccp_alpha = tree.ccp_alpha;
  opt.seed = seed;
  opt.layers = layers;
  return opt;
}

int cmd_reduce(const CampaignConfig& cfg, std::size_t seed_index, const std::string& tree_path) {
  const auto records = load_records(cfg);
  const std::size_t layers = record_layers(records);
  const SeedData data = prepare_seed(records, layers, cfg, seed_index);
  const DecisionTree full = load_tree(cfg.resolve(tree_path));
  const auto res = reduce_features(full, data.train, data.test, reduction_options(cfg, full, data.seed, layers));
  write(cfg.resolve("reduction_trace.csv"), reduction_trace_csv(res.trace));
  write(cfg.resolve("reduced_tree.json"), export_tree(res.model.tree).dump(2) + "\n");
  write(cfg.resolve("reduced_rules.txt"), tree_rules(res.model.tree, layers));
  std::cout << (res.success ? "accepted" : "FAILED, best found") << ": " << res.model.n_ft() << " features from "
            << res.model.n_l(layers) << " layers:";
  for (std::size_t f : res.model.features) std::cout << " " << feature_name(f, layers);
  std::cout << "\nretention P " << csv::format(res.model.retention_precision) << " R "
            << csv::format(res.model.retention_recall) << "\n";
  return res.success ? 0 : 4;
}

int cmd_search_minimal(const CampaignConfig& cfg, std::size_t seed_index) {
  const auto records = load_records(cfg);
  const std::size_t layers = record_layers(records);
  const SeedData data = prepare_seed(records, layers, cfg, seed_index);
  const double alpha = select_alpha(data, cfg);
  ReductionOptions opt;
  opt.retention = cfg.retention;
  opt.mode = cfg.retention_mode;
  opt.ccp_alpha = alpha;
  opt.seed = data.seed;
  opt.layers = layers;
  const auto pool = minimal_feature_search(data.train, data.test, opt, cfg.search_depth, cfg.depth_unit);
  write(cfg.resolve("search_trace.csv"), reduction_trace_csv(pool.trace));
  write(cfg.resolve("pool.json"), pool_json(pool, layers).dump(2) + "\n");
  std::cout << pool.candidates.size() << " candidates in " << pool.rounds << " rounds (" << pool.stop_reason << ")\n";
  for (const auto& c : pool.candidates) {
    for (std::size_t f : c.features) std::cout << feature_name(f, layers) << " ";
    std::cout << "\n";
  }
  return 0;
}

int cmd_evaluate(const CampaignConfig& cfg) {
  const auto records = load_records(cfg);
  const std::size_t layers = record_layers(records);
  const auto report = train_eval_pipeline(records, layers, cfg, say);
  for (const auto& p : emit_report(report, cfg.output_dir)) say("wrote " + p.string());
  std::cout << metrics_table_csv(report);
  return 0;
}

int cmd_bench(const CampaignConfig& cfg, const std::string& tree_path) {
  const Network net = load_net(cfg);
  const auto sets = load_or_generate_datasets(cfg);
  const std::size_t layers = net.conv_count();
  std::vector<std::size_t> features;
  const auto tp = cfg.resolve(tree_path);
  if (std::filesystem::exists(tp)) {
    features = load_tree(tp).used_features();
  } else {
    say("no reduced tree at " + tp.string() + "; timing a one-feature reduced monitor on the last layer");
    features = {feature_index(layers - 1, kQuantileCount - 1, layers)};
  }
  const auto n = std::min(cfg.bench_images, sets.test.size());
  BenchOptions opt{cfg.bench_batch, cfg.bench_warmup, cfg.bench_repetitions};
  const auto rep = bench_overhead(net, sets.test.images.slice(0, n), MonitorSelection::from_features(features, layers), opt);
  const std::string text = overhead_csv(rep);
  write(cfg.resolve("overhead.csv"), text);
  std::cout << text;
  return 0;
}

int cmd_export_tree(const std::string& tree_path, std::size_t layers, const std::string& out) {
  const DecisionTree tree = load_tree(tree_path);
  if (layers == 0) {
    if (tree.num_features % kQuantileCount != 0) throw ConfigError("cannot infer layer count; pass --layers");
    layers = tree.num_features / kQuantileCount;
  }
  const std::string rules = tree_rules(tree, layers);
  if (out.empty()) {
    std::cout << rules;
  } else {
    write(out, rules);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantile-marker SDC detection toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("-c,--config", common.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("-s,--set", common.overrides, "override one config key, e.g. --set images=20");

  auto* gen = app.add_subcommand("gen-data", "write the synthetic shapes train/test sets as IDX files");
  auto* train = app.add_subcommand("train-net", "train the classifier and save it");
  auto* bounds = app.add_subcommand("extract-bounds", "fault-free quantile bounds over training images");
  std::size_t bounds_count = 0;
  std::string bounds_out = "bounds.csv";
  bounds->add_option("--count", bounds_count, "number of training images (default: bounds_fraction of the set)");
  bounds->add_option("-o,--out", bounds_out, "output CSV");
  auto* camp = app.add_subcommand("campaign", "run the fault-injection campaign and write the records CSV");
  std::size_t seed_index = 0;
  auto* td = app.add_subcommand("train-detector", "fit, tune and evaluate one detector");
  td->add_option("--seed-index", seed_index, "which of the pipeline seeds to use");
  auto* red = app.add_subcommand("reduce", "guided feature reduction of a trained detector");
  std::string tree_path = "tree.json";
  red->add_option("--seed-index", seed_index);
  red->add_option("--tree", tree_path, "detector to reduce");
  auto* search = app.add_subcommand("search-minimal", "minimal feature-combination search");
  search->add_option("--seed-index", seed_index);
  auto* eval = app.add_subcommand("evaluate", "full multi-seed pipeline and report files");
  auto* bench = app.add_subcommand("bench", "per-image inference overhead of the monitor variants");
  std::string reduced_path = "reduced_tree.json";
  bench->add_option("--reduced", reduced_path, "reduced detector whose features the reduced monitor taps");
  auto* exp = app.add_subcommand("export-tree", "print a tree JSON file as if/else rules");
  std::string export_in;
  std::string export_out;
  std::size_t export_layers = 0;
  exp->add_option("tree", export_in, "tree JSON")->required();
  exp->add_option("--layers", export_layers, "monitored layer count (default: inferred)");
  exp->add_option("-o,--out", export_out, "output file (default: stdout)");
  auto* show = app.add_subcommand("show-config", "print the effective configuration");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*exp) return cmd_export_tree(export_in, export_layers, export_out);
    const CampaignConfig cfg = effective_config(common);
    if (*show) {
      std::cout << write_config(cfg);
      return 0;
    }
    if (*gen) return cmd_gen_data(cfg);
    if (*train) return cmd_train_net(cfg);
    if (*bounds) return cmd_extract_bounds(cfg, bounds_count, bounds_out);
    if (*camp) return cmd_campaign(cfg);
    if (*td) return cmd_train_detector(cfg, seed_index);
    if (*red) return cmd_reduce(cfg, seed_index, tree_path);
    if (*search) return cmd_search_minimal(cfg, seed_index);
    if (*eval) return cmd_evaluate(cfg);
    if (*bench) return cmd_bench(cfg, reduced_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

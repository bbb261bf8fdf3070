#include "qsdc/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "qsdc/csv.hpp"
#include "qsdc/errors.hpp"

namespace qsdc {

std::filesystem::path CampaignConfig::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : output_dir / p;
}

void CampaignConfig::validate() const {
  if (images == 0) throw ConfigError("images must be positive");
  if (images > test_images) throw ConfigError("campaign images exceed the test set size");
  if (split_train == 0 || split_test == 0) throw ConfigError("split ratio parts must be positive");
  if (!(bounds_fraction > 0.0 && bounds_fraction <= 1.0)) throw ConfigError("bounds_fraction must lie in (0,1]");
  if (faulty_to_free < 0.0) throw ConfigError("faulty_to_free must be >= 0");
  if (seeds == 0) throw ConfigError("seeds must be positive");
  if (ccp_alphas.empty()) throw ConfigError("ccp_alphas must not be empty");
  for (double a : ccp_alphas) {
    if (a < 0.0) throw ConfigError("ccp_alphas must be >= 0");
  }
  if (retention < 0.0 || retention > 1.0) throw ConfigError("retention must lie in [0,1]");
  if (bench_repetitions < 10) throw ConfigError("bench_repetitions must be at least 10");
  if (bench_warmup < 1) throw ConfigError("bench_warmup must be at least 1");
  if (bench_batch == 0 || bench_images == 0) throw ConfigError("bench sizes must be positive");
  if (classes.empty()) throw ConfigError("classes must not be empty");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  for (auto part : csv::split(v)) {
    auto t = trim(part);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

std::size_t to_size(const std::string& v) {
  const long long x = csv::parse_int(v);
  if (x < 0) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

std::uint64_t to_u64(const std::string& v) { return static_cast<std::uint64_t>(to_size(v)); }

template <typename T, std::size_t N>
std::array<T, N> to_triple(const std::string& v) {
  const auto parts = split_list(v);
  if (parts.size() != N) throw ConfigError("expected " + std::to_string(N) + " values, got '" + v + "'");
  std::array<T, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = csv::parse_double(parts[i]);
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += f(v[i]);
  }
  return out;
}

using Setter = std::function<void(CampaignConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"train_images", [](auto& c, const auto& v) { c.train_images = to_size(v); }},
      {"test_images", [](auto& c, const auto& v) { c.test_images = to_size(v); }},
      {"data_seed", [](auto& c, const auto& v) { c.data_seed = to_u64(v); }},
      {"topology", [](auto& c, const auto& v) { c.topology = v; }},
      {"net_seed", [](auto& c, const auto& v) { c.net_seed = to_u64(v); }},
      {"net_epochs", [](auto& c, const auto& v) { c.net_epochs = to_size(v); }},
      {"images", [](auto& c, const auto& v) { c.images = to_size(v); }},
      {"fis_per_image", [](auto& c, const auto& v) { c.fis_per_image = to_size(v); }},
      {"accelerated_epochs", [](auto& c, const auto& v) { c.accelerated_epochs = to_size(v); }},
      {"classes",
       [](auto& c, const auto& v) {
         c.classes.clear();
         for (const auto& s : split_list(v)) c.classes.push_back(parse_fault_class(s));
       }},
      {"magnitudes",
       [](auto& c, const auto& v) {
         c.magnitudes.clear();
         for (const auto& s : split_list(v)) c.magnitudes.push_back(parse_magnitude(s));
       }},
      {"targets",
       [](auto& c, const auto& v) {
         c.targets.clear();
         for (const auto& s : split_list(v)) c.targets.push_back(parse_memory_target(s));
       }},
      {"noise_sigmas", [](auto& c, const auto& v) { c.corruption.noise_sigmas = to_triple<double, 3>(v); }},
      {"noise_scale", [](auto& c, const auto& v) { c.corruption.noise_scale = csv::parse_double(v); }},
      {"blur_sigmas", [](auto& c, const auto& v) { c.corruption.blur_sigmas = to_triple<double, 3>(v); }},
      {"blur_kernel_h", [](auto& c, const auto& v) { c.corruption.blur_kernel_h = to_size(v); }},
      {"blur_kernel_w", [](auto& c, const auto& v) { c.corruption.blur_kernel_w = to_size(v); }},
      {"contrast_factors", [](auto& c, const auto& v) { c.corruption.contrast_factors = to_triple<double, 3>(v); }},
      {"campaign_seed", [](auto& c, const auto& v) { c.campaign_seed = to_u64(v); }},
      {"split_train", [](auto& c, const auto& v) { c.split_train = to_size(v); }},
      {"split_test", [](auto& c, const auto& v) { c.split_test = to_size(v); }},
      {"bounds_fraction", [](auto& c, const auto& v) { c.bounds_fraction = csv::parse_double(v); }},
      {"faulty_to_free", [](auto& c, const auto& v) { c.faulty_to_free = csv::parse_double(v); }},
      {"seeds", [](auto& c, const auto& v) { c.seeds = to_size(v); }},
      {"seed_base", [](auto& c, const auto& v) { c.seed_base = to_u64(v); }},
      {"ccp_alphas",
       [](auto& c, const auto& v) {
         c.ccp_alphas.clear();
         for (const auto& s : split_list(v)) c.ccp_alphas.push_back(csv::parse_double(s));
       }},
      {"retention", [](auto& c, const auto& v) { c.retention = csv::parse_double(v); }},
      {"retention_mode", [](auto& c, const auto& v) { c.retention_mode = parse_eval_mode(v); }},
      {"search_depth", [](auto& c, const auto& v) { c.search_depth = to_size(v); }},
      {"depth_unit",
       [](auto& c, const auto& v) {
         if (v == "rounds") {
           c.depth_unit = DepthUnit::rounds;
         } else if (v == "features") {
           c.depth_unit = DepthUnit::features;
         } else {
           throw ConfigError("depth_unit must be 'rounds' or 'features'");
         }
       }},
      {"bench_images", [](auto& c, const auto& v) { c.bench_images = to_size(v); }},
      {"bench_batch", [](auto& c, const auto& v) { c.bench_batch = to_size(v); }},
      {"bench_warmup", [](auto& c, const auto& v) { c.bench_warmup = to_size(v); }},
      {"bench_repetitions", [](auto& c, const auto& v) { c.bench_repetitions = to_size(v); }},
      {"output_dir", [](auto& c, const auto& v) { c.output_dir = v; }},
      {"data_dir", [](auto& c, const auto& v) { c.data_dir = v; }},
      {"network", [](auto& c, const auto& v) { c.network = v; }},
      {"records", [](auto& c, const auto& v) { c.records = v; }},
  };
  return table;
}

}  // namespace

CampaignConfig parse_config(std::istream& in, CampaignConfig base) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      it->second(base, value);
    } catch (const ParseError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + " (" + key + "): " + e.what());
    }
  }
  return base;
}

CampaignConfig load_config(const std::filesystem::path& path, CampaignConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in, std::move(base));
}

std::string write_config(const CampaignConfig& c) {
  auto num = [](double v) { return csv::format(v); };
  auto triple = [&](const std::array<double, 3>& a) { return num(a[0]) + "," + num(a[1]) + "," + num(a[2]); };
  std::ostringstream os;
  os << "train_images = " << c.train_images << "\n"
     << "test_images = " << c.test_images << "\n"
     << "data_seed = " << c.data_seed << "\n"
     << "topology = " << c.topology << "\n"
     << "net_seed = " << c.net_seed << "\n"
     << "net_epochs = " << c.net_epochs << "\n"
     << "images = " << c.images << "\n"
     << "fis_per_image = " << c.fis_per_image << "\n"
     << "accelerated_epochs = " << c.accelerated_epochs << "\n"
     << "classes = "
     << join<FaultClass>(c.classes, [](const FaultClass& f) { return std::string(to_string(f)); }) << "\n"
     << "magnitudes = "
     << join<Magnitude>(c.magnitudes, [](const Magnitude& m) { return std::string(to_string(m)); }) << "\n"
     << "targets = "
     << join<MemoryTarget>(c.targets, [](const MemoryTarget& t) { return std::string(to_string(t)); }) << "\n"
     << "noise_sigmas = " << triple(c.corruption.noise_sigmas) << "\n"
     << "noise_scale = " << num(c.corruption.noise_scale) << "\n"
     << "blur_sigmas = " << triple(c.corruption.blur_sigmas) << "\n"
     << "blur_kernel_h = " << c.corruption.blur_kernel_h << "\n"
     << "blur_kernel_w = " << c.corruption.blur_kernel_w << "\n"
     << "contrast_factors = " << triple(c.corruption.contrast_factors) << "\n"
     << "campaign_seed = " << c.campaign_seed << "\n"
     << "split_train = " << c.split_train << "\n"
     << "split_test = " << c.split_test << "\n"
     << "bounds_fraction = " << num(c.bounds_fraction) << "\n"
     << "faulty_to_free = " << num(c.faulty_to_free) << "\n"
     << "seeds = " << c.seeds << "\n"
     << "seed_base = " << c.seed_base << "\n"
     << "ccp_alphas = " << join<double>(c.ccp_alphas, [&](const double& a) { return num(a); }) << "\n"
     << "retention = " << num(c.retention) << "\n"
     << "retention_mode = " << to_string(c.retention_mode) << "\n"
     << "search_depth = " << c.search_depth << "\n"
     << "depth_unit = " << (c.depth_unit == DepthUnit::rounds ? "rounds" : "features") << "\n"
     << "bench_images = " << c.bench_images << "\n"
     << "bench_batch = " << c.bench_batch << "\n"
     << "bench_warmup = " << c.bench_warmup << "\n"
     << "bench_repetitions = " << c.bench_repetitions << "\n"
     << "output_dir = " << c.output_dir.string() << "\n"
     << "data_dir = " << c.data_dir.string() << "\n"
     << "network = " << c.network.string() << "\n"
     << "records = " << c.records.string() << "\n";
  return os.str();
}

void apply_env_overrides(CampaignConfig& c) {
  const char* dir = std::getenv(kOutputDirEnv);
  if (dir != nullptr && *dir != '\0') c.output_dir = dir;
}

}  // namespace qsdc

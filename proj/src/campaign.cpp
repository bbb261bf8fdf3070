#include "qsdc/campaign.hpp"

#include <sstream>

#include "qsdc/csv.hpp"
#include "qsdc/errors.hpp"

namespace qsdc {

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::masked:
      return "masked";
    case Outcome::sdc:
      return "sdc";
    case Outcome::due:
      return "due";
  }
  return "?";
}

Outcome parse_outcome(std::string_view name) {
  for (Outcome o : {Outcome::masked, Outcome::sdc, Outcome::due}) {
    if (to_string(o) == name) return o;
  }
  throw ParseError("unknown outcome '" + std::string(name) + "'");
}

namespace {

std::string_view to_string(RunKind k) {
  switch (k) {
    case RunKind::random:
      return "random";
    case RunKind::accelerated:
      return "accelerated";
    case RunKind::fault_free:
      return "fault_free";
  }
  return "?";
}

RunKind parse_run_kind(std::string_view name) {
  for (RunKind k : {RunKind::random, RunKind::accelerated, RunKind::fault_free}) {
    if (to_string(k) == name) return k;
  }
  throw ParseError("unknown run kind '" + std::string(name) + "'");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

LabeledOutcome label_outcome(std::optional<std::size_t> ref_top1, std::optional<std::size_t> faulty_top1,
                             bool due_flag, const FaultSpec& spec) {
  if (due_flag || !faulty_top1) return {Outcome::due, FaultClass::none};
  if (faulty_top1 != ref_top1) return {Outcome::sdc, spec.cls};
  return {Outcome::masked, FaultClass::none};
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t image, std::uint64_t fi) {
  return splitmix64(splitmix64(splitmix64(seed) ^ image) ^ fi);
}

namespace {

struct Reference {
  std::vector<Tensor4> conv_inputs;
  QuantileSet quantiles;
  std::size_t top1 = 0;
};

class CampaignRunner {
 public:
  CampaignRunner(const Network& net, const CampaignConfig& config)
      : net_(net), config_(config), layers_(net.conv_count()), monitor_(layers_) {}

  Reference reference(const Tensor4& image, std::size_t index) {
    Reference ref;
    monitor_.reset(1);
    const ConvHook hook = monitor_.hook();
    const Tensor4 logits = forward_recording(net_, image, std::span<const ConvHook>(&hook, 1), ref.conv_inputs);
    const auto t = top1(logits.data());
    if (monitor_.any_due() || due_check(logits) || !t) {
      throw DueError("fault-free reference inference of image " + std::to_string(index) + " is not clean");
    }
    ref.quantiles = monitor_.quantiles()[0];
    ref.top1 = *t;
    return ref;
  }

  OutcomeRecord run(const Tensor4& image, const Reference& ref, const FaultSpec& spec) {
    OutcomeRecord rec;
    rec.spec = spec;
    rec.ref_top1 = static_cast<int>(ref.top1);
    const ConvHook monitor_hook = monitor_.hook();
    monitor_.reset(1);
    Tensor4 logits;
    std::size_t start = 0;
    if (spec.cls == FaultClass::none) {
      logits = forward(net_, image, std::span<const ConvHook>(&monitor_hook, 1));
    } else if (spec.cls != FaultClass::memory) {
      const Tensor4 corrupted = apply_input_fault(image, spec, config_.corruption);
      logits = forward(net_, corrupted, std::span<const ConvHook>(&monitor_hook, 1));
    } else if (spec.target == MemoryTarget::weight) {
      start = spec.layer;
      const WeightPatch patch = inject_weight_fault(net_, spec);
      ScopedWeightFault guard(net_, patch);
      logits = forward_from(net_, start, ref.conv_inputs[start], std::span<const ConvHook>(&monitor_hook, 1));
    } else {
      start = spec.layer;
      const std::array<ConvHook, 2> hooks{inject_neuron_fault(net_, spec), monitor_hook};
      logits = forward_from(net_, start, ref.conv_inputs[start], hooks);
    }
    rec.quantiles = monitor_.quantiles()[0];
    // layers ahead of the resume point saw exactly the reference activations
    for (std::size_t l = 0; l < start; ++l) {
      for (std::size_t p = 0; p < kQuantileCount; ++p) rec.quantiles.at(l, p) = ref.quantiles.at(l, p);
    }
    const auto t = top1(logits.data());
    const bool due = monitor_.any_due() || due_check(logits);
    const LabeledOutcome lo = label_outcome(ref.top1, t, due, spec);
    rec.outcome = lo.outcome;
    rec.label = lo.label;
    rec.faulty_top1 = t ? static_cast<int>(*t) : -1;
    return rec;
  }

 private:
  Network net_;  // private copy, weight faults patch it in place
  const CampaignConfig& config_;
  std::size_t layers_;
  QuantileMonitor monitor_;
};

}  // namespace

std::vector<OutcomeRecord> run_campaign(const Network& net, const Tensor4& images, const CampaignConfig& config,
                                        const CampaignProgress& progress) {
  if (images.n() < config.images) throw ConfigError("run_campaign: fewer images than configured");
  CampaignRunner runner(net, config);
  FaultSamplingConfig random_cfg;
  random_cfg.classes = config.classes;
  random_cfg.magnitudes = config.magnitudes;
  random_cfg.targets = config.targets;
  FaultSamplingConfig accel_cfg = random_cfg;
  accel_cfg.classes = {FaultClass::memory};
  accel_cfg.accelerated = true;
  const bool memory_enabled =
      std::find(config.classes.begin(), config.classes.end(), FaultClass::memory) != config.classes.end();

  std::vector<OutcomeRecord> out;
  out.reserve(config.images * (config.fis_per_image + config.accelerated_epochs + 1));
  for (std::size_t i = 0; i < config.images; ++i) {
    const Tensor4 image = images.slice(i, 1);
    const Reference ref = runner.reference(image, i);
    std::size_t fi = 0;
    auto emit = [&](RunKind kind, const FaultSpec& spec) {
      OutcomeRecord rec = runner.run(image, ref, spec);
      rec.image = i;
      rec.fi = fi++;
      rec.kind = kind;
      out.push_back(std::move(rec));
    };
    for (std::size_t k = 0; k < config.fis_per_image; ++k) {
      std::mt19937_64 rng(stream_seed(config.campaign_seed, i, fi));
      emit(RunKind::random, sample_fault_spec(random_cfg, net, rng));
    }
    if (memory_enabled) {
      for (std::size_t e = 0; e < config.accelerated_epochs; ++e) {
        std::mt19937_64 rng(stream_seed(config.campaign_seed, i, fi));
        emit(RunKind::accelerated, sample_fault_spec(accel_cfg, net, rng));
      }
    }
    emit(RunKind::fault_free, FaultSpec{});
    if (progress) progress(i + 1, config.images);
  }
  return out;
}

namespace {

const std::vector<std::string> kRecordPrefix = {
    "image", "fi", "kind", "class", "magnitude", "target", "layer", "c0", "c1", "c2", "c3", "bit",
    "accelerated", "spec_seed", "outcome", "label", "ref_top1", "faulty_top1"};

std::string quantile_column(std::size_t layer, std::size_t p) {
  return "q" + std::to_string(layer + 1) + "_p" + std::to_string(kPercentiles[p]);
}

}  // namespace

void write_records_csv(const std::vector<OutcomeRecord>& records, std::size_t layers,
                       const std::filesystem::path& path) {
  std::ostringstream os;
  for (std::size_t i = 0; i < kRecordPrefix.size(); ++i) os << (i ? "," : "") << kRecordPrefix[i];
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t p = 0; p < kQuantileCount; ++p) os << ',' << quantile_column(l, p);
  }
  os << "\n";
  for (const auto& r : records) {
    if (r.quantiles.layers != layers) throw ConfigError("write_records_csv: record layer count mismatch");
    const FaultSpec& s = r.spec;
    os << r.image << ',' << r.fi << ',' << to_string(r.kind) << ',' << to_string(s.cls) << ','
       << to_string(s.magnitude) << ',' << to_string(s.target) << ',' << s.layer << ',' << s.coord[0] << ','
       << s.coord[1] << ',' << s.coord[2] << ',' << s.coord[3] << ',' << s.bit << ',' << (s.accelerated ? 1 : 0)
       << ',' << s.seed << ',' << to_string(r.outcome) << ',' << to_string(r.label) << ',' << r.ref_top1 << ','
       << r.faulty_top1;
    for (float v : r.quantiles.values) os << ',' << csv::format(v);
    os << "\n";
  }
  csv::write_text(path, os.str());
}

std::vector<OutcomeRecord> read_records_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  if (t.header.size() < kRecordPrefix.size()) throw ParseError("records CSV: too few columns");
  for (std::size_t i = 0; i < kRecordPrefix.size(); ++i) {
    if (t.header[i] != kRecordPrefix[i]) throw ParseError("records CSV: unexpected column '" + t.header[i] + "'");
  }
  const std::size_t qcols = t.header.size() - kRecordPrefix.size();
  if (qcols == 0 || qcols % kQuantileCount != 0) throw ParseError("records CSV: quantile columns incomplete");
  const std::size_t layers = qcols / kQuantileCount;
  std::vector<OutcomeRecord> out;
  out.reserve(t.rows.size());
  auto u = [](const std::string& s) { return static_cast<std::size_t>(csv::parse_int(s)); };
  for (const auto& row : t.rows) {
    OutcomeRecord r;
    r.image = u(row[0]);
    r.fi = u(row[1]);
    r.kind = parse_run_kind(row[2]);
    try {
      r.spec.cls = parse_fault_class(row[3]);
      r.spec.magnitude = parse_magnitude(row[4]);
      r.spec.target = parse_memory_target(row[5]);
      r.label = parse_fault_class(row[15]);
    } catch (const ConfigError& e) {
      throw ParseError(std::string("records CSV: ") + e.what());
    }
    r.spec.layer = u(row[6]);
    r.spec.coord = {u(row[7]), u(row[8]), u(row[9]), u(row[10])};
    r.spec.bit = static_cast<int>(csv::parse_int(row[11]));
    r.spec.accelerated = row[12] == "1";
    r.spec.seed = std::stoull(row[13]);
    r.outcome = parse_outcome(row[14]);
    r.ref_top1 = static_cast<int>(csv::parse_int(row[16]));
    r.faulty_top1 = static_cast<int>(csv::parse_int(row[17]));
    r.quantiles = QuantileSet(layers);
    for (std::size_t j = 0; j < qcols; ++j) r.quantiles.values[j] = csv::parse_float(row[kRecordPrefix.size() + j]);
    out.push_back(std::move(r));
  }
  return out;
}

CampaignStats campaign_stats(const std::vector<OutcomeRecord>& records) {
  CampaignStats s;
  for (const auto& r : records) {
    ++s.total;
    const bool sdc = r.outcome == Outcome::sdc;
    s.masked += r.outcome == Outcome::masked;
    s.sdc += sdc;
    s.due += r.outcome == Outcome::due;
    if (r.kind == RunKind::random) {
      s.random_sdc += sdc;
      if (r.spec.cls == FaultClass::memory) {
        ++s.random_memory;
        s.random_memory_sdc += sdc;
      }
    } else if (r.kind == RunKind::accelerated) {
      ++s.accelerated;
      s.accelerated_sdc += sdc;
    }
  }
  return s;
}

}  // namespace qsdc

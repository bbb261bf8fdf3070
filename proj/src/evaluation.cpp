#include "qsdc/evaluation.hpp"

#include <sstream>

#include "qsdc/csv.hpp"
#include "qsdc/errors.hpp"

namespace qsdc {

std::string_view to_string(EvalMode m) {
  switch (m) {
    case EvalMode::cls:
      return "cls";
    case EvalMode::cat:
      return "cat";
    case EvalMode::sdc:
      return "sdc";
  }
  return "?";
}

EvalMode parse_eval_mode(std::string_view name) {
  for (EvalMode m : kAllEvalModes) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown evaluation mode '" + std::string(name) + "'");
}

double ClassCounts::precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
double ClassCounts::recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }

namespace {

// Maps a fault class to the mode's positive label index, or -1 for negative.
int positive_label(EvalMode m, FaultClass c) {
  if (c == FaultClass::none) return -1;
  switch (m) {
    case EvalMode::cls:
      return static_cast<int>(c) - 1;
    case EvalMode::cat:
      return category_of(c) == FaultCategory::input ? 0 : 1;
    case EvalMode::sdc:
      return 0;
  }
  return -1;
}

std::vector<std::string> mode_labels(EvalMode m) {
  switch (m) {
    case EvalMode::cls:
      return {"noise", "blur", "contrast", "memory"};
    case EvalMode::cat:
      return {"input", "memory"};
    case EvalMode::sdc:
      return {"sdc"};
  }
  return {};
}

ModeMetrics score(EvalMode m, std::span<const FaultClass> pred, std::span<const FaultClass> truth) {
  ModeMetrics out;
  for (auto& name : mode_labels(m)) out.per_class.push_back(ClassCounts{name, 0, 0, 0});
  out.averaged.assign(out.per_class.size(), false);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = positive_label(m, pred[i]);
    const int t = positive_label(m, truth[i]);
    if (p >= 0) out.averaged[static_cast<std::size_t>(p)] = true;
    if (t >= 0) out.averaged[static_cast<std::size_t>(t)] = true;
    if (p >= 0 && p == t) {
      ++out.per_class[static_cast<std::size_t>(p)].tp;
      continue;
    }
    if (p >= 0) ++out.per_class[static_cast<std::size_t>(p)].fp;
    if (t >= 0) ++out.per_class[static_cast<std::size_t>(t)].fn;
  }
  std::size_t n = 0;
  double ps = 0.0, rs = 0.0;
  for (std::size_t k = 0; k < out.per_class.size(); ++k) {
    if (!out.averaged[k]) continue;
    ++n;
    ps += out.per_class[k].precision();
    rs += out.per_class[k].recall();
  }
  if (n == 0) {
    out.precision = out.recall = 1.0;
  } else {
    out.precision = ps / static_cast<double>(n);
    out.recall = rs / static_cast<double>(n);
  }
  return out;
}

}  // namespace

EvalReport evaluate_modes(std::span<const FaultClass> predictions, std::span<const FaultClass> truths) {
  if (predictions.size() != truths.size()) throw ConfigError("evaluate_modes: prediction/truth length mismatch");
  EvalReport r;
  r.samples = truths.size();
  for (EvalMode m : kAllEvalModes) r.modes[static_cast<std::size_t>(m)] = score(m, predictions, truths);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    ++r.confusion[static_cast<std::size_t>(truths[i])][static_cast<std::size_t>(predictions[i])];
  }
  return r;
}

EvalReport evaluate_modes(std::span<const int> predictions, std::span<const int> truths) {
  std::vector<FaultClass> p, t;
  p.reserve(predictions.size());
  t.reserve(truths.size());
  for (int v : predictions) p.push_back(fault_class_from_id(v));
  for (int v : truths) t.push_back(fault_class_from_id(v));
  return evaluate_modes(std::span<const FaultClass>(p), std::span<const FaultClass>(t));
}

std::string eval_report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "mode,label,tp,fp,fn,precision,recall\n";
  for (EvalMode m : kAllEvalModes) {
    const auto& mm = r.mode(m);
    for (const auto& c : mm.per_class) {
      os << to_string(m) << ',' << c.label << ',' << c.tp << ',' << c.fp << ',' << c.fn << ','
         << csv::format(c.precision()) << ',' << csv::format(c.recall()) << "\n";
    }
    os << to_string(m) << ",average,,,," << csv::format(mm.precision) << ',' << csv::format(mm.recall) << "\n";
  }
  return os.str();
}

nlohmann::json eval_report_json(const EvalReport& r) {
  nlohmann::json doc;
  doc["samples"] = r.samples;
  for (EvalMode m : kAllEvalModes) {
    const auto& mm = r.mode(m);
    nlohmann::json jm;
    jm["precision"] = mm.precision;
    jm["recall"] = mm.recall;
    for (std::size_t k = 0; k < mm.per_class.size(); ++k) {
      const auto& c = mm.per_class[k];
      jm["classes"].push_back({{"label", c.label},
                               {"tp", c.tp},
                               {"fp", c.fp},
                               {"fn", c.fn},
                               {"precision", c.precision()},
                               {"recall", c.recall()},
                               {"averaged", static_cast<bool>(mm.averaged[k])}});
    }
    doc[std::string(to_string(m))] = jm;
  }
  auto& conf = doc["confusion"];
  conf["labels"] = nlohmann::json::array();
  for (FaultClass c : kAllFaultClasses) conf["labels"].push_back(std::string(to_string(c)));
  conf["matrix"] = r.confusion;
  return doc;
}

}  // namespace qsdc

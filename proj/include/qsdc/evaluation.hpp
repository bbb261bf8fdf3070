#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qsdc/labels.hpp"

namespace qsdc {

enum class EvalMode : std::uint8_t { cls = 0, cat = 1, sdc = 2 };
inline constexpr std::array<EvalMode, 3> kAllEvalModes{EvalMode::cls, EvalMode::cat, EvalMode::sdc};

[[nodiscard]] std::string_view to_string(EvalMode m);
[[nodiscard]] EvalMode parse_eval_mode(std::string_view name);

struct ClassCounts {
  std::string label;  // fault class, category, or "sdc"
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  // Zero when the denominator is zero.
  [[nodiscard]] double precision() const;
  [[nodiscard]] double recall() const;
};

struct ModeMetrics {
  double precision = 0.0;
  double recall = 0.0;
  // Positive labels of the mode, each with its counts. Only the labels that
  // occur in the truths or predictions enter the averages.
  std::vector<ClassCounts> per_class;
  std::vector<bool> averaged;
};

struct EvalReport {
  std::size_t samples = 0;
  std::array<ModeMetrics, 3> modes;
  // confusion[truth][prediction] over the five fault classes.
  std::array<std::array<std::size_t, kFaultClassCount>, kFaultClassCount> confusion{};

  [[nodiscard]] const ModeMetrics& mode(EvalMode m) const { return modes[static_cast<std::size_t>(m)]; }
  [[nodiscard]] double precision(EvalMode m) const { return mode(m).precision; }
  [[nodiscard]] double recall(EvalMode m) const { return mode(m).recall; }
};

/// Scores detector output in three modes with "none" as the negative class:
///   cls: per fault class, TP only on an exact match;
///   cat: per category (input = noise/blur/contrast, memory);
///   sdc: one positive label, any fault.
/// cls and cat report the unweighted mean over the labels present in either
/// sequence. When no positive label occurs at all, P = R = 1.
[[nodiscard]] EvalReport evaluate_modes(std::span<const FaultClass> predictions, std::span<const FaultClass> truths);
// Integer class ids; throws ConfigError on an unknown id.
[[nodiscard]] EvalReport evaluate_modes(std::span<const int> predictions, std::span<const int> truths);

// mode,label,tp,fp,fn,precision,recall rows plus a mode-average row per mode.
[[nodiscard]] std::string eval_report_csv(const EvalReport& r);
[[nodiscard]] nlohmann::json eval_report_json(const EvalReport& r);

}  // namespace qsdc

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qsdc/config.hpp"
#include "qsdc/corruption.hpp"
#include "qsdc/monitor.hpp"
#include "qsdc/network.hpp"

namespace qsdc {

enum class Outcome : std::uint8_t { masked = 0, sdc = 1, due = 2 };

[[nodiscard]] std::string_view to_string(Outcome o);
[[nodiscard]] Outcome parse_outcome(std::string_view name);

// Fault-injection index kinds within one image's record block.
enum class RunKind : std::uint8_t { random = 0, accelerated = 1, fault_free = 2 };

struct OutcomeRecord {
  std::size_t image = 0;
  std::size_t fi = 0;  // position in the image's block; orders the stream
  RunKind kind = RunKind::random;
  FaultSpec spec;
  Outcome outcome = Outcome::masked;
  FaultClass label = FaultClass::none;
  int ref_top1 = -1;
  int faulty_top1 = -1;  // -1 when the logits held a NaN
  QuantileSet quantiles;

  friend bool operator==(const OutcomeRecord&, const OutcomeRecord&) = default;
};

struct LabeledOutcome {
  Outcome outcome;
  FaultClass label;
};

/// DUE when due_flag is set; otherwise SDC iff the top-1 class changed. The
/// label is the fault's class for an SDC and "none" otherwise.
[[nodiscard]] LabeledOutcome label_outcome(std::optional<std::size_t> ref_top1, std::optional<std::size_t> faulty_top1,
                                           bool due_flag, const FaultSpec& spec);

// Deterministic stream seed for (campaign seed, image, fi).
[[nodiscard]] std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t image, std::uint64_t fi);

using CampaignProgress = std::function<void(std::size_t images_done, std::size_t images_total)>;

/// Per image: one cached fault-free reference, then config.fis_per_image
/// random faults, config.accelerated_epochs accelerated memory faults and
/// one dedicated fault-free record. Records come out ordered by (image, fi).
/// Throws DueError if a reference inference is not clean.
[[nodiscard]] std::vector<OutcomeRecord> run_campaign(const Network& net, const Tensor4& images,
                                                      const CampaignConfig& config,
                                                      const CampaignProgress& progress = {});

// Records CSV, one row per inference, quantiles as q<layer>_p<P> columns.
void write_records_csv(const std::vector<OutcomeRecord>& records, std::size_t layers,
                       const std::filesystem::path& path);
[[nodiscard]] std::vector<OutcomeRecord> read_records_csv(const std::filesystem::path& path);

struct CampaignStats {
  std::size_t total = 0;
  std::size_t masked = 0;
  std::size_t sdc = 0;
  std::size_t due = 0;
  std::size_t random_sdc = 0;
  std::size_t random_memory = 0;
  std::size_t random_memory_sdc = 0;
  std::size_t accelerated = 0;
  std::size_t accelerated_sdc = 0;
};

[[nodiscard]] CampaignStats campaign_stats(const std::vector<OutcomeRecord>& records);

}  // namespace qsdc

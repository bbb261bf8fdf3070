#pragma once

#include <functional>
#include <string>

#include "qsdc/config.hpp"
#include "qsdc/dataset.hpp"
#include "qsdc/network.hpp"
#include "qsdc/train.hpp"

namespace qsdc {

// Topology of the built-in four-conv classifier (same text as data/shapes_cnn.txt).
[[nodiscard]] const std::string& builtin_topology();

// Untrained network from config.topology ("builtin" or a file path).
[[nodiscard]] Network initial_network(const CampaignConfig& config);

struct ShapeSets {
  ImageSet train;
  ImageSet test;
};

// Synthetic train/test sets; the test set uses data_seed + 1.
[[nodiscard]] ShapeSets generate_datasets(const CampaignConfig& config);

// Reads <data_dir>/{train,test}-*.idx files when present, else generates them.
[[nodiscard]] ShapeSets load_or_generate_datasets(const CampaignConfig& config);

/// Trains the configured network on `sets.train` and reports its accuracy
/// on `sets.test` through `test_accuracy`.
[[nodiscard]] Network train_network(const CampaignConfig& config, const ShapeSets& sets, double& test_accuracy,
                                    const EpochCallback& on_epoch = {});

}  // namespace qsdc

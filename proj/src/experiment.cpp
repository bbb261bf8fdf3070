#include "qsdc/experiment.hpp"

#include <fstream>

#include "qsdc/errors.hpp"

namespace qsdc {

const std::string& builtin_topology() {
  static const std::string text =
      "input 1 28 28\n"
      "classes 10\n"
      "conv2d 8 3 1 1\n"
      "relu\n"
      "conv2d 16 3 1 1\n"
      "relu\n"
      "maxpool2d 2 2\n"
      "conv2d 32 3 1 1\n"
      "relu\n"
      "conv2d 32 3 1 1\n"
      "relu\n"
      "maxpool2d 2 2\n"
      "linear 10\n";
  return text;
}

Network initial_network(const CampaignConfig& config) {
  if (config.topology == "builtin") return parse_topology(builtin_topology(), config.net_seed);
  std::ifstream in(config.topology);
  if (!in) throw IoError("cannot open topology " + config.topology);
  return parse_topology(in, config.net_seed);
}

ShapeSets generate_datasets(const CampaignConfig& config) {
  return {generate_shapes(config.train_images, config.data_seed),
          generate_shapes(config.test_images, config.data_seed + 1)};
}

ShapeSets load_or_generate_datasets(const CampaignConfig& config) {
  const auto dir = config.resolve(config.data_dir);
  if (std::filesystem::exists(dir / "train-images.idx3-ubyte") && std::filesystem::exists(dir / "test-images.idx3-ubyte")) {
    return {load_idx_set(dir, "train"), load_idx_set(dir, "test")};
  }
  return generate_datasets(config);
}

Network train_network(const CampaignConfig& config, const ShapeSets& sets, double& test_accuracy,
                      const EpochCallback& on_epoch) {
  Network net = initial_network(config);
  TrainOptions opt;
  opt.epochs = config.net_epochs;
  opt.seed = config.net_seed;
  train_sgd(net, sets.train.images, sets.train.labels, opt, on_epoch);
  test_accuracy = accuracy(net, sets.test.images, sets.test.labels);
  return net;
}

}  // namespace qsdc

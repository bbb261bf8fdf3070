#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "qsdc/dataset.hpp"
#include "qsdc/errors.hpp"
#include "qsdc/experiment.hpp"
#include "qsdc/train.hpp"

using namespace qsdc;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("qsdc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Shapes, DeterministicRangeAndBalanced) {
  const ImageSet a = generate_shapes(500, 3);
  const ImageSet b = generate_shapes(500, 3);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.images, generate_shapes(500, 4).images);
  EXPECT_EQ(a.images.shape(), (Shape4{500, 1, 28, 28}));
  for (float v : a.images.data()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
    ASSERT_EQ(std::round(v * 255.0f) / 255.0f, v);
  }
  std::array<int, kShapeClasses> counts{};
  for (int l : a.labels) ++counts[static_cast<std::size_t>(l)];
  for (int c : counts) EXPECT_GE(c, 30);
}

TEST(Idx, RoundTrip) {
  const auto dir = temp_dir("idx");
  const ImageSet s = generate_shapes(37, 5);
  save_idx_set(s, dir, "train");
  const ImageSet back = load_idx_set(dir, "train");
  EXPECT_EQ(back.images, s.images);
  EXPECT_EQ(back.labels, s.labels);
}

TEST(Idx, BadMagicAndTruncation) {
  const auto dir = temp_dir("idx_bad");
  const ImageSet s = generate_shapes(3, 6);
  save_idx_set(s, dir, "x");
  const auto img = dir / "x-images.idx3-ubyte";
  {
    std::fstream f(img, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(3);
    f.put(0x01);
  }
  EXPECT_THROW((void)read_idx_images(img), BadMagicError);
  const auto lab = dir / "x-labels.idx1-ubyte";
  std::filesystem::resize_file(lab, std::filesystem::file_size(lab) - 1);
  EXPECT_THROW((void)read_idx_labels(lab), TruncatedError);
  EXPECT_THROW((void)read_idx_labels(dir / "missing"), IoError);
}

TEST(Train, LearnsASmallProblem) {
  CampaignConfig cfg;
  cfg.train_images = 600;
  cfg.test_images = 200;
  cfg.net_epochs = 3;
  const ShapeSets sets = generate_datasets(cfg);
  const Network untrained = initial_network(cfg);
  const double before = accuracy(untrained, sets.test.images, sets.test.labels);
  std::vector<double> losses;
  double acc = 0.0;
  const Network net = train_network(cfg, sets, acc, [&](std::size_t, double loss) { losses.push_back(loss); });
  ASSERT_EQ(losses.size(), 3u);
  EXPECT_LT(losses.back(), losses.front());
  EXPECT_GT(acc, before + 0.3);
}

TEST(Train, DeterministicGivenSeed) {
  CampaignConfig cfg;
  cfg.train_images = 64;
  cfg.test_images = 16;
  cfg.net_epochs = 1;
  const ShapeSets sets = generate_datasets(cfg);
  double a1 = 0, a2 = 0;
  EXPECT_TRUE(bitwise_equal(train_network(cfg, sets, a1), train_network(cfg, sets, a2)));
}

TEST(BuiltinTopology, MatchesDataFileAndHasFourConvs) {
  const Network net = parse_topology(builtin_topology(), 1);
  EXPECT_EQ(net.conv_count(), 4u);
  std::ifstream in(std::filesystem::path(QSDC_SOURCE_DIR) / "data" / "shapes_cnn.txt");
  ASSERT_TRUE(in.good());
  EXPECT_TRUE(bitwise_equal(parse_topology(in, 1), net));
}

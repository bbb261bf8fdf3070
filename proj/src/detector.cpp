#include "qsdc/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "qsdc/csv.hpp"
#include "qsdc/errors.hpp"

namespace qsdc {

void LabeledDataset::add_row(std::span<const double> features, int label) {
  if (features.size() != cols_) throw ConfigError("dataset row has the wrong number of features");
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes_) throw ConfigError("dataset label out of range");
  values_.insert(values_.end(), features.begin(), features.end());
  labels_.push_back(label);
}

std::vector<double> LabeledDataset::balanced_class_weights() const {
  std::vector<double> counts(num_classes_, 0.0);
  for (int l : labels_) counts[static_cast<std::size_t>(l)] += 1.0;
  const double present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }));
  std::vector<double> w(num_classes_, 0.0);
  for (std::size_t k = 0; k < num_classes_; ++k) {
    if (counts[k] > 0) w[k] = static_cast<double>(rows()) / (present * counts[k]);
  }
  return w;
}

double gini_impurity(std::span<const double> class_mass) {
  const double total = std::accumulate(class_mass.begin(), class_mass.end(), 0.0);
  if (!(total > 0.0)) throw ConfigError("gini_impurity: total mass is zero");
  double sq = 0.0;
  for (double m : class_mass) {
    if (m < 0.0) throw ConfigError("gini_impurity: negative class mass");
    const double p = m / total;
    sq += p * p;
  }
  return 1.0 - sq;
}

double TreeNode::mass() const { return std::accumulate(class_mass.begin(), class_mass.end(), 0.0); }

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::size_t DecisionTree::depth() const {
  std::size_t best = 0;
  std::vector<std::pair<int, std::size_t>> stack;
  if (!nodes.empty()) stack.emplace_back(0, 0);
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    const TreeNode& n = nodes[static_cast<std::size_t>(id)];
    if (!n.is_leaf()) {
      stack.emplace_back(n.left, d + 1);
      stack.emplace_back(n.right, d + 1);
    }
  }
  return best;
}

std::vector<std::size_t> DecisionTree::used_features() const {
  std::vector<std::size_t> out;
  for (const auto& n : nodes) {
    if (!n.is_leaf()) out.push_back(static_cast<std::size_t>(n.feature));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

int majority(const std::vector<double>& mass) {
  return static_cast<int>(std::max_element(mass.begin(), mass.end()) - mass.begin());
}

double sum_sq_over(const std::vector<double>& m, double total) {
  double s = 0.0;
  for (double v : m) s += v * v;
  return s / total;
}

// Presorted CART builder. Each feature keeps its rows sorted by value; a node
// owns the same [begin, end) range in every feature's order, and splitting
// stably partitions that range.
class TreeBuilder {
 public:
  TreeBuilder(const LabeledDataset& data, std::vector<std::size_t> features)
      : data_(data), features_(std::move(features)), weights_(data.balanced_class_weights()) {
    const std::size_t n = data.rows();
    orders_.resize(features_.size());
    for (std::size_t fi = 0; fi < features_.size(); ++fi) {
      auto& ord = orders_[fi];
      ord.resize(n);
      std::iota(ord.begin(), ord.end(), 0u);
      const std::size_t f = features_[fi];
      std::stable_sort(ord.begin(), ord.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return data.value(a, f) < data.value(b, f); });
    }
    goes_left_.resize(n);
    buffer_.resize(n);
  }

  DecisionTree build() {
    DecisionTree tree;
    tree.num_features = data_.cols();
    tree.num_classes = data_.num_classes();
    tree.feature_subset = features_;
    grow(tree, 0, data_.rows(), -1);
    return tree;
  }

 private:
  struct Split {
    bool found = false;
    std::size_t feature_pos = 0;
    double threshold = 0.0;
    double gain = -std::numeric_limits<double>::infinity();
  };

  std::vector<double> node_mass(std::size_t begin, std::size_t end) const {
    std::vector<double> m(data_.num_classes(), 0.0);
    // any feature order lists the node's rows
    if (features_.empty()) return m;
    for (std::size_t i = begin; i < end; ++i) {
      const auto lab = static_cast<std::size_t>(data_.label(orders_[0][i]));
      m[lab] += weights_[lab];
    }
    return m;
  }

  Split best_split(std::size_t begin, std::size_t end, const std::vector<double>& mass) const {
    Split best;
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    const double parent_term = sum_sq_over(mass, total);
    const double tol = 1e-12 * total;
    std::vector<double> left(mass.size());
    std::vector<double> right(mass.size());
    for (std::size_t fi = 0; fi < features_.size(); ++fi) {
      const auto& ord = orders_[fi];
      const std::size_t f = features_[fi];
      std::fill(left.begin(), left.end(), 0.0);
      double left_total = 0.0;
      for (std::size_t i = begin; i + 1 < end; ++i) {
        const auto lab = static_cast<std::size_t>(data_.label(ord[i]));
        left[lab] += weights_[lab];
        left_total += weights_[lab];
        const double lo = data_.value(ord[i], f);
        const double hi = data_.value(ord[i + 1], f);
        if (!(lo < hi)) continue;
        const double right_total = total - left_total;
        if (!(left_total > 0.0) || !(right_total > 0.0)) continue;
        for (std::size_t k = 0; k < mass.size(); ++k) right[k] = mass[k] - left[k];
        const double gain = sum_sq_over(left, left_total) + sum_sq_over(right, right_total) - parent_term;
        if (!best.found || gain > best.gain + tol) {
          double mid = lo + (hi - lo) * 0.5;
          if (!(mid < hi)) mid = lo;
          best = Split{true, fi, mid, gain};
        }
      }
    }
    return best;
  }

  int grow(DecisionTree& tree, std::size_t begin, std::size_t end, int parent) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    {
      TreeNode& node = tree.nodes.back();
      node.parent = parent;
      node.class_mass = node_mass(begin, end);
      node.samples = end - begin;
      node.impurity = gini_impurity(node.class_mass);
      node.prediction = majority(node.class_mass);
    }
    const auto& mass = tree.nodes[static_cast<std::size_t>(id)].class_mass;
    const bool pure = std::count_if(mass.begin(), mass.end(), [](double m) { return m > 0.0; }) <= 1;
    if (pure || end - begin < 2) return id;
    const Split split = best_split(begin, end, mass);
    if (!split.found) return id;

    const std::size_t f = features_[split.feature_pos];
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint32_t r = orders_[0][i];
      goes_left_[r] = data_.value(r, f) <= split.threshold ? 1 : 0;
    }
    std::size_t mid = begin;
    for (auto& ord : orders_) {
      std::size_t l = begin, k = 0;
      for (std::size_t i = begin; i < end; ++i) {
        if (goes_left_[ord[i]]) {
          ord[l++] = ord[i];
        } else {
          buffer_[k++] = ord[i];
        }
      }
      std::copy_n(buffer_.begin(), k, ord.begin() + static_cast<std::ptrdiff_t>(l));
      mid = l;
    }
    tree.nodes[static_cast<std::size_t>(id)].feature = static_cast<int>(f);
    tree.nodes[static_cast<std::size_t>(id)].threshold = split.threshold;
    const int left = grow(tree, begin, mid, id);
    const int right = grow(tree, mid, end, id);
    tree.nodes[static_cast<std::size_t>(id)].left = left;
    tree.nodes[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  const LabeledDataset& data_;
  std::vector<std::size_t> features_;
  std::vector<double> weights_;
  std::vector<std::vector<std::uint32_t>> orders_;
  std::vector<char> goes_left_;
  std::vector<std::uint32_t> buffer_;
};

// Rebuilds the node array in preorder from the root, dropping unreachable nodes.
DecisionTree compact(const DecisionTree& src) {
  DecisionTree out = src;
  out.nodes.clear();
  struct Frame {
    int old_id;
    int parent;
    bool is_left;
  };
  std::vector<Frame> stack{{0, -1, false}};
  while (!stack.empty()) {
    const Frame fr = stack.back();
    stack.pop_back();
    const int new_id = static_cast<int>(out.nodes.size());
    TreeNode node = src.nodes[static_cast<std::size_t>(fr.old_id)];
    node.parent = fr.parent;
    const int old_left = node.left, old_right = node.right;
    node.left = node.right = -1;
    out.nodes.push_back(node);
    if (fr.parent >= 0) {
      auto& p = out.nodes[static_cast<std::size_t>(fr.parent)];
      (fr.is_left ? p.left : p.right) = new_id;
    }
    if (!node.is_leaf()) {
      stack.push_back({old_right, new_id, false});
      stack.push_back({old_left, new_id, true});
    }
  }
  return out;
}

}  // namespace

DecisionTree fit_tree(const LabeledDataset& data, double ccp_alpha, std::uint64_t seed,
                      std::span<const std::size_t> feature_subset) {
  if (data.rows() == 0) throw ConfigError("fit_tree: empty dataset");
  if (ccp_alpha < 0.0) throw ConfigError("fit_tree: ccp_alpha must be >= 0");
  std::vector<std::size_t> features;
  if (feature_subset.empty()) {
    features.resize(data.cols());
    std::iota(features.begin(), features.end(), std::size_t{0});
  } else {
    features.assign(feature_subset.begin(), feature_subset.end());
    std::sort(features.begin(), features.end());
    features.erase(std::unique(features.begin(), features.end()), features.end());
    if (features.back() >= data.cols()) throw ConfigError("fit_tree: feature subset index out of range");
  }
  TreeBuilder builder(data, features);
  DecisionTree tree = builder.build();
  tree.seed = seed;
  tree = ccp_prune(tree, ccp_alpha);
  return tree;
}

DecisionTree ccp_prune(const DecisionTree& tree, double alpha) {
  if (alpha < 0.0) throw ConfigError("ccp_prune: alpha must be >= 0");
  DecisionTree work = tree;
  work.ccp_alpha = alpha;
  if (!(alpha > 0.0) || work.nodes.empty()) return work;
  const double root_mass = work.nodes[0].mass();
  const std::size_t n = work.nodes.size();
  std::vector<double> risk(n);
  for (std::size_t i = 0; i < n; ++i) risk[i] = work.nodes[i].mass() / root_mass * work.nodes[i].impurity;

  std::vector<double> subtree_risk(n);
  std::vector<std::size_t> leaves(n);
  while (true) {
    // children always have larger ids than their parent (preorder growth),
    // so a reverse sweep is a post-order pass
    double best_alpha = std::numeric_limits<double>::infinity();
    int best = -1;
    for (std::size_t i = n; i-- > 0;) {
      const TreeNode& node = work.nodes[i];
      if (node.is_leaf()) {
        subtree_risk[i] = risk[i];
        leaves[i] = 1;
        continue;
      }
      const auto l = static_cast<std::size_t>(node.left), r = static_cast<std::size_t>(node.right);
      subtree_risk[i] = subtree_risk[l] + subtree_risk[r];
      leaves[i] = leaves[l] + leaves[r];
    }
    // only nodes reachable from the root matter
    std::vector<int> stack{0};
    while (!stack.empty()) {
      const auto i = static_cast<std::size_t>(stack.back());
      stack.pop_back();
      const TreeNode& node = work.nodes[i];
      if (node.is_leaf()) continue;
      const double g = (risk[i] - subtree_risk[i]) / static_cast<double>(leaves[i] - 1);
      if (g < best_alpha || (g == best_alpha && static_cast<int>(i) < best)) {
        best_alpha = g;
        best = static_cast<int>(i);
      }
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
    if (best < 0 || best_alpha > alpha) break;
    TreeNode& node = work.nodes[static_cast<std::size_t>(best)];
    node.feature = -1;
    node.threshold = 0.0;
  }
  return compact(work);
}

int predict(const DecisionTree& tree, std::span<const double> x) {
  if (tree.nodes.empty()) throw ConfigError("predict: empty tree");
  std::size_t i = 0;
  while (!tree.nodes[i].is_leaf()) {
    const TreeNode& node = tree.nodes[i];
    const auto f = static_cast<std::size_t>(node.feature);
    if (f >= x.size()) throw ConfigError("predict: feature " + std::to_string(f) + " missing from input vector");
    i = static_cast<std::size_t>(x[f] <= node.threshold ? node.left : node.right);
  }
  return tree.nodes[i].prediction;
}

std::vector<double> raw_importances(const DecisionTree& tree) {
  std::vector<double> imp(tree.num_features, 0.0);
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) continue;
    const auto& l = tree.nodes[static_cast<std::size_t>(node.left)];
    const auto& r = tree.nodes[static_cast<std::size_t>(node.right)];
    imp[static_cast<std::size_t>(node.feature)] +=
        node.mass() * node.impurity - l.mass() * l.impurity - r.mass() * r.impurity;
  }
  return imp;
}

std::vector<double> gini_importances(const DecisionTree& tree) {
  auto imp = raw_importances(tree);
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (total > 0.0) {
    for (double& v : imp) v /= total;
  } else {
    std::fill(imp.begin(), imp.end(), 0.0);
  }
  return imp;
}

double weighted_training_accuracy(const DecisionTree& tree) {
  if (tree.nodes.empty()) return 0.0;
  double correct = 0.0;
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) correct += node.class_mass[static_cast<std::size_t>(node.prediction)];
  }
  return correct / tree.nodes[0].mass();
}

nlohmann::json export_tree(const DecisionTree& tree) {
  nlohmann::json doc;
  doc["format"] = "qsdc-tree";
  doc["version"] = 1;
  doc["num_features"] = tree.num_features;
  doc["num_classes"] = tree.num_classes;
  doc["ccp_alpha"] = tree.ccp_alpha;
  doc["seed"] = tree.seed;
  doc["feature_subset"] = tree.feature_subset;
  auto& nodes = doc["nodes"] = nlohmann::json::array();
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const TreeNode& n = tree.nodes[i];
    nlohmann::json j;
    j["id"] = i;
    j["parent"] = n.parent;
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    j["left"] = n.left;
    j["right"] = n.right;
    j["samples"] = n.samples;
    j["impurity"] = n.impurity;
    j["prediction"] = n.prediction;
    j["class_mass"] = n.class_mass;
    nodes.push_back(std::move(j));
  }
  return doc;
}

DecisionTree import_tree(const nlohmann::json& doc) {
  try {
    if (doc.at("format") != "qsdc-tree") throw ParseError("tree document has the wrong format tag");
    if (doc.at("version") != 1) throw VersionMismatchError("unsupported tree document version");
    DecisionTree tree;
    tree.num_features = doc.at("num_features").get<std::size_t>();
    tree.num_classes = doc.at("num_classes").get<std::size_t>();
    tree.ccp_alpha = doc.at("ccp_alpha").get<double>();
    tree.seed = doc.at("seed").get<std::uint64_t>();
    tree.feature_subset = doc.at("feature_subset").get<std::vector<std::size_t>>();
    const auto& nodes = doc.at("nodes");
    tree.nodes.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& j = nodes[i];
      if (j.at("id").get<std::size_t>() != i) throw ParseError("tree nodes must be listed in id order");
      TreeNode& n = tree.nodes[i];
      n.parent = j.at("parent").get<int>();
      n.feature = j.at("feature").get<int>();
      n.threshold = j.at("threshold").get<double>();
      n.left = j.at("left").get<int>();
      n.right = j.at("right").get<int>();
      n.samples = j.at("samples").get<std::size_t>();
      n.impurity = j.at("impurity").get<double>();
      n.prediction = j.at("prediction").get<int>();
      n.class_mass = j.at("class_mass").get<std::vector<double>>();
    }
    const auto count = static_cast<int>(tree.nodes.size());
    for (const auto& n : tree.nodes) {
      if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count)) {
        throw ParseError("tree node has invalid child links");
      }
    }
    return tree;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed tree document: ") + e.what());
  }
}

namespace {

void rules_rec(const DecisionTree& tree, int id, int indent, const FeatureNamer& fname, const ClassNamer& cname,
               std::ostringstream& os) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(id)];
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  if (n.is_leaf()) {
    os << pad << "predict " << cname(n.prediction) << "\n";
    return;
  }
  os << pad << "if " << fname(static_cast<std::size_t>(n.feature)) << " <= " << csv::format(n.threshold) << " then\n";
  rules_rec(tree, n.left, indent + 1, fname, cname, os);
  os << pad << "else\n";
  rules_rec(tree, n.right, indent + 1, fname, cname, os);
}

}  // namespace

std::string export_rules(const DecisionTree& tree, const FeatureNamer& feature_name, const ClassNamer& class_name) {
  std::ostringstream os;
  if (!tree.nodes.empty()) rules_rec(tree, 0, 0, feature_name, class_name, os);
  return os.str();
}

}  // namespace qsdc

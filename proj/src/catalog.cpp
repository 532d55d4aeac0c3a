#include "grl/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "grl/error.hpp"

namespace grl {

namespace {

constexpr double kSumTolerance = 1e-9;

void check_probability_vector(std::span<const double> probs, const std::string& where) {
  if (probs.empty()) {
    throw Error(ErrorKind::EmptyDistribution, where + ": empty probability vector");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!std::isfinite(probs[i]) || probs[i] < 0.0) {
      throw Error(ErrorKind::InvalidArgument,
                  where + "/" + std::to_string(i) + ": probability must be finite and >= 0");
    }
    sum += probs[i];
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw Error(ErrorKind::InvalidArgument,
                where + ": probabilities sum to " + std::to_string(sum) + ", expected 1");
  }
}

void check_unique(const std::vector<std::string>& labels, const std::string& where) {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!seen.insert(labels[i]).second) {
      throw Error(ErrorKind::InvalidArgument,
                  where + "/" + std::to_string(i) + ": duplicate label '" + labels[i] + "'");
    }
  }
}

}  // namespace

void CategoryTable::validate() const {
  if (labels.size() != counts.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "category table has " + std::to_string(labels.size()) + " labels but " +
                    std::to_string(counts.size()) + " counts");
  }
  check_unique(labels, "/labels");
  if (total() == 0) throw Error(ErrorKind::AllZeroCounts, "every count is zero");
}

std::uint64_t CategoryTable::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::vector<double> fit_categorical(const CategoryTable& table) {
  table.validate();
  const double total = static_cast<double>(table.total());
  std::vector<double> probs(table.counts.size());
  std::transform(table.counts.begin(), table.counts.end(), probs.begin(),
                 [total](std::uint64_t c) { return static_cast<double>(c) / total; });
  return probs;
}

SceneDistribution::SceneDistribution(std::vector<std::string> scene_labels,
                                     std::vector<std::string> category_labels,
                                     std::vector<double> scene_prior,
                                     std::vector<std::vector<double>> category_given_scene,
                                     std::vector<std::vector<double>> instance_given_category,
                                     double epsilon)
    : scene_labels_(std::move(scene_labels)),
      category_labels_(std::move(category_labels)),
      scene_prior_(std::move(scene_prior)),
      category_given_scene_(std::move(category_given_scene)),
      instance_given_category_(std::move(instance_given_category)),
      epsilon_(epsilon) {
  check_unique(scene_labels_, "/scene_labels");
  check_unique(category_labels_, "/category_labels");
  if (scene_labels_.size() != scene_prior_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "/scene_prior: length " +
                                                  std::to_string(scene_prior_.size()) +
                                                  " != number of scene labels " +
                                                  std::to_string(scene_labels_.size()));
  }
  check_probability_vector(scene_prior_, "/scene_prior");
  if (category_given_scene_.size() != scene_prior_.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "/category_given_scene: expected one row per scene type");
  }
  for (std::size_t s = 0; s < category_given_scene_.size(); ++s) {
    const std::string where = "/category_given_scene/" + std::to_string(s);
    if (category_given_scene_[s].size() != category_labels_.size()) {
      throw Error(ErrorKind::DimensionMismatch, where + ": expected one entry per category");
    }
    check_probability_vector(category_given_scene_[s], where);
  }
  if (instance_given_category_.size() != category_labels_.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "/instance_given_category: expected one row per category");
  }
  for (std::size_t c = 0; c < instance_given_category_.size(); ++c) {
    check_probability_vector(instance_given_category_[c],
                             "/instance_given_category/" + std::to_string(c));
  }
  if (!std::isfinite(epsilon_) || epsilon_ < 0.0 || epsilon_ > 1.0) {
    throw Error(ErrorKind::InvalidArgument, "/epsilon: must lie in [0, 1]");
  }
}

std::size_t SceneDistribution::scene_index(const std::string& label) const {
  auto it = std::find(scene_labels_.begin(), scene_labels_.end(), label);
  if (it == scene_labels_.end()) {
    throw Error(ErrorKind::InvalidArgument, "unknown scene type '" + label + "'");
  }
  return static_cast<std::size_t>(it - scene_labels_.begin());
}

std::size_t SceneDistribution::category_index(const std::string& label) const {
  auto it = std::find(category_labels_.begin(), category_labels_.end(), label);
  if (it == category_labels_.end()) {
    throw Error(ErrorKind::UnknownCategory, "unknown category '" + label + "'");
  }
  return static_cast<std::size_t>(it - category_labels_.begin());
}

SceneDistribution SceneDistribution::with_epsilon(double epsilon) const {
  return SceneDistribution(scene_labels_, category_labels_, scene_prior_, category_given_scene_,
                           instance_given_category_, epsilon);
}

std::vector<double> SceneDistribution::category_marginal() const {
  std::vector<double> marginal(num_categories(), 0.0);
  for (std::size_t s = 0; s < num_scene_types(); ++s) {
    for (std::size_t c = 0; c < num_categories(); ++c) {
      marginal[c] += scene_prior_[s] * category_given_scene_[s][c];
    }
  }
  return marginal;
}

SceneDistribution fit_scene_distribution(const CategoryTable& scene_table,
                                         const std::vector<CategoryTable>& per_scene_object_tables,
                                         const std::vector<std::uint64_t>& instances_per_category,
                                         double epsilon) {
  std::vector<double> prior = fit_categorical(scene_table);
  if (per_scene_object_tables.size() != scene_table.labels.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "expected " + std::to_string(scene_table.labels.size()) +
                    " object tables (one per scene type), got " +
                    std::to_string(per_scene_object_tables.size()));
  }
  if (per_scene_object_tables.empty()) {
    throw Error(ErrorKind::EmptyDistribution, "no scene types");
  }
  const std::vector<std::string>& category_labels = per_scene_object_tables.front().labels;
  std::vector<std::vector<double>> rows;
  rows.reserve(per_scene_object_tables.size());
  for (std::size_t s = 0; s < per_scene_object_tables.size(); ++s) {
    if (per_scene_object_tables[s].labels != category_labels) {
      throw Error(ErrorKind::DimensionMismatch,
                  "object table " + std::to_string(s) + " has different category labels");
    }
    rows.push_back(fit_categorical(per_scene_object_tables[s]));
  }
  if (instances_per_category.size() != category_labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, "instances_per_category length " +
                                                  std::to_string(instances_per_category.size()) +
                                                  " != number of categories " +
                                                  std::to_string(category_labels.size()));
  }
  std::vector<std::vector<double>> instance_rows;
  for (std::size_t c = 0; c < instances_per_category.size(); ++c) {
    const std::uint64_t n = instances_per_category[c];
    if (n == 0) {
      throw Error(ErrorKind::InvalidArgument,
                  "category '" + category_labels[c] + "' needs at least one instance");
    }
    instance_rows.emplace_back(n, 1.0 / static_cast<double>(n));
  }
  return SceneDistribution(scene_table.labels, category_labels, std::move(prior), std::move(rows),
                           std::move(instance_rows), epsilon);
}

CategoryTable scannet_scene_counts() {
  // Scan counts per scene type out of 1513 ScanNetV2 scans; 33 scans belong
  // to types outside the 13 major ones and are pooled as "Other".
  return {{"Hotel", "Lounge", "Bathroom", "Room", "Office", "Kitchen", "Library", "Lobby",
           "Apartment", "Classroom", "Misc.", "Hallway", "Storage", "Other"},
          {273, 224, 212, 206, 173, 108, 67, 54, 40, 37, 35, 32, 19, 33}};
}

CategoryTable scannet_object_counts() {
  return {{"chair",    "cabinet",  "trash can", "table",        "pillow",     "sofa",
           "lamp",     "bed",      "bag",       "bookshelf",    "computer",   "video display",
           "mug",      "telephone", "bathtub",  "microwave",    "laptop",     "printer",
           "stove",    "bench",    "clock",     "basket",       "dishwasher", "loudspeaker",
           "washer",   "piano",    "mailbox",   "guitar",       "bowl"},
          {4848, 1798, 1375, 1368, 946, 503, 444, 389, 387, 253, 246, 220, 166, 164, 144,
           141,  111,  109,  96,   77,  58,  48,  43,  43,  42,  39,  35,  28,  24}};
}

std::vector<std::vector<bool>> scannet_scene_category_mask() {
  const CategoryTable scenes = scannet_scene_counts();
  const CategoryTable objects = scannet_object_counts();
  const std::vector<std::vector<std::string>> allowed = {
      // Hotel
      {"chair", "cabinet", "trash can", "table", "pillow", "sofa", "lamp", "bed", "bag",
       "bookshelf", "computer", "video display", "mug", "telephone", "laptop", "clock", "basket",
       "loudspeaker", "guitar"},
      // Lounge
      {"chair", "cabinet", "trash can", "table", "pillow", "sofa", "lamp", "bag", "bookshelf",
       "computer", "video display", "mug", "telephone", "microwave", "laptop", "bench", "clock",
       "basket", "loudspeaker", "piano", "guitar", "bowl"},
      // Bathroom
      {"chair", "cabinet", "trash can", "lamp", "bag", "mug", "bathtub", "clock", "basket",
       "washer"},
      // Room
      {"chair", "cabinet", "trash can", "table", "pillow", "sofa", "lamp", "bed", "bag",
       "bookshelf", "computer", "video display", "mug", "telephone", "laptop", "printer", "clock",
       "basket", "loudspeaker", "piano", "guitar", "bowl"},
      // Office
      {"chair", "cabinet", "trash can", "table", "pillow", "sofa", "lamp", "bag", "bookshelf",
       "computer", "video display", "mug", "telephone", "microwave", "laptop", "printer", "clock",
       "loudspeaker", "mailbox"},
      // Kitchen
      {"chair", "cabinet", "trash can", "table", "bag", "mug", "telephone", "microwave", "stove",
       "clock", "basket", "dishwasher", "washer", "bowl"},
      // Library
      {"chair", "cabinet", "trash can", "table", "sofa", "lamp", "bag", "bookshelf", "computer",
       "video display", "mug", "laptop", "printer", "bench", "clock"},
      // Lobby
      {"chair", "cabinet", "trash can", "table", "pillow", "sofa", "lamp", "bag",
       "video display", "telephone", "bench", "clock", "loudspeaker", "piano", "mailbox"},
      // Apartment
      {},
      // Classroom
      {"chair", "cabinet", "trash can", "table", "bag", "bookshelf", "computer", "video display",
       "mug", "laptop", "printer", "bench", "clock", "loudspeaker", "piano"},
      // Misc.
      {},
      // Hallway
      {"chair", "cabinet", "trash can", "table", "lamp", "bag", "bookshelf", "bench", "clock",
       "washer", "mailbox"},
      // Storage
      {"chair", "cabinet", "trash can", "table", "bag", "bookshelf", "mug", "printer", "basket",
       "washer", "guitar", "bowl"},
      // Other
      {},
  };
  std::vector<std::vector<bool>> mask(scenes.labels.size(),
                                      std::vector<bool>(objects.labels.size(), false));
  for (std::size_t s = 0; s < allowed.size(); ++s) {
    if (allowed[s].empty()) {
      // mixed-use scene types admit every category
      std::fill(mask[s].begin(), mask[s].end(), true);
      continue;
    }
    for (const std::string& name : allowed[s]) {
      auto it = std::find(objects.labels.begin(), objects.labels.end(), name);
      mask[s][static_cast<std::size_t>(it - objects.labels.begin())] = true;
    }
  }
  return mask;
}

namespace {

// Rows proportional to mask * weight, with weights adjusted by iterative
// proportional fitting until the prior-weighted mixture of rows equals the
// target marginal.
std::vector<std::vector<double>> fit_masked_rows(const std::vector<double>& prior,
                                                 const std::vector<double>& target,
                                                 const std::vector<std::vector<bool>>& mask) {
  const std::size_t n_scenes = prior.size();
  const std::size_t n_cats = target.size();
  std::vector<double> weight = target;
  std::vector<std::vector<double>> rows(n_scenes, std::vector<double>(n_cats, 0.0));
  auto build_rows = [&] {
    for (std::size_t s = 0; s < n_scenes; ++s) {
      double z = 0.0;
      for (std::size_t c = 0; c < n_cats; ++c) z += mask[s][c] ? weight[c] : 0.0;
      for (std::size_t c = 0; c < n_cats; ++c) rows[s][c] = mask[s][c] ? weight[c] / z : 0.0;
    }
  };
  for (int iter = 0; iter < 100000; ++iter) {
    build_rows();
    double worst = 0.0;
    for (std::size_t c = 0; c < n_cats; ++c) {
      double marginal = 0.0;
      for (std::size_t s = 0; s < n_scenes; ++s) marginal += prior[s] * rows[s][c];
      worst = std::max(worst, std::abs(marginal / target[c] - 1.0));
      weight[c] *= target[c] / marginal;
    }
    if (worst < 1e-12) break;
  }
  build_rows();
  return rows;
}

std::vector<std::vector<double>> scannet_default_rows() {
  const std::vector<double> prior = fit_categorical(scannet_scene_counts());
  const std::vector<double> target = fit_categorical(scannet_object_counts());
  return fit_masked_rows(prior, target, scannet_scene_category_mask());
}

}  // namespace

std::vector<CategoryTable> scannet_default_object_tables(std::uint64_t total_objects) {
  const CategoryTable scenes = scannet_scene_counts();
  const CategoryTable objects = scannet_object_counts();
  const std::vector<double> prior = fit_categorical(scenes);
  const auto rows = scannet_default_rows();
  std::vector<CategoryTable> tables;
  for (std::size_t s = 0; s < rows.size(); ++s) {
    CategoryTable table{objects.labels, std::vector<std::uint64_t>(objects.labels.size(), 0)};
    const double scene_objects = prior[s] * static_cast<double>(total_objects);
    for (std::size_t c = 0; c < rows[s].size(); ++c) {
      table.counts[c] = static_cast<std::uint64_t>(std::llround(rows[s][c] * scene_objects));
    }
    tables.push_back(std::move(table));
  }
  return tables;
}

SceneDistribution load_default_scannet_parameters(std::uint64_t instances_per_category,
                                                  double epsilon) {
  const CategoryTable scenes = scannet_scene_counts();
  const CategoryTable objects = scannet_object_counts();
  if (instances_per_category == 0) {
    throw Error(ErrorKind::InvalidArgument, "instances_per_category must be >= 1");
  }
  std::vector<std::vector<double>> instance_rows(
      objects.labels.size(),
      std::vector<double>(instances_per_category, 1.0 / static_cast<double>(instances_per_category)));
  return SceneDistribution(scenes.labels, objects.labels, fit_categorical(scenes),
                           scannet_default_rows(), std::move(instance_rows), epsilon);
}

nlohmann::json to_json(const SceneDistribution& dist) {
  nlohmann::json doc;
  doc["scene_labels"] = dist.scene_labels();
  doc["category_labels"] = dist.category_labels();
  doc["scene_prior"] = dist.scene_prior();
  doc["category_given_scene"] = dist.category_given_scene();
  doc["instance_given_category"] = dist.instance_given_category();
  doc["epsilon"] = dist.epsilon();
  return doc;
}

namespace {

template <typename T>
T require(const nlohmann::json& doc, const std::string& key) {
  if (!doc.is_object() || !doc.contains(key)) {
    throw Error(ErrorKind::InvalidArgument, "/" + key + ": missing");
  }
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "/" + key + ": " + e.what());
  }
}

}  // namespace

SceneDistribution distribution_from_json(const nlohmann::json& doc) {
  return SceneDistribution(require<std::vector<std::string>>(doc, "scene_labels"),
                           require<std::vector<std::string>>(doc, "category_labels"),
                           require<std::vector<double>>(doc, "scene_prior"),
                           require<std::vector<std::vector<double>>>(doc, "category_given_scene"),
                           require<std::vector<std::vector<double>>>(doc, "instance_given_category"),
                           require<double>(doc, "epsilon"));
}

void save_distribution(const SceneDistribution& dist, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << to_json(dist).dump(2) << '\n';
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

SceneDistribution load_distribution(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
  }
  return distribution_from_json(doc);
}

}  // namespace grl

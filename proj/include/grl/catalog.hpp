#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <span>
#include <vector>

#include <json.hpp>

namespace grl {

/// Occurrence counts per label, the raw material for a maximum-likelihood
/// categorical fit.
struct CategoryTable {
  std::vector<std::string> labels;
  std::vector<std::uint64_t> counts;

  /// Throws DimensionMismatch / InvalidArgument / AllZeroCounts.
  void validate() const;
  std::uint64_t total() const;
};

/// Normalized occurrence frequency: entry k is counts[k] / sum(counts).
std::vector<double> fit_categorical(const CategoryTable& table);

/// Parameters of the three-level chain scene type -> object category ->
/// object instance, plus the epsilon-greedy mixing weight. Immutable; the
/// constructor rejects anything that is not a consistent set of probability
/// vectors.
class SceneDistribution {
 public:
  SceneDistribution(std::vector<std::string> scene_labels,
                    std::vector<std::string> category_labels,
                    std::vector<double> scene_prior,
                    std::vector<std::vector<double>> category_given_scene,
                    std::vector<std::vector<double>> instance_given_category,
                    double epsilon);

  const std::vector<std::string>& scene_labels() const { return scene_labels_; }
  const std::vector<std::string>& category_labels() const { return category_labels_; }
  const std::vector<double>& scene_prior() const { return scene_prior_; }
  const std::vector<std::vector<double>>& category_given_scene() const {
    return category_given_scene_;
  }
  const std::vector<std::vector<double>>& instance_given_category() const {
    return instance_given_category_;
  }
  double epsilon() const { return epsilon_; }

  std::size_t num_scene_types() const { return scene_prior_.size(); }
  std::size_t num_categories() const { return category_labels_.size(); }
  std::size_t num_instances(std::size_t category) const {
    return instance_given_category_.at(category).size();
  }

  std::size_t scene_index(const std::string& label) const;
  std::size_t category_index(const std::string& label) const;

  /// Copy with a different epsilon.
  SceneDistribution with_epsilon(double epsilon) const;

  /// Marginal p(category) = sum_s p(s) p(category | s).
  std::vector<double> category_marginal() const;

  bool operator==(const SceneDistribution&) const = default;

 private:
  std::vector<std::string> scene_labels_;
  std::vector<std::string> category_labels_;
  std::vector<double> scene_prior_;
  std::vector<std::vector<double>> category_given_scene_;
  std::vector<std::vector<double>> instance_given_category_;
  double epsilon_;
};

/// Fits scene_prior and category_given_scene by normalized frequency and sets
/// every instance row to uniform. One object table per scene type, all with
/// the same category labels in the same order.
SceneDistribution fit_scene_distribution(const CategoryTable& scene_table,
                                         const std::vector<CategoryTable>& per_scene_object_tables,
                                         const std::vector<std::uint64_t>& instances_per_category,
                                         double epsilon = 0.1);

// Bundled ScanNetV2 statistics.
CategoryTable scannet_scene_counts();
CategoryTable scannet_object_counts();
/// Which categories are plausible in which scene type (rows follow
/// scannet_scene_counts(), columns scannet_object_counts()).
std::vector<std::vector<bool>> scannet_scene_category_mask();

/// Per-scene object count tables synthesized from the published marginals:
/// masked rows whose prior-weighted mixture reproduces the object marginal.
std::vector<CategoryTable> scannet_default_object_tables(std::uint64_t total_objects = 1'000'000);

SceneDistribution load_default_scannet_parameters(std::uint64_t instances_per_category = 10,
                                                  double epsilon = 0.1);

nlohmann::json to_json(const SceneDistribution& dist);
/// Validates every invariant; the first violation is reported with a JSON
/// pointer to the offending value.
SceneDistribution distribution_from_json(const nlohmann::json& doc);

void save_distribution(const SceneDistribution& dist, const std::filesystem::path& path);
SceneDistribution load_distribution(const std::filesystem::path& path);

}  // namespace grl

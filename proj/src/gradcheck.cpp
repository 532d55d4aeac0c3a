#include "grl/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "grl/error.hpp"
#include "grl/rng.hpp"

namespace grl {

bool GradCheckReport::passed() const {
  if (unresolved > 0 || tensors.empty()) return false;
  return std::all_of(max_rel.begin(), max_rel.end(), [&](double e) { return e <= tolerance; });
}

std::vector<TrainingSample> make_gradcheck_batch(const GradCheckConfig& config) {
  const SceneDistribution dist = load_default_scannet_parameters();
  const ProceduralAssets assets(config.points_per_object);
  const LayoutParams layout;
  std::vector<TrainingSample> batch;
  for (std::size_t b = 0; b < config.pairs; ++b) {
    const std::uint64_t seed = derive_seed(config.seed, b);
    const ScenePair pair = make_scene_pair(dist, config.objects, assets, layout, seed);
    const std::size_t m = std::min(kDefaultSeedCount, pair.scene_a.num_foreground_points());
    const SeedSet seeds_a = sample_foreground_seeds(pair.scene_a, m, derive_seed(seed, 5));
    const SeedSet pool_b = sample_foreground_seeds(pair.scene_b, m, derive_seed(seed, 6));
    MatchSet matches = match_points(pair, seeds_a, pool_b);
    batch.push_back(prepare_sample(pair, pair, std::move(matches), config.decoder_seeds,
                                   config.model.decoder.grid_side, derive_seed(seed, 12)));
  }
  return batch;
}

namespace {

struct Probe {
  std::array<double, 4> value;
  std::uint64_t trace;
};

Probe probe(std::span<const TrainingSample> batch, const Model& model, const LossConfig& loss) {
  const Evaluation e = evaluate(batch, model, loss, false);
  const LossReport& r = e.report;
  return {{r.l_obj, r.l_pts, r.l_rec_coarse + r.l_rec_detail, r.l_overall}, e.trace};
}

}  // namespace

GradCheckReport run_gradcheck(std::span<const TrainingSample> batch, const Model& model,
                              const LossConfig& loss, const GradCheckConfig& config) {
  if (!(config.step > 0.0) || !(config.tolerance > 0.0) || config.floor < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "step and tolerance must be positive");
  }
  const auto start = std::chrono::steady_clock::now();
  const LossReport analytic = evaluate(batch, model, loss, true).report;
  const std::array<const Eigen::VectorXd*, 4> grads{&analytic.grad_obj, &analytic.grad_pts,
                                                    &analytic.grad_rec, &analytic.grad_overall};
  const Probe center = probe(batch, model, loss);

  GradCheckReport report;
  report.tolerance = config.tolerance;
  const Eigen::Index total = model.num_parameters();
  // Per coordinate: relative error per loss and how the difference was taken.
  Eigen::MatrixXd rel(total, 4);
  std::vector<int> kind(static_cast<std::size_t>(total), 0);
  const double h = config.step;

#pragma omp parallel
  {
    Model local = model;
    std::vector<ParamView> views = local.parameters();
    std::vector<Eigen::Index> offsets;
    Eigen::Index acc = 0;
    for (const ParamView& v : views) {
      offsets.push_back(acc);
      acc += v.size();
    }
#pragma omp for schedule(dynamic, 8)
    for (Eigen::Index k = 0; k < total; ++k) {
      const auto t = static_cast<std::size_t>(
          std::upper_bound(offsets.begin(), offsets.end(), k) - offsets.begin() - 1);
      double& x = views[t].data[k - offsets[t]];
      const double x0 = x;
      auto at = [&](double delta) {
        x = x0 + delta;
        const Probe p = probe(batch, local, loss);
        x = x0;
        return p;
      };
      const Probe plus = at(h);
      const Probe minus = at(-h);
      std::array<double, 4> numeric{};
      int how = 0;
      if (plus.trace == center.trace && minus.trace == center.trace) {
        for (int l = 0; l < 4; ++l) numeric[l] = (plus.value[l] - minus.value[l]) / (2.0 * h);
      } else {
        const double dir = plus.trace == center.trace ? 1.0 : -1.0;
        const Probe& near = dir > 0 ? plus : minus;
        const Probe far = at(2.0 * dir * h);
        if (near.trace == center.trace && far.trace == center.trace) {
          how = 1;
          for (int l = 0; l < 4; ++l) {
            numeric[l] = dir * (-3.0 * center.value[l] + 4.0 * near.value[l] - far.value[l]) / (2.0 * h);
          }
        } else {
          how = 2;
        }
      }
      kind[static_cast<std::size_t>(k)] = how;
      for (int l = 0; l < 4; ++l) {
        if (how == 2) {
          rel(k, l) = 0.0;
          continue;
        }
        const double a = (*grads[l])(k);
        const double n = numeric[l];
        rel(k, l) = std::abs(a - n) / std::max({std::abs(a), std::abs(n), config.floor});
      }
    }
  }

  Model names = model;
  Eigen::Index offset = 0;
  for (const ParamView& v : names.parameters()) {
    GradCheckTensor tensor{v.name, v.size(), {}};
    for (int l = 0; l < 4; ++l) {
      tensor.max_rel[l] = rel.col(l).segment(offset, v.size()).maxCoeff();
      report.max_rel[l] = std::max(report.max_rel[l], tensor.max_rel[l]);
    }
    report.tensors.push_back(std::move(tensor));
    offset += v.size();
  }
  for (int how : kind) {
    if (how == 0) ++report.central;
    if (how == 1) ++report.one_sided;
    if (how == 2) ++report.unresolved;
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

GradCheckReport run_gradcheck(const GradCheckConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<TrainingSample> batch = make_gradcheck_batch(config);
  const Model model = Model::random(config.model, derive_seed(config.seed, 100));
  GradCheckReport report = run_gradcheck(batch, model, LossConfig{}, config);
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

nlohmann::json to_json(const GradCheckReport& report) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const GradCheckTensor& t : report.tensors) {
    nlohmann::json errs;
    for (std::size_t l = 0; l < 4; ++l) errs[kLossNames[l]] = t.max_rel[l];
    tensors.push_back({{"name", t.name}, {"size", t.size}, {"max_rel_error", errs}});
  }
  nlohmann::json overall;
  for (std::size_t l = 0; l < 4; ++l) overall[kLossNames[l]] = report.max_rel[l];
  return {{"passed", report.passed()},
          {"tolerance", report.tolerance},
          {"max_rel_error", overall},
          {"central", report.central},
          {"one_sided", report.one_sided},
          {"unresolved", report.unresolved},
          {"seconds", report.seconds},
          {"tensors", tensors}};
}

}  // namespace grl

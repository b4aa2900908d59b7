#include "nmf/pipeline.hpp"

#include "nmf/checkpoint.hpp"
#include "nmf/cost_model.hpp"
#include "nmf/text_io.hpp"

#include <json.hpp>

#include <cmath>
#include <iomanip>
#include <sstream>

namespace nmf {

std::uint64_t stage_seed(std::uint64_t seed, Stage stage) {
  return make_stream(seed, {0x57a6e, static_cast<std::uint64_t>(stage)})();
}

ObjectAssets prepare_object(const ExperimentConfig& cfg) {
  ObjectAssets a;
  a.shape = cfg.target_object();
  a.gripper = cfg.gripper;
  a.anchors = generate_anchor_grasps(a.shape, a.gripper, stage_seed(cfg.seed, Stage::anchors));
  a.cloud = sample_surface_points(a.shape, static_cast<std::size_t>(cfg.cloud_points), stage_seed(cfg.seed, Stage::cloud));
  return a;
}

std::string variant_tag(double fraction, std::size_t anchor_count) {
  std::string tag;
  if (anchor_count != 2 * kFpsAnchorCount) tag = "anchors" + std::to_string(anchor_count);
  if (fraction != 1.0) {
    std::ostringstream f;
    f << "frac" << std::llround(fraction * 100.0);
    tag += (tag.empty() ? "" : "_") + f.str();
  }
  return tag.empty() ? "full" : tag;
}

namespace {

std::string seed_suffix(std::uint64_t seed) { return "_s" + std::to_string(seed); }

// Hash of only the settings a stage depends on, so unrelated edits do not invalidate artifacts.
std::uint64_t dataset_key(const ExperimentConfig& cfg) {
  ExperimentConfig k;
  k.seed = cfg.seed;
  k.objects = cfg.objects;
  k.object = cfg.object;
  k.gripper = cfg.gripper;
  k.dataset = cfg.dataset;
  k.heldout_trajectories = cfg.heldout_trajectories;
  return config_hash(k);
}

std::uint64_t model_key(const ExperimentConfig& cfg) {
  ExperimentConfig k;
  k.seed = cfg.seed;
  k.objects = cfg.objects;
  k.object = cfg.object;
  k.gripper = cfg.gripper;
  k.dataset = cfg.dataset;
  k.heldout_trajectories = cfg.heldout_trajectories;
  k.cloud_points = cfg.cloud_points;
  k.network = cfg.network;
  k.train = cfg.train;
  return config_hash(k);
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::filesystem::path key_file(const std::filesystem::path& artifact) {
  return std::filesystem::path(artifact.string() + ".key");
}

bool key_matches(const std::filesystem::path& artifact, std::uint64_t key) {
  const auto kf = key_file(artifact);
  if (!std::filesystem::exists(kf)) return false;
  return read_text_file(kf) == hex(key) + "\n";
}

}  // namespace

std::filesystem::path ArtifactLayout::dataset_stem(std::size_t anchor_count) const {
  return root / "data" / (object + "_" + variant_tag(1.0, anchor_count) + seed_suffix(seed));
}
std::filesystem::path ArtifactLayout::heldout_stem() const {
  return root / "data" / (object + "_heldout" + seed_suffix(seed));
}
std::filesystem::path ArtifactLayout::checkpoint(const std::string& tag) const {
  return root / "models" / (object + "_" + tag + seed_suffix(seed) + ".nmf");
}
std::filesystem::path ArtifactLayout::loss_curve(const std::string& tag) const {
  return root / "models" / (object + "_" + tag + seed_suffix(seed) + "_loss.csv");
}
std::filesystem::path ArtifactLayout::scores(const std::string& tag) const {
  return root / "models" / (object + "_" + tag + seed_suffix(seed) + "_scores.csv");
}
std::filesystem::path ArtifactLayout::curves(const std::string& suite, const std::string& tag) const {
  return root / "curves" / (suite + "_" + object + "_" + tag + seed_suffix(seed) + ".csv");
}
std::filesystem::path ArtifactLayout::traces(const std::string& suite, const std::string& tag) const {
  return root / "curves" / (suite + "_" + object + "_" + tag + seed_suffix(seed) + "_episodes.csv");
}
std::filesystem::path ArtifactLayout::cost_map() const {
  return root / (std::string("costmap_") + object + seed_suffix(seed) + ".csv");
}
std::filesystem::path ArtifactLayout::grasp_report() const {
  return root / (std::string("grasp_") + object + seed_suffix(seed) + ".csv");
}
std::filesystem::path ArtifactLayout::run_manifest(const std::string& command) const {
  return root / ("run_" + command + ".json");
}

Dataset generate_dataset(const ExperimentConfig& cfg, const ObjectAssets& assets, std::size_t anchor_count,
                         Execution exec) {
  return build_dataset(assets.shape, assets.gripper, assets.anchors.subset(anchor_count), cfg.dataset,
                       stage_seed(cfg.seed, Stage::dataset), exec);
}

Dataset generate_heldout(const ExperimentConfig& cfg, const ObjectAssets& assets, Execution exec) {
  DatasetConfig dc = cfg.dataset;
  dc.n_trajectories = cfg.heldout_trajectories;
  return build_dataset(assets.shape, assets.gripper, assets.anchors, dc, stage_seed(cfg.seed, Stage::heldout), exec);
}

TrainedModel train_model(const ExperimentConfig& cfg, const ObjectAssets& assets, const Dataset& ds, Execution exec) {
  TrainedModel t{init_value_model<float>(cfg.network, stage_seed(cfg.seed, Stage::init)), {}};
  TrainConfig tc = cfg.train;
  tc.seed = stage_seed(cfg.seed, Stage::train);
  const PointCloud clouds[] = {assets.cloud};
  t.result = train(t.model, ds, clouds, tc, exec);
  return t;
}

void write_loss_curve(const std::filesystem::path& path, const TrainResult& result) {
  std::ostringstream out;
  out << "epoch,path_l1_m,collision_bce\n";
  for (const auto& e : result.curve)
    out << e.epoch << ',' << format_double(e.path_loss) << ',' << format_double(e.collision_loss) << '\n';
  write_text_file(path, out.str());
}

Dataset obtain_dataset(const ExperimentConfig& cfg, const ObjectAssets& assets, const ArtifactLayout& layout,
                       std::size_t anchor_count, Execution exec) {
  const auto stem = layout.dataset_stem(anchor_count);
  const std::uint64_t key = dataset_key(cfg);
  if (key_matches(records_path(stem), key)) return read_dataset(stem);
  Dataset ds = generate_dataset(cfg, assets, anchor_count, exec);
  write_dataset(stem, ds);
  write_text_file(key_file(records_path(stem)), hex(key) + "\n");
  return ds;
}

Dataset obtain_heldout(const ExperimentConfig& cfg, const ObjectAssets& assets, const ArtifactLayout& layout,
                       Execution exec) {
  const auto stem = layout.heldout_stem();
  const std::uint64_t key = dataset_key(cfg);
  if (key_matches(records_path(stem), key)) return read_dataset(stem);
  Dataset ds = generate_heldout(cfg, assets, exec);
  write_dataset(stem, ds);
  write_text_file(key_file(records_path(stem)), hex(key) + "\n");
  return ds;
}

ModelScores score_and_save(const ValueModel& model, const ObjectAssets& assets, const Dataset& heldout,
                           const std::filesystem::path& path) {
  const PointCloud clouds[] = {assets.cloud};
  const ModelScores s = score_model(model, heldout, clouds, true);
  std::ostringstream out;
  out << "path_mae_m,collision_accuracy,path_records,collision_records\n"
      << format_double(s.path_mae) << ',' << format_double(s.collision_accuracy) << ',' << s.path_records << ','
      << s.collision_records << '\n';
  write_text_file(path, out.str());
  return s;
}

bool dataset_is_current(const ExperimentConfig& cfg, const ArtifactLayout& layout, std::size_t anchor_count) {
  return key_matches(records_path(layout.dataset_stem(anchor_count)), dataset_key(cfg));
}

ValueModel train_and_save(const ExperimentConfig& cfg, const ObjectAssets& assets, const ArtifactLayout& layout,
                          const Dataset& ds, const std::string& tag, Execution exec) {
  const auto path = layout.checkpoint(tag);
  TrainedModel t = train_model(cfg, assets, ds, exec);
  save_checkpoint(t.model, path);
  write_loss_curve(layout.loss_curve(tag), t.result);
  write_text_file(key_file(path), hex(model_key(cfg)) + "\n");
  // Reload so a freshly trained and a reused model are bit-identical downstream.
  return load_checkpoint(path);
}

ValueModel obtain_model(const ExperimentConfig& cfg, const ObjectAssets& assets, const ArtifactLayout& layout,
                        double fraction, std::size_t anchor_count, Execution exec) {
  const std::string tag = variant_tag(fraction, anchor_count);
  if (key_matches(layout.checkpoint(tag), model_key(cfg))) return load_checkpoint(layout.checkpoint(tag));
  const Dataset ds = subsample_trajectories(obtain_dataset(cfg, assets, layout, anchor_count, exec), fraction);
  return train_and_save(cfg, assets, layout, ds, tag, exec);
}

RolloutCurves evaluate_rollouts(const ExperimentConfig& cfg, const ObjectAssets& assets, const ValueModel& model,
                                EpisodeMode mode, const ArtifactLayout& layout, const std::string& suite,
                                const std::string& tag, Execution exec) {
  EpisodeConfig ec = cfg.episode;
  ec.mode = mode;
  ec.seed = stage_seed(cfg.seed, Stage::rollout);
  const LearnedCost cost(model, assets.cloud, Execution::serial);
  RolloutCurves curves = run_rollout_suite(ec, cost, assets.shape, assets.anchors, assets.gripper, cfg.mpc, exec);
  write_curves(layout.curves(suite, tag), curves);
  write_episode_traces(layout.traces(suite, tag), curves);
  return curves;
}

AblationSuite ablation_suite_from_string(const std::string& s) {
  if (s == "fraction") return AblationSuite::dataset_fraction;
  if (s == "anchors") return AblationSuite::anchor_count;
  throw std::invalid_argument("unknown ablation suite '" + s + "' (expected fraction or anchors)");
}

std::vector<AblationVariant> run_ablation(AblationSuite suite, const ExperimentConfig& cfg, const ObjectAssets& assets,
                                          const ArtifactLayout& layout, Execution exec) {
  std::vector<AblationVariant> variants;
  if (suite == AblationSuite::dataset_fraction) {
    for (double f : cfg.ablation.fractions) variants.push_back({variant_tag(f, 32), f, 32, {}});
  } else {
    for (int k : cfg.ablation.anchor_counts) {
      const auto n = static_cast<std::size_t>(k);
      variants.push_back({variant_tag(1.0, n), 1.0, n, {}});
    }
  }
  const EpisodeMode mode =
      suite == AblationSuite::dataset_fraction ? EpisodeMode::static_object : EpisodeMode::dynamic_object;
  const std::string name = suite == AblationSuite::dataset_fraction ? "ablate-fraction" : "ablate-anchors";
  for (auto& v : variants) {
    const ValueModel model = obtain_model(cfg, assets, layout, v.fraction, v.anchor_count, exec);
    v.curves = evaluate_rollouts(cfg, assets, model, mode, layout, name, v.tag, exec);
  }
  return variants;
}

void write_run_manifest(const std::filesystem::path& path, const RunManifest& m) {
  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& a : m.artifacts) artifacts.push_back(a.generic_string());
  const nlohmann::json j = {
      {"command", m.command}, {"config_hash", hex(m.config_hash)}, {"seed", m.seed}, {"artifacts", artifacts}};
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace nmf

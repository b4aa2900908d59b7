#pragma once

#include "nmf/config.hpp"
#include "nmf/dataset.hpp"
#include "nmf/evaluation.hpp"
#include "nmf/training.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nmf {

/// Independent seed streams for the pipeline stages of one experiment.
enum class Stage : std::uint64_t { anchors = 1, cloud, dataset, heldout, init, train, rollout, grasp };
std::uint64_t stage_seed(std::uint64_t seed, Stage stage);

struct ObjectAssets {
  ObjectShape shape;
  GripperModel gripper;
  AnchorGraspSet anchors;  // full flipped set
  PointCloud cloud;
};

ObjectAssets prepare_object(const ExperimentConfig& cfg);

/// Artifact tag of a model variant: "full", "frac5", "anchors2", ...
std::string variant_tag(double fraction, std::size_t anchor_count);

struct ArtifactLayout {
  std::filesystem::path root;
  std::string object;
  std::uint64_t seed = 0;

  std::filesystem::path dataset_stem(std::size_t anchor_count) const;
  std::filesystem::path heldout_stem() const;
  std::filesystem::path checkpoint(const std::string& tag) const;
  std::filesystem::path loss_curve(const std::string& tag) const;
  std::filesystem::path scores(const std::string& tag) const;
  std::filesystem::path curves(const std::string& suite, const std::string& tag) const;
  std::filesystem::path traces(const std::string& suite, const std::string& tag) const;
  std::filesystem::path cost_map() const;
  std::filesystem::path grasp_report() const;
  std::filesystem::path run_manifest(const std::string& command) const;
};

/// Training data for the given goal set (the first anchor_count anchors in FPS order, or all 32).
Dataset generate_dataset(const ExperimentConfig& cfg, const ObjectAssets& assets, std::size_t anchor_count,
                         Execution exec = Execution::parallel);
Dataset generate_heldout(const ExperimentConfig& cfg, const ObjectAssets& assets, Execution exec = Execution::parallel);

struct TrainedModel {
  ValueModel model;
  TrainResult result;
};

TrainedModel train_model(const ExperimentConfig& cfg, const ObjectAssets& assets, const Dataset& ds,
                         Execution exec = Execution::parallel);
void write_loss_curve(const std::filesystem::path& path, const TrainResult& result);

/// True when the dataset on disk was generated from the current configuration.
bool dataset_is_current(const ExperimentConfig& cfg, const ArtifactLayout& layout, std::size_t anchor_count);

/// Trains on ds and writes the checkpoint, its loss curve and its key; returns the reloaded model.
ValueModel train_and_save(const ExperimentConfig& cfg, const ObjectAssets& assets, const ArtifactLayout& layout,
                          const Dataset& ds, const std::string& tag, Execution exec = Execution::parallel);

/// Loads the dataset for anchor_count if it exists, otherwise generates and writes it.
Dataset obtain_dataset(const ExperimentConfig& cfg, const ObjectAssets& assets, const ArtifactLayout& layout,
                       std::size_t anchor_count, Execution exec = Execution::parallel);
Dataset obtain_heldout(const ExperimentConfig& cfg, const ObjectAssets& assets, const ArtifactLayout& layout,
                       Execution exec = Execution::parallel);
/// Held-out path MAE and collision accuracy (random poses only), written as a two-line table.
ModelScores score_and_save(const ValueModel& model, const ObjectAssets& assets, const Dataset& heldout,
                           const std::filesystem::path& path);
/// Loads the checkpoint for the variant if it exists, otherwise trains and writes it.
ValueModel obtain_model(const ExperimentConfig& cfg, const ObjectAssets& assets, const ArtifactLayout& layout,
                        double fraction, std::size_t anchor_count, Execution exec = Execution::parallel);

/// Rollout suite with the learned model; curves and per-episode traces written under the layout.
RolloutCurves evaluate_rollouts(const ExperimentConfig& cfg, const ObjectAssets& assets, const ValueModel& model,
                                EpisodeMode mode, const ArtifactLayout& layout, const std::string& suite,
                                const std::string& tag, Execution exec = Execution::parallel);

enum class AblationSuite { dataset_fraction, anchor_count };
AblationSuite ablation_suite_from_string(const std::string& s);

struct AblationVariant {
  std::string tag;
  double fraction = 1.0;
  std::size_t anchor_count = 32;
  RolloutCurves curves;
};

/// The fraction suite runs static episodes, the anchor suite dynamic ones.
/// Every variant is scored against the full anchor set.
std::vector<AblationVariant> run_ablation(AblationSuite suite, const ExperimentConfig& cfg, const ObjectAssets& assets,
                                          const ArtifactLayout& layout, Execution exec = Execution::parallel);

struct RunManifest {
  std::string command;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> artifacts;
};

void write_run_manifest(const std::filesystem::path& path, const RunManifest& manifest);

}  // namespace nmf

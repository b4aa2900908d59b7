#include "nmf/checkpoint.hpp"
#include "nmf/config.hpp"
#include "nmf/cost_model.hpp"
#include "nmf/evaluation.hpp"
#include "nmf/parallel.hpp"
#include "nmf/pipeline.hpp"
#include "nmf/text_io.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

namespace {

using namespace nmf;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::optional<std::string> out;
  std::optional<std::size_t> n_traj;
  std::optional<int> epochs;
  std::optional<int> episodes;
  double fraction = 1.0;
  std::size_t anchors = 2 * kFpsAnchorCount;
  std::string suite = "fraction";
};

// Flags win over the config file.
ExperimentConfig resolve(const Options& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  cfg.train.seed = cfg.seed;
  cfg.episode.seed = cfg.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.n_traj) cfg.dataset.n_trajectories = *o.n_traj;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.episodes) {
    cfg.episode.episodes = *o.episodes;
    cfg.grasp.cases = *o.episodes;
  }
  cfg.validate();
  return cfg;
}

ArtifactLayout layout_for(const ExperimentConfig& cfg) { return {cfg.output_dir, cfg.object, cfg.seed}; }

void finish(const ExperimentConfig& cfg, const std::string& command, std::vector<std::filesystem::path> artifacts) {
  const ArtifactLayout layout = layout_for(cfg);
  write_run_manifest(layout.run_manifest(command), {command, config_hash(cfg), cfg.seed, std::move(artifacts)});
  write_text_file(layout.root / ("run_" + command + "_config.json"), serialize_config(cfg));
}

ValueModel load_variant(const ArtifactLayout& layout, const Options& o) {
  return load_checkpoint(layout.checkpoint(variant_tag(o.fraction, o.anchors)));
}

void print_final(const std::string& label, const RolloutCurves& c) {
  std::cout << label << ": final translation error " << c.translation_mean.back() << " m, rotation error "
            << c.rotation_mean.back() << " rad";
  if (c.failures > 0) std::cout << " (" << c.failures << " episodes aborted)";
  std::cout << "\n";
}

int gen_data(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const ObjectAssets assets = prepare_object(cfg);
  const ArtifactLayout layout = layout_for(cfg);
  const Dataset ds = obtain_dataset(cfg, assets, layout, o.anchors);
  const auto stem = layout.dataset_stem(o.anchors);
  std::cout << "dataset " << stem.string() << ": " << ds.manifest.trajectories_kept << "/"
            << ds.manifest.trajectories_requested << " trajectories kept, " << ds.records.size() << " records\n";
  finish(cfg, "gen-data", {manifest_path(stem), records_path(stem)});
  return 0;
}

int train_cmd(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const ObjectAssets assets = prepare_object(cfg);
  const ArtifactLayout layout = layout_for(cfg);
  const auto stem = layout.dataset_stem(o.anchors);
  const Dataset full = read_dataset(stem);
  if (!dataset_is_current(cfg, layout, o.anchors))
    throw std::runtime_error("dataset " + stem.string() + " was generated from a different configuration; rerun gen-data");
  const std::string tag = variant_tag(o.fraction, o.anchors);
  const ValueModel model = train_and_save(cfg, assets, layout, subsample_trajectories(full, o.fraction), tag);
  const ModelScores s = score_and_save(model, assets, obtain_heldout(cfg, assets, layout), layout.scores(tag));
  std::cout << "trained " << tag << ": held-out path MAE " << s.path_mae << " m, collision accuracy "
            << s.collision_accuracy << "\n";
  finish(cfg, "train", {layout.checkpoint(tag), layout.loss_curve(tag), layout.scores(tag)});
  return 0;
}

int grasp_cmd(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const ObjectAssets assets = prepare_object(cfg);
  const ArtifactLayout layout = layout_for(cfg);
  const ValueModel model = load_variant(layout, o);
  const LearnedCost cost(model, assets.cloud, Execution::serial);
  EpisodeConfig ec = cfg.episode;
  ec.steps = cfg.grasp.budget_steps;
  ec.seed = stage_seed(cfg.seed, Stage::grasp);
  const SuccessReport r = grasp_success_eval(cost, assets.shape, assets.anchors, assets.gripper, cfg.mpc, ec,
                                             static_cast<std::size_t>(cfg.grasp.cases));
  std::ostringstream out;
  out << "case,success\n";
  for (std::size_t i = 0; i < r.outcome.size(); ++i) out << i << ',' << (r.outcome[i] ? 1 : 0) << '\n';
  write_text_file(layout.grasp_report(), out.str());
  std::cout << "grasp success " << r.successes << "/" << r.cases << "\n";
  finish(cfg, "grasp", {layout.grasp_report()});
  return 0;
}

int eval_cmd(const Options& o, EpisodeMode mode) {
  const ExperimentConfig cfg = resolve(o);
  const ObjectAssets assets = prepare_object(cfg);
  const ArtifactLayout layout = layout_for(cfg);
  const ValueModel model = load_variant(layout, o);
  const std::string suite = "eval-" + to_string(mode);
  const std::string tag = variant_tag(o.fraction, o.anchors);
  const RolloutCurves c = evaluate_rollouts(cfg, assets, model, mode, layout, suite, tag);
  print_final(suite + " " + tag, c);
  finish(cfg, suite, {layout.curves(suite, tag), layout.traces(suite, tag)});
  return 0;
}

int costmap_cmd(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const ObjectAssets assets = prepare_object(cfg);
  const ArtifactLayout layout = layout_for(cfg);
  const ValueModel model = load_variant(layout, o);
  const Pose& base = assets.anchors.grasps[top_down_anchor_index(assets.anchors)];
  const CostMapGrid grid = export_cost_map(model, assets.cloud, base, cfg.costmap.half_range_x,
                                           cfg.costmap.half_range_y, cfg.costmap.resolution);
  write_cost_map(layout.cost_map(), grid);
  std::cout << "cost map " << grid.xs.size() << "x" << grid.ys.size() << " written to " << layout.cost_map().string()
            << "\n";
  finish(cfg, "costmap", {layout.cost_map()});
  return 0;
}

int ablate_cmd(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const ObjectAssets assets = prepare_object(cfg);
  const ArtifactLayout layout = layout_for(cfg);
  const AblationSuite suite = ablation_suite_from_string(o.suite);
  const auto variants = run_ablation(suite, cfg, assets, layout);
  const std::string name = suite == AblationSuite::dataset_fraction ? "ablate-fraction" : "ablate-anchors";
  std::vector<std::filesystem::path> artifacts;
  for (const auto& v : variants) {
    print_final(name + " " + v.tag, v.curves);
    artifacts.push_back(layout.checkpoint(v.tag));
    artifacts.push_back(layout.curves(name, v.tag));
    artifacts.push_back(layout.traces(name, v.tag));
  }
  finish(cfg, name, artifacts);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural motion fields: dataset generation, training and reactive grasp evaluation"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the experiment seed");
    sub->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
    sub->add_option("--out", o.out, "Override the output directory");
    return sub;
  };
  auto variant = [&](CLI::App* sub) {
    sub->add_option("--fraction", o.fraction, "Fraction of the training trajectories (0, 1]")
        ->check(CLI::Range(0.0, 1.0));
    sub->add_option("--anchors", o.anchors, "Anchor grasp count (1..16 or 32)");
  };

  auto* gen = common(app.add_subcommand("gen-data", "Plan and label a training dataset"));
  gen->add_option("--n-traj", o.n_traj, "Number of trajectories to plan");
  gen->add_option("--anchors", o.anchors, "Anchor grasp count (1..16 or 32)");
  auto* tr = common(app.add_subcommand("train", "Train the value model and save a checkpoint"));
  tr->add_option("--epochs", o.epochs, "Training epochs");
  tr->add_option("--n-traj", o.n_traj, "Trajectory count the dataset was generated with");
  variant(tr);
  auto* gr = common(app.add_subcommand("grasp", "Grasp success rate with the learned cost"));
  gr->add_option("--episodes", o.episodes, "Number of test cases");
  variant(gr);
  auto* es = common(app.add_subcommand("eval-static", "Rollout curves with a static object"));
  es->add_option("--episodes", o.episodes, "Number of episodes");
  variant(es);
  auto* ed = common(app.add_subcommand("eval-dynamic", "Rollout curves with a moving object"));
  ed->add_option("--episodes", o.episodes, "Number of episodes");
  variant(ed);
  auto* cm = common(app.add_subcommand("costmap", "Export the x/y path-length map around a top grasp"));
  variant(cm);
  auto* ab = common(app.add_subcommand("ablate", "Dataset-fraction or anchor-count ablation"));
  ab->add_option("--suite", o.suite, "fraction or anchors")->check(CLI::IsMember({"fraction", "anchors"}));
  ab->add_option("--episodes", o.episodes, "Episodes per variant");
  ab->add_option("--epochs", o.epochs, "Training epochs per variant");
  ab->add_option("--n-traj", o.n_traj, "Trajectories in the full dataset");

  CLI11_PARSE(app, argc, argv);

  try {
    tune_allocator();
    set_thread_count(o.threads);
    if (*gen) return gen_data(o);
    if (*tr) return train_cmd(o);
    if (*gr) return grasp_cmd(o);
    if (*es) return eval_cmd(o, EpisodeMode::static_object);
    if (*ed) return eval_cmd(o, EpisodeMode::dynamic_object);
    if (*cm) return costmap_cmd(o);
    if (*ab) return ablate_cmd(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

// Acceptance suite: one PASS/FAIL line per criterion. Criteria 4-8 run the full
// desk-scale pipeline twice (run1, run2) under --work, which is wiped first.

#include "nmf/checkpoint.hpp"
#include "nmf/config.hpp"
#include "nmf/cost_model.hpp"
#include "nmf/evaluation.hpp"
#include "nmf/pipeline.hpp"

#include "gradcheck.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace nmf;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  int id = 0;
  bool pass = false;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, bool pass, const std::string& detail) {
  verdicts.push_back({id, pass, detail});
  std::cout << "CRITERION " << id << ' ' << (pass ? "PASS" : "FAIL") << ": " << detail << std::endl;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------

// Per-keypoint transforms and sums, written against the raw rotation matrices.
double brute_path_length(const Trajectory& t, const GripperModel& gm) {
  double total = 0.0;
  for (std::size_t i = 1; i < t.waypoints.size(); ++i) {
    const Mat3 ra = t.waypoints[i - 1].rotation.matrix();
    const Mat3 rb = t.waypoints[i].rotation.matrix();
    double step = 0.0;
    for (const Vec3& m : gm.keypoints) {
      double sq = 0.0;
      for (int r = 0; r < 3; ++r) {
        double a = t.waypoints[i - 1].translation[r];
        double b = t.waypoints[i].translation[r];
        for (int c = 0; c < 3; ++c) {
          a += ra(r, c) * m[c];
          b += rb(r, c) * m[c];
        }
        sq += (a - b) * (a - b);
      }
      step += std::sqrt(sq);
    }
    total += step / static_cast<double>(gm.keypoints.size());
  }
  return total;
}

void criterion_1(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  Rng rng = make_stream(cfg.seed, {0xac1});
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Trajectory t;
    const int n = std::uniform_int_distribution<int>(1, 200)(rng);
    for (int k = 0; k < n; ++k) t.waypoints.push_back(random_pose_in(cfg.dataset.rrt.bounds, rng));
    const double ref = brute_path_length(t, cfg.gripper);
    const double got = trajectory_path_length(t, cfg.gripper);
    worst = std::max(worst, ref == 0.0 ? std::abs(got) : std::abs(got - ref) / ref);
  }
  const double secs = seconds_since(t0);
  report(1, worst < 1e-9 && secs < 10.0,
         "max relative error " + fmt(worst) + " over 1000 trajectories (< 1e-9), " + fmt(secs) + " s (< 10 s)");
}

void criterion_2(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t kinked = 0;
  std::size_t checked = 0;
  auto add = [&](const testing::GradCheck& g) {
    worst = std::max(worst, g.max_rel_error);
    kinked += g.kinked;
    checked += g.parameters;
  };
  for (std::uint64_t draw = 0; draw < 5; ++draw) {
    Rng rng = make_stream(cfg.seed, {0xac2, draw});
    const auto model = init_value_model<double>(testing::tiny_shape(), cfg.seed + draw);
    const std::vector<MatrixX<double>> clouds{testing::tiny_cloud(rng)};
    add(testing::check_gradients(model.path, clouds, testing::tiny_batch(rng, BranchKind::path, 8)));
    add(testing::check_gradients(model.collision, clouds, testing::tiny_batch(rng, BranchKind::collision, 8)));
  }
  const double secs = seconds_since(t0);
  // Parameters with a kink inside +-h have no finite-difference reference; they may not be more than 5%.
  report(2, worst < 1e-3 && kinked * 20 <= checked && secs < 30.0,
         "max relative error " + fmt(worst) + " over 5 draws (< 1e-3), " + std::to_string(kinked) + " of " +
             std::to_string(checked) + " parameters straddle a kink (<= 5%), " + fmt(secs) + " s (< 30 s)");
}

void criterion_3(const ExperimentConfig& cfg, const ObjectAssets& assets) {
  const auto t0 = Clock::now();
  // Records of the first trajectory the planner keeps.
  Dataset ds;
  DatasetConfig dc = cfg.dataset;
  dc.random_poses_per_trajectory = 0;
  for (std::uint32_t id = 0; ds.records.empty(); ++id) {
    const TrajectoryOutcome t = generate_trajectory(id, assets.shape, assets.gripper, assets.anchors, dc,
                                                    stage_seed(cfg.seed, Stage::dataset));
    if (t.kept) ds.records = t.records;
  }
  const std::size_t path_records = ds.records.size();
  // 20 labeled poses, half of them in collision.
  Rng rng = make_stream(cfg.seed, {0xac3});
  int hits = 0;
  int misses = 0;
  while (hits + misses < 20) {
    const Pose p = random_pose_in(WorkspaceBounds::cube(Vec3::Zero(), 0.3), rng);
    const bool hit = gripper_in_collision(assets.shape, p, assets.gripper);
    if ((hit && hits == 10) || (!hit && misses == 10)) continue;
    (hit ? hits : misses)++;
    TrajectoryRecord r;
    r.waypoint_index = kRandomPoseIndex;
    r.path_length = kNoPathLabel;
    r.collision_label = hit ? 1 : 0;
    const Vec9 v = pose_to_vec9(p);
    for (int k = 0; k < 9; ++k) r.pose[static_cast<std::size_t>(k)] = static_cast<float>(v[k]);
    ds.records.push_back(r);
  }
  ValueModel model = init_value_model<float>(cfg.network, stage_seed(cfg.seed, Stage::init));
  TrainConfig tc = cfg.train;
  tc.epochs = 500;
  const PointCloud clouds[] = {assets.cloud};
  const TrainResult tr = train(model, ds, clouds, tc);
  const ModelScores s = score_model(model, ds, clouds, true);
  int first = -1;
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& e : tr.curve) {
    lowest = std::min(lowest, e.path_loss);
    if (first < 0 && e.path_loss < 1e-3) first = e.epoch;
  }
  const double secs = seconds_since(t0);
  report(3, first > 0 && s.collision_accuracy == 1.0 && secs < 120.0,
         "lowest epoch l1 " + fmt(lowest) + " over 500 epochs on " + std::to_string(path_records) +
             " records (< 1e-3; " + (first > 0 ? "first below at epoch " + std::to_string(first) : "never below") +
             "; l1 after training " + fmt(s.path_mae) + "), collision accuracy " + fmt(s.collision_accuracy) +
             " on 20 poses (= 1), " + fmt(secs) + " s (< 120 s)");
}

// ---------------------------------------------------------------------------

struct PipelineRun {
  ModelScores scores;
  double learn_seconds = 0.0;
  double fraction_seconds = 0.0;
  std::vector<AblationVariant> fraction;
  std::vector<AblationVariant> anchors;
  CostMapGrid costmap;
  Pose costmap_base;
};

// Criteria 4, 6, 7 and 8 share one artifact tree.
PipelineRun run_pipeline(const ExperimentConfig& cfg, const ObjectAssets& assets, const fs::path& root) {
  PipelineRun run;
  const ArtifactLayout layout{root, cfg.object, cfg.seed};
  auto t0 = Clock::now();
  const ValueModel full = obtain_model(cfg, assets, layout, 1.0, 32);
  run.scores = score_and_save(full, assets, obtain_heldout(cfg, assets, layout), layout.scores("full"));
  run.learn_seconds = seconds_since(t0);
  std::cout << "  learning: " << fmt(run.learn_seconds) << " s" << std::endl;

  t0 = Clock::now();
  run.fraction = run_ablation(AblationSuite::dataset_fraction, cfg, assets, layout);
  run.fraction_seconds = seconds_since(t0);
  std::cout << "  fraction ablation: " << fmt(run.fraction_seconds) << " s" << std::endl;

  t0 = Clock::now();
  run.anchors = run_ablation(AblationSuite::anchor_count, cfg, assets, layout);
  std::cout << "  anchor ablation: " << fmt(seconds_since(t0)) << " s" << std::endl;

  run.costmap_base = assets.anchors.grasps[top_down_anchor_index(assets.anchors)];
  run.costmap = export_cost_map(full, assets.cloud, run.costmap_base, cfg.costmap.half_range_x,
                                cfg.costmap.half_range_y, cfg.costmap.resolution);
  write_cost_map(layout.cost_map(), run.costmap);
  return run;
}

double final_error(const std::vector<AblationVariant>& vs, const std::string& tag) {
  for (const auto& v : vs)
    if (v.tag == tag) return v.curves.translation_mean.back();
  throw std::runtime_error("ablation variant " + tag + " missing; check the ablation section of the config");
}

void criterion_4(const PipelineRun& r) {
  report(4, r.scores.path_mae < 0.05 && r.scores.collision_accuracy >= 0.95 && r.learn_seconds < 1800.0,
         "held-out path MAE " + fmt(r.scores.path_mae) + " m (< 0.05), collision accuracy " +
             fmt(r.scores.collision_accuracy) + " (>= 0.95), " + fmt(r.learn_seconds) + " s (< 1800 s)");
}

void criterion_5(const ExperimentConfig& cfg, const ObjectAssets& assets) {
  const auto t0 = Clock::now();
  const OracleCost oracle(assets.shape, assets.gripper, assets.anchors);
  EpisodeConfig ec = cfg.episode;
  ec.mode = EpisodeMode::static_object;
  ec.episodes = 50;
  ec.steps = 1000;
  ec.seed = stage_seed(cfg.seed, Stage::rollout);
  const RolloutCurves c = run_rollout_suite(ec, oracle, assets.shape, assets.anchors, assets.gripper, cfg.mpc);
  int ok = 0;
  for (const auto& log : c.episodes)
    if (!log.aborted && log.entries.size() == 1000 && log.entries.back().translation_error < 0.02 &&
        log.entries.back().rotation_error < 0.2)
      ++ok;
  const double secs = seconds_since(t0);
  report(5, ok >= 45 && secs < 300.0,
         std::to_string(ok) + "/50 oracle episodes within 0.02 m and 0.2 rad at step 1000 (>= 45), " + fmt(secs) +
             " s (< 300 s)");
}

void criterion_6(const PipelineRun& r) {
  const double e100 = final_error(r.fraction, "full");
  const double e10 = final_error(r.fraction, variant_tag(0.1, 32));
  const double e5 = final_error(r.fraction, variant_tag(0.05, 32));
  const double secs = r.learn_seconds + r.fraction_seconds;
  report(6, e100 <= e10 && e10 <= e5 && secs < 7200.0,
         "final translation error 100% " + fmt(e100) + " m, 10% " + fmt(e10) + " m, 5% " + fmt(e5) +
             " m (ordered ascending), " + fmt(secs) + " s including the full model (< 7200 s)");
}

void criterion_7(const PipelineRun& r) {
  const double e32 = final_error(r.anchors, "full");
  const double e16 = final_error(r.anchors, variant_tag(1.0, 16));
  const double e2 = final_error(r.anchors, variant_tag(1.0, 2));
  report(7, e32 <= e16 && e16 <= e2,
         "dynamic final translation error 32 anchors " + fmt(e32) + " m, 16 " + fmt(e16) + " m, 2 " + fmt(e2) +
             " m (ordered ascending)");
}

void criterion_8(const PipelineRun& r) {
  const CostMapGrid& g = r.costmap;
  const std::size_t nx = g.xs.size();
  const std::size_t ny = g.ys.size();
  std::size_t best = 0;
  for (std::size_t i = 1; i < g.values.size(); ++i)
    if (g.values[i] < g.values[best]) best = i;
  const long mx = static_cast<long>(best % nx);
  const long my = static_cast<long>(best / nx);
  // The base sits on the centre cell of the grid.
  const long bx = static_cast<long>(nx / 2);
  const long by = static_cast<long>(ny / 2);
  const long offset = std::max(std::abs(mx - bx), std::abs(my - by));

  int monotone = 0;
  std::string rays;
  const int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  for (const auto& d : dirs) {
    int violations = 0;
    int steps = 0;
    long x = mx;
    long y = my;
    while (true) {
      const long nxt_x = x + d[0];
      const long nxt_y = y + d[1];
      if (nxt_x < 0 || nxt_y < 0 || nxt_x >= static_cast<long>(nx) || nxt_y >= static_cast<long>(ny)) break;
      if (g.at(static_cast<std::size_t>(nxt_x), static_cast<std::size_t>(nxt_y)) <
          g.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)))
        ++violations;
      ++steps;
      x = nxt_x;
      y = nxt_y;
    }
    const bool ok = steps > 0 && violations <= 1;
    monotone += ok ? 1 : 0;
    rays += (rays.empty() ? "" : " ") + std::to_string(violations) + "/" + std::to_string(steps);
  }
  report(8, offset <= 2 && monotone >= 3,
         "minimum " + std::to_string(offset) + " cells from the base (<= 2); " + std::to_string(monotone) +
             " of 4 rays monotone with at most one drop (>= 3; drops/steps " + rays + ")");
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = file_bytes(e.path());
  return out;
}

void criterion_9(const fs::path& run1, const fs::path& run2, const PipelineRun& a, const PipelineRun& b) {
  const auto ta = tree_bytes(run1);
  const auto tb = tree_bytes(run2);
  std::set<std::string> names;
  for (const auto& [k, v] : ta) names.insert(k);
  for (const auto& [k, v] : tb) names.insert(k);
  std::vector<std::string> differ;
  for (const auto& n : names) {
    const auto ia = ta.find(n);
    const auto ib = tb.find(n);
    if (ia == ta.end() || ib == tb.end() || ia->second != ib->second) differ.push_back(n);
  }
  const bool same_results = a.scores.path_mae == b.scores.path_mae &&
                            a.scores.collision_accuracy == b.scores.collision_accuracy &&
                            a.costmap.values == b.costmap.values;
  std::string detail = std::to_string(names.size()) + " artifacts compared, " + std::to_string(differ.size()) +
                       " differ";
  if (!differ.empty()) detail += " (first: " + differ.front() + ")";
  report(9, differ.empty() && same_results && !names.empty(), detail);
}

void criterion_10(const ExperimentConfig& cfg, const fs::path& run1, const fs::path& scratch) {
  const ArtifactLayout layout{run1, cfg.object, cfg.seed};
  const fs::path stem = layout.dataset_stem(32);
  const fs::path copy = scratch / stem.filename();
  fs::create_directories(scratch);
  write_dataset(copy, read_dataset(stem));
  const bool data_same = file_bytes(records_path(stem)) == file_bytes(records_path(copy)) &&
                         file_bytes(manifest_path(stem)) == file_bytes(manifest_path(copy));
  const fs::path ckpt = layout.checkpoint("full");
  const fs::path ckpt_copy = scratch / ckpt.filename();
  save_checkpoint(load_checkpoint(ckpt), ckpt_copy);
  const bool ckpt_same = file_bytes(ckpt) == file_bytes(ckpt_copy);
  report(10, data_same && ckpt_same,
         std::string("dataset ") + (data_same ? "identical" : "differs") + " (" +
             std::to_string(fs::file_size(records_path(stem))) + " bytes), checkpoint " +
             (ckpt_same ? "identical" : "differs") + " (" + std::to_string(fs::file_size(ckpt)) + " bytes)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string config_path;
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--config", config_path, "Experiment config")->required()->check(CLI::ExistingFile);
  app.add_option("--work", work, "Scratch directory (wiped)");
  app.add_option("--only", only, "Run only these criteria (4-9 always run together)");
  CLI11_PARSE(app, argc, argv);
  tune_allocator();

  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  try {
    const ExperimentConfig cfg = load_config(config_path);
    const ObjectAssets assets = prepare_object(cfg);
    const fs::path root(work);
    fs::remove_all(root);
    fs::create_directories(root);

    if (wanted(1)) criterion_1(cfg);
    if (wanted(2)) criterion_2(cfg);
    if (wanted(3)) criterion_3(cfg, assets);
    if (wanted(5)) criterion_5(cfg, assets);
    const bool pipeline = wanted(4) || wanted(6) || wanted(7) || wanted(8) || wanted(9) || wanted(10);
    if (pipeline) {
      std::cout << "run1" << std::endl;
      const PipelineRun r1 = run_pipeline(cfg, assets, root / "run1");
      criterion_4(r1);
      criterion_6(r1);
      criterion_7(r1);
      criterion_8(r1);
      criterion_10(cfg, root / "run1", root / "roundtrip");
      if (wanted(9)) {
        std::cout << "run2" << std::endl;
        const PipelineRun r2 = run_pipeline(cfg, assets, root / "run2");
        criterion_9(root / "run1", root / "run2", r1, r2);
      }
    }
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 2;
  }

  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  int failed = 0;
  std::cout << "\nsummary\n";
  for (const auto& v : verdicts) {
    std::cout << "CRITERION " << v.id << ' ' << (v.pass ? "PASS" : "FAIL") << "\n";
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}

#include "nmf/dataset.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace nmf {

void DatasetConfig::validate() const {
  rrt.validate();
  if (!(phi > 0.0)) throw DatasetError("dataset phi must be positive");
  if (!(waypoint_spacing > 0.0)) throw DatasetError("dataset waypoint spacing must be positive");
  if (random_poses_per_trajectory < 0)
    throw DatasetError("random poses per trajectory must be >= 0");
}

namespace {

std::array<float, 9> to_f32(const Vec9& v) {
  std::array<float, 9> out{};
  for (int i = 0; i < 9; ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
  return out;
}

}  // namespace

TrajectoryOutcome generate_trajectory(std::uint32_t trajectory_id, const ObjectShape& shape,
                                      const GripperModel& gm, const AnchorGraspSet& anchors,
                                      const DatasetConfig& cfg, std::uint64_t seed) {
  TrajectoryOutcome outcome;
  Rng rng = make_stream(seed, {trajectory_id});
  std::uniform_int_distribution<std::size_t> pick(0, anchors.size() - 1);
  const Pose& goal = anchors.grasps[pick(rng)];
  const Pose start = sample_start_pose(shape, gm, cfg.rrt.bounds, rng);
  const std::uint64_t plan_seed = rng();

  Trajectory dense;
  try {
    dense = densify_trajectory(rrt_plan(start, goal, shape, gm, cfg.rrt, plan_seed), gm,
                               cfg.waypoint_spacing);
  } catch (const PlanningError&) {
    return outcome;
  }
  // Densified waypoints are re-checked; the planner only validates edges at its own resolution.
  for (const auto& w : dense.waypoints)
    if (gripper_in_collision(shape, w, gm)) return outcome;
  outcome.planned = true;

  const auto labels = label_trajectory(dense, gm);
  if (labels.back().path_length > cfg.phi) return outcome;
  if (dense.waypoints.size() >= kRandomPoseIndex)
    throw DatasetError("trajectory has too many waypoints for the record format");
  outcome.kept = true;

  for (const auto& label : labels) {
    TrajectoryRecord r;
    r.trajectory_id = trajectory_id;
    r.waypoint_index = static_cast<std::uint16_t>(label.waypoint_index);
    r.pose = to_f32(pose_to_vec9(dense.waypoints[label.waypoint_index]));
    r.path_length = static_cast<float>(label.path_length);
    r.collision_label = 0;
    outcome.records.push_back(r);
  }
  for (int i = 0; i < cfg.random_poses_per_trajectory; ++i) {
    const Pose p = random_pose_in(cfg.rrt.bounds, rng);
    TrajectoryRecord r;
    r.trajectory_id = trajectory_id;
    r.waypoint_index = kRandomPoseIndex;
    r.pose = to_f32(pose_to_vec9(p));
    r.path_length = kNoPathLabel;
    r.collision_label = gripper_in_collision(shape, p, gm) ? 1 : 0;
    outcome.records.push_back(r);
  }
  return outcome;
}

Dataset build_dataset(const ObjectShape& shape, const GripperModel& gm,
                      const AnchorGraspSet& anchors, const DatasetConfig& cfg,
                      std::uint64_t seed, Execution exec) {
  cfg.validate();
  if (anchors.size() == 0) throw DatasetError("dataset generation needs at least one anchor grasp");
  const auto n = static_cast<std::int64_t>(cfg.n_trajectories);
  std::vector<TrajectoryOutcome> outcomes(cfg.n_trajectories);

  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t i = 0; i < n; ++i)
      outcomes[static_cast<std::size_t>(i)] =
          generate_trajectory(static_cast<std::uint32_t>(i), shape, gm, anchors, cfg, seed);
  } else {
    for (std::int64_t i = 0; i < n; ++i)
      outcomes[static_cast<std::size_t>(i)] =
          generate_trajectory(static_cast<std::uint32_t>(i), shape, gm, anchors, cfg, seed);
  }

  Dataset ds;
  ds.manifest.object_id = shape.object_id;
  ds.manifest.phi = cfg.phi;
  ds.manifest.seed = seed;
  ds.manifest.gripper_hash = gm.hash();
  ds.manifest.trajectories_requested = cfg.n_trajectories;
  ds.manifest.anchor_count = anchors.size();
  for (auto& o : outcomes) {
    if (o.kept) ++ds.manifest.trajectories_kept;
    ds.records.insert(ds.records.end(), o.records.begin(), o.records.end());
  }
  ds.manifest.count = ds.records.size();
  return ds;
}

Dataset subsample_trajectories(const Dataset& ds, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DatasetError("dataset fraction must lie in (0, 1]");
  if (fraction == 1.0) return ds;
  const auto keep = static_cast<std::uint64_t>(
      std::llround(fraction * static_cast<double>(ds.manifest.trajectories_kept)));
  Dataset out;
  out.manifest = ds.manifest;
  std::uint64_t seen = 0;
  std::int64_t last_id = -1;
  for (const auto& r : ds.records) {
    if (static_cast<std::int64_t>(r.trajectory_id) != last_id) {
      last_id = r.trajectory_id;
      ++seen;
    }
    if (seen > keep) break;
    out.records.push_back(r);
  }
  out.manifest.trajectories_kept = std::min(keep, ds.manifest.trajectories_kept);
  out.manifest.count = out.records.size();
  return out;
}

std::filesystem::path manifest_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".manifest");
}

std::filesystem::path records_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".bin");
}

namespace {

void put_u16(unsigned char*& p, std::uint16_t v) {
  *p++ = static_cast<unsigned char>(v);
  *p++ = static_cast<unsigned char>(v >> 8);
}

void put_u32(unsigned char*& p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) *p++ = static_cast<unsigned char>(v >> (8 * i));
}

std::uint16_t get_u16(const unsigned char*& p) {
  const std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  p += 2;
  return v;
}

std::uint32_t get_u32(const unsigned char*& p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  p += 4;
  return v;
}

}  // namespace

void encode_record(const TrajectoryRecord& r, unsigned char* out) {
  put_u16(out, r.object_index);
  put_u32(out, r.trajectory_id);
  put_u16(out, r.waypoint_index);
  for (float f : r.pose) put_u32(out, std::bit_cast<std::uint32_t>(f));
  put_u32(out, std::bit_cast<std::uint32_t>(r.path_length));
  *out = r.collision_label;
}

TrajectoryRecord decode_record(const unsigned char* in) {
  TrajectoryRecord r;
  r.object_index = get_u16(in);
  r.trajectory_id = get_u32(in);
  r.waypoint_index = get_u16(in);
  for (float& f : r.pose) f = std::bit_cast<float>(get_u32(in));
  r.path_length = std::bit_cast<float>(get_u32(in));
  r.collision_label = *in;
  return r;
}

void write_dataset(const std::filesystem::path& stem, const Dataset& ds) {
  if (ds.manifest.count != ds.records.size())
    throw DatasetError("dataset manifest count does not match its records");
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());

  const auto mpath = manifest_path(stem);
  std::ofstream m(mpath, std::ios::binary);
  if (!m) throw DatasetError("cannot open " + mpath.string() + " for writing");
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << ds.manifest.gripper_hash;
  std::ostringstream phi;
  phi << std::setprecision(17) << ds.manifest.phi;
  m << "version=" << ds.manifest.version << '\n'
    << "object_id=" << ds.manifest.object_id << '\n'
    << "count=" << ds.manifest.count << '\n'
    << "phi=" << phi.str() << '\n'
    << "seed=" << ds.manifest.seed << '\n'
    << "gripper_hash=" << hash.str() << '\n'
    << "trajectories_requested=" << ds.manifest.trajectories_requested << '\n'
    << "trajectories_kept=" << ds.manifest.trajectories_kept << '\n'
    << "anchor_count=" << ds.manifest.anchor_count << '\n'
    << "records=" << records_path(stem).filename().string() << '\n';
  if (!m) throw DatasetError("failed writing " + mpath.string());

  const auto rpath = records_path(stem);
  std::ofstream b(rpath, std::ios::binary);
  if (!b) throw DatasetError("cannot open " + rpath.string() + " for writing");
  std::vector<unsigned char> buf(kRecordBytes * ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) encode_record(ds.records[i], &buf[i * kRecordBytes]);
  b.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!b) throw DatasetError("failed writing " + rpath.string());
}

Dataset read_dataset(const std::filesystem::path& stem) {
  const auto mpath = manifest_path(stem);
  std::ifstream m(mpath);
  if (!m) throw DatasetError("cannot open dataset manifest " + mpath.string());
  std::map<std::string, std::string> kv;
  for (std::string line; std::getline(m, line);) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DatasetError("malformed manifest line in " + mpath.string() + ": " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DatasetError("manifest " + mpath.string() + " lacks key '" + key + "'");
    return it->second;
  };

  Dataset ds;
  try {
    ds.manifest.version = std::stoi(need("version"));
    ds.manifest.object_id = need("object_id");
    ds.manifest.count = std::stoull(need("count"));
    ds.manifest.phi = std::stod(need("phi"));
    ds.manifest.seed = std::stoull(need("seed"));
    ds.manifest.gripper_hash = std::stoull(need("gripper_hash"), nullptr, 16);
    if (kv.contains("trajectories_requested"))
      ds.manifest.trajectories_requested = std::stoull(kv["trajectories_requested"]);
    if (kv.contains("trajectories_kept")) ds.manifest.trajectories_kept = std::stoull(kv["trajectories_kept"]);
    if (kv.contains("anchor_count")) ds.manifest.anchor_count = std::stoull(kv["anchor_count"]);
  } catch (const std::logic_error&) {
    throw DatasetError("malformed value in " + mpath.string());
  }
  if (ds.manifest.version != 1)
    throw DatasetError("unsupported dataset version " + std::to_string(ds.manifest.version) + " in " +
                       mpath.string());

  const auto rpath = records_path(stem);
  std::ifstream b(rpath, std::ios::binary);
  if (!b) throw DatasetError("cannot open dataset records " + rpath.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  if (buf.size() != ds.manifest.count * kRecordBytes)
    throw DatasetError("dataset records " + rpath.string() + " hold " + std::to_string(buf.size()) +
                       " bytes, expected " + std::to_string(ds.manifest.count * kRecordBytes));
  ds.records.resize(ds.manifest.count);
  for (std::size_t i = 0; i < ds.records.size(); ++i) ds.records[i] = decode_record(&buf[i * kRecordBytes]);
  return ds;
}

}  // namespace nmf

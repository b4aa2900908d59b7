#include "nmf/config.hpp"

#include "nmf/text_io.hpp"

#include <json.hpp>

#include <set>

namespace nmf {

using nlohmann::json;

namespace {

// Reads fields from a JSON object, rejecting keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.contains(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
  }

  template <typename T>
  void opt(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }
  void opt_vec3(const std::string& key, Vec3& out) {
    std::vector<double> v;
    opt(key, v);
    if (!j_.contains(key)) return;
    if (v.size() != 3) throw ConfigError(where_ + "." + key + ": expected 3 numbers");
    out = Vec3(v[0], v[1], v[2]);
  }
  void opt_vec6(const std::string& key, Vec6& out) {
    std::vector<double> v;
    opt(key, v);
    if (!j_.contains(key)) return;
    if (v.size() != 6) throw ConfigError(where_ + "." + key + ": expected 6 numbers");
    for (int i = 0; i < 6; ++i) out[i] = v[static_cast<std::size_t>(i)];
  }
  const json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json vec_json(const auto& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

ObjectShape parse_object(const json& j, std::size_t i) {
  Reader r(j, "objects[" + std::to_string(i) + "]");
  std::string id, kind;
  r.opt("object_id", id);
  r.opt("kind", kind);
  if (kind == "box") {
    Vec3 extents = Vec3::Zero();
    r.opt_vec3("extents", extents);
    return ObjectShape::box(id, extents);
  }
  if (kind == "bowl") {
    double outer = 0, inner = 0, height = 0;
    r.opt("outer_radius", outer);
    r.opt("inner_radius", inner);
    r.opt("height", height);
    return ObjectShape::bowl(id, outer, inner, height);
  }
  throw ConfigError(r.where() + ": unknown object kind '" + kind + "'");
}

json object_json(const ObjectShape& s) {
  if (s.is_box())
    return {{"object_id", s.object_id}, {"kind", "box"}, {"extents", vec_json(std::get<BoxShape>(s.geometry).extents)}};
  const auto& b = std::get<BowlShape>(s.geometry);
  return {{"object_id", s.object_id},
          {"kind", "bowl"},
          {"outer_radius", b.outer_radius},
          {"inner_radius", b.inner_radius},
          {"height", b.height}};
}

GripperModel parse_gripper(const json& j) {
  Reader r(j, "gripper");
  std::string kind = "parallel_jaw";
  r.opt("kind", kind);
  GripperModel gm;
  if (kind == "parallel_jaw") {
    gm = GripperModel::parallel_jaw();
  } else if (kind != "custom") {
    throw ConfigError("gripper: unknown kind '" + kind + "'");
  }
  if (const json* kp = r.child("keypoints")) {
    gm.keypoints.clear();
    for (const auto& p : *kp) {
      const auto v = p.get<std::vector<double>>();
      if (v.size() != 3) throw ConfigError("gripper.keypoints: expected triples");
      gm.keypoints.emplace_back(v[0], v[1], v[2]);
    }
  }
  if (const json* sp = r.child("spheres")) {
    gm.collision_spheres.clear();
    for (const auto& s : *sp) {
      const auto v = s.get<std::vector<double>>();
      if (v.size() != 4) throw ConfigError("gripper.spheres: expected [x, y, z, radius]");
      gm.collision_spheres.push_back({Vec3(v[0], v[1], v[2]), v[3]});
    }
  }
  return gm;
}

json gripper_json(const GripperModel& gm) {
  json kp = json::array(), sp = json::array();
  for (const auto& k : gm.keypoints) kp.push_back(vec_json(k));
  for (const auto& s : gm.collision_spheres)
    sp.push_back({s.center.x(), s.center.y(), s.center.z(), s.radius});
  return {{"kind", "custom"}, {"keypoints", kp}, {"spheres", sp}};
}

void parse_rrt(const json& j, RrtConfig& c) {
  Reader r(j, "rrt");
  r.opt("step_size", c.step_size);
  r.opt("goal_bias", c.goal_bias);
  r.opt("max_iterations", c.max_iterations);
  r.opt("goal_tolerance", c.goal_tolerance);
  r.opt_vec3("bounds_lo", c.bounds.lo);
  r.opt_vec3("bounds_hi", c.bounds.hi);
}

json rrt_json(const RrtConfig& c) {
  return {{"step_size", c.step_size},     {"goal_bias", c.goal_bias},        {"max_iterations", c.max_iterations},
          {"goal_tolerance", c.goal_tolerance}, {"bounds_lo", vec_json(c.bounds.lo)}, {"bounds_hi", vec_json(c.bounds.hi)}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (objects.empty()) throw ConfigError("config defines no objects");
  std::set<std::string> ids;
  for (const auto& o : objects) {
    if (!ids.insert(o.object_id).second) throw ConfigError("object_id '" + o.object_id + "' is defined twice");
    try {
      o.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("object '") + o.object_id + "': " + e.what());
    }
  }
  if (!ids.contains(object)) throw ConfigError("object '" + object + "' is not defined");
  if (cloud_points < 1) throw ConfigError("cloud_points must be >= 1");
  try {
    gripper.validate();
    dataset.validate();
    network.validate();
    train.validate();
    mpc.validate();
    episode.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (grasp.cases < 1 || grasp.budget_steps < 1) throw ConfigError("grasp cases and budget must be >= 1");
  if (!(costmap.resolution > 0.0 && costmap.half_range_x >= 0.0 && costmap.half_range_y >= 0.0))
    throw ConfigError("cost map ranges must be >= 0 and resolution positive");
  for (double f : ablation.fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("ablation fractions must lie in (0, 1]");
  for (int k : ablation.anchor_counts)
    if (!(k >= 1 && (k <= static_cast<int>(kFpsAnchorCount) || k == 2 * static_cast<int>(kFpsAnchorCount))))
      throw ConfigError("ablation anchor counts must lie in [1, 16] or equal 32");
}

const ObjectShape& ExperimentConfig::target_object() const {
  for (const auto& o : objects)
    if (o.object_id == object) return o;
  throw ConfigError("object '" + object + "' is not defined");
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  {
    Reader r(root, "config");
    r.opt("name", c.name);
    r.opt("seed", c.seed);
    r.opt("output_dir", c.output_dir);
    r.opt("object", c.object);
    r.opt("cloud_points", c.cloud_points);
    if (const json* objs = r.child("objects")) {
      if (!objs->is_array()) throw ConfigError("config.objects: expected an array");
      for (std::size_t i = 0; i < objs->size(); ++i) {
        try {
          c.objects.push_back(parse_object(objs->at(i), i));
        } catch (const ConfigError&) {
          throw;
        } catch (const std::exception& e) {
          throw ConfigError("objects[" + std::to_string(i) + "]: " + e.what());
        }
      }
    }
    if (const json* g = r.child("gripper")) c.gripper = parse_gripper(*g);
    if (const json* d = r.child("dataset")) {
      Reader dr(*d, "dataset");
      dr.opt("n_trajectories", c.dataset.n_trajectories);
      dr.opt("heldout_trajectories", c.heldout_trajectories);
      dr.opt("phi", c.dataset.phi);
      dr.opt("waypoint_spacing", c.dataset.waypoint_spacing);
      dr.opt("random_poses_per_trajectory", c.dataset.random_poses_per_trajectory);
    }
    if (const json* rr = r.child("rrt")) parse_rrt(*rr, c.dataset.rrt);
    if (const json* n = r.child("network")) {
      Reader nr(*n, "network");
      nr.opt("encoder_widths", c.network.encoder_widths);
      nr.opt("head_hidden", c.network.head_hidden);
    }
    if (const json* t = r.child("train")) {
      Reader tr(*t, "train");
      tr.opt("learning_rate", c.train.learning_rate);
      tr.opt("weight_decay", c.train.weight_decay);
      tr.opt("batch_size", c.train.batch_size);
      tr.opt("beta1", c.train.beta1);
      tr.opt("beta2", c.train.beta2);
      tr.opt("epsilon", c.train.epsilon);
      tr.opt("epochs", c.train.epochs);
    }
    if (const json* m = r.child("mpc")) {
      Reader mr(*m, "mpc");
      mr.opt("horizon", c.mpc.horizon);
      mr.opt("samples", c.mpc.samples);
      mr.opt("dt", c.mpc.dt);
      mr.opt_vec6("noise_sigma", c.mpc.noise_sigma);
      mr.opt("temperature", c.mpc.temperature);
      mr.opt("tau", c.mpc.tau);
      mr.opt("smooth_weight", c.mpc.smooth_weight);
      mr.opt("accel_weight", c.mpc.accel_weight);
      mr.opt("bounds_weight", c.mpc.bounds_weight);
      mr.opt_vec3("bounds_lo", c.mpc.bounds.lo);
      mr.opt_vec3("bounds_hi", c.mpc.bounds.hi);
      mr.opt("max_linear_speed", c.mpc.max_linear_speed);
      mr.opt("max_angular_speed", c.mpc.max_angular_speed);
      mr.opt("max_linear_accel", c.mpc.max_linear_accel);
      mr.opt("max_angular_accel", c.mpc.max_angular_accel);
    }
    if (const json* e = r.child("episode")) {
      Reader er(*e, "episode");
      std::string mode = to_string(c.episode.mode);
      er.opt("mode", mode);
      try {
        c.episode.mode = episode_mode_from_string(mode);
      } catch (const std::invalid_argument& ex) {
        throw ConfigError(std::string("episode.mode: ") + ex.what());
      }
      er.opt("episodes", c.episode.episodes);
      er.opt("steps", c.episode.steps);
      er.opt("success_translation", c.episode.success_translation);
      er.opt("success_rotation", c.episode.success_rotation);
      er.opt("start_distance", c.episode.start_distance);
      er.opt("max_object_speed", c.episode.max_object_speed);
      er.opt("max_object_yaw_rate", c.episode.max_object_yaw_rate);
      er.opt("placement_range", c.episode.placement_range);
      er.opt("approach_window", c.episode.approach_window);
    }
    if (const json* g = r.child("grasp")) {
      Reader gr(*g, "grasp");
      gr.opt("cases", c.grasp.cases);
      gr.opt("budget_steps", c.grasp.budget_steps);
    }
    if (const json* m = r.child("costmap")) {
      Reader cr(*m, "costmap");
      cr.opt("half_range_x", c.costmap.half_range_x);
      cr.opt("half_range_y", c.costmap.half_range_y);
      cr.opt("resolution", c.costmap.resolution);
    }
    if (const json* a = r.child("ablation")) {
      Reader ar(*a, "ablation");
      ar.opt("fractions", c.ablation.fractions);
      ar.opt("anchor_counts", c.ablation.anchor_counts);
    }
  }
  c.train.seed = c.seed;
  c.episode.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception&) {
    throw ConfigError("cannot read config " + path.string());
  }
  try {
    return parse_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_config(const ExperimentConfig& c) {
  json objects = json::array();
  for (const auto& o : c.objects) objects.push_back(object_json(o));
  json root = {
      {"name", c.name},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"objects", objects},
      {"object", c.object},
      {"gripper", gripper_json(c.gripper)},
      {"cloud_points", c.cloud_points},
      {"dataset",
       {{"n_trajectories", c.dataset.n_trajectories},
        {"heldout_trajectories", c.heldout_trajectories},
        {"phi", c.dataset.phi},
        {"waypoint_spacing", c.dataset.waypoint_spacing},
        {"random_poses_per_trajectory", c.dataset.random_poses_per_trajectory}}},
      {"rrt", rrt_json(c.dataset.rrt)},
      {"network", {{"encoder_widths", c.network.encoder_widths}, {"head_hidden", c.network.head_hidden}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"weight_decay", c.train.weight_decay},
        {"batch_size", c.train.batch_size},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"epsilon", c.train.epsilon},
        {"epochs", c.train.epochs}}},
      {"mpc",
       {{"horizon", c.mpc.horizon},
        {"samples", c.mpc.samples},
        {"dt", c.mpc.dt},
        {"noise_sigma", vec_json(c.mpc.noise_sigma)},
        {"temperature", c.mpc.temperature},
        {"tau", c.mpc.tau},
        {"smooth_weight", c.mpc.smooth_weight},
        {"accel_weight", c.mpc.accel_weight},
        {"bounds_weight", c.mpc.bounds_weight},
        {"bounds_lo", vec_json(c.mpc.bounds.lo)},
        {"bounds_hi", vec_json(c.mpc.bounds.hi)},
        {"max_linear_speed", c.mpc.max_linear_speed},
        {"max_angular_speed", c.mpc.max_angular_speed},
        {"max_linear_accel", c.mpc.max_linear_accel},
        {"max_angular_accel", c.mpc.max_angular_accel}}},
      {"episode",
       {{"mode", to_string(c.episode.mode)},
        {"episodes", c.episode.episodes},
        {"steps", c.episode.steps},
        {"success_translation", c.episode.success_translation},
        {"success_rotation", c.episode.success_rotation},
        {"start_distance", c.episode.start_distance},
        {"max_object_speed", c.episode.max_object_speed},
        {"max_object_yaw_rate", c.episode.max_object_yaw_rate},
        {"placement_range", c.episode.placement_range},
        {"approach_window", c.episode.approach_window}}},
      {"grasp", {{"cases", c.grasp.cases}, {"budget_steps", c.grasp.budget_steps}}},
      {"costmap",
       {{"half_range_x", c.costmap.half_range_x},
        {"half_range_y", c.costmap.half_range_y},
        {"resolution", c.costmap.resolution}}},
      {"ablation", {{"fractions", c.ablation.fractions}, {"anchor_counts", c.ablation.anchor_counts}}},
  };
  return root.dump(2) + "\n";
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : serialize_config(cfg)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace nmf

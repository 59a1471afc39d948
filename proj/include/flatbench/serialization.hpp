#pragma once

// JSON shapes for actions, configs, snapshots, heatmaps and episode records,
// plus the robot transform-chain config loader. Key order is fixed
// (ordered_json) so identical values always serialize to identical bytes.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flatbench/bench.hpp"
#include "flatbench/cloth_sim.hpp"
#include "flatbench/error.hpp"
#include "flatbench/frames.hpp"
#include "flatbench/gabor.hpp"
#include "flatbench/policy.hpp"

namespace flatbench {

using Json = nlohmann::ordered_json;

namespace detail {

/// Reads fields out of a JSON object, rejecting unknown keys and type
/// mismatches with BadConfig. Missing keys leave the target untouched.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail("expected an object");
  }
  ~ObjectReader() = default;

  template <class T>
  ObjectReader& opt(const char* key, T& out) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        out = it->template get<T>();
      } catch (const nlohmann::json::exception&) {
        fail(std::string("bad value for '") + key + "'");
      }
    }
    return *this;
  }

  template <class T>
  ObjectReader& req(const char* key, T& out) {
    if (!j_.contains(key)) fail(std::string("missing '") + key + "'");
    return opt(key, out);
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail("unknown key '" + it.key() + "'");
  }

  [[noreturn]] void fail(const std::string& msg) const { throw Error(ErrorCode::BadConfig, where_ + ": " + msg); }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline Json vec_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> vec_from(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != N) throw Error(ErrorCode::BadConfig, std::string(what) + ": expected " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::BadConfig, std::string(what) + ": expected numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

inline Json rgb_json(Rgb c) { return Json::array({c.r, c.g, c.b}); }

inline Rgb rgb_from(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::BadConfig, std::string(what) + ": expected [r, g, b]");
  std::uint8_t c[3];
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number_integer() || j[i].get<int>() < 0 || j[i].get<int>() > 255)
      throw Error(ErrorCode::BadConfig, std::string(what) + ": channels must be integers in [0, 255]");
    c[i] = static_cast<std::uint8_t>(j[i].get<int>());
  }
  return {c[0], c[1], c[2]};
}

}  // namespace detail

// ---- PolicyAction -----------------------------------------------------------

inline Json action_to_json(const PolicyAction& a) {
  return Json{{"method", to_string(a.method)},
              {"op_point", {a.op_point.x(), a.op_point.y()}},
              {"direction", {a.direction.x(), a.direction.y()}}};
}

/// Parses an action without checking its invariants; see validate_action.
inline PolicyAction action_from_json(const Json& j) {
  detail::ObjectReader r(j, "action");
  PolicyAction a;
  std::string method = "human";
  r.opt("method", method);
  a.method = parse_method(method);
  const Json* op = r.child("op_point");
  const Json* dir = r.child("direction");
  if (!op || !dir) r.fail("op_point and direction are required");
  a.op_point = detail::vec_from<2>(*op, "op_point");
  a.direction = detail::vec_from<2>(*dir, "direction");
  r.done();
  return a;
}

/// Checks an externally supplied action against an image of the given size
/// and returns it with the direction renormalized.
inline PolicyAction validate_action(PolicyAction a, int image_w, int image_h, double norm_tolerance = 1e-3) {
  if (!a.op_point.allFinite() || !a.direction.allFinite())
    throw Error(ErrorCode::InvalidAction, "action has non-finite components");
  const double n = a.direction.norm();
  if (std::abs(n - 1.0) > norm_tolerance)
    throw Error(ErrorCode::InvalidAction, "direction must be a unit vector");
  if (a.op_point.x() < 0.0 || a.op_point.y() < 0.0 || a.op_point.x() > image_w - 1.0 ||
      a.op_point.y() > image_h - 1.0)
    throw Error(ErrorCode::InvalidAction, "op_point lies outside the image");
  a.direction /= n;
  return a;
}

// ---- configs ----------------------------------------------------------------

inline Json sim_params_to_json(const SimParams& p) {
  return Json{{"particle_mass", p.particle_mass},
              {"k_struct", p.k_struct},
              {"k_shear", p.k_shear},
              {"k_bend", p.k_bend},
              {"spring_damping", p.spring_damping},
              {"damping", p.damping},
              {"gravity", p.gravity},
              {"friction", p.friction},
              {"dt", p.dt},
              {"settle_tolerance", p.settle_tolerance},
              {"max_settle_steps", p.max_settle_steps},
              {"drag_distance", p.drag_distance},
              {"drag_depth", p.drag_depth},
              {"drag_speed", p.drag_speed},
              {"grasp_radius_factor", p.grasp_radius_factor},
              {"thickness", p.thickness}};
}

inline void sim_params_from_json(const Json& j, SimParams& p) {
  detail::ObjectReader r(j, "sim");
  r.opt("particle_mass", p.particle_mass)
      .opt("k_struct", p.k_struct)
      .opt("k_shear", p.k_shear)
      .opt("k_bend", p.k_bend)
      .opt("spring_damping", p.spring_damping)
      .opt("damping", p.damping)
      .opt("gravity", p.gravity)
      .opt("friction", p.friction)
      .opt("dt", p.dt)
      .opt("settle_tolerance", p.settle_tolerance)
      .opt("max_settle_steps", p.max_settle_steps)
      .opt("drag_distance", p.drag_distance)
      .opt("drag_depth", p.drag_depth)
      .opt("drag_speed", p.drag_speed)
      .opt("grasp_radius_factor", p.grasp_radius_factor)
      .opt("thickness", p.thickness)
      .done();
}

inline Json run_config_to_json(const RunConfig& c) {
  const auto& cam = c.camera;
  return Json{
      {"method", to_string(c.method)},
      {"episodes", c.n_episodes},
      {"seed_base", c.seed_base},
      {"max_steps", c.max_steps},
      {"crumple_folds", c.crumple_folds},
      {"crumple_intensity", c.crumple_intensity},
      {"stop_threshold", c.stop_threshold},
      {"cloth", {{"nx", c.cloth_nx}, {"ny", c.cloth_ny}, {"rest_len", c.rest_len}, {"color", detail::rgb_json(c.cloth_color)}}},
      {"sim", sim_params_to_json(c.sim)},
      {"camera",
       {{"pixels_per_meter", cam.pixels_per_meter},
        {"width", cam.image_w},
        {"height", cam.image_h},
        {"origin", {cam.origin.x(), cam.origin.y()}},
        {"light_dir", {cam.light_dir.x(), cam.light_dir.y(), cam.light_dir.z()}},
        {"ambient", cam.ambient},
        {"background", detail::rgb_json(c.background_color)}}},
      {"segmentation",
       {{"h_lo", c.hsv.h_lo}, {"h_hi", c.hsv.h_hi}, {"s_lo", c.hsv.s_lo}, {"s_hi", c.hsv.s_hi}, {"v_lo", c.hsv.v_lo}, {"v_hi", c.hsv.v_hi}}},
      {"perception",
       {{"grid_rows", c.grid_rows},
        {"grid_cols", c.grid_cols},
        {"n_orientations", c.n_orientations},
        {"lambda", c.gabor.lambda},
        {"sigma", c.gabor.sigma},
        {"gamma", c.gabor.gamma},
        {"phi", c.gabor.phi},
        {"ksize", c.gabor.ksize}}},
      {"policy",
       {{"flat_epsilon", c.policy.flat_epsilon},
        {"min_cloth_fraction", c.policy.min_cloth_fraction},
        {"dp_epsilon_fraction", c.policy.dp_epsilon_fraction}}}};
}

/// Overlays `j` on `base`; absent keys keep their value. Setting only
/// perception.lambda rederives sigma and ksize from it.
inline RunConfig run_config_from_json(const Json& j, RunConfig c = {}) {
  detail::ObjectReader r(j, "config");
  std::string method(to_string(c.method));
  r.opt("method", method)
      .opt("episodes", c.n_episodes)
      .opt("seed_base", c.seed_base)
      .opt("max_steps", c.max_steps)
      .opt("crumple_folds", c.crumple_folds)
      .opt("crumple_intensity", c.crumple_intensity)
      .opt("stop_threshold", c.stop_threshold);
  c.method = parse_method(method);
  if (const Json* cl = r.child("cloth")) {
    detail::ObjectReader rc(*cl, "cloth");
    rc.opt("nx", c.cloth_nx).opt("ny", c.cloth_ny).opt("rest_len", c.rest_len);
    if (const Json* col = rc.child("color")) c.cloth_color = detail::rgb_from(*col, "cloth.color");
    rc.done();
  }
  if (const Json* s = r.child("sim")) sim_params_from_json(*s, c.sim);
  if (const Json* cam = r.child("camera")) {
    detail::ObjectReader rc(*cam, "camera");
    rc.opt("pixels_per_meter", c.camera.pixels_per_meter)
        .opt("width", c.camera.image_w)
        .opt("height", c.camera.image_h)
        .opt("ambient", c.camera.ambient);
    if (const Json* o = rc.child("origin")) c.camera.origin = detail::vec_from<2>(*o, "camera.origin");
    if (const Json* l = rc.child("light_dir")) {
      const Vec3 v = detail::vec_from<3>(*l, "camera.light_dir");
      if (!(v.norm() > 0.0)) rc.fail("light_dir must be non-zero");
      c.camera.light_dir = v.normalized();
    }
    if (const Json* bg = rc.child("background")) c.background_color = detail::rgb_from(*bg, "camera.background");
    rc.done();
  }
  if (const Json* s = r.child("segmentation")) {
    detail::ObjectReader rs(*s, "segmentation");
    rs.opt("h_lo", c.hsv.h_lo).opt("h_hi", c.hsv.h_hi).opt("s_lo", c.hsv.s_lo).opt("s_hi", c.hsv.s_hi);
    rs.opt("v_lo", c.hsv.v_lo).opt("v_hi", c.hsv.v_hi).done();
  }
  if (const Json* p = r.child("perception")) {
    detail::ObjectReader rp(*p, "perception");
    if (p->contains("lambda")) {
      double lambda = c.gabor.lambda;
      rp.opt("lambda", lambda);
      const GaborParams d = GaborParams::for_wavelength(lambda);
      c.gabor.lambda = d.lambda;
      c.gabor.sigma = d.sigma;
      c.gabor.ksize = d.ksize;
    }
    rp.opt("grid_rows", c.grid_rows)
        .opt("grid_cols", c.grid_cols)
        .opt("n_orientations", c.n_orientations)
        .opt("sigma", c.gabor.sigma)
        .opt("gamma", c.gabor.gamma)
        .opt("phi", c.gabor.phi)
        .opt("ksize", c.gabor.ksize)
        .done();
  }
  if (const Json* p = r.child("policy")) {
    detail::ObjectReader rp(*p, "policy");
    rp.opt("flat_epsilon", c.policy.flat_epsilon)
        .opt("min_cloth_fraction", c.policy.min_cloth_fraction)
        .opt("dp_epsilon_fraction", c.policy.dp_epsilon_fraction)
        .done();
  }
  r.done();
  c.validate();
  return c;
}

// ---- transform chain config -------------------------------------------------

inline HomTransform transform_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 16)
    throw Error(ErrorCode::BadConfig, std::string(what) + ": expected 16 row-major numbers");
  Eigen::Matrix4d m;
  for (int i = 0; i < 16; ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::BadConfig, std::string(what) + ": expected numbers");
    m(i / 4, i % 4) = j[i].get<double>();
  }
  try {
    return HomTransform::from_matrix(m);
  } catch (const Error& e) {
    throw Error(ErrorCode::BadConfig, std::string(what) + ": " + e.what());
  }
}

inline Json transform_to_json(const HomTransform& t) {
  Json a = Json::array();
  for (int i = 0; i < 16; ++i) a.push_back(t.matrix()(i / 4, i % 4));
  return a;
}

inline Json robot_chain_to_json(const RobotChain& c) {
  return Json{{"base_T_tool", transform_to_json(c.base_T_tool)},
              {"tool_T_cam", transform_to_json(c.tool_T_cam)},
              {"intrinsics", {{"fx", c.intrinsics.fx}, {"fy", c.intrinsics.fy}, {"cx", c.intrinsics.cx}, {"cy", c.intrinsics.cy}}},
              {"table_plane", {{"normal", detail::vec_json(c.plane.normal)}, {"offset", c.plane.offset}}}};
}

/// {"base_T_tool": [16], "tool_T_cam": [16], "intrinsics": {fx, fy, cx, cy},
///  "table_plane": {"normal": [3], "offset": d}}; table_plane is optional.
inline RobotChain robot_chain_from_json(const Json& j) {
  detail::ObjectReader r(j, "transforms");
  RobotChain c;
  const Json* bt = r.child("base_T_tool");
  const Json* tc = r.child("tool_T_cam");
  const Json* in = r.child("intrinsics");
  if (!bt || !tc || !in) r.fail("base_T_tool, tool_T_cam and intrinsics are required");
  c.base_T_tool = transform_from_json(*bt, "base_T_tool");
  c.tool_T_cam = transform_from_json(*tc, "tool_T_cam");
  detail::ObjectReader ri(*in, "intrinsics");
  ri.req("fx", c.intrinsics.fx).req("fy", c.intrinsics.fy).req("cx", c.intrinsics.cx).req("cy", c.intrinsics.cy).done();
  if (const Json* pl = r.child("table_plane")) {
    detail::ObjectReader rp(*pl, "table_plane");
    if (const Json* n = rp.child("normal")) c.plane.normal = detail::vec_from<3>(*n, "table_plane.normal");
    rp.opt("offset", c.plane.offset).done();
  }
  r.done();
  try {
    c.intrinsics.validate();
    c.plane.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::BadConfig, e.what());
  }
  return c;
}

// ---- cloth snapshot ---------------------------------------------------------

inline Json cloth_state_to_json(const ClothState& s, const SimParams& p) {
  Json pos = Json::array(), vel = Json::array();
  for (const auto& x : s.positions) pos.push_back({x.x(), x.y(), x.z()});
  for (const auto& v : s.velocities) vel.push_back({v.x(), v.y(), v.z()});
  return Json{{"nx", s.nx},
              {"ny", s.ny},
              {"rest_len", s.rest_len},
              {"pinned", s.pinned ? Json(*s.pinned) : Json(nullptr)},
              {"positions", std::move(pos)},
              {"velocities", std::move(vel)},
              {"params", sim_params_to_json(p)}};
}

struct ClothSnapshot {
  ClothState state;
  SimParams params;
};

inline ClothSnapshot cloth_state_from_json(const Json& j) {
  detail::ObjectReader r(j, "snapshot");
  ClothSnapshot out;
  auto& s = out.state;
  r.req("nx", s.nx).req("ny", s.ny).req("rest_len", s.rest_len);
  if (s.nx < 2 || s.ny < 2 || !(s.rest_len > 0.0)) r.fail("bad grid");
  const std::size_t n = static_cast<std::size_t>(s.nx) * s.ny;
  if (const Json* pin = r.child("pinned"); pin && !pin->is_null()) {
    if (!pin->is_number_integer() || pin->get<long long>() < 0 || pin->get<std::size_t>() >= n) r.fail("bad pinned index");
    s.pinned = pin->get<int>();
  }
  auto points = [&](const char* key) {
    const Json* a = r.child(key);
    if (!a || !a->is_array() || a->size() != n) r.fail(std::string(key) + " must hold nx*ny points");
    std::vector<Vec3> v;
    v.reserve(n);
    for (const auto& e : *a) v.push_back(detail::vec_from<3>(e, key));
    return v;
  };
  s.positions = points("positions");
  s.velocities = points("velocities");
  if (const Json* p = r.child("params")) sim_params_from_json(*p, out.params);
  r.done();
  return out;
}

// ---- wrinkle field ----------------------------------------------------------

inline Json wrinkle_field_to_json(const WrinkleField& f) {
  Json j{{"rows", f.grid.rows},
         {"cols", f.grid.cols},
         {"image_width", f.grid.image_w},
         {"image_height", f.grid.image_h},
         {"magnitudes", f.magnitudes},
         {"orientations", f.orientations},
         {"cloth_fraction", f.cloth_fraction}};
  if (f.per_orientation) j["per_orientation"] = *f.per_orientation;
  return j;
}

// ---- episode records --------------------------------------------------------

inline Json step_to_json(const StepRecord& s) {
  return Json{{"step", s.step},
              {"action", s.action ? action_to_json(*s.action) : Json(nullptr)},
              {"outcome", to_string(s.outcome)},
              {"coverage", s.coverage},
              {"relative_coverage", s.relative_coverage}};
}

inline Json record_to_json(const EpisodeRecord& r) {
  Json steps = Json::array();
  for (const auto& s : r.steps) steps.push_back(step_to_json(s));
  return Json{{"method", to_string(r.method)},
              {"seed", r.seed},
              {"valid", r.valid},
              {"error", r.error},
              {"full_coverage", r.full_coverage},
              {"initial_coverage", r.initial_coverage},
              {"initial_relative_coverage", r.initial_relative()},
              {"steps_used", r.steps_used},
              {"terminated", to_string(r.terminated)},
              {"difficulty", to_string(r.difficulty)},
              {"steps", std::move(steps)}};
}

namespace detail {
template <class E, std::size_t N>
E enum_from(const std::string& s, const E (&all)[N], const char* what) {
  for (E e : all)
    if (to_string(e) == s) return e;
  throw Error(ErrorCode::BadConfig, std::string("unknown ") + what + " '" + s + "'");
}
}  // namespace detail

inline EpisodeRecord record_from_json(const Json& j) {
  detail::ObjectReader r(j, "record");
  EpisodeRecord rec;
  std::string method, terminated, difficulty;
  double ignored = 0.0;
  r.req("method", method)
      .req("seed", rec.seed)
      .opt("valid", rec.valid)
      .opt("error", rec.error)
      .req("full_coverage", rec.full_coverage)
      .req("initial_coverage", rec.initial_coverage)
      .opt("initial_relative_coverage", ignored)
      .req("steps_used", rec.steps_used)
      .req("terminated", terminated)
      .opt("difficulty", difficulty);
  rec.method = parse_method(method);
  static constexpr Termination kTerm[] = {Termination::Success, Termination::StepCap, Termination::Running};
  static constexpr Difficulty kDiff[] = {Difficulty::Unassigned, Difficulty::Easy, Difficulty::Hard};
  static constexpr StepOutcome kOut[] = {StepOutcome::Executed, StepOutcome::NoContact, StepOutcome::NoWrinkle};
  rec.terminated = detail::enum_from(terminated, kTerm, "termination");
  if (!difficulty.empty()) rec.difficulty = detail::enum_from(difficulty, kDiff, "difficulty");
  if (const Json* steps = r.child("steps")) {
    if (!steps->is_array()) r.fail("steps must be an array");
    for (const auto& sj : *steps) {
      detail::ObjectReader rs(sj, "step");
      StepRecord s;
      std::string outcome;
      rs.req("step", s.step).req("outcome", outcome).req("coverage", s.coverage).req("relative_coverage", s.relative_coverage);
      s.outcome = detail::enum_from(outcome, kOut, "step outcome");
      if (const Json* a = rs.child("action"); a && !a->is_null()) s.action = action_from_json(*a);
      rs.done();
      rec.steps.push_back(std::move(s));
    }
  }
  r.done();
  return rec;
}

// ---- misc -------------------------------------------------------------------

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::BadConfig, path + ": " + e.what());
  }
}

inline Json error_to_json(const Error& e) { return Json{{"error", to_string(e.code())}, {"message", e.what()}}; }

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

}  // namespace flatbench

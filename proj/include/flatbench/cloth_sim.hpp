#pragma once

// Mass-spring cloth on a table plane: crumpling, fixed-distance drags and a
// top-down Lambertian renderer.
//
// Integration is semi-implicit Euler. The table is z = 0; particles whose
// local surface is upside down (the upper layer of a fold) rest one cloth
// thickness above it, which stands in for self-collision of single folds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "flatbench/error.hpp"
#include "flatbench/image.hpp"

namespace flatbench {

using Vec3 = Eigen::Vector3d;

struct SimParams {
  double particle_mass = 1.0e-3;  // kg
  double k_struct = 400.0;        // N/m
  double k_shear = 100.0;
  double k_bend = 4.0;
  double spring_damping = 0.02;  // N s/m along each spring
  double damping = 4.0;          // 1/s, viscous drag on every particle
  double gravity = 9.81;
  double friction = 0.6;
  double dt = 5.0e-4;
  double settle_tolerance = 1.0e-7;  // J, total kinetic energy
  int max_settle_steps = 3000;
  double drag_distance = 0.08;  // m
  double drag_depth = 0.001;    // m, pinned particle pressed to at most this height
  double drag_speed = 0.4;      // m/s
  double grasp_radius_factor = 1.5;  // x rest_len
  double thickness = 0.002;     // m, resting height of an upside-down layer

  void validate() const {
    const double positives[] = {particle_mass, k_struct, k_shear, k_bend, spring_damping, damping, gravity, friction,
                                dt, settle_tolerance, drag_depth, drag_speed, grasp_radius_factor, thickness};
    for (double v : positives)
      if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::BadParams, "simulation parameters must be positive");
    if (max_settle_steps < 1) throw Error(ErrorCode::BadParams, "max_settle_steps must be >= 1");
    if (!(drag_distance >= 0.0)) throw Error(ErrorCode::BadParams, "drag_distance must be non-negative");
    if (dt * dt * k_struct / particle_mass >= 2.0)
      throw Error(ErrorCode::BadParams, "dt violates the stability bound dt^2 k / m < 2");
  }
};

struct ClothState {
  int nx = 0, ny = 0;
  double rest_len = 0.0;
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;
  std::optional<int> pinned;

  int index(int i, int j) const noexcept { return j * nx + i; }
  std::size_t size() const noexcept { return positions.size(); }
  friend bool operator==(const ClothState&, const ClothState&) = default;
};

struct Spring {
  int a, b;
  double rest;
  double k;
};

/// Structural, shear and bend springs of the particle grid.
inline std::vector<Spring> build_springs(const ClothState& s, const SimParams& p) {
  std::vector<Spring> out;
  const double L = s.rest_len;
  auto add = [&](int i0, int j0, int i1, int j1, double rest, double k) {
    if (i1 < 0 || j1 < 0 || i1 >= s.nx || j1 >= s.ny) return;
    out.push_back({s.index(i0, j0), s.index(i1, j1), rest, k});
  };
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      add(i, j, i + 1, j, L, p.k_struct);
      add(i, j, i, j + 1, L, p.k_struct);
      add(i, j, i + 1, j + 1, L * std::numbers::sqrt2, p.k_shear);
      add(i, j, i - 1, j + 1, L * std::numbers::sqrt2, p.k_shear);
      add(i, j, i + 2, j, 2 * L, p.k_bend);
      add(i, j, i, j + 2, 2 * L, p.k_bend);
    }
  }
  return out;
}

inline ClothState init_flat(int nx, int ny, double rest_len, const SimParams& params) {
  params.validate();
  if (nx < 2 || ny < 2 || !(rest_len > 0.0)) throw Error(ErrorCode::BadParams, "cloth grid must be at least 2x2");
  ClothState s;
  s.nx = nx;
  s.ny = ny;
  s.rest_len = rest_len;
  const double ox = -(nx - 1) * rest_len / 2.0, oy = -(ny - 1) * rest_len / 2.0;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) s.positions.emplace_back(ox + i * rest_len, oy + j * rest_len, 0.0);
  s.velocities.assign(s.positions.size(), Vec3::Zero());
  return s;
}

/// Grid-difference surface normal at particle (i, j), not normalized.
inline Vec3 particle_normal(const ClothState& s, int i, int j) {
  const int i0 = std::max(i - 1, 0), i1 = std::min(i + 1, s.nx - 1);
  const int j0 = std::max(j - 1, 0), j1 = std::min(j + 1, s.ny - 1);
  const Vec3 du = s.positions[s.index(i1, j)] - s.positions[s.index(i0, j)];
  const Vec3 dv = s.positions[s.index(i, j1)] - s.positions[s.index(i, j0)];
  return du.cross(dv);
}

/// True where the local surface faces the table (upper layer of a fold).
inline std::vector<char> flipped_particles(const ClothState& s) {
  std::vector<char> out(s.size(), 0);
  for (int j = 0; j < s.ny; ++j)
    for (int i = 0; i < s.nx; ++i) out[s.index(i, j)] = particle_normal(s, i, j).z() < 0.0 ? 1 : 0;
  return out;
}

inline double kinetic_energy(const ClothState& s, const SimParams& p) {
  double e = 0.0;
  for (const auto& v : s.velocities) e += v.squaredNorm();
  return 0.5 * p.particle_mass * e;
}

/// Kinetic + spring + gravitational energy.
inline double total_energy(const ClothState& s, const SimParams& p) {
  double e = kinetic_energy(s, p);
  for (const auto& sp : build_springs(s, p)) {
    const double d = (s.positions[sp.a] - s.positions[sp.b]).norm() - sp.rest;
    e += 0.5 * sp.k * d * d;
  }
  for (const auto& x : s.positions) e += p.particle_mass * p.gravity * x.z();
  return e;
}

namespace detail {

/// Scratch state for repeated integration steps on one cloth.
class Integrator {
 public:
  Integrator(const ClothState& s, const SimParams& p) : params_(p), springs_(build_springs(s, p)) {
    force_.resize(s.size());
    rest_height_.assign(s.size(), 0.0);
  }

  /// One semi-implicit Euler step. `pin_target` (when the state has a pinned
  /// particle) prescribes that particle's position after the step.
  void step(ClothState& s, const Vec3* pin_target = nullptr) {
    const auto& p = params_;
    const double m = p.particle_mass;
    update_rest_heights(s);
    std::fill(force_.begin(), force_.end(), Vec3(0.0, 0.0, -m * p.gravity));
    for (const auto& sp : springs_) {
      const Vec3 d = s.positions[sp.b] - s.positions[sp.a];
      const double len = d.norm();
      if (len < 1e-12) continue;
      const Vec3 u = d / len;
      const double rel = (s.velocities[sp.b] - s.velocities[sp.a]).dot(u);
      const Vec3 f = (sp.k * (len - sp.rest) + p.spring_damping * rel) * u;
      force_[sp.a] += f;
      force_[sp.b] -= f;
    }
    const double decay = 1.0 / (1.0 + p.damping * p.dt);
    const double friction_dv = p.friction * p.gravity * p.dt;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.pinned && static_cast<int>(i) == *s.pinned) continue;
      Vec3& v = s.velocities[i];
      v = (v + p.dt / m * force_[i]) * decay;
      const double floor = rest_height_[i];
      if (s.positions[i].z() <= floor + 1e-6) {
        // Coulomb friction on the table, velocity level
        Eigen::Vector2d vt(v.x(), v.y());
        const double speed = vt.norm();
        if (speed <= friction_dv) {
          v.x() = 0.0;
          v.y() = 0.0;
        } else {
          vt *= (speed - friction_dv) / speed;
          v.x() = vt.x();
          v.y() = vt.y();
        }
      }
      s.positions[i] += p.dt * v;
      if (s.positions[i].z() < floor) {
        s.positions[i].z() = floor;
        if (v.z() < 0.0) v.z() = 0.0;
      }
    }
    if (s.pinned && pin_target) {
      const int k = *s.pinned;
      s.velocities[k] = (*pin_target - s.positions[k]) / p.dt;
      s.positions[k] = *pin_target;
    }
  }

 private:
  void update_rest_heights(const ClothState& s) {
    for (int j = 0; j < s.ny; ++j)
      for (int i = 0; i < s.nx; ++i)
        rest_height_[s.index(i, j)] = particle_normal(s, i, j).z() < 0.0 ? params_.thickness : 0.0;
  }

  SimParams params_;
  std::vector<Spring> springs_;
  std::vector<Vec3> force_;
  std::vector<double> rest_height_;
};

inline void check_finite(const ClothState& s) {
  for (std::size_t i = 0; i < s.size(); ++i)
    if (!s.positions[i].allFinite() || !s.velocities[i].allFinite() || s.positions[i].norm() > 1e3)
      throw Error(ErrorCode::Unstable, "cloth state diverged; reduce dt or stiffness");
}

}  // namespace detail

struct SettleReport {
  int steps = 0;
  double final_kinetic_energy = 0.0;
  bool converged = false;
};

inline SettleReport settle_in_place(ClothState& s, const SimParams& p, std::vector<double>* energy_log = nullptr) {
  SettleReport r;
  detail::Integrator integ(s, p);
  s.pinned.reset();
  double ke = kinetic_energy(s, p);
  while (r.steps < p.max_settle_steps) {
    integ.step(s);
    ++r.steps;
    ke = kinetic_energy(s, p);
    if (energy_log) energy_log->push_back(total_energy(s, p));
    if (!std::isfinite(ke)) break;
    if (ke < p.settle_tolerance) break;
    if (r.steps % 64 == 0) detail::check_finite(s);
  }
  detail::check_finite(s);
  r.final_kinetic_energy = ke;
  r.converged = ke < p.settle_tolerance;
  return r;
}

inline ClothState settle(ClothState s, const SimParams& p) {
  p.validate();
  settle_in_place(s, p);
  return s;
}

/// Folds `n_folds` times along random lines: the smaller side is rotated
/// about the line by an angle that grows with `intensity`, jittered in z,
/// then the cloth settles. intensity 0 leaves the cloth untouched.
inline ClothState crumple(ClothState s, std::uint64_t seed, int n_folds, double intensity, const SimParams& p) {
  p.validate();
  if (n_folds < 0 || !(intensity >= 0.0)) throw Error(ErrorCode::BadParams, "bad crumple parameters");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int f = 0; f < n_folds; ++f) {
    const double psi = 2.0 * std::numbers::pi * unit(rng);
    const Eigen::Vector2d normal(std::cos(psi), std::sin(psi));
    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    double lo = 1e9, hi = -1e9;
    for (const auto& x : s.positions) centroid += x.head<2>();
    centroid /= static_cast<double>(s.size());
    for (const auto& x : s.positions) {
      const double t = (x.head<2>() - centroid).dot(normal);
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    // fold line between 30% and 80% of the way from the centroid to the far edge
    const double offset = hi * (0.3 + 0.5 * unit(rng));
    const double alpha = std::numbers::pi * std::min(0.97, intensity * (1.6 + 0.4 * unit(rng)));
    const double jitter = 0.002 * intensity;
    const Eigen::Vector2d line_pt = centroid + offset * normal;
    const double ca = std::cos(alpha), sa = std::sin(alpha);
    for (auto& x : s.positions) {
      const double dist = (x.head<2>() - line_pt).dot(normal);
      if (dist <= 0.0) continue;
      const Eigen::Vector2d along = x.head<2>() - dist * normal;
      const double new_dist = dist * ca - x.z() * sa;
      const double new_z = dist * sa + x.z() * ca;
      x.head<2>() = along + new_dist * normal;
      x.z() = new_z;
    }
    for (auto& x : s.positions) x.z() = std::max(0.0, x.z() + jitter * (2.0 * unit(rng) - 1.0));
    std::fill(s.velocities.begin(), s.velocities.end(), Vec3::Zero());
    settle_in_place(s, p);
  }
  return s;
}

/// Index of the particle a finger at `contact` presses: among particles
/// within the grasp radius, the highest one (within 0.1 mm), then the nearest.
inline std::optional<int> contact_particle(const ClothState& s, const Eigen::Vector2d& contact, const SimParams& p) {
  const double radius = p.grasp_radius_factor * s.rest_len;
  double top = -1e9;
  for (const auto& x : s.positions)
    if ((x.head<2>() - contact).norm() <= radius) top = std::max(top, x.z());
  std::optional<int> best;
  double best_d = 1e9;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& x = s.positions[i];
    if (x.z() < top - 1e-4) continue;
    const double d = (x.head<2>() - contact).norm();
    if (d <= radius && d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

/// Presses the particle under `contact`, drags it `drag_distance` along
/// `direction` (world, unit), releases and settles.
inline ClothState apply_drag(ClothState s, const Eigen::Vector2d& contact, const Eigen::Vector2d& direction,
                             const SimParams& p) {
  p.validate();
  const auto k = contact_particle(s, contact, p);
  if (!k) throw Error(ErrorCode::NoContact, "no cloth particle within the grasp radius");
  const double n = direction.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::BadParams, "drag direction must be non-zero");
  const Eigen::Vector2d dir = direction / n;

  detail::Integrator integ(s, p);
  s.pinned = *k;
  Vec3 start = s.positions[*k];
  start.z() = std::min(start.z(), p.drag_depth);
  const int substeps = static_cast<int>(std::ceil(p.drag_distance / (p.drag_speed * p.dt)));
  for (int t = 1; t <= substeps; ++t) {
    Vec3 target = start;
    target.head<2>() += dir * (p.drag_distance * t / substeps);
    integ.step(s, &target);
    if (t % 64 == 0) detail::check_finite(s);
  }
  s.velocities[*k].setZero();
  s.pinned.reset();
  settle_in_place(s, p);
  return s;
}

struct TopDownCamera {
  double pixels_per_meter = 800.0;
  int image_w = 720, image_h = 720;
  Eigen::Vector2d origin{0.0, 0.0};  // world point at the image center
  Vec3 light_dir = Vec3(0.3, 0.3, 1.0).normalized();
  double ambient = 0.3;

  /// Orthographic projection; pixel centers sit at integer coordinates.
  Point2 world_to_pixel(const Eigen::Vector2d& w) const {
    return {(w.x() - origin.x()) * pixels_per_meter + image_w / 2.0 - 0.5,
            (w.y() - origin.y()) * pixels_per_meter + image_h / 2.0 - 0.5};
  }
  Eigen::Vector2d pixel_to_world(const Point2& px) const {
    return {(px.x() + 0.5 - image_w / 2.0) / pixels_per_meter + origin.x(),
            (px.y() + 0.5 - image_h / 2.0) / pixels_per_meter + origin.y()};
  }
  /// Image-plane directions map to world directions without rotation.
  Eigen::Vector2d direction_to_world(const Eigen::Vector2d& d) const { return d.normalized(); }

  void validate() const {
    if (!(pixels_per_meter > 0.0) || image_w <= 0 || image_h <= 0)
      throw Error(ErrorCode::BadParams, "camera scale and image size must be positive");
  }
};

/// Lambertian, painter-ordered rasterization of the cloth triangles.
inline RgbImage render_topdown(const ClothState& s, const TopDownCamera& cam, Rgb cloth_color, Rgb bg_color) {
  cam.validate();
  RgbImage img(cam.image_w, cam.image_h, bg_color);
  struct Tri {
    int a, b, c;
    double z;
  };
  std::vector<Tri> tris;
  tris.reserve(static_cast<std::size_t>(2 * (s.nx - 1) * (s.ny - 1)));
  for (int j = 0; j + 1 < s.ny; ++j) {
    for (int i = 0; i + 1 < s.nx; ++i) {
      const int p00 = s.index(i, j), p10 = s.index(i + 1, j), p01 = s.index(i, j + 1), p11 = s.index(i + 1, j + 1);
      for (const auto& [a, b, c] : {std::array<int, 3>{p00, p10, p11}, std::array<int, 3>{p00, p11, p01}}) {
        const double z = (s.positions[a].z() + s.positions[b].z() + s.positions[c].z()) / 3.0;
        tris.push_back({a, b, c, z});
      }
    }
  }
  std::stable_sort(tris.begin(), tris.end(), [](const Tri& l, const Tri& r) { return l.z < r.z; });

  for (const Tri& t : tris) {
    const Vec3& A = s.positions[t.a];
    const Vec3& B = s.positions[t.b];
    const Vec3& C = s.positions[t.c];
    Vec3 n = (B - A).cross(C - A);
    const double len = n.norm();
    if (len < 1e-15) continue;
    n /= len;
    if (n.z() < 0.0) n = -n;  // the visible side faces the camera
    const double shade = cam.ambient + (1.0 - cam.ambient) * std::max(0.0, n.dot(cam.light_dir));
    const Rgb col{static_cast<std::uint8_t>(std::lround(cloth_color.r * shade)),
                  static_cast<std::uint8_t>(std::lround(cloth_color.g * shade)),
                  static_cast<std::uint8_t>(std::lround(cloth_color.b * shade))};

    const Point2 pa = cam.world_to_pixel(A.head<2>());
    const Point2 pb = cam.world_to_pixel(B.head<2>());
    const Point2 pc = cam.world_to_pixel(C.head<2>());
    const double area = (pb - pa).x() * (pc - pa).y() - (pb - pa).y() * (pc - pa).x();
    if (std::abs(area) < 1e-12) continue;
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({pa.x(), pb.x(), pc.x()}) - 1e-9)));
    const int x1 = std::min(cam.image_w - 1, static_cast<int>(std::floor(std::max({pa.x(), pb.x(), pc.x()}) + 1e-9)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({pa.y(), pb.y(), pc.y()}) - 1e-9)));
    const int y1 = std::min(cam.image_h - 1, static_cast<int>(std::floor(std::max({pa.y(), pb.y(), pc.y()}) + 1e-9)));
    const double sign = area > 0.0 ? 1.0 : -1.0;
    auto edge = [&](const Point2& u, const Point2& v, double x, double y) {
      return sign * ((v.x() - u.x()) * (y - u.y()) - (v.y() - u.y()) * (x - u.x()));
    };
    constexpr double eps = -1e-9;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (edge(pa, pb, x, y) >= eps && edge(pb, pc, x, y) >= eps && edge(pc, pa, x, y) >= eps) img.set(x, y, col);
      }
    }
  }
  return img;
}

}  // namespace flatbench

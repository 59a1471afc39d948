#pragma once

// Flattening policies: the wrinkle-field driven operation point / stretching
// direction, plus the Random and Heuristic (contour corner) baselines.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "flatbench/error.hpp"
#include "flatbench/gabor.hpp"
#include "flatbench/image.hpp"

namespace flatbench {

enum class Method { Proposed, Random, Heuristic, Human };

constexpr std::string_view to_string(Method m) {
  switch (m) {
    case Method::Proposed: return "proposed";
    case Method::Random: return "random";
    case Method::Heuristic: return "heuristic";
    case Method::Human: return "human";
  }
  return "unknown";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::Proposed, Method::Random, Method::Heuristic, Method::Human})
    if (to_string(m) == s) return m;
  throw Error(ErrorCode::BadConfig, "unknown method '" + std::string(s) + "'");
}

struct RngSeed {
  std::uint64_t value = 0;
};

struct PolicyAction {
  Point2 op_point{0.0, 0.0};
  Eigen::Vector2d direction{1.0, 0.0};
  Method method = Method::Proposed;
};

struct PolicyParams {
  double flat_epsilon = 2.0e3;  // block magnitudes at or below this count as flat
  double min_cloth_fraction = 0.25;
  double dp_epsilon_fraction = 0.02;  // Douglas-Peucker tolerance / mask bbox diagonal
};

/// Unit vector perpendicular to the stripe axis (cos t, sin t), signed to
/// point away from `com` through `op`. On a tie (op - com orthogonal to both
/// candidates) the candidate with positive x wins, then positive y.
inline Eigen::Vector2d stretching_direction(double theta_star, const Point2& op, const Point2& com) {
  Eigen::Vector2d perp(-std::sin(theta_star), std::cos(theta_star));
  const Eigen::Vector2d out = op - com;
  const double s = perp.dot(out);
  if (s < 0.0) return -perp;
  if (s > 0.0) return perp;
  if (perp.x() < 0.0 || (perp.x() == 0.0 && perp.y() < 0.0)) return -perp;
  return perp;
}

/// Proposed-policy outcome with the candidate bookkeeping exposed.
struct ProposedDecision {
  PolicyAction action;
  int max_block = -1;
  std::vector<int> kept;      // neighbors passing the outward test
  std::vector<int> rejected;  // cloth neighbors failing it
  bool fallback = false;      // no neighbor kept: operate on the max block itself
};

/// Cloth-covered 8-neighbors of block j in row-major order.
inline std::vector<int> cloth_neighbors(const WrinkleField& field, int j, double min_cloth_fraction) {
  const auto& g = field.grid;
  const int r0 = g.row_of(j), c0 = g.col_of(j);
  std::vector<int> out;
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const int r = r0 + dr, c = c0 + dc;
      if (r < 0 || c < 0 || r >= g.rows || c >= g.cols) continue;
      const int n = g.index(r, c);
      if (field.cloth_fraction[n] >= min_cloth_fraction) out.push_back(n);
    }
  }
  return out;
}

inline ProposedDecision proposed_decision(const WrinkleField& field, const Point2& com, RngSeed seed,
                                          const PolicyParams& params = {}) {
  ProposedDecision d;
  if (field.magnitudes.empty()) throw Error(ErrorCode::NoWrinkle, "empty wrinkle field");
  int best = 0;
  for (int j = 1; j < field.n_b(); ++j)
    if (field.magnitudes[j] > field.magnitudes[best]) best = j;
  if (!(field.magnitudes[best] > params.flat_epsilon))
    throw Error(ErrorCode::NoWrinkle, "no block exceeds the flat threshold; cloth appears flat");
  d.max_block = best;

  const Point2 center = field.grid.blocks[best].center();
  const Eigen::Vector2d to_max = center - com;
  for (int n : cloth_neighbors(field, best, params.min_cloth_fraction)) {
    const Eigen::Vector2d to_n = field.grid.blocks[n].center() - center;
    (to_max.dot(to_n) > 0.0 ? d.kept : d.rejected).push_back(n);
  }

  Point2 op = center;
  if (d.kept.empty()) {
    d.fallback = true;
  } else {
    std::mt19937_64 rng(seed.value);
    std::uniform_int_distribution<std::size_t> pick(0, d.kept.size() - 1);
    op = field.grid.blocks[d.kept[pick(rng)]].center();
  }
  d.action.op_point = op;
  d.action.direction = stretching_direction(field.orientations[best], op, com);
  d.action.method = Method::Proposed;
  return d;
}

inline PolicyAction proposed_action(const WrinkleField& field, const Point2& com, RngSeed seed,
                                    const PolicyParams& params = {}) {
  return proposed_decision(field, com, seed, params).action;
}

inline PolicyAction random_action(const Mask& mask, const Point2& com, RngSeed seed) {
  std::vector<Point2> cloth;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.at(x, y)) cloth.emplace_back(x, y);
  if (cloth.empty()) throw Error(ErrorCode::EmptyMask, "random action on an empty mask");
  std::mt19937_64 rng(seed.value);
  std::uniform_int_distribution<std::size_t> pick(0, cloth.size() - 1);
  for (int attempt = 0; attempt < 256; ++attempt) {
    const Point2 op = cloth[pick(rng)];
    const Eigen::Vector2d v = op - com;
    if (v.x() == 0.0 && v.y() == 0.0) continue;
    return {op, v.normalized(), Method::Random};
  }
  throw Error(ErrorCode::Degenerate, "every cloth pixel coincides with the center of mass");
}

/// Outer boundary of the component holding the first set pixel in raster
/// order, traced clockwise with Moore-neighbor tracing.
inline std::vector<Eigen::Vector2i> trace_outer_contour(const Mask& mask) {
  std::optional<Eigen::Vector2i> start;
  for (int y = 0; y < mask.height() && !start; ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.at(x, y)) {
        start = Eigen::Vector2i(x, y);
        break;
      }
  if (!start) return {};
  // clockwise in image coordinates (y down), starting west
  static constexpr std::array<std::array<int, 2>, 8> dirs{
      {{-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}}};
  auto set = [&](const Eigen::Vector2i& p) { return mask.in_bounds(p.x(), p.y()) && mask.at(p.x(), p.y()); };
  auto dir_index = [&](const Eigen::Vector2i& from, const Eigen::Vector2i& to) {
    const Eigen::Vector2i d = to - from;
    for (int k = 0; k < 8; ++k)
      if (dirs[k][0] == d.x() && dirs[k][1] == d.y()) return k;
    return 0;
  };

  std::vector<Eigen::Vector2i> contour{*start};
  Eigen::Vector2i cur = *start;
  Eigen::Vector2i back = *start + Eigen::Vector2i(-1, 0);
  const std::size_t limit = 4 * static_cast<std::size_t>(mask.width()) * mask.height() + 8;
  std::optional<Eigen::Vector2i> second;
  for (std::size_t it = 0; it < limit; ++it) {
    const int k0 = dir_index(cur, back);
    std::optional<Eigen::Vector2i> next;
    Eigen::Vector2i prev = back;
    for (int s = 1; s <= 8; ++s) {
      const int k = (k0 + s) % 8;
      const Eigen::Vector2i cand = cur + Eigen::Vector2i(dirs[k][0], dirs[k][1]);
      if (set(cand)) {
        next = cand;
        break;
      }
      prev = cand;
    }
    if (!next) break;  // isolated pixel
    if (*next == *start && cur != *start && second) {
      // Jacob's criterion: stop once the start is re-entered heading for the same successor
      Eigen::Vector2i probe_back = prev;
      const int kk0 = dir_index(*start, probe_back);
      for (int s = 1; s <= 8; ++s) {
        const int k = (kk0 + s) % 8;
        const Eigen::Vector2i cand = *start + Eigen::Vector2i(dirs[k][0], dirs[k][1]);
        if (set(cand)) {
          if (cand == *second) return contour;
          break;
        }
      }
    }
    back = prev;
    cur = *next;
    if (!second) second = cur;
    if (cur != *start) contour.push_back(cur);
  }
  return contour;
}

namespace detail {

inline double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

/// Douglas-Peucker over pts[lo..hi], marking survivors in `keep`.
inline void douglas_peucker(const std::vector<Eigen::Vector2d>& pts, std::size_t lo, std::size_t hi, double eps,
                            std::vector<char>& keep) {
  std::vector<std::pair<std::size_t, std::size_t>> stack{{lo, hi}};
  keep[lo] = keep[hi] = 1;
  while (!stack.empty()) {
    const auto [a, b] = stack.back();
    stack.pop_back();
    if (b <= a + 1) continue;
    double worst = -1.0;
    std::size_t at = a;
    for (std::size_t i = a + 1; i < b; ++i) {
      const double d = segment_distance(pts[i], pts[a], pts[b]);
      if (d > worst) {
        worst = d;
        at = i;
      }
    }
    if (worst > eps) {
      keep[at] = 1;
      stack.emplace_back(a, at);
      stack.emplace_back(at, b);
    }
  }
}

}  // namespace detail

/// Closed-contour polygon simplification. Splits at the contour point
/// farthest from the first one and simplifies both chains.
inline std::vector<Eigen::Vector2d> simplify_closed(const std::vector<Eigen::Vector2i>& contour, double eps) {
  if (contour.size() < 3) {
    std::vector<Eigen::Vector2d> out;
    for (const auto& p : contour) out.push_back(p.cast<double>());
    return out;
  }
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(contour.size() + 1);
  for (const auto& p : contour) pts.push_back(p.cast<double>());
  std::size_t far = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if ((pts[i] - pts[0]).squaredNorm() > (pts[far] - pts[0]).squaredNorm()) far = i;
  pts.push_back(pts[0]);  // close the loop
  std::vector<char> keep(pts.size(), 0);
  detail::douglas_peucker(pts, 0, far, eps, keep);
  detail::douglas_peucker(pts, far, pts.size() - 1, eps, keep);
  std::vector<Eigen::Vector2d> out;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    if (keep[i]) out.push_back(pts[i]);
  return out;
}

/// Corner candidates of the cloth outline: simplified contour vertices.
inline std::vector<Eigen::Vector2d> corner_candidates(const Mask& mask, double dp_epsilon_fraction) {
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.at(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return {};
  const double diag = std::hypot(x1 - x0 + 1.0, y1 - y0 + 1.0);
  return simplify_closed(trace_outer_contour(mask), dp_epsilon_fraction * diag);
}

inline PolicyAction heuristic_action(const Mask& mask, const Point2& com, RngSeed seed,
                                     const PolicyParams& params = {}) {
  if (mask.count() == 0) throw Error(ErrorCode::EmptyMask, "heuristic action on an empty mask");
  auto corners = corner_candidates(mask, params.dp_epsilon_fraction);
  std::erase_if(corners, [&](const Eigen::Vector2d& c) { return c == com; });
  if (corners.size() < 3) {
    PolicyAction a = random_action(mask, com, seed);
    a.method = Method::Heuristic;
    return a;
  }
  std::mt19937_64 rng(seed.value);
  std::uniform_int_distribution<std::size_t> pick(0, corners.size() - 1);
  const Point2 op = corners[pick(rng)];
  return {op, (op - com).normalized(), Method::Heuristic};
}

}  // namespace flatbench

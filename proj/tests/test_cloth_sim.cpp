#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "flatbench/cloth_sim.hpp"
#include "flatbench/gabor.hpp"
#include "flatbench/policy.hpp"
#include "support/fold_oracle.hpp"

using namespace flatbench;

namespace {

const Rgb kCloth{40, 90, 200};
const Rgb kBackground{60, 60, 60};

double observed_coverage(const ClothState& s, const TopDownCamera& cam = {}) {
  return coverage(segment_cloth(render_topdown(s, cam, kCloth, kBackground), HsvBounds{}));
}

ClothState flat_cloth() { return init_flat(41, 41, 0.01, SimParams{}); }

double max_position_delta(const ClothState& a, const ClothState& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, (a.positions[i] - b.positions[i]).norm());
  return d;
}

void expect_above_table(const ClothState& s) {
  for (const auto& x : s.positions) ASSERT_GE(x.z(), -1e-12);
}

void expect_springs_near_rest(const ClothState& s) {
  for (int j = 0; j < s.ny; ++j)
    for (int i = 0; i + 1 < s.nx; ++i) {
      const double len = (s.positions[s.index(i + 1, j)] - s.positions[s.index(i, j)]).norm();
      ASSERT_NEAR(len, s.rest_len, 0.05 * s.rest_len);
    }
  for (int j = 0; j + 1 < s.ny; ++j)
    for (int i = 0; i < s.nx; ++i) {
      const double len = (s.positions[s.index(i, j + 1)] - s.positions[s.index(i, j)]).norm();
      ASSERT_NEAR(len, s.rest_len, 0.05 * s.rest_len);
    }
}

}  // namespace

TEST(SimParams, Validation) {
  SimParams p;
  EXPECT_NO_THROW(p.validate());
  p.dt = 0.01;  // dt^2 k / m = 40
  EXPECT_THROW(p.validate(), Error);
  p = SimParams{};
  p.particle_mass = -1.0;
  EXPECT_THROW(p.validate(), Error);
  p = SimParams{};
  p.drag_distance = -0.1;
  EXPECT_THROW(p.validate(), Error);
  p = SimParams{};
  p.max_settle_steps = 0;
  EXPECT_THROW(p.validate(), Error);
}

TEST(InitFlat, FootprintAndHeight) {
  const ClothState s = flat_cloth();
  ASSERT_EQ(s.size(), 41u * 41u);
  double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
  for (const auto& x : s.positions) {
    EXPECT_EQ(x.z(), 0.0);
    x0 = std::min(x0, x.x());
    x1 = std::max(x1, x.x());
    y0 = std::min(y0, x.y());
    y1 = std::max(y1, x.y());
  }
  EXPECT_NEAR(x1 - x0, 0.4, 1e-12);
  EXPECT_NEAR(y1 - y0, 0.4, 1e-12);
  EXPECT_NEAR(x0 + x1, 0.0, 1e-12);
  EXPECT_THROW(init_flat(1, 5, 0.01, SimParams{}), Error);
}

TEST(Render, FlatCoverageMatchesFootprint) {
  const double expected = (0.4 * 800.0) * (0.4 * 800.0) / (720.0 * 720.0);
  EXPECT_NEAR(observed_coverage(flat_cloth()), expected, 0.02 * expected);
}

TEST(Render, OverheadLightGivesUniformColor) {
  TopDownCamera cam;
  cam.light_dir = Vec3(0.0, 0.0, 1.0);
  const RgbImage img = render_topdown(flat_cloth(), cam, kCloth, kBackground);
  std::size_t cloth = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const Rgb c = img.at(x, y);
      if (c == kBackground) continue;
      ASSERT_EQ(c, kCloth) << x << "," << y;
      ++cloth;
    }
  EXPECT_GT(cloth, 100000u);
}

TEST(Settle, RestingClothReturnsImmediately) {
  ClothState s = flat_cloth();
  const ClothState before = s;
  const SettleReport r = settle_in_place(s, SimParams{});
  EXPECT_LE(r.steps, 2);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(max_position_delta(before, s), 1e-9);
}

TEST(Settle, DroppedClothComesToRestOnTheTable) {
  SimParams p;
  ClothState s = flat_cloth();
  for (auto& x : s.positions) x.z() = 0.05;
  const SettleReport r = settle_in_place(s, p);
  EXPECT_TRUE(r.converged);
  for (const auto& x : s.positions) EXPECT_LE(x.z(), 1e-4);
  expect_springs_near_rest(s);
}

TEST(Settle, EnergyTailIsNonIncreasing) {
  SimParams p;
  ClothState s = flat_cloth();
  for (std::size_t i = 0; i < s.size(); ++i) s.positions[i].z() = 0.01 + 0.005 * std::sin(0.3 * static_cast<double>(i));
  std::vector<double> log;
  settle_in_place(s, p, &log);
  ASSERT_GT(log.size(), 40u);
  for (std::size_t i = log.size() / 2 + 1; i < log.size(); ++i) EXPECT_LE(log[i], log[i - 1] + 1e-9);
  EXPECT_LT(log.back(), log.front());
}

TEST(Crumple, ZeroIntensityLeavesClothFlat) {
  const double flat = observed_coverage(flat_cloth());
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const ClothState s = crumple(flat_cloth(), seed, 2, 0.0, SimParams{});
    EXPECT_LT(std::abs(observed_coverage(s) - flat), 0.01 * flat);
  }
}

TEST(Crumple, ReducesCoverageAndStaysPhysical) {
  SimParams p;
  const double flat = observed_coverage(flat_cloth());
  for (std::uint64_t seed : {1000u, 1003u, 1007u}) {
    const ClothState s = crumple(flat_cloth(), seed, 2, 0.8, p);
    const double c = observed_coverage(s);
    EXPECT_LT(c, 0.97 * flat) << "seed " << seed;
    EXPECT_LE(c, 1.05 * flat);
    expect_above_table(s);
  }
}

TEST(Crumple, DeterministicInSeed) {
  const ClothState a = crumple(flat_cloth(), 42, 2, 0.8, SimParams{});
  const ClothState b = crumple(flat_cloth(), 42, 2, 0.8, SimParams{});
  EXPECT_EQ(a, b);
  const ClothState c = crumple(flat_cloth(), 43, 2, 0.8, SimParams{});
  EXPECT_NE(a, c);
}

TEST(Drag, ZeroDistanceLeavesStateUnchanged) {
  SimParams p;
  p.drag_distance = 0.0;
  const ClothState s = flat_cloth();
  const ClothState out = apply_drag(s, {0.0, 0.0}, {1.0, 0.0}, p);
  EXPECT_LE(max_position_delta(s, out), 1e-9);
}

TEST(Drag, OutwardDragOnFlatClothKeepsItsCoverage) {
  const ClothState s = flat_cloth();
  const double before = observed_coverage(s);
  for (double a : {0.0, 1.1, 2.3, 3.9, 5.2}) {
    const Eigen::Vector2d dir(std::cos(a), std::sin(a));
    const ClothState out = apply_drag(s, 0.17 * dir, dir, SimParams{});
    EXPECT_NEAR(observed_coverage(out), before, 0.02 * before) << "angle " << a;
    expect_above_table(out);
  }
}

TEST(Drag, UnfoldingDragIncreasesCoverage) {
  SimParams p;
  const ClothState rest = flat_cloth();
  const ClothState s = crumple(rest, 7, 1, 0.8, p);
  const auto od = flatbench::testing::oracle_drag(s, rest, p);
  ASSERT_TRUE(od);
  const ClothState out = apply_drag(s, od->contact, od->direction, p);
  EXPECT_GT(observed_coverage(out), observed_coverage(s));
  expect_above_table(out);
  EXPECT_LE(observed_coverage(out), 1.05 * observed_coverage(rest));
}

TEST(Drag, NoContactOffTheCloth) {
  try {
    apply_drag(flat_cloth(), {0.5, 0.5}, {1.0, 0.0}, SimParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoContact);
  }
  EXPECT_THROW(apply_drag(flat_cloth(), {0.0, 0.0}, {0.0, 0.0}, SimParams{}), Error);
}

TEST(ContactParticle, PrefersTheTopLayer) {
  ClothState s = flat_cloth();
  SimParams p;
  const int under = s.index(20, 20), over = s.index(21, 20);
  s.positions[over].z() = 0.002;
  const auto k = contact_particle(s, s.positions[under].head<2>(), p);
  ASSERT_TRUE(k);
  EXPECT_EQ(*k, over);
  EXPECT_EQ(*contact_particle(flat_cloth(), s.positions[under].head<2>(), p), under);
}

TEST(Perception, FlatClothScoresBelowTheFlatThreshold) {
  const RgbImage img = render_topdown(flat_cloth(), TopDownCamera{}, kCloth, kBackground);
  const Mask m = segment_cloth(img, {});
  const FilterBank bank(GaborParams::for_wavelength(16.0), 8);
  const WrinkleField f = wrinkle_field(img, m, split_blocks(720, 720, 16, 16), bank);
  EXPECT_LE(f.max_magnitude(), PolicyParams{}.flat_epsilon);
}

TEST(Perception, RidgeAlongYIsVertical) {
  ClothState s = flat_cloth();
  for (auto& x : s.positions) x.z() = 0.012 * std::exp(-x.x() * x.x() / (2.0 * 0.012 * 0.012));
  const RgbImage img = render_topdown(s, TopDownCamera{}, kCloth, kBackground);
  const Mask m = segment_cloth(img, {});
  const FilterBank bank(GaborParams::for_wavelength(16.0), 8);
  const WrinkleField f = wrinkle_field(img, m, split_blocks(720, 720, 16, 16), bank);
  const int best = static_cast<int>(std::max_element(f.magnitudes.begin(), f.magnitudes.end()) - f.magnitudes.begin());
  EXPECT_GT(f.magnitudes[best], PolicyParams{}.flat_epsilon);
  EXPECT_NEAR(f.orientations[best], std::numbers::pi / 2.0, std::numbers::pi / 16.0);
  const int col = f.grid.col_of(best);
  EXPECT_TRUE(col == 7 || col == 8) << col;
}

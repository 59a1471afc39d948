// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "flatbench/bench.hpp"
#include "flatbench/serialization.hpp"
#include "support/fold_oracle.hpp"
#include "support/synthetic.hpp"

using namespace flatbench;
using std::numbers::pi;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const char* name, const Outcome& o) {
  std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome kernel_correctness() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    GaborParams p;
    p.lambda = 2.0 + 38.0 * u(rng);
    p.sigma = 0.5 + 20.0 * u(rng);
    p.gamma = 0.1 + 2.0 * u(rng);
    p.theta = pi * u(rng);
    if (p.theta >= pi) p.theta = 0.0;
    p.phi = pi * (2.0 * u(rng) - 1.0);
    p.ksize = 3 + 2 * static_cast<int>(30 * u(rng));
    const Kernel k = gabor_kernel(p, false);
    const int h = k.half();
    const int x = static_cast<int>(std::floor((2 * h + 1) * u(rng))) - h;
    const int y = static_cast<int>(std::floor((2 * h + 1) * u(rng))) - h;
    const double xr = x * std::cos(p.theta) + y * std::sin(p.theta);
    const double yr = -x * std::sin(p.theta) + y * std::cos(p.theta);
    const std::complex<double> g = std::exp(-(xr * xr + p.gamma * p.gamma * yr * yr) / (2.0 * p.sigma * p.sigma)) *
                                   std::exp(std::complex<double>(0.0, 2.0 * pi * xr / p.lambda + p.phi));
    worst = std::max({worst, std::abs(k.even(x, y) - g.real()), std::abs(k.odd(x, y) - g.imag())});
  }
  return {worst <= 1e-9, fmt("1000 samples, max |tap - direct| = %.3g (tol 1e-9)", worst)};
}

Outcome orientation_recovery() {
  const auto t0 = Clock::now();
  const int rows = RunConfig{}.grid_rows, cols = RunConfig{}.grid_cols;
  const FilterBank bank(GaborParams::for_wavelength(16.0), 8);
  const BlockGrid grid = split_blocks(720, 720, rows, cols);
  const Mask full(720, 720, true);
  int total = 0, ok = 0;
  double worst = 0.0;
  for (int k = 0; k < 32; ++k) {
    const double alpha = k * pi / 32.0;
    const RgbImage img = testing::grating_image(720, 720, alpha, 16.0);
    const WrinkleField f = wrinkle_field(img, full, grid, bank);
    for (int r = 1; r + 1 < rows; ++r)
      for (int c = 1; c + 1 < cols; ++c) {
        const double err = testing::axis_distance(f.orientations[grid.index(r, c)], alpha);
        worst = std::max(worst, err);
        ++total;
        ok += err <= pi / 16.0 + 1e-12;
      }
  }
  const double secs = seconds_since(t0);
  return {ok == total && secs < 10.0,
          fmt("%d/%d interior blocks within pi/16 (worst %.4f rad), %.2f s (limit 10 s)", ok, total, worst, secs)};
}

Outcome perpendicular_outward() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> ang(0.0, pi), pos(0.0, 720.0);
  double worst_dot = 0.0, worst_out = 0.0;
  int bad = 0;
  for (int i = 0; i < 100000; ++i) {
    const double t = ang(rng);
    const Point2 op(pos(rng), pos(rng)), com(pos(rng), pos(rng));
    const Eigen::Vector2d d = stretching_direction(t, op, com);
    const double along = std::abs(d.x() * std::cos(t) + d.y() * std::sin(t));
    const double out = d.dot(op - com);
    worst_dot = std::max(worst_dot, along);
    worst_out = std::min(worst_out, out);
    bad += !(along <= 1e-9 && out >= 0.0);
  }
  return {bad == 0, fmt("1e5 cases, max |dot(dir, axis)| = %.3g, min dot(dir, op - com) = %.3g, violations %d", worst_dot,
                        worst_out, bad)};
}

Outcome candidate_filter() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> pos(0.0, 719.0);
  const PolicyParams params;
  int fields = 0, mismatches = 0;
  while (fields < 1000) {
    const WrinkleField f = testing::random_field(rng);
    const Point2 com(pos(rng), pos(rng));
    // brute force: first maximum, then every block in the 3x3 window around it
    int best = 0;
    for (int j = 0; j < f.n_b(); ++j)
      if (f.magnitudes[j] > f.magnitudes[best]) best = j;
    if (!(f.magnitudes[best] > params.flat_epsilon)) continue;
    ++fields;
    const auto& g = f.grid;
    const Point2 cj = g.blocks[best].center();
    std::set<int> kept, rejected;
    for (int n = 0; n < f.n_b(); ++n) {
      if (n == best || std::abs(g.row_of(n) - g.row_of(best)) > 1 || std::abs(g.col_of(n) - g.col_of(best)) > 1) continue;
      if (f.cloth_fraction[n] < params.min_cloth_fraction) continue;
      const Eigen::Vector2d a = cj - com, b = g.blocks[n].center() - cj;
      const double angle = std::atan2(std::abs(a.x() * b.y() - a.y() * b.x()), a.dot(b));
      (angle < pi / 2.0 ? kept : rejected).insert(n);
    }
    const ProposedDecision d = proposed_decision(f, com, {rng()}, params);
    const std::set<int> dk(d.kept.begin(), d.kept.end()), dr(d.rejected.begin(), d.rejected.end());
    const int op_block = g.block_of(static_cast<int>(d.action.op_point.x()), static_cast<int>(d.action.op_point.y()));
    const bool op_ok = kept.empty() ? (d.fallback && op_block == best) : (!d.fallback && kept.count(op_block) == 1);
    if (d.max_block != best || dk != kept || dr != rejected || !op_ok) ++mismatches;
  }
  return {mismatches == 0, fmt("%d random fields, %d mismatches against brute-force angle enumeration", fields, mismatches)};
}

Outcome metric_exactness(const std::vector<EpisodeRecord>& traces) {
  int bad = 0;
  std::mt19937_64 rng(404);
  // crafted masks: hand counts
  for (int t = 0; t < 200; ++t) {
    const int w = 1 + static_cast<int>(rng() % 300), h = 1 + static_cast<int>(rng() % 300);
    Mask m(w, h);
    const int x0 = static_cast<int>(rng() % w), y0 = static_cast<int>(rng() % h);
    const int x1 = x0 + static_cast<int>(rng() % (w - x0 + 1)), y1 = y0 + static_cast<int>(rng() % (h - y0 + 1));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) m.set(x, y, true);
    const double hand = static_cast<double>((x1 - x0) * (y1 - y0)) / static_cast<double>(w * h);
    bad += coverage(m) != hand;
    const double full = 0.25;
    bad += coverage(m) / full != hand / full;
  }
  // replayed synthetic traces
  std::uniform_real_distribution<double> u(0.5, 1.0);
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> trace(1 + rng() % 40);
    for (double& r : trace) r = u(rng) < 0.1 ? 0.99 : u(rng);  // exact 0.99 must not stop
    const int cap = 30;
    int expect = -1;
    for (int i = 0; i < static_cast<int>(trace.size()) && i < cap; ++i)
      if (trace[i] > 0.99) {
        expect = i + 1;
        break;
      }
    int stopped = -1;
    Termination why = Termination::Running;
    for (int i = 0; i < static_cast<int>(trace.size()); ++i) {
      why = termination_after(trace[i], i + 1, 0.99, cap);
      if (why != Termination::Running) {
        stopped = i + 1;
        break;
      }
    }
    if (expect > 0)
      bad += !(stopped == expect && why == Termination::Success);
    else if (static_cast<int>(trace.size()) >= cap)
      bad += !(stopped == cap && why == Termination::StepCap);
    else
      bad += stopped != -1;
  }
  // recorded episode traces
  int replayed = 0;
  for (const auto& r : traces) {
    if (!r.valid) continue;
    ++replayed;
    int first = r.initial_relative() > 0.99 ? 0 : -1;
    for (std::size_t i = 0; first < 0 && i < r.steps.size(); ++i) {
      bad += r.steps[i].relative_coverage != r.steps[i].coverage / r.full_coverage;
      if (r.steps[i].relative_coverage > 0.99) first = static_cast<int>(i) + 1;
    }
    if (first >= 0)
      bad += !(r.success() && r.steps_used == first);
    else
      bad += !(r.terminated == Termination::StepCap && r.steps_used == 30);
  }
  return {bad == 0, fmt("200 crafted masks, 2000 synthetic traces, %d recorded episodes; %d mismatches", replayed, bad)};
}

Outcome kmeans_optimality() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int bad = 0;
  for (int t = 0; t < 500; ++t) {
    const int n = 1 + static_cast<int>(rng() % 200);
    std::vector<double> v(static_cast<std::size_t>(n));
    const bool quantized = t % 4 == 0;
    const double spread = 0.05 + u(rng);
    for (double& x : v) x = quantized ? std::round(10.0 * u(rng)) / 10.0 : (u(rng) < 0.5 ? 0.3 : 0.7) + spread * (u(rng) - 0.5);
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    auto sse = [](auto b, auto e) {
      if (b == e) return 0.0;
      double mean = 0.0;
      for (auto it = b; it != e; ++it) mean += *it;
      mean /= static_cast<double>(e - b);
      double acc = 0.0;
      for (auto it = b; it != e; ++it) acc += (*it - mean) * (*it - mean);
      return acc;
    };
    // brute force over contiguous splits between distinct neighbours, ties to the lower split
    std::size_t best = 0;
    double best_cost = 0.0, runner_up = INFINITY;
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (s[i - 1] == s[i]) continue;
      const double c = sse(s.begin(), s.begin() + i) + sse(s.begin() + i, s.end());
      if (best == 0 || c < best_cost) {
        if (best != 0) runner_up = std::min(runner_up, best_cost);
        best_cost = c;
        best = i;
      } else {
        runner_up = std::min(runner_up, c);
      }
    }
    std::vector<Difficulty> want(v.size(), Difficulty::Easy);
    if (best != 0)
      for (std::size_t i = 0; i < v.size(); ++i) want[i] = v[i] >= s[best] ? Difficulty::Easy : Difficulty::Hard;
    const auto got = kmeans2(v);
    if (got == want) continue;
    // two splits whose costs agree to rounding are both optimal
    std::vector<double> easy, hard;
    for (std::size_t i = 0; i < v.size(); ++i) (got[i] == Difficulty::Easy ? easy : hard).push_back(v[i]);
    const double got_cost = sse(easy.begin(), easy.end()) + sse(hard.begin(), hard.end());
    const bool tie = std::abs(runner_up - best_cost) <= 1e-12 * (1.0 + best_cost) &&
                     std::abs(got_cost - best_cost) <= 1e-12 * (1.0 + best_cost);
    bad += !tie;
  }
  return {bad == 0, fmt("500 datasets (n <= 200), %d disagree with the brute-force best split", bad)};
}

Outcome transform_chain() {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto random_rigid = [&] {
    const Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    return HomTransform::from_rt(q.normalized().toRotationMatrix(), Eigen::Vector3d(n(rng), n(rng), n(rng)));
  };
  double worst = 0.0, worst_px = 0.0;
  int done = 0;
  while (done < 100) {
    const HomTransform bt = random_rigid(), tc = random_rigid();
    const CameraIntrinsics intr{400.0 + 400.0 * u(rng), 400.0 + 400.0 * u(rng), 300.0 + 100.0 * u(rng), 300.0 + 100.0 * u(rng)};
    TablePlane plane;
    plane.normal = Eigen::Vector3d(0.3 * n(rng), 0.3 * n(rng), 1.0).normalized();
    plane.offset = 0.3 + u(rng);
    const Point2 px(720.0 * u(rng), 720.0 * u(rng));

    Eigen::Matrix3d k;
    k << intr.fx, 0.0, intr.cx, 0.0, intr.fy, intr.cy, 0.0, 0.0, 1.0;
    const Eigen::Vector3d ray = k.inverse() * Eigen::Vector3d(px.x(), px.y(), 1.0);
    const double denom = plane.normal.dot(ray);
    if (denom <= 1e-6) continue;
    ++done;
    const Eigen::Vector4d cam_p((plane.offset / denom * ray).homogeneous());
    const Eigen::Vector4d oracle = bt.matrix() * tc.matrix() * cam_p;
    const Eigen::Vector3d got = pixel_to_base(bt, tc, intr, plane, px);
    worst = std::max(worst, (got - oracle.head<3>()).norm());

    const Eigen::Vector4d back = (bt.matrix() * tc.matrix()).inverse() * got.homogeneous();
    const Eigen::Vector3d proj = k * back.head<3>();
    worst_px = std::max(worst_px, (Point2(proj.x() / proj.z(), proj.y() / proj.z()) - px).norm());
  }
  return {worst <= 1e-9 && worst_px <= 1e-6,
          fmt("100 chains, max |pixel_to_base - product| = %.3g m (tol 1e-9), round trip %.3g px (tol 1e-6)", worst,
              worst_px)};
}

Outcome simulator_solvability(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  const ClothState rest = init_flat(cfg.cloth_nx, cfg.cloth_ny, cfg.rest_len, cfg.sim);
  int solved = 0;
  std::string per_seed;
  for (auto seed : seeds) {
    Episode ep(cfg, seed, Method::Human);
    while (!ep.done()) {
      const auto od = testing::oracle_drag(ep.state(), rest, cfg.sim);
      if (!od) break;
      ep.execute({cfg.camera.world_to_pixel(od->contact), od->direction, Method::Human});
    }
    const bool ok = ep.record().success() && ep.record().steps_used <= 30;
    solved += ok;
    per_seed += fmt(" %llu:%s%d", static_cast<unsigned long long>(seed), ok ? "" : "x", ep.record().steps_used);
  }
  return {solved >= 19, fmt("oracle solved %d/%d seeds (need 19); steps%s", solved, static_cast<int>(seeds.size()),
                            per_seed.c_str())};
}

}  // namespace

int main() {
  const auto t_all = Clock::now();
  report("kernel_correctness", kernel_correctness());
  report("orientation_recovery", orientation_recovery());
  report("perpendicular_outward", perpendicular_outward());
  report("candidate_filter", candidate_filter());
  report("kmeans2_optimality", kmeans_optimality());
  report("transform_chain", transform_chain());

  RunConfig cfg;
  const auto seeds = standard_suite_seeds(cfg.seed_base, 20);
  report("simulator_solvability", simulator_solvability(cfg, seeds));

  const auto t_bench = Clock::now();
  const int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::vector<EpisodeRecord> records = run_suite(cfg, {Method::Proposed, Method::Random}, seeds, workers);
  const double bench_secs = seconds_since(t_bench);
  std::vector<EpisodeRecord> labelled = records;
  const SummaryTable table = summarize(labelled);
  {
    const auto& p = table.methods.at("proposed");
    const auto& r = table.methods.at("random");
    const bool ordered = p.mean_steps <= r.mean_steps && p.success_rate() >= r.success_rate();
    report("policy_ordering",
           {ordered && bench_secs < 900.0 && table.invalid_records == 0,
            fmt("mean steps proposed %.2f vs random %.2f; success proposed %d/%d vs random %d/%d; "
                "hard mean steps %.2f vs %.2f; invalid %d; %.0f s (limit 900 s)",
                p.mean_steps, r.mean_steps, p.successes, p.episodes(), r.successes, r.episodes(), p.hard_mean_steps,
                r.hard_mean_steps, table.invalid_records, bench_secs)});
  }

  report("metric_exactness", metric_exactness(records));

  {
    int identical = 0, checked = 0;
    for (std::size_t i : {std::size_t{0}, std::size_t{7}, records.size() - 1}) {
      RunConfig c = cfg;
      c.method = records[i].method;
      ++checked;
      identical += record_to_json(run_episode(c, records[i].seed)).dump() == record_to_json(records[i]).dump();
    }
    report("determinism", {identical == checked, fmt("%d/%d reruns byte-identical", identical, checked)});
  }

  std::printf("%s: %d failing criteria, %.0f s total\n", failures ? "FAIL" : "PASS", failures, seconds_since(t_all));
  return failures ? 1 : 0;
}

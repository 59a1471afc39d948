#pragma once

// Closed-loop episodes (flatten, measure, crumple, then perceive/act until
// the relative coverage clears the stopping threshold), 1-D two-cluster
// difficulty labelling, and per-method summaries.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "flatbench/cloth_sim.hpp"
#include "flatbench/error.hpp"
#include "flatbench/frames.hpp"
#include "flatbench/gabor.hpp"
#include "flatbench/image.hpp"
#include "flatbench/policy.hpp"

namespace flatbench {

struct RunConfig {
  Method method = Method::Proposed;
  int n_episodes = 20;
  std::uint64_t seed_base = 1000;
  int max_steps = 30;
  int crumple_folds = 2;
  double crumple_intensity = 0.8;
  double stop_threshold = 0.99;

  int cloth_nx = 41, cloth_ny = 41;
  double rest_len = 0.01;
  SimParams sim;
  TopDownCamera camera;
  Rgb cloth_color{40, 90, 200};
  Rgb background_color{60, 60, 60};

  HsvBounds hsv;
  int grid_rows = 16, grid_cols = 16;
  GaborParams gabor = GaborParams::for_wavelength(16.0);
  int n_orientations = 8;
  PolicyParams policy;

  void validate() const {
    if (!(stop_threshold > 0.0 && stop_threshold <= 1.0)) throw Error(ErrorCode::BadConfig, "stop_threshold must lie in (0, 1]");
    if (max_steps < 1) throw Error(ErrorCode::BadConfig, "max_steps must be >= 1");
    if (n_episodes < 0) throw Error(ErrorCode::BadConfig, "n_episodes must be >= 0");
    if (crumple_folds < 0 || !(crumple_intensity >= 0.0)) throw Error(ErrorCode::BadConfig, "bad crumple settings");
    try {
      sim.validate();
      camera.validate();
      hsv.validate();
      gabor.validate();
      split_blocks(camera.image_w, camera.image_h, grid_rows, grid_cols);
    } catch (const Error& e) {
      throw Error(ErrorCode::BadConfig, e.what());
    }
    if (n_orientations < 1) throw Error(ErrorCode::BadConfig, "n_orientations must be >= 1");
    if (cloth_nx < 2 || cloth_ny < 2 || !(rest_len > 0.0)) throw Error(ErrorCode::BadConfig, "bad cloth grid");
  }
};

/// The paired standard suite: the same crumple seeds for every method.
inline std::vector<std::uint64_t> standard_suite_seeds(std::uint64_t base = 1000, int n = 20) {
  std::vector<std::uint64_t> out(static_cast<std::size_t>(n));
  std::iota(out.begin(), out.end(), base);
  return out;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Policy seed for a given step of an episode; shared by bench and service
/// so a suggestion equals the action bench would take in the same state.
inline RngSeed step_seed(std::uint64_t episode_seed, int step) {
  return {splitmix64(episode_seed ^ splitmix64(static_cast<std::uint64_t>(step) + 0x51ed2701ULL))};
}

enum class StepOutcome { Executed, NoContact, NoWrinkle };

constexpr std::string_view to_string(StepOutcome o) {
  switch (o) {
    case StepOutcome::Executed: return "executed";
    case StepOutcome::NoContact: return "no_contact";
    case StepOutcome::NoWrinkle: return "no_wrinkle";
  }
  return "unknown";
}

enum class Termination { Success, StepCap, Running };
enum class Difficulty { Unassigned, Easy, Hard };

constexpr std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::Success: return "success";
    case Termination::StepCap: return "step_cap";
    case Termination::Running: return "running";
  }
  return "unknown";
}
constexpr std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Unassigned: return "unassigned";
    case Difficulty::Easy: return "easy";
    case Difficulty::Hard: return "hard";
  }
  return "unknown";
}

/// Stopping rule after `steps_taken` actions: success as soon as the
/// relative coverage clears the threshold, otherwise the step cap.
inline Termination termination_after(double relative_coverage, int steps_taken, double stop_threshold, int max_steps) {
  if (relative_coverage > stop_threshold) return Termination::Success;
  if (steps_taken >= max_steps) return Termination::StepCap;
  return Termination::Running;
}

struct StepRecord {
  int step = 0;
  std::optional<PolicyAction> action;  // absent when the policy reported a flat cloth
  StepOutcome outcome = StepOutcome::Executed;
  double coverage = 0.0;
  double relative_coverage = 0.0;  // R_t = coverage_t / C
};

struct EpisodeRecord {
  Method method = Method::Proposed;
  std::uint64_t seed = 0;
  double full_coverage = 0.0;     // C
  double initial_coverage = 0.0;  // coverage right after crumpling
  std::vector<StepRecord> steps;
  int steps_used = 0;
  Termination terminated = Termination::Running;
  Difficulty difficulty = Difficulty::Unassigned;
  bool valid = true;
  std::string error;

  double initial_relative() const { return full_coverage > 0.0 ? initial_coverage / full_coverage : 0.0; }
  double final_relative() const { return steps.empty() ? initial_relative() : steps.back().relative_coverage; }
  bool success() const { return terminated == Termination::Success; }
};

/// What the camera sees and what perception extracts from it.
struct Observation {
  RgbImage image;
  Mask mask;
  double coverage = 0.0;
  std::optional<Point2> com;
};

/// One flattening episode in the simulator. Owns the cloth state; not
/// thread-safe, callers serialize access.
class Episode {
 public:
  Episode(const RunConfig& cfg, std::uint64_t seed, Method method)
      : cfg_(cfg), seed_(seed), frames_(cfg.camera),
        bank_(std::make_shared<FilterBank>(cfg.gabor, cfg.n_orientations)),
        grid_(split_blocks(cfg.camera.image_w, cfg.camera.image_h, cfg.grid_rows, cfg.grid_cols)) {
    cfg_.validate();
    record_.method = method;
    record_.seed = seed;
    state_ = init_flat(cfg.cloth_nx, cfg.cloth_ny, cfg.rest_len, cfg.sim);
    observe();
    record_.full_coverage = obs_.coverage;
    if (!(record_.full_coverage > 0.0)) throw Error(ErrorCode::BadConfig, "flat cloth is not visible to the camera");
    state_ = crumple(std::move(state_), seed, cfg.crumple_folds, cfg.crumple_intensity, cfg.sim);
    observe();
    record_.initial_coverage = obs_.coverage;
    if (termination_after(relative_coverage(), 0, cfg.stop_threshold, cfg.max_steps) == Termination::Success)
      record_.terminated = Termination::Success;
  }

  const RunConfig& config() const noexcept { return cfg_; }
  const Observation& observation() const noexcept { return obs_; }
  const ClothState& state() const noexcept { return state_; }
  const EpisodeRecord& record() const noexcept { return record_; }
  int step() const noexcept { return static_cast<int>(record_.steps.size()); }
  bool done() const noexcept { return record_.terminated != Termination::Running; }
  double relative_coverage() const { return obs_.coverage / record_.full_coverage; }

  /// Wrinkle field of the current observation, computed on first use.
  const WrinkleField& field() {
    if (!field_)
      field_ = wrinkle_field(obs_.image, obs_.mask, grid_, *bank_, {cfg_.policy.min_cloth_fraction, false});
    return *field_;
  }

  /// The action `method` would take now for the given policy seed. Throws
  /// NoWrinkle (proposed) or EmptyMask when no action exists.
  PolicyAction suggest(Method method, RngSeed seed) {
    if (!obs_.com) throw Error(ErrorCode::EmptyMask, "no cloth visible");
    switch (method) {
      case Method::Proposed: return proposed_action(field(), *obs_.com, seed, cfg_.policy);
      case Method::Random: return random_action(obs_.mask, *obs_.com, seed);
      case Method::Heuristic: return heuristic_action(obs_.mask, *obs_.com, seed, cfg_.policy);
      case Method::Human: break;
    }
    throw Error(ErrorCode::InvalidAction, "human actions cannot be suggested");
  }

  RngSeed next_seed() const { return step_seed(seed_, step() + 1); }

  /// Executes `action` (image coordinates) and appends the step.
  const StepRecord& execute(const PolicyAction& action) {
    if (done()) throw Error(ErrorCode::SessionDone, "episode already finished");
    StepRecord rec;
    rec.step = step() + 1;
    rec.action = action;
    const Eigen::Vector3d contact = frames_.point(action.op_point);
    const Eigen::Vector2d dir = frames_.direction(action.op_point, action.direction);
    try {
      state_ = apply_drag(state_, contact.head<2>(), dir, cfg_.sim);
      observe();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoContact) throw;
      rec.outcome = StepOutcome::NoContact;
    }
    return finish_step(std::move(rec));
  }

  /// Records a step in which the policy produced no action.
  const StepRecord& skip(StepOutcome why) {
    if (done()) throw Error(ErrorCode::SessionDone, "episode already finished");
    StepRecord rec;
    rec.step = step() + 1;
    rec.outcome = why;
    return finish_step(std::move(rec));
  }

 private:
  const StepRecord& finish_step(StepRecord rec) {
    rec.coverage = obs_.coverage;
    rec.relative_coverage = relative_coverage();
    record_.steps.push_back(std::move(rec));
    record_.steps_used = step();
    record_.terminated = termination_after(record_.steps.back().relative_coverage, step(), cfg_.stop_threshold, cfg_.max_steps);
    return record_.steps.back();
  }

  void observe() {
    obs_.image = render_topdown(state_, cfg_.camera, cfg_.cloth_color, cfg_.background_color);
    obs_.mask = segment_cloth(obs_.image, cfg_.hsv);
    obs_.coverage = coverage(obs_.mask);
    obs_.com.reset();
    if (obs_.mask.count() > 0) obs_.com = center_of_mass(obs_.mask);
    field_.reset();
  }

  RunConfig cfg_;
  std::uint64_t seed_;
  ActionFrames frames_;
  std::shared_ptr<FilterBank> bank_;
  BlockGrid grid_;
  ClothState state_;
  Observation obs_;
  std::optional<WrinkleField> field_;
  EpisodeRecord record_;
};

/// One policy step: ask `method` for an action and execute it, recording a
/// skipped step when the policy has nothing to offer.
inline const StepRecord& policy_step(Episode& ep, Method method) {
  try {
    return ep.execute(ep.suggest(method, ep.next_seed()));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoWrinkle) return ep.skip(StepOutcome::NoWrinkle);
    if (e.code() == ErrorCode::EmptyMask || e.code() == ErrorCode::Degenerate) return ep.skip(StepOutcome::NoContact);
    throw;
  }
}

inline EpisodeRecord run_episode(const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.method == Method::Human) throw Error(ErrorCode::BadConfig, "human episodes run through the service");
  try {
    Episode ep(cfg, seed, cfg.method);
    while (!ep.done()) policy_step(ep, cfg.method);
    return ep.record();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Unstable) throw;
    EpisodeRecord r;
    r.method = cfg.method;
    r.seed = seed;
    r.valid = false;
    r.error = e.what();
    return r;
  }
}

/// Runs every (method, seed) pair on a worker pool; output order follows the
/// input order regardless of scheduling.
inline std::vector<EpisodeRecord> run_suite(const RunConfig& cfg, const std::vector<Method>& methods,
                                            const std::vector<std::uint64_t>& seeds, int workers = 0) {
  struct Job {
    Method method;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (Method m : methods)
    for (auto s : seeds) jobs.push_back({m, s});
  std::vector<EpisodeRecord> out(jobs.size());
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min<int>(workers, static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  auto work = [&](int w) {
    try {
      for (std::size_t i = next++; i < jobs.size(); i = next++) {
        RunConfig c = cfg;
        c.method = jobs[i].method;
        out[i] = run_episode(c, jobs[i].seed);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Exact two-cluster k-means on the line. The optimum of 1-D k-means is a
/// contiguous split of the sorted values, so every split between distinct
/// neighbours is scored (running Welford sums) and the lowest within-cluster
/// sum of squares wins, ties toward the lower split. The higher-centroid
/// cluster is Easy. All-equal input labels everything Easy.
inline std::vector<Difficulty> kmeans2(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<Difficulty> labels(n, Difficulty::Easy);
  if (n < 2) return labels;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) return labels;

  // prefix[i] = SSE of sorted[0..i), suffix[i] = SSE of sorted[i..n)
  auto running_sse = [](auto begin, auto end) {
    std::vector<double> sse{0.0};
    double mean = 0.0, m2 = 0.0;
    std::size_t k = 0;
    for (auto it = begin; it != end; ++it) {
      ++k;
      const double d = *it - mean;
      mean += d / static_cast<double>(k);
      m2 += d * (*it - mean);
      sse.push_back(m2);
    }
    return sse;
  };
  const auto prefix = running_sse(sorted.begin(), sorted.end());
  auto suffix_rev = running_sse(sorted.rbegin(), sorted.rend());

  std::size_t best_split = 0;
  double best = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    if (sorted[i - 1] == sorted[i]) continue;
    const double cost = prefix[i] + suffix_rev[n - i];
    if (best_split == 0 || cost < best) {
      best = cost;
      best_split = i;
    }
  }
  const double threshold = sorted[best_split];  // smallest Easy value
  for (std::size_t i = 0; i < n; ++i) labels[i] = values[i] >= threshold ? Difficulty::Easy : Difficulty::Hard;
  return labels;
}

struct MethodSummary {
  int easy_tasks = 0, hard_tasks = 0;
  double easy_mean_steps = 0.0, hard_mean_steps = 0.0;  // NaN when the class is empty
  double mean_steps = 0.0;
  int successes = 0;
  int step_capped = 0;
  std::map<int, int> histogram;  // steps_used -> occurrences

  int episodes() const noexcept { return easy_tasks + hard_tasks; }
  double success_rate() const { return episodes() > 0 ? static_cast<double>(successes) / episodes() : 0.0; }
};

struct SummaryTable {
  std::map<std::string, MethodSummary> methods;  // keyed by method label
  int invalid_records = 0;
};

/// Labels difficulty over the pooled valid records (in place) and
/// aggregates per method. Step-capped episodes count max steps.
inline SummaryTable summarize(std::vector<EpisodeRecord>& records) {
  SummaryTable t;
  std::vector<std::size_t> valid;
  std::vector<double> initial;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].valid) {
      ++t.invalid_records;
      continue;
    }
    valid.push_back(i);
    initial.push_back(records[i].initial_coverage);
  }
  const auto labels = kmeans2(initial);
  struct Acc {
    double easy = 0, hard = 0, all = 0;
  };
  std::map<std::string, Acc> sums;
  for (std::size_t k = 0; k < valid.size(); ++k) {
    auto& r = records[valid[k]];
    r.difficulty = labels[k];
    const std::string key(to_string(r.method));
    auto& s = t.methods[key];
    auto& a = sums[key];
    if (r.difficulty == Difficulty::Easy) {
      ++s.easy_tasks;
      a.easy += r.steps_used;
    } else {
      ++s.hard_tasks;
      a.hard += r.steps_used;
    }
    a.all += r.steps_used;
    if (r.success()) ++s.successes;
    if (r.terminated == Termination::StepCap) ++s.step_capped;
    ++s.histogram[r.steps_used];
  }
  for (auto& [key, s] : t.methods) {
    const auto& a = sums[key];
    s.easy_mean_steps = s.easy_tasks > 0 ? a.easy / s.easy_tasks : std::nan("");
    s.hard_mean_steps = s.hard_tasks > 0 ? a.hard / s.hard_tasks : std::nan("");
    s.mean_steps = s.episodes() > 0 ? a.all / s.episodes() : std::nan("");
  }
  return t;
}

}  // namespace flatbench

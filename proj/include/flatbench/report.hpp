#pragma once

// On-disk layout of a benchmark directory:
//   records/<method>_<seed>.json   one EpisodeRecord each
//   summary.csv                    per-method easy/hard counts and mean steps
//   histogram.csv                  per-method occurrences of each step count

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "flatbench/bench.hpp"
#include "flatbench/png_io.hpp"
#include "flatbench/serialization.hpp"

namespace flatbench {

namespace fs = std::filesystem;

inline std::string record_file_name(const EpisodeRecord& r) {
  return std::string(to_string(r.method)) + "_" + std::to_string(r.seed) + ".json";
}

inline void store_records(const fs::path& dir, const std::vector<EpisodeRecord>& records) {
  const fs::path rd = dir / "records";
  fs::create_directories(rd);
  for (const auto& r : records) write_file(rd / record_file_name(r), record_to_json(r).dump(2) + "\n");
}

/// All records under dir/records, sorted by file name so the result does
/// not depend on directory iteration order.
inline std::vector<EpisodeRecord> load_records(const fs::path& dir) {
  const fs::path rd = dir / "records";
  if (!fs::is_directory(rd)) throw Error(ErrorCode::Io, "no records directory in " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(rd))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<EpisodeRecord> out;
  for (const auto& f : files) out.push_back(record_from_json(read_json_file(f.string())));
  return out;
}

namespace detail {
inline std::string fixed(double v, int digits = 4) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}
}  // namespace detail

inline std::string summary_csv(const SummaryTable& t) {
  std::ostringstream os;
  os << "method,easy_tasks,hard_tasks,easy_mean_steps,hard_mean_steps,mean_steps,success_rate,step_capped\n";
  for (const auto& [m, s] : t.methods)
    os << m << ',' << s.easy_tasks << ',' << s.hard_tasks << ',' << detail::fixed(s.easy_mean_steps) << ','
       << detail::fixed(s.hard_mean_steps) << ',' << detail::fixed(s.mean_steps) << ',' << detail::fixed(s.success_rate())
       << ',' << s.step_capped << '\n';
  return os.str();
}

inline std::string histogram_csv(const SummaryTable& t) {
  std::ostringstream os;
  os << "method,steps,count\n";
  for (const auto& [m, s] : t.methods)
    for (const auto& [steps, count] : s.histogram) os << m << ',' << steps << ',' << count << '\n';
  return os.str();
}

/// Re-labels difficulty across every stored record, rewrites the records
/// with their labels, and regenerates both CSV tables.
inline SummaryTable write_report(const fs::path& dir) {
  auto records = load_records(dir);
  SummaryTable t = summarize(records);
  store_records(dir, records);
  write_file(dir / "summary.csv", summary_csv(t));
  write_file(dir / "histogram.csv", histogram_csv(t));
  return t;
}

}  // namespace flatbench

#include <chrono>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "flatbench/report.hpp"

using namespace flatbench;

namespace {

void print_summary(const SummaryTable& t) {
  std::cout << summary_csv(t);
  if (t.invalid_records > 0) std::cout << "invalid records (excluded): " << t.invalid_records << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cloth-flattening benchmark runner"};
  app.require_subcommand(1);

  std::string method = "proposed", out_dir, config_file;
  int episodes = 20, workers = 0;
  std::uint64_t seed_base = 1000;
  auto* run = app.add_subcommand("run", "run episodes for one method and update the tables in --out");
  run->add_option("--method", method, "proposed | random | heuristic")
      ->check(CLI::IsMember({"proposed", "random", "heuristic"}));
  run->add_option("--episodes", episodes, "number of episodes")->check(CLI::NonNegativeNumber);
  run->add_option("--seed-base", seed_base, "crumple seed of the first episode");
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--config", config_file, "RunConfig JSON overriding the defaults")->check(CLI::ExistingFile);
  run->add_option("--workers", workers, "parallel episodes (0 = hardware threads)");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "regenerate summary.csv and histogram.csv from stored records");
  report->add_option("dir", report_dir, "benchmark directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      RunConfig cfg;
      if (!config_file.empty()) cfg = run_config_from_json(read_json_file(config_file));
      cfg.method = parse_method(method);
      cfg.n_episodes = episodes;
      cfg.seed_base = seed_base;
      cfg.validate();
      const auto t0 = std::chrono::steady_clock::now();
      auto records = run_suite(cfg, {cfg.method}, standard_suite_seeds(seed_base, episodes), workers);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      for (const auto& r : records)
        std::printf("%s seed %llu: %s after %d steps, R %.4f -> %.4f%s\n", std::string(to_string(r.method)).c_str(),
                    static_cast<unsigned long long>(r.seed), std::string(to_string(r.terminated)).c_str(),
                    r.steps_used, r.initial_relative(), r.final_relative(), r.valid ? "" : " (invalid)");
      std::printf("%zu episodes in %.1f s\n", records.size(), secs);
      fs::create_directories(out_dir);
      write_file(fs::path(out_dir) / "config.json", run_config_to_json(cfg).dump(2) + "\n");
      store_records(out_dir, records);
      print_summary(write_report(out_dir));
    } else if (*report) {
      print_summary(write_report(report_dir));
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

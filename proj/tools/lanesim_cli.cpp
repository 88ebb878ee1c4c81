// lanesim: run, batch-run and validate lane-following scenarios.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "lanesim/episode.hpp"
#include "lanesim/scenario.hpp"

namespace fs = std::filesystem;
using namespace lanesim;

namespace {

struct SeedRange {
  std::uint64_t first = 0;
  std::uint64_t last = 0;
};

SeedRange parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) throw CLI::ValidationError("--seeds", "expected A..B");
  auto parse = [&](std::string_view s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw CLI::ValidationError("--seeds", "'" + text + "' is not A..B");
    }
    return v;
  };
  const std::string_view all(text);
  SeedRange r{parse(all.substr(0, dots)), parse(all.substr(dots + 2))};
  if (r.last < r.first) throw CLI::ValidationError("--seeds", "range is empty");
  return r;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
}

void write_episode(const EpisodeResult& res, const fs::path& dir) {
  fs::create_directories(dir);
  write_trace_csv(res.trace, dir / "trace.csv");
  write_detections_csv(res.detections, dir / "detections.csv");
  write_json(summary_to_json(res.summary), dir / "summary.json");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic lane-following perception and control simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> filter;
  std::optional<double> duration;
  std::optional<double> dt;
  bool dump_frames = false;

  auto* run = app.add_subcommand("run", "Run one episode and write its trace");
  run->add_option("--scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  run->add_option("--output", output_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Override run.seed");
  run->add_option("--filter", filter, "Override filter.type")->check(CLI::IsMember({"ekf", "ukf"}));
  run->add_option("--duration", duration, "Override run.duration (s)")->check(CLI::PositiveNumber);
  run->add_option("--dt", dt, "Override run.dt (s)")->check(CLI::PositiveNumber);
  run->add_flag("--dump-frames", dump_frames, "Write camera PPM and mask PGM files per tick");

  std::string seeds_text;
  unsigned threads = 0;
  auto* batch = app.add_subcommand("batch", "Run one episode per seed");
  batch->add_option("--scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  batch->add_option("--seeds", seeds_text, "Inclusive seed range A..B")->required();
  batch->add_option("--output", output_dir, "Output directory")->required();
  batch->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");

  auto* validate = app.add_subcommand("validate", "Check a scenario and print its normalized form");
  validate->add_option("--scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    ScenarioConfig cfg = load_scenario(scenario_path);

    if (*validate) {
      std::cout << scenario_to_json(cfg).dump(2) << '\n';
      return 0;
    }

    if (*run) {
      if (seed) cfg.run.seed = *seed;
      if (filter) cfg.filter.kind = *filter == "ukf" ? FilterKind::Ukf : FilterKind::Ekf;
      if (duration) cfg.run.duration = *duration;
      if (dt) cfg.run.dt = *dt;
      EpisodeOptions opts;
      if (dump_frames) opts.frame_dir = fs::path(output_dir) / "frames";
      const EpisodeResult res = run_episode(cfg, opts);
      write_episode(res, output_dir);
      std::cout << summary_to_json(res.summary).dump(2) << '\n';
      return 0;
    }

    if (*batch) {
      const SeedRange range = parse_seed_range(seeds_text);
      std::vector<std::uint64_t> seeds;
      for (std::uint64_t s = range.first;; ++s) {
        seeds.push_back(s);
        if (s == range.last) break;
      }
      const auto results = run_batch(cfg, seeds, threads);
      nlohmann::json index = nlohmann::json::array();
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        const fs::path dir = fs::path(output_dir) / ("seed_" + std::to_string(seeds[i]));
        write_episode(results[i], dir);
        nlohmann::json row = summary_to_json(results[i].summary);
        row["seed"] = seeds[i];
        index.push_back(row);
      }
      write_json(index, fs::path(output_dir) / "batch_summary.json");
      std::cout << "wrote " << seeds.size() << " episodes to " << output_dir << '\n';
      return 0;
    }
  } catch (const ScenarioError& e) {
    std::cerr << "scenario error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

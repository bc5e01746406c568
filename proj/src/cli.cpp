// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainscope/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>

#include "CLI11.hpp"
#include "trainscope/dashboard.hpp"
#include "trainscope/errors.hpp"
#include "trainscope/logio.hpp"
#include "trainscope/runner.hpp"

namespace trainscope {
namespace {

// CLI11 consumes arguments from the back.
std::vector<std::string> reversed(const std::vector<std::string>& args) {
  return std::vector<std::string>(args.rbegin(), args.rend());
}

// Runs the parser; returns an exit code when the command should stop.
std::optional<int> parse(CLI::App& app, const std::vector<std::string>& args, std::ostream& out,
                         std::ostream& err) {
  try {
    app.parse(reversed(args));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << app.get_name() << ": " << e.what() << "\n";
    return kExitUsage;
  }
  return std::nullopt;
}

std::string fixed(double v, const char* pattern) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

// Maps exceptions to exit codes: configuration problems are usage errors.
template <typename F>
int guarded(const char* command, std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << command << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << command << ": " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace

CurvatureOptions parse_curvature(const std::string& spec) {
  CurvatureOptions c;
  if (spec == "exact") return c;
  if (spec.rfind("mc:", 0) == 0) {
    const std::string n = spec.substr(3);
    if (!n.empty() && std::all_of(n.begin(), n.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
      c.mode = DiagMode::kMonteCarlo;
      c.mc_samples = std::stoul(n);
      if (c.mc_samples > 0) return c;
    }
  }
  throw ConfigError("curvature must be 'exact' or 'mc:<samples>' with samples >= 1, got '" + spec + "'");
}

int cmd_train(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train with SGD and write a JSONL log of tracked quantities", "train"};
  std::string problem_name, out_path, tier = "economy", curvature = "exact";
  std::size_t steps = 0, batch_size = 0, interval = 1;
  double lr = 0.0, log_base = 2.0;
  std::uint64_t seed = 0;
  bool layerwise = false, record_time = false;
  app.add_option("--problem", problem_name, "problem name, e.g. two_param_regression")->required();
  auto* steps_opt = app.add_option("--steps", steps, "number of SGD updates");
  auto* lr_opt = app.add_option("--lr", lr, "learning rate");
  auto* batch_opt = app.add_option("--batch-size", batch_size, "mini-batch size");
  app.add_option("--tier", tier, "economy, business or full");
  auto* interval_opt = app.add_option("--interval", interval, "track every k-th iteration");
  auto* log_opt = app.add_option("--log-spaced", log_base, "track iterations floor(base^m)");
  interval_opt->excludes(log_opt);
  app.add_option("--seed", seed, "problem and batch-order seed");
  app.add_option("--out", out_path, "output JSONL path")->required();
  app.add_option("--curvature", curvature, "exact or mc:<samples>");
  app.add_flag("--layerwise", layerwise, "also log per-layer histograms, norms and traces");
  app.add_flag("--record-time", record_time, "store wall-clock seconds in time_s");
  if (auto code = parse(app, args, out, err)) return *code;

  return guarded("train", err, [&] {
    const Problem problem = make_problem(problem_name, seed);
    TrackingConfig config = TrackingConfig::for_tier(
        parse_tier(tier), log_opt->count() ? Schedule::log_spaced(log_base) : Schedule::every_k(interval));
    config.curvature = parse_curvature(curvature);
    config.layerwise = layerwise;
    config.validate();
    RunOptions run;
    run.steps = steps_opt->count() ? steps : problem.info().default_steps;
    run.lr = lr_opt->count() ? lr : problem.info().default_lr;
    run.batch_size = batch_opt->count() ? batch_size : problem.info().default_batch_size;
    run.seed = seed;
    run.record_time = record_time;
    if (run.batch_size == 0 || run.batch_size > problem.info().n_train) {
      throw ConfigError("--batch-size must be in [1, " + std::to_string(problem.info().n_train) + "]");
    }
    if (!(run.lr > 0.0)) throw ConfigError("--lr must be positive");

    std::ofstream file(out_path, std::ios::binary | std::ios::trunc);
    if (!file) throw Error("cannot open '" + out_path + "' for writing");
    LogWriter writer(file);
    try {
      const RunResult result = run_experiment(problem, config, run, [&](const TrackEvent& e) { writer.write(e); });
      out << "final loss " << fixed(result.losses.back(), "%.6g") << ", " << writer.written()
          << " events written to " << out_path << "\n";
    } catch (const std::exception& e) {
      err << "train: " << e.what() << " (" << writer.written() << " events flushed to " << out_path << ")\n";
      return kExitFailure;
    }
    return kExitOk;
  });
}

int cmd_render(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Render a JSONL log as an SVG dashboard and/or CSV tables", "render"};
  std::string log_path, svg_path, csv_path;
  double last_fraction = 0.1;
  app.add_option("--log", log_path, "input JSONL log")->required();
  auto* svg_opt = app.add_option("--svg", svg_path, "output SVG path");
  auto* csv_opt = app.add_option("--csv", csv_path, "output CSV path (sidecars go next to it)");
  app.add_option("--last-fraction", last_fraction, "share of Alpha values highlighted as late training");
  if (auto code = parse(app, args, out, err)) return *code;
  if (!svg_opt->count() && !csv_opt->count()) {
    err << "render: need --svg and/or --csv\n";
    return kExitUsage;
  }

  return guarded("render", err, [&] {
    last_fraction_count(0, last_fraction);
    std::vector<TrackEvent> events;
    try {
      events = read_log(std::filesystem::path(log_path));
    } catch (const ParseError& e) {
      err << "render: malformed log '" << log_path << "': " << e.what() << "\n";
      return kExitFailure;
    }
    std::set<std::string> unknown;
    for (auto& e : events) {
      for (auto it = e.quantities.begin(); it != e.quantities.end();) {
        if (is_known_quantity(it->first)) {
          ++it;
        } else {
          unknown.insert(it->first);
          it = e.quantities.erase(it);
        }
      }
    }
    for (const auto& name : unknown) err << "render: warning: skipping unknown quantity '" << name << "'\n";

    if (svg_opt->count()) {
      const std::string svg = render_dashboard(events, DashboardOptions{last_fraction});
      std::ofstream file(svg_path, std::ios::binary | std::ios::trunc);
      if (!file) throw Error("cannot open '" + svg_path + "' for writing");
      file << svg;
      if (!file) throw Error("write failed for '" + svg_path + "'");
      out << "wrote " << svg_path << "\n";
    }
    if (csv_opt->count()) {
      for (const auto& p : export_csv(events, csv_path)) out << "wrote " << p.string() << "\n";
    }
    return kExitOk;
  });
}

int cmd_bench(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Measure tracking overhead relative to untracked training", "bench"};
  std::string problem_name, out_path, curvature = "mc:1";
  std::vector<std::string> tiers = {"economy", "business", "full"};
  std::vector<std::size_t> intervals = {1, 4, 16, 32};
  std::size_t repeats = 3, iterations = 32, segments = 1, batch_size = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;
  app.add_option("--problem", problem_name, "problem name")->required();
  app.add_option("--tiers", tiers, "comma-separated tiers")->delimiter(',');
  app.add_option("--intervals", intervals, "comma-separated tracking intervals")->delimiter(',');
  app.add_option("--repeats", repeats, "repeats (median is reported), at least 3");
  app.add_option("--iterations", iterations, "measured iterations after warmup");
  app.add_option("--segments", segments, "alternating untracked/tracked runs per repeat");
  app.add_option("--batch-size", batch_size, "mini-batch size (problem default if omitted)");
  app.add_option("--lr", lr, "learning rate (problem default if omitted)");
  app.add_option("--seed", seed, "first seed");
  app.add_option("--curvature", curvature, "exact or mc:<samples>");
  app.add_option("--out", out_path, "output CSV path")->required();
  if (auto code = parse(app, args, out, err)) return *code;

  return guarded("bench", err, [&] {
    if (repeats < 3) throw ConfigError("--repeats must be at least 3");
    const Problem problem = make_problem(problem_name, seed);
    BenchmarkOptions b;
    for (const auto& t : tiers) b.configs.push_back(parse_tier(t));
    b.intervals = intervals;
    b.repeats = repeats;
    b.iterations = iterations;
    b.segments = segments;
    b.batch_size = batch_size;
    b.lr = lr;
    b.seed = seed;
    b.curvature = parse_curvature(curvature);
    for (std::size_t k : intervals) {
      if (k == 0) throw ConfigError("--intervals must be positive");
    }
    const auto cells = overhead_benchmark(problem, b);

    std::ofstream file(out_path, std::ios::binary | std::ios::trunc);
    if (!file) throw Error("cannot open '" + out_path + "' for writing");
    file << "tier,interval,seconds_per_step,ratio\r\n";
    for (const auto& c : cells) {
      file << c.config << ',' << c.interval << ',' << format_number(c.seconds_per_step) << ','
           << format_number(c.ratio) << "\r\n";
    }
    if (!file) throw Error("write failed for '" + out_path + "'");

    out << "overhead vs. untracked training (" << problem.info().name << ", median of " << repeats << ")\n";
    out << "tier \\ interval";
    for (std::size_t k : intervals) out << '\t' << k;
    out << '\n';
    std::size_t i = 0;
    for (const auto& t : tiers) {
      out << t;
      for (std::size_t j = 0; j < intervals.size(); ++j) out << '\t' << fixed(cells[i++].ratio, "%.2f");
      out << '\n';
    }
    return kExitOk;
  });
}

int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  const std::string usage =
      "usage: trainscope <train|render|bench> [options]\n"
      "       trainscope <command> --help\n";
  if (argv.size() < 2) {
    err << usage;
    return kExitUsage;
  }
  const std::string& command = argv[1];
  const std::vector<std::string> rest(argv.begin() + 2, argv.end());
  if (command == "train") return cmd_train(rest, out, err);
  if (command == "render") return cmd_render(rest, out, err);
  if (command == "bench") return cmd_bench(rest, out, err);
  if (command == "--help" || command == "-h") {
    out << usage;
    return kExitOk;
  }
  err << "unknown command '" << command << "'\n" << usage;
  return kExitUsage;
}

}  // namespace trainscope

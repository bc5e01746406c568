// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "event_gen.hpp"
#include "trainscope/cli.hpp"
#include "trainscope/dashboard.hpp"
#include "trainscope/errors.hpp"
#include "trainscope/logio.hpp"

using namespace trainscope;
using namespace trainscope::testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("trainscope_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "trainscope");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

bool same_bits(double a, double b) {
  return (std::isnan(a) && std::isnan(b)) || (a == b && std::signbit(a) == std::signbit(b));
}

}  // namespace

TEST_CASE("event log round trip") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const TrackEvent e = random_event(rng);
    const std::string line = serialize_event(e);
    CHECK(line.find('\n') == std::string::npos);
    const TrackEvent back = parse_event(line);
    REQUIRE(back == e);
    CHECK(serialize_event(back) == line);
    for (const auto& [name, q] : e.quantities) {
      if (q.is_scalar()) CHECK(same_bits(back.quantities.at(name).scalar(), q.scalar()));
    }
  }
}

TEST_CASE("non-finite values survive the log") {
  TrackEvent e;
  e.iteration = 3;
  e.quantities["TICDiag"].data = INFINITY;
  e.quantities["TICDiag"].flags = {"saturated"};
  e.quantities["Alpha"].data = NAN;
  e.quantities["GradNorm"].data = std::vector<double>{-INFINITY, 1.0};
  const TrackEvent back = parse_event(serialize_event(e));
  CHECK(std::isinf(back.quantities.at("TICDiag").scalar()));
  CHECK(back.quantities.at("TICDiag").has_flag("saturated"));
  CHECK(std::isnan(back.quantities.at("Alpha").scalar()));
  const auto& v = std::get<std::vector<double>>(back.quantities.at("GradNorm").data);
  CHECK(v[0] == -INFINITY);
  CHECK(v[1] == 1.0);
}

TEST_CASE("malformed logs name the offending line") {
  TrackEvent e;
  e.quantities["Loss"].data = 1.0;
  const std::string good = serialize_event(e);
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"{not json", "line 3"},
      {R"({"iteration": -1, "quantities": {}})", "line 3"},
      {R"({"iteration": 1, "quantities": {"X": {"kind": "cube", "payload": 1, "flags": []}}})", "unknown quantity kind"},
      {R"({"iteration": 1, "quantities": {"X": {"kind": "hist1d", "payload": {"edges": [0, 1], "counts": [1, 2]}, "flags": []}}})",
       "one longer"},
      {R"({"iteration": 1, "quantities": {"X": {"kind": "scalar", "flags": []}}})", "payload"},
  };
  for (const auto& [bad, needle] : cases) {
    std::istringstream in(good + "\n\n" + bad + "\n" + good + "\n");
    try {
      read_log(in);
      FAIL("expected ParseError for " << bad);
    } catch (const ParseError& err) {
      const std::string what = err.what();
      CHECK_MESSAGE(what.rfind("line 3: ", 0) == 0, what);
      CHECK_MESSAGE(what.find(needle) != std::string::npos, what);
    }
  }
  std::istringstream blank("\n  \n" + good + "\r\n");
  CHECK(read_log(blank).size() == 1);
}

TEST_CASE("CSV quoting and numbers") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_field("two\nlines") == "\"two\nlines\"");
  std::istringstream in("a,\"b,c\",\"d\"\"e\"\r\n\"x\r\ny\",,z\r\n");
  const auto rows = read_csv(in);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == std::vector<std::string>{"a", "b,c", "d\"e"});
  CHECK(rows[1] == std::vector<std::string>{"x\r\ny", "", "z"});

  std::mt19937_64 rng(5);
  for (int i = 0; i < 2000; ++i) {
    const double v = random_double(rng);
    CHECK(same_bits(std::strtod(format_number(v).c_str(), nullptr), v));
  }
  CHECK(format_number(NAN) == "nan");
  CHECK(format_number(-INFINITY) == "-inf");
}

TEST_CASE("CSV export") {
  TempDir dir("csv");
  std::vector<TrackEvent> events(3);
  for (std::size_t i = 0; i < events.size(); ++i) {
    events[i].iteration = 10 * i;
    events[i].quantities["Loss"].data = 1.0 / (1.0 + static_cast<double>(i));
    events[i].quantities["GradHist1d"].data = Hist1d{{-1.0, 0.0, 1.0}, {static_cast<std::int64_t>(i), 4}};
  }
  events[1].quantities["Alpha"].data = -0.5;
  events[2].quantities["Odd"].data = 2.0;
  const auto paths = export_csv(events, dir / "run.csv", is_known_quantity);
  REQUIRE(paths.size() == 2);
  CHECK(paths[1].filename() == "run.GradHist1d.csv");
  const auto main = read_csv(paths[0]);
  REQUIRE(main.size() == 4);
  CHECK(main[0] == std::vector<std::string>{"iteration", "time_s", "Alpha", "Loss"});
  CHECK(main[1][2].empty());
  CHECK(main[2][2] == "-0.5");
  CHECK(std::strtod(main[2][3].c_str(), nullptr) == 0.5);
  CHECK(std::strtod(main[3][3].c_str(), nullptr) == 1.0 / 3.0);
  const auto side = read_csv(paths[1]);
  REQUIRE(side.size() == 7);
  CHECK(side[0] == std::vector<std::string>{"iteration", "bin", "lo", "hi", "count"});
  CHECK(side[6] == std::vector<std::string>{"20", "1", "0", "1", "4"});
}

TEST_CASE("last fraction count") {
  CHECK(last_fraction_count(100, 0.1) == 10);
  CHECK(last_fraction_count(101, 0.1) == 11);
  CHECK(last_fraction_count(7, 1.0) == 7);
  CHECK(last_fraction_count(0, 0.5) == 0);
  CHECK(last_fraction_count(3, 0.01) == 1);
  for (std::size_t n = 1; n < 500; ++n) {
    CHECK(last_fraction_count(n, 0.1) == (n + 9) / 10);
  }
  CHECK_THROWS_AS(last_fraction_count(10, 0.0), ConfigError);
  CHECK_THROWS_AS(last_fraction_count(10, 1.5), ConfigError);
  CHECK_THROWS_AS(last_fraction_count(10, NAN), ConfigError);
}

TEST_CASE("dashboard") {
  const std::string empty = render_dashboard({});
  CHECK(empty.find("<svg") != std::string::npos);
  CHECK(empty.find("not tracked") != std::string::npos);
  CHECK(empty.find("</svg>") != std::string::npos);

  std::mt19937_64 rng(3);
  std::vector<TrackEvent> events;
  for (int i = 0; i < 40; ++i) {
    TrackEvent e = random_event(rng, true);
    e.iteration = static_cast<std::size_t>(i);
    e.quantities["Alpha"].data = std::uniform_real_distribution<double>(-3.0, 3.0)(rng);
    e.quantities["Loss"].data = 1.0 / (1.0 + i);
    events.push_back(e);
  }
  const std::string a = render_dashboard(events);
  CHECK(a == render_dashboard(events));
  CHECK(a.find("nan") == std::string::npos);
  CHECK(a.find("Alpha distribution") != std::string::npos);
  CHECK(a != render_dashboard(events, DashboardOptions{0.5}));

  CHECK(is_known_quantity("Alpha"));
  CHECK(is_known_quantity("GradNorm.layers"));
  CHECK(is_known_quantity("GradHist1d.layer2"));
  CHECK(is_known_quantity("Loss"));
  CHECK_FALSE(is_known_quantity("Odd"));
}

TEST_CASE("curvature option") {
  CHECK(parse_curvature("exact").mode == DiagMode::kExact);
  const auto mc = parse_curvature("mc:8");
  CHECK(mc.mode == DiagMode::kMonteCarlo);
  CHECK(mc.mc_samples == 8);
  for (const char* bad : {"mc:", "mc:0", "mc:-1", "mc:x", "approx", ""}) {
    CHECK_THROWS_AS(parse_curvature(bad), ConfigError);
  }
}

TEST_CASE("command line") {
  TempDir dir("cli");
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"fly"}).code == kExitUsage);
  CHECK(cli({"train", "--help"}).code == kExitOk);
  CHECK(cli({"train", "--problem", "two_param_regression"}).code == kExitUsage);
  CHECK(cli({"train", "--problem", "nope", "--out", dir / "x.jsonl"}).code == kExitUsage);
  CHECK(cli({"train", "--problem", "two_param_regression", "--out", dir / "x.jsonl", "--tier", "gold"}).code ==
        kExitUsage);
  CHECK(cli({"train", "--problem", "two_param_regression", "--out", dir / "x.jsonl", "--interval", "2",
             "--log-spaced", "2"})
            .code == kExitUsage);
  CHECK(cli({"train", "--problem", "two_param_regression", "--out", dir / "x.jsonl", "--batch-size", "1000"}).code ==
        kExitUsage);

  const std::vector<std::string> train = {"train", "--problem", "two_param_regression", "--steps", "10", "--out",
                                          dir / "a.jsonl"};
  const auto first = cli(train);
  REQUIRE_MESSAGE(first.code == kExitOk, first.err);
  CHECK(first.out.find("11 events written") != std::string::npos);
  const auto events = read_log(fs::path(dir / "a.jsonl"));
  REQUIRE(events.size() == 11);
  for (const auto& e : events) CHECK(e.time_s == 0.0);
  const std::string bytes = slurp(dir / "a.jsonl");
  REQUIRE(cli(train).code == kExitOk);
  CHECK(slurp(dir / "a.jsonl") == bytes);

  // Diverging run: the partial log stays readable.
  const auto blown = cli({"train", "--problem", "two_param_regression", "--steps", "200", "--lr", "50", "--out",
                          dir / "blown.jsonl"});
  CHECK(blown.code == kExitFailure);
  CHECK_NOTHROW(read_log(fs::path(dir / "blown.jsonl")));

  CHECK(cli({"render", "--log", dir / "a.jsonl"}).code == kExitUsage);
  CHECK(cli({"render", "--log", dir / "a.jsonl", "--svg", dir / "a.svg", "--last-fraction", "0"}).code ==
        kExitUsage);
  const auto render = cli({"render", "--log", dir / "a.jsonl", "--svg", dir / "a.svg", "--csv", dir / "a.csv"});
  REQUIRE_MESSAGE(render.code == kExitOk, render.err);
  CHECK(fs::exists(dir / "a.csv"));
  const std::string svg = slurp(dir / "a.svg");
  REQUIRE(cli({"render", "--log", dir / "a.jsonl", "--svg", dir / "b.svg"}).code == kExitOk);
  CHECK(slurp(dir / "b.svg") == svg);

  {
    std::ofstream f(dir / "odd.jsonl");
    f << R"({"iteration": 0, "quantities": {"Mystery": {"kind": "scalar", "payload": 1, "flags": []}}})" << "\n";
  }
  const auto odd = cli({"render", "--log", dir / "odd.jsonl", "--csv", dir / "odd.csv"});
  CHECK(odd.code == kExitOk);
  CHECK(odd.err.find("Mystery") != std::string::npos);
  CHECK(read_csv(fs::path(dir / "odd.csv"))[0] == std::vector<std::string>{"iteration", "time_s"});

  {
    std::ofstream f(dir / "bad.jsonl");
    f << bytes.substr(0, bytes.find('\n') + 1) << "{oops\n";
  }
  const auto bad = cli({"render", "--log", dir / "bad.jsonl", "--svg", dir / "bad.svg"});
  CHECK(bad.code == kExitFailure);
  CHECK(bad.err.find("line 2") != std::string::npos);

  { std::ofstream f(dir / "empty.jsonl"); }
  CHECK(cli({"render", "--log", dir / "empty.jsonl", "--svg", dir / "empty.svg"}).code == kExitOk);
  CHECK(slurp(dir / "empty.svg").find("not tracked") != std::string::npos);

  CHECK(cli({"bench", "--problem", "two_param_regression", "--repeats", "1", "--out", dir / "b.csv"}).code ==
        kExitUsage);
  const auto bench = cli({"bench", "--problem", "two_param_regression", "--tiers", "economy,full", "--intervals",
                          "1,8", "--iterations", "8", "--out", dir / "b.csv"});
  REQUIRE_MESSAGE(bench.code == kExitOk, bench.err);
  const auto table = read_csv(fs::path(dir / "b.csv"));
  REQUIRE(table.size() == 5);
  CHECK(table[0] == std::vector<std::string>{"tier", "interval", "seconds_per_step", "ratio"});
  CHECK(table[1][0] == "economy");
  CHECK(table[4][0] == "full");
  CHECK(table[4][1] == "8");
}

// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSONL event logs and CSV export.
//
// One event per line:
//   {"iteration": 12, "time_s": 0.0, "quantities": {"GradNorm": {"kind": "scalar",
//    "payload": 0.5, "flags": []}, ...}}
// Kinds are scalar, vector, hist1d ({"edges", "counts"}) and hist2d
// ({"x_edges", "y_edges", "counts"} with x-major counts). A quantity may carry
// a "meta" object of named numbers. Non-finite numbers are written as the
// strings "nan", "inf" and "-inf". A missing time_s reads as 0.

#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "trainscope/runner.hpp"

namespace trainscope {

std::string serialize_event(const TrackEvent& event);

/// Throws ParseError describing the first problem found.
TrackEvent parse_event(std::string_view line);

/// Reads a whole log; blank lines are skipped. Errors name the 1-based line.
std::vector<TrackEvent> read_log(std::istream& in);
std::vector<TrackEvent> read_log(const std::filesystem::path& path);

/// Appends events to a stream, one flushed line per event.
class LogWriter {
 public:
  explicit LogWriter(std::ostream& out) : out_(out) {}
  void write(const TrackEvent& event);
  std::size_t written() const { return written_; }

 private:
  std::ostream& out_;
  std::size_t written_ = 0;
};

/// Number formatting used in CSV: 17 significant digits, or nan/inf/-inf.
std::string format_number(double v);

/// Quotes a CSV field when it holds a comma, quote, CR or LF.
std::string csv_field(std::string_view s);

/// RFC 4180 reader: rows of unquoted fields.
std::vector<std::vector<std::string>> read_csv(std::istream& in);
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

/// Writes one row per event with a column per scalar quantity (empty when
/// absent), plus a long-format sidecar "<stem>.<name>.csv" next to `path` for
/// every vector or histogram quantity. Quantities for which `keep` returns
/// false are left out. Returns the paths written, main file first.
std::vector<std::filesystem::path> export_csv(const std::vector<TrackEvent>& events,
                                              const std::filesystem::path& path,
                                              const std::function<bool(const std::string&)>& keep = {});

}  // namespace trainscope

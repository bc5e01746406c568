// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainscope/logio.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "trainscope/errors.hpp"

namespace trainscope {
namespace {

using nlohmann::json;

json number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double read_number(const json& j, const char* what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "nan") return NAN;
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
  }
  throw ParseError(std::string(what) + ": expected a number");
}

json numbers(const std::vector<double>& xs) {
  json a = json::array();
  for (double x : xs) a.push_back(number(x));
  return a;
}

std::vector<double> read_numbers(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string(what) + ": expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) out.push_back(read_number(x, what));
  return out;
}

std::vector<std::int64_t> read_counts(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string(what) + ": expected an array");
  std::vector<std::int64_t> out;
  out.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number_integer()) throw ParseError(std::string(what) + ": counts must be integers");
    out.push_back(x.get<std::int64_t>());
  }
  return out;
}

const json& field(const json& obj, const char* key) {
  if (!obj.is_object()) throw ParseError(std::string("expected an object holding '") + key + "'");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing field '") + key + "'");
  return *it;
}

json quantity_to_json(const QuantityValue& q) {
  json j;
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, double>) {
          j["kind"] = "scalar";
          j["payload"] = number(d);
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          j["kind"] = "vector";
          j["payload"] = numbers(d);
        } else if constexpr (std::is_same_v<T, Hist1d>) {
          j["kind"] = "hist1d";
          j["payload"] = {{"edges", numbers(d.edges)}, {"counts", d.counts}};
        } else {
          j["kind"] = "hist2d";
          j["payload"] = {{"x_edges", numbers(d.x_edges)}, {"y_edges", numbers(d.y_edges)}, {"counts", d.counts}};
        }
      },
      q.data);
  j["flags"] = q.flags;
  if (!q.meta.empty()) {
    json meta = json::object();
    for (const auto& [k, v] : q.meta) meta[k] = number(v);
    j["meta"] = meta;
  }
  return j;
}

QuantityValue quantity_from_json(const json& j) {
  const json& kind_j = field(j, "kind");
  if (!kind_j.is_string()) throw ParseError("kind must be a string");
  const std::string kind = kind_j.get<std::string>();
  const json& payload = field(j, "payload");
  QuantityValue q;
  if (kind == "scalar") {
    q.data = read_number(payload, "scalar payload");
  } else if (kind == "vector") {
    q.data = read_numbers(payload, "vector payload");
  } else if (kind == "hist1d") {
    Hist1d h{read_numbers(field(payload, "edges"), "edges"), read_counts(field(payload, "counts"), "counts")};
    if (h.edges.size() != h.counts.size() + 1) throw ParseError("hist1d: edges must be one longer than counts");
    q.data = std::move(h);
  } else if (kind == "hist2d") {
    Hist2d h{read_numbers(field(payload, "x_edges"), "x_edges"), read_numbers(field(payload, "y_edges"), "y_edges"),
             read_counts(field(payload, "counts"), "counts")};
    if (h.x_edges.size() < 2 || h.y_edges.size() < 2 || h.counts.size() != h.x_bins() * h.y_bins()) {
      throw ParseError("hist2d: counts do not match the edges");
    }
    q.data = std::move(h);
  } else {
    throw ParseError("unknown quantity kind '" + kind + "'");
  }
  const json& flags = field(j, "flags");
  if (!flags.is_array()) throw ParseError("flags must be an array");
  for (const auto& f : flags) {
    if (!f.is_string()) throw ParseError("flags must be strings");
    q.flags.push_back(f.get<std::string>());
  }
  if (auto it = j.find("meta"); it != j.end()) {
    if (!it->is_object()) throw ParseError("meta must be an object");
    for (const auto& [k, v] : it->items()) q.meta[k] = read_number(v, "meta");
  }
  return q;
}

std::filesystem::path sidecar_path(const std::filesystem::path& main, const std::string& name) {
  std::filesystem::path p = main;
  p.replace_filename(main.stem().string() + "." + name + ".csv");
  return p;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out << ',';
    out << csv_field(fields[i]);
  }
  out << "\r\n";
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

std::string serialize_event(const TrackEvent& event) {
  json j;
  j["iteration"] = event.iteration;
  j["time_s"] = number(event.time_s);
  json qs = json::object();
  for (const auto& [name, q] : event.quantities) qs[name] = quantity_to_json(q);
  j["quantities"] = qs;
  return j.dump();
}

TrackEvent parse_event(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("event must be a JSON object");
  TrackEvent event;
  const json& it = field(j, "iteration");
  if (!it.is_number_unsigned()) throw ParseError("iteration must be a non-negative integer");
  event.iteration = it.get<std::size_t>();
  if (auto t = j.find("time_s"); t != j.end()) event.time_s = read_number(*t, "time_s");
  const json& qs = field(j, "quantities");
  if (!qs.is_object()) throw ParseError("quantities must be an object");
  for (const auto& [name, q] : qs.items()) {
    try {
      event.quantities[name] = quantity_from_json(q);
    } catch (const ParseError& e) {
      throw ParseError("quantity '" + name + "': " + e.what());
    }
  }
  return event;
}

std::vector<TrackEvent> read_log(std::istream& in) {
  std::vector<TrackEvent> events;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      events.push_back(parse_event(line));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return events;
}

std::vector<TrackEvent> read_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open log '" + path.string() + "'");
  return read_log(in);
}

void LogWriter::write(const TrackEvent& event) {
  const std::string line = serialize_event(event) + "\n";
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
  if (!out_) throw Error("log write failed");
  ++written_;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false, any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          cell += '"';
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && in.peek() == '\n') in.get(c);
      row.push_back(std::move(cell));
      cell.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      cell += c;
    }
  }
  if (quoted) throw ParseError("csv: unterminated quoted field");
  if (any) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return read_csv(in);
}

std::vector<std::filesystem::path> export_csv(const std::vector<TrackEvent>& events,
                                              const std::filesystem::path& path,
                                              const std::function<bool(const std::string&)>& keep) {
  std::set<std::string> scalars;
  std::map<std::string, std::vector<std::size_t>> others;  // name -> event indices
  for (std::size_t i = 0; i < events.size(); ++i) {
    for (const auto& [name, q] : events[i].quantities) {
      if (keep && !keep(name)) continue;
      if (q.is_scalar()) scalars.insert(name);
      else others[name].push_back(i);
    }
  }

  std::vector<std::filesystem::path> written = {path};
  {
    std::ofstream out = open_for_write(path);
    std::vector<std::string> header = {"iteration", "time_s"};
    header.insert(header.end(), scalars.begin(), scalars.end());
    write_row(out, header);
    for (const auto& e : events) {
      std::vector<std::string> row = {std::to_string(e.iteration), format_number(e.time_s)};
      for (const auto& name : scalars) {
        auto it = e.quantities.find(name);
        row.push_back(it != e.quantities.end() && it->second.is_scalar() ? format_number(it->second.scalar()) : "");
      }
      write_row(out, row);
    }
    if (!out) throw Error("write failed for '" + path.string() + "'");
  }

  for (const auto& [name, indices] : others) {
    const std::filesystem::path side = sidecar_path(path, name);
    std::ofstream out = open_for_write(side);
    const QuantityData& first = events[indices.front()].quantities.at(name).data;
    if (std::holds_alternative<std::vector<double>>(first)) {
      write_row(out, {"iteration", "index", "value"});
    } else if (std::holds_alternative<Hist1d>(first)) {
      write_row(out, {"iteration", "bin", "lo", "hi", "count"});
    } else {
      write_row(out, {"iteration", "x_bin", "y_bin", "x_lo", "x_hi", "y_lo", "y_hi", "count"});
    }
    for (std::size_t i : indices) {
      const std::string it = std::to_string(events[i].iteration);
      const QuantityData& d = events[i].quantities.at(name).data;
      if (const auto* v = std::get_if<std::vector<double>>(&d)) {
        for (std::size_t k = 0; k < v->size(); ++k) write_row(out, {it, std::to_string(k), format_number((*v)[k])});
      } else if (const auto* h = std::get_if<Hist1d>(&d)) {
        for (std::size_t k = 0; k < h->counts.size(); ++k) {
          write_row(out, {it, std::to_string(k), format_number(h->edges[k]), format_number(h->edges[k + 1]),
                          std::to_string(h->counts[k])});
        }
      } else if (const auto* h2 = std::get_if<Hist2d>(&d)) {
        for (std::size_t x = 0; x < h2->x_bins(); ++x) {
          for (std::size_t y = 0; y < h2->y_bins(); ++y) {
            write_row(out, {it, std::to_string(x), std::to_string(y), format_number(h2->x_edges[x]),
                            format_number(h2->x_edges[x + 1]), format_number(h2->y_edges[y]),
                            format_number(h2->y_edges[y + 1]), std::to_string(h2->at(x, y))});
          }
        }
      }
    }
    if (!out) throw Error("write failed for '" + side.string() + "'");
    written.push_back(side);
  }
  return written;
}

}  // namespace trainscope

// Copyright 2026 The TransOpt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "transopt/network.h"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <optional>
#include <sstream>

#include "transopt/error.h"

namespace transopt {

Network::Network(int node_count, int zone_count, std::vector<Link> links,
                 int first_thru_node)
    : node_count_(node_count),
      zone_count_(zone_count),
      first_thru_node_(first_thru_node),
      links_(std::move(links)),
      adjacency_(static_cast<std::size_t>(std::max(node_count, 0))) {
  for (std::size_t i = 0; i < links_.size(); ++i) {
    const int from = links_[i].from_node;
    if (has_node(from)) adjacency_[from - 1].push_back(i);
  }
}

std::span<const std::size_t> Network::outgoing(int node) const {
  if (!has_node(node)) return {};
  return adjacency_[node - 1];
}

void OdMatrix::set(int origin, int destination, double demand) {
  if (!std::isfinite(demand) || demand < 0.0) {
    throw ValidationError(fmt::format("demand {} -> {} is {}; must be >= 0",
                                      origin, destination, demand));
  }
  if (origin == destination) {
    if (demand == 0.0) return;
    throw ValidationError(
        fmt::format("diagonal demand {} -> {} is not allowed", origin,
                    destination));
  }
  const auto in_range = [this](int zone) {
    return zone >= 1 && (zone_count_ <= 0 || zone <= zone_count_);
  };
  if (!in_range(origin) || !in_range(destination)) {
    throw ValidationError(
        fmt::format("pair {} -> {} lies outside zones 1..{}", origin,
                    destination, zone_count_));
  }
  if (demand == 0.0) {
    demand_.erase({origin, destination});
  } else {
    demand_[{origin, destination}] = demand;
  }
}

double OdMatrix::get(int origin, int destination) const {
  const auto it = demand_.find({origin, destination});
  return it == demand_.end() ? 0.0 : it->second;
}

double OdMatrix::total() const {
  double sum = 0.0;
  for (const auto& [pair, value] : demand_) sum += value;
  return sum;
}

std::vector<OdPair> OdMatrix::pairs() const {
  std::vector<OdPair> out;
  out.reserve(demand_.size());
  for (const auto& [pair, value] : demand_) out.push_back(pair);
  return out;
}

std::vector<double> OdMatrix::flatten() const {
  std::vector<double> out;
  out.reserve(demand_.size());
  for (const auto& [pair, value] : demand_) out.push_back(value);
  return out;
}

OdMatrix OdMatrix::unflatten(int zone_count, std::span<const OdPair> pairs,
                             std::span<const double> values) {
  if (pairs.size() != values.size()) {
    throw ValidationError(fmt::format("{} pairs but {} values", pairs.size(),
                                      values.size()));
  }
  OdMatrix od(zone_count);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    od.set(pairs[i].first, pairs[i].second, values[i]);
  }
  return od;
}

OdMatrix OdMatrix::scaled(double factor) const {
  OdMatrix out(zone_count_);
  for (const auto& [pair, value] : demand_) {
    out.set(pair.first, pair.second, value * factor);
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value))
    return std::nullopt;
  return value;
}

double parse_number(std::string_view s, int line, const char* what) {
  const auto value = to_double(s);
  if (!value) {
    throw ParseError(line, fmt::format("{} '{}' is not a number", what, s));
  }
  return *value;
}

int parse_integer(std::string_view s, int line, const char* what) {
  const double value = parse_number(s, line, what);
  if (value != std::floor(value) || std::abs(value) > 1e9) {
    throw ParseError(line, fmt::format("{} '{}' is not an integer", what, s));
  }
  return static_cast<int>(value);
}

struct Metadata {
  std::map<std::string, std::string> values;
  bool terminated = false;
  std::size_t body_start = 0;  // index of the first line after the header
};

// Reads `<KEY> value` lines up to `<END OF METADATA>`. Comment and blank
// lines are allowed in between.
Metadata read_metadata(const std::vector<std::string_view>& lines) {
  Metadata meta;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty() || line.front() == '~') continue;
    if (line.front() != '<') {
      meta.body_start = i;
      return meta;
    }
    const auto close = line.find('>');
    if (close == std::string_view::npos) {
      throw ParseError(static_cast<int>(i + 1), "unterminated metadata tag");
    }
    std::string key(trim(line.substr(1, close - 1)));
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return std::toupper(c); });
    if (key == "END OF METADATA") {
      meta.terminated = true;
      meta.body_start = i + 1;
      return meta;
    }
    meta.values[key] = std::string(trim(line.substr(close + 1)));
  }
  meta.body_start = lines.size();
  return meta;
}

int required_count(const Metadata& meta, const std::string& key) {
  const auto it = meta.values.find(key);
  if (it == meta.values.end()) {
    throw ParseError(0, fmt::format("missing metadata header <{}>", key));
  }
  const auto value = to_double(it->second);
  if (!value || *value < 0 || *value != std::floor(*value)) {
    throw ParseError(0, fmt::format("metadata <{}> has invalid value '{}'",
                                    key, it->second));
  }
  return static_cast<int>(*value);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shortest round-trip representation.
std::string number(double v) { return fmt::format("{}", v); }

}  // namespace

Network parse_tntp_network(std::string_view text) {
  const auto lines = split_lines(text);
  const Metadata meta = read_metadata(lines);
  if (!meta.terminated) {
    throw ParseError(0, "missing <END OF METADATA> line");
  }
  const int nodes = required_count(meta, "NUMBER OF NODES");
  const int link_count = required_count(meta, "NUMBER OF LINKS");
  const int zones = required_count(meta, "NUMBER OF ZONES");
  int first_thru = 1;
  if (meta.values.contains("FIRST THRU NODE")) {
    first_thru = required_count(meta, "FIRST THRU NODE");
  }

  constexpr std::size_t kColumns = 10;
  std::vector<Link> links;
  for (std::size_t i = meta.body_start; i < lines.size(); ++i) {
    const int line_no = static_cast<int>(i + 1);
    auto line = trim(lines[i]);
    if (line.empty() || line.front() == '~') continue;
    const auto semicolon = line.find(';');
    if (semicolon == std::string_view::npos) {
      throw ParseError(line_no, "link row is missing the ';' terminator");
    }
    if (!trim(line.substr(semicolon + 1)).empty()) {
      throw ParseError(line_no, "unexpected text after ';'");
    }
    const auto fields = split_fields(line.substr(0, semicolon));
    if (fields.size() != kColumns) {
      throw ParseError(line_no, fmt::format("expected {} columns, found {}",
                                            kColumns, fields.size()));
    }
    Link link;
    link.id = static_cast<int>(links.size()) + 1;
    link.from_node = parse_integer(fields[0], line_no, "init_node");
    link.to_node = parse_integer(fields[1], line_no, "term_node");
    link.capacity = parse_number(fields[2], line_no, "capacity");
    link.length = parse_number(fields[3], line_no, "length");
    link.free_flow_time = parse_number(fields[4], line_no, "free_flow_time");
    link.vdf_alpha = parse_number(fields[5], line_no, "b");
    link.vdf_beta = parse_number(fields[6], line_no, "power");
    link.speed = parse_number(fields[7], line_no, "speed");
    link.toll = parse_number(fields[8], line_no, "toll");
    link.type = parse_integer(fields[9], line_no, "link_type");
    links.push_back(link);
  }
  if (static_cast<int>(links.size()) != link_count) {
    throw ParseError(0, fmt::format("<NUMBER OF LINKS> is {} but {} rows found",
                                    link_count, links.size()));
  }
  return Network(nodes, zones, std::move(links), first_thru);
}

OdMatrix parse_tntp_trips(std::string_view text) {
  const auto lines = split_lines(text);
  const Metadata meta = read_metadata(lines);
  const int zones = meta.values.contains("NUMBER OF ZONES")
                        ? required_count(meta, "NUMBER OF ZONES")
                        : 0;

  struct Entry {
    int origin, destination, line;
    double demand;
  };
  std::vector<Entry> entries;
  std::optional<int> origin;
  for (std::size_t i = meta.body_start; i < lines.size(); ++i) {
    const int line_no = static_cast<int>(i + 1);
    auto line = trim(lines[i]);
    if (line.empty() || line.front() == '~') continue;
    if (line.starts_with("Origin") || line.starts_with("origin")) {
      const auto fields = split_fields(line.substr(6));
      if (fields.size() != 1) {
        throw ParseError(line_no, "expected 'Origin <zone>'");
      }
      origin = parse_integer(fields[0], line_no, "origin");
      continue;
    }
    if (!origin) throw ParseError(line_no, "demand entry before any Origin");
    std::size_t start = 0;
    while (start < line.size()) {
      auto end = line.find(';', start);
      if (end == std::string_view::npos) end = line.size();
      const auto chunk = trim(line.substr(start, end - start));
      start = end + 1;
      if (chunk.empty()) continue;
      const auto colon = chunk.find(':');
      if (colon == std::string_view::npos) {
        throw ParseError(line_no, fmt::format("expected 'dest : flow', got '{}'",
                                              chunk));
      }
      const int dest = parse_integer(chunk.substr(0, colon), line_no,
                                     "destination");
      const double flow = parse_number(chunk.substr(colon + 1), line_no,
                                       "flow");
      entries.push_back({*origin, dest, line_no, flow});
    }
  }

  int zone_count = zones;
  if (zone_count == 0) {
    for (const auto& e : entries)
      zone_count = std::max({zone_count, e.origin, e.destination});
  }
  OdMatrix od(zone_count);
  for (const auto& e : entries) {
    if (e.origin == e.destination || e.demand == 0.0) {
      if (e.demand < 0.0) {
        throw ValidationError(fmt::format("line {}: negative demand {}", e.line,
                                          e.demand));
      }
      continue;
    }
    try {
      od.set(e.origin, e.destination, e.demand);
    } catch (const ValidationError& err) {
      throw ValidationError(fmt::format("line {}: {}", e.line, err.what()));
    }
  }
  return od;
}

Network load_tntp_network(const std::string& path) {
  return parse_tntp_network(read_file(path));
}

OdMatrix load_tntp_trips(const std::string& path) {
  return parse_tntp_trips(read_file(path));
}

std::string serialize_tntp_network(const Network& net) {
  std::string out;
  out += fmt::format("<NUMBER OF ZONES> {}\n", net.zone_count());
  out += fmt::format("<NUMBER OF NODES> {}\n", net.node_count());
  out += fmt::format("<FIRST THRU NODE> {}\n", net.first_thru_node());
  out += fmt::format("<NUMBER OF LINKS> {}\n", net.link_count());
  out += "<END OF METADATA>\n\n";
  out += "~\tinit_node\tterm_node\tcapacity\tlength\tfree_flow_time\tb\tpower"
         "\tspeed\ttoll\tlink_type\t;\n";
  for (const Link& l : net.links()) {
    out += fmt::format("\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t;\n",
                       l.from_node, l.to_node, number(l.capacity),
                       number(l.length), number(l.free_flow_time),
                       number(l.vdf_alpha), number(l.vdf_beta), number(l.speed),
                       number(l.toll), l.type);
  }
  return out;
}

std::string serialize_tntp_trips(const OdMatrix& od) {
  std::string out;
  out += fmt::format("<NUMBER OF ZONES> {}\n", od.zone_count());
  out += fmt::format("<TOTAL OD FLOW> {}\n", number(od.total()));
  out += "<END OF METADATA>\n\n";
  int current = 0;
  for (const auto& [pair, value] : od.entries()) {
    if (pair.first != current) {
      current = pair.first;
      out += fmt::format("\nOrigin\t{}\n", current);
    }
    out += fmt::format("{} : {};\n", pair.second, number(value));
  }
  return out;
}

std::vector<std::string> validate_network(const Network& net) {
  std::vector<std::string> violations;
  if (net.zone_count() > net.node_count()) {
    violations.push_back(fmt::format("zone count {} exceeds node count {}",
                                     net.zone_count(), net.node_count()));
  }
  for (const Link& l : net.links()) {
    if (!net.has_node(l.from_node) || !net.has_node(l.to_node)) {
      violations.push_back(fmt::format(
          "link {} ({} -> {}) references a node outside 1..{}", l.id,
          l.from_node, l.to_node, net.node_count()));
    }
    if (l.from_node == l.to_node) {
      violations.push_back(
          fmt::format("link {} is a self-loop on node {}", l.id, l.from_node));
    }
    if (!(l.capacity > 0.0)) {
      violations.push_back(
          fmt::format("link {} has capacity {}; must be > 0", l.id, l.capacity));
    }
    if (!(l.free_flow_time > 0.0)) {
      violations.push_back(fmt::format(
          "link {} has free_flow_time {}; must be > 0", l.id, l.free_flow_time));
    }
    if (!(l.vdf_alpha >= 0.0)) {
      violations.push_back(
          fmt::format("link {} has b {}; must be >= 0", l.id, l.vdf_alpha));
    }
    if (!(l.vdf_beta >= 1.0)) {
      violations.push_back(
          fmt::format("link {} has power {}; must be >= 1", l.id, l.vdf_beta));
    }
  }

  // Zone-to-zone reachability, honouring the no-through-traffic rule.
  const int zones = std::min(net.zone_count(), net.node_count());
  for (int origin = 1; origin <= zones; ++origin) {
    std::vector<char> seen(net.node_count() + 1, 0);
    std::deque<int> queue{origin};
    seen[origin] = 1;
    while (!queue.empty()) {
      const int node = queue.front();
      queue.pop_front();
      if (node != origin && !net.allows_through(node)) continue;
      for (const std::size_t li : net.outgoing(node)) {
        const int next = net.link(li).to_node;
        if (net.has_node(next) && !seen[next]) {
          seen[next] = 1;
          queue.push_back(next);
        }
      }
    }
    std::vector<int> missing;
    for (int dest = 1; dest <= zones; ++dest) {
      if (!seen[dest]) missing.push_back(dest);
    }
    if (!missing.empty()) {
      violations.push_back(fmt::format("zone {} cannot reach zone(s) {}",
                                       origin, fmt::join(missing, ", ")));
    }
  }
  return violations;
}

void to_json(nlohmann::json& j, const Link& link) {
  j = nlohmann::json{{"id", link.id},
                     {"from_node", link.from_node},
                     {"to_node", link.to_node},
                     {"capacity", link.capacity},
                     {"length", link.length},
                     {"free_flow_time", link.free_flow_time},
                     {"vdf_alpha", link.vdf_alpha},
                     {"vdf_beta", link.vdf_beta},
                     {"speed", link.speed},
                     {"toll", link.toll},
                     {"type", link.type}};
}

void from_json(const nlohmann::json& j, Link& link) {
  j.at("id").get_to(link.id);
  j.at("from_node").get_to(link.from_node);
  j.at("to_node").get_to(link.to_node);
  j.at("capacity").get_to(link.capacity);
  link.length = j.value("length", 0.0);
  j.at("free_flow_time").get_to(link.free_flow_time);
  j.at("vdf_alpha").get_to(link.vdf_alpha);
  j.at("vdf_beta").get_to(link.vdf_beta);
  link.speed = j.value("speed", 0.0);
  link.toll = j.value("toll", 0.0);
  link.type = j.value("type", 1);
}

void to_json(nlohmann::json& j, const Network& net) {
  j = nlohmann::json{{"format", "transopt.network"},
                     {"version", 1},
                     {"node_count", net.node_count()},
                     {"zone_count", net.zone_count()},
                     {"first_thru_node", net.first_thru_node()},
                     {"links", std::vector<Link>(net.links().begin(),
                                                 net.links().end())}};
}

void from_json(const nlohmann::json& j, Network& net) {
  net = Network(j.at("node_count").get<int>(), j.at("zone_count").get<int>(),
                j.at("links").get<std::vector<Link>>(),
                j.value("first_thru_node", 1));
}

void to_json(nlohmann::json& j, const OdMatrix& od) {
  auto demand = nlohmann::json::array();
  for (const auto& [pair, value] : od.entries()) {
    demand.push_back({pair.first, pair.second, value});
  }
  j = nlohmann::json{{"format", "transopt.od_matrix"},
                     {"version", 1},
                     {"zone_count", od.zone_count()},
                     {"demand", demand}};
}

void from_json(const nlohmann::json& j, OdMatrix& od) {
  od = OdMatrix(j.at("zone_count").get<int>());
  for (const auto& row : j.at("demand")) {
    od.set(row.at(0).get<int>(), row.at(1).get<int>(), row.at(2).get<double>());
  }
}

}  // namespace transopt

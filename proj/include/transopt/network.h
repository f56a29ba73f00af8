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

// Road networks and origin-destination demand in the TNTP text format
// (the format of the public TransportationNetworks repository).
//
// Net files carry metadata lines (`<NUMBER OF NODES> 24`), terminated by
// `<END OF METADATA>`, followed by one row per directed link:
//
//   init_node term_node capacity length free_flow_time b power speed toll type ;
//
// Trips files carry `Origin n` blocks of `dest : flow;` entries. Lines
// starting with `~` are comments. Node ids are 1-based in files; all
// internal indices (link index, node index) are 0-based.

#ifndef TRANSOPT_NETWORK_H_
#define TRANSOPT_NETWORK_H_

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace transopt {

struct Link {
  int id = 0;  // 1-based, file order
  int from_node = 0;
  int to_node = 0;
  double capacity = 1.0;        // vehicles/hour
  double length = 0.0;          // parsed, unused
  double free_flow_time = 1.0;  // minutes
  double vdf_alpha = 0.15;      // BPR "B" column
  double vdf_beta = 4.0;        // BPR "Power" column
  double speed = 0.0;           // parsed, unused
  double toll = 0.0;            // parsed, unused
  int type = 1;                 // parsed, unused

  friend bool operator==(const Link&, const Link&) = default;
};

// Directed road graph. Immutable after construction; safe to share across
// threads. Nodes are the ids 1..node_count().
class Network {
 public:
  Network() = default;
  // `first_thru_node` follows the TNTP convention: nodes with a smaller id
  // may start or end a path but are never traversed.
  Network(int node_count, int zone_count, std::vector<Link> links,
          int first_thru_node = 1);

  int node_count() const { return node_count_; }
  int zone_count() const { return zone_count_; }
  int first_thru_node() const { return first_thru_node_; }
  std::span<const Link> links() const { return links_; }
  const Link& link(std::size_t index) const { return links_.at(index); }
  std::size_t link_count() const { return links_.size(); }

  // Outgoing link indices of a 1-based node id; empty for unknown nodes.
  std::span<const std::size_t> outgoing(int node) const;

  bool has_node(int node) const { return node >= 1 && node <= node_count_; }
  bool is_zone(int node) const { return node >= 1 && node <= zone_count_; }
  bool allows_through(int node) const { return node >= first_thru_node_; }

  friend bool operator==(const Network& a, const Network& b) {
    return a.node_count_ == b.node_count_ && a.zone_count_ == b.zone_count_ &&
           a.first_thru_node_ == b.first_thru_node_ && a.links_ == b.links_;
  }

 private:
  int node_count_ = 0;
  int zone_count_ = 0;
  int first_thru_node_ = 1;
  std::vector<Link> links_;
  std::vector<std::vector<std::size_t>> adjacency_;  // by node index
};

using OdPair = std::pair<int, int>;  // (origin zone, destination zone)

// Origin-destination demand. Only strictly positive off-diagonal entries are
// stored; iteration order is lexicographic (origin, destination).
class OdMatrix {
 public:
  OdMatrix() = default;
  explicit OdMatrix(int zone_count) : zone_count_(zone_count) {}

  int zone_count() const { return zone_count_; }
  std::size_t pair_count() const { return demand_.size(); }
  bool empty() const { return demand_.empty(); }

  // Sets one demand entry. Zero removes the pair. Throws ValidationError on
  // negative or non-finite demand, diagonal pairs, or zones outside
  // 1..zone_count (when zone_count > 0).
  void set(int origin, int destination, double demand);
  double get(int origin, int destination) const;

  const std::map<OdPair, double>& entries() const { return demand_; }
  double total() const;

  // Nonzero pairs in lexicographic order.
  std::vector<OdPair> pairs() const;
  std::vector<double> flatten() const;
  // Inverse of flatten(): entries of `pairs` take `values`, zeros dropped.
  static OdMatrix unflatten(int zone_count, std::span<const OdPair> pairs,
                            std::span<const double> values);

  OdMatrix scaled(double factor) const;

  friend bool operator==(const OdMatrix&, const OdMatrix&) = default;

 private:
  int zone_count_ = 0;
  std::map<OdPair, double> demand_;
};

Network parse_tntp_network(std::string_view text);
OdMatrix parse_tntp_trips(std::string_view text);

Network load_tntp_network(const std::string& path);
OdMatrix load_tntp_trips(const std::string& path);

std::string serialize_tntp_network(const Network& net);
std::string serialize_tntp_trips(const OdMatrix& od);

// Empty iff every Network invariant holds. Each entry names the offending
// link, node or zone pair.
std::vector<std::string> validate_network(const Network& net);

void to_json(nlohmann::json& j, const Link& link);
void from_json(const nlohmann::json& j, Link& link);
void to_json(nlohmann::json& j, const Network& net);
void from_json(const nlohmann::json& j, Network& net);
void to_json(nlohmann::json& j, const OdMatrix& od);
void from_json(const nlohmann::json& j, OdMatrix& od);

}  // namespace transopt

#endif  // TRANSOPT_NETWORK_H_

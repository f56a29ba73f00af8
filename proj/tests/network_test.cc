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

#include <string>

#include "doctest.h"
#include "transopt/error.h"

namespace transopt {
namespace {

const std::string kDataDir = TRANSOPT_DATA_DIR;

const char* kTinyNet =
    "<NUMBER OF ZONES> 2\n"
    "<NUMBER OF NODES> 3\n"
    "<FIRST THRU NODE> 1\n"
    "<NUMBER OF LINKS> 3\n"
    "<END OF METADATA>\n"
    "\n"
    "~ init term cap len fft b power speed toll type ;\n"
    "\t1\t3\t100\t1\t2\t0.15\t4\t0\t0\t1\t;\n"
    "\t3\t2\t100\t1\t3\t0.15\t4\t0\t0\t1\t;\n"
    "\t2\t1\t50\t2\t4\t0.5\t2\t0\t0\t1\t;\n";

TEST_CASE("tiny network parses every column") {
  const Network net = parse_tntp_network(kTinyNet);
  CHECK(net.node_count() == 3);
  CHECK(net.zone_count() == 2);
  REQUIRE(net.link_count() == 3);
  const Link& l = net.link(2);
  CHECK(l.id == 3);
  CHECK(l.from_node == 2);
  CHECK(l.to_node == 1);
  CHECK(l.capacity == 50.0);
  CHECK(l.length == 2.0);
  CHECK(l.free_flow_time == 4.0);
  CHECK(l.vdf_alpha == 0.5);
  CHECK(l.vdf_beta == 2.0);
  CHECK(net.outgoing(1).size() == 1);
  CHECK(net.outgoing(7).empty());
  CHECK(validate_network(net).empty());
}

TEST_CASE("Sioux-Falls fixture has 24 zones, 24 nodes and 76 links") {
  const Network net = load_tntp_network(kDataDir + "/sioux_falls/SiouxFalls_net.tntp");
  CHECK(net.zone_count() == 24);
  CHECK(net.node_count() == 24);
  CHECK(net.link_count() == 76);
  CHECK(net.link(0).from_node == 1);
  CHECK(net.link(0).to_node == 2);
  CHECK(validate_network(net).empty());

  const OdMatrix od =
      load_tntp_trips(kDataDir + "/sioux_falls/SiouxFalls_trips.tntp");
  CHECK(od.zone_count() == 24);
  CHECK(od.pair_count() == 528);
  CHECK(od.total() == doctest::Approx(360600.0));
  const auto pairs = od.pairs();
  CHECK(pairs.front() == OdPair{1, 2});
  CHECK(pairs[19] == OdPair{1, 21});
  CHECK(od.get(1, 10) == 1300.0);
}

TEST_CASE("network parser reports structural and row errors") {
  SUBCASE("missing metadata header") {
    const std::string text = "<NUMBER OF NODES> 3\n<NUMBER OF LINKS> 0\n"
                             "<END OF METADATA>\n";
    try {
      parse_tntp_network(text);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 0);
      CHECK(std::string(e.what()).find("NUMBER OF ZONES") != std::string::npos);
    }
  }
  SUBCASE("missing end of metadata") {
    CHECK_THROWS_AS(parse_tntp_network("<NUMBER OF ZONES> 1\n"), ParseError);
  }
  SUBCASE("bad number carries the line") {
    std::string text = kTinyNet;
    text.replace(text.find("\t3\t2\t100"), 8, "\t3\t2\tabc");
    try {
      parse_tntp_network(text);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 9);
    }
  }
  SUBCASE("row count mismatch") {
    std::string text = kTinyNet;
    text.replace(text.find("<NUMBER OF LINKS> 3"), 19, "<NUMBER OF LINKS> 4");
    CHECK_THROWS_AS(parse_tntp_network(text), ParseError);
  }
  SUBCASE("short row") {
    std::string text = kTinyNet;
    text += "\t1\t2\t100\t;\n";
    CHECK_THROWS_AS(parse_tntp_network(text), ParseError);
  }
}

TEST_CASE("trips parser drops zeros and the diagonal") {
  const OdMatrix od = parse_tntp_trips(
      "<NUMBER OF ZONES> 3\n<END OF METADATA>\n\n"
      "Origin 1\n 1 : 5.0; 2 : 10.0; 3 : 0.0;\n"
      "Origin 3\n 1 : 2.5;\n");
  CHECK(od.pair_count() == 2);
  CHECK(od.get(1, 2) == 10.0);
  CHECK(od.get(3, 1) == 2.5);
  CHECK(od.get(1, 1) == 0.0);
  CHECK(od.total() == 12.5);
}

TEST_CASE("trips parser validates demand and zones") {
  CHECK_THROWS_AS(parse_tntp_trips("<NUMBER OF ZONES> 2\n<END OF METADATA>\n"
                                   "Origin 1\n 2 : -1.0;\n"),
                  ValidationError);
  CHECK_THROWS_AS(parse_tntp_trips("<NUMBER OF ZONES> 2\n<END OF METADATA>\n"
                                   "Origin 1\n 5 : 1.0;\n"),
                  ValidationError);
  CHECK_THROWS_AS(parse_tntp_trips("<END OF METADATA>\n 2 : 1.0;\n"),
                  ParseError);
  const OdMatrix inferred =
      parse_tntp_trips("<END OF METADATA>\nOrigin 4\n 2 : 1.0;\n");
  CHECK(inferred.zone_count() == 4);
}

TEST_CASE("OdMatrix set, flatten and unflatten") {
  OdMatrix od(3);
  od.set(2, 1, 4.0);
  od.set(1, 3, 7.0);
  od.set(1, 2, 1.0);
  const auto pairs = od.pairs();
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0] == OdPair{1, 2});
  CHECK(pairs[1] == OdPair{1, 3});
  CHECK(pairs[2] == OdPair{2, 1});
  const auto values = od.flatten();
  CHECK(values == std::vector<double>{1.0, 7.0, 4.0});
  CHECK(OdMatrix::unflatten(3, pairs, values) == od);

  od.set(1, 3, 0.0);
  CHECK(od.pair_count() == 2);
  CHECK_THROWS_AS(od.set(1, 1, 1.0), ValidationError);
  CHECK_THROWS_AS(od.set(1, 4, 1.0), ValidationError);
  CHECK_THROWS_AS(od.set(1, 2, -0.5), ValidationError);
  CHECK(od.scaled(2.0).get(2, 1) == 8.0);
}

TEST_CASE("TNTP serialization round-trips") {
  const Network net = load_tntp_network(kDataDir + "/sioux_falls/SiouxFalls_net.tntp");
  CHECK(parse_tntp_network(serialize_tntp_network(net)) == net);
  const OdMatrix od =
      load_tntp_trips(kDataDir + "/sioux_falls/SiouxFalls_trips.tntp");
  CHECK(parse_tntp_trips(serialize_tntp_trips(od)) == od);
}

TEST_CASE("JSON round-trips networks and demand") {
  const Network net = parse_tntp_network(kTinyNet);
  const nlohmann::json j = net;
  CHECK(j.at("format") == "transopt.network");
  CHECK(j.get<Network>() == net);

  OdMatrix od(2);
  od.set(1, 2, 3.5);
  const nlohmann::json jo = od;
  CHECK(jo.get<OdMatrix>() == od);
}

TEST_CASE("validation names the offending link and unreachable zones") {
  std::vector<Link> links{{1, 1, 2, 0.0, 1, 1, 0.15, 4, 0, 0, 1}};
  const Network net(2, 2, links);
  const auto problems = validate_network(net);
  REQUIRE(problems.size() == 2);
  CHECK(problems[0].find("link 1") != std::string::npos);
  CHECK(problems[1].find("zone 2 cannot reach") != std::string::npos);
}

TEST_CASE("zones below the first through node are not traversed") {
  // 1 -> 2 -> 3 with node 2 a zone centroid below first_thru_node 3.
  std::vector<Link> links{{1, 1, 2, 10, 1, 1, 0.15, 4, 0, 0, 1},
                          {2, 2, 3, 10, 1, 1, 0.15, 4, 0, 0, 1},
                          {3, 3, 1, 10, 1, 1, 0.15, 4, 0, 0, 1},
                          {4, 3, 2, 10, 1, 1, 0.15, 4, 0, 0, 1}};
  const Network net(3, 3, links, 3);
  CHECK_FALSE(net.allows_through(2));
  const auto problems = validate_network(net);
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].find("zone 1 cannot reach zone(s) 3") != std::string::npos);
}

}  // namespace
}  // namespace transopt

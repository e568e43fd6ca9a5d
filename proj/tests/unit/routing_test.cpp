#include <gtest/gtest.h>

#include "buddy/routing.hpp"

using namespace buddy;

TEST(RoutingTable, SingleNodeAllLocal) {
  auto t = build_routing_table(std::vector<std::vector<Rank>>{{0, 1}}, 0);
  EXPECT_EQ(t.world_size(), 2u);
  EXPECT_EQ(t.next_hop(0), NextHop::local(0));
  EXPECT_EQ(t.next_hop(1), NextHop::local(1));
  EXPECT_EQ(t.num_hops(), 2u);
}

TEST(RoutingTable, TwoNodes) {
  auto t = build_routing_table(std::vector<std::vector<Rank>>{{0, 1}, {2, 3}}, 0);
  EXPECT_EQ(t.next_hop(0), NextHop::local(0));
  EXPECT_EQ(t.next_hop(1), NextHop::local(1));
  EXPECT_EQ(t.next_hop(2), NextHop::remote(1));
  EXPECT_EQ(t.next_hop(3), NextHop::remote(1));
  EXPECT_EQ(t.hop_index(2), t.hop_index(3));
  EXPECT_EQ(t.num_hops(), 3u);
  EXPECT_EQ(t.node_of(3), 1u);
}

TEST(RoutingTable, SelfOnSecondNode) {
  auto t = build_routing_table(std::vector<std::vector<Rank>>{{0, 1}, {2, 3}}, 1);
  EXPECT_EQ(t.next_hop(0), NextHop::remote(0));
  EXPECT_EQ(t.next_hop(2), NextHop::local(0));
  EXPECT_EQ(t.next_hop(3), NextHop::local(1));
}

TEST(RoutingTable, InterleavedPlacement) {
  auto t = build_routing_table(std::vector<std::vector<Rank>>{{3, 0}, {1, 2}}, 0);
  EXPECT_EQ(t.local_ranks(), (std::vector<Rank>{0, 3}));
  EXPECT_EQ(t.next_hop(0), NextHop::local(0));
  EXPECT_EQ(t.next_hop(3), NextHop::local(1));
  EXPECT_EQ(t.next_hop(1), NextHop::remote(1));
}

TEST(RoutingTable, MissingRankIsConfigFault) {
  EXPECT_THROW(build_routing_table(std::vector<std::vector<Rank>>{{0, 1}, {3}}, 0), config_error);
}

TEST(RoutingTable, DuplicateRankIsConfigFault) {
  EXPECT_THROW(build_routing_table(std::vector<std::vector<Rank>>{{0, 1}, {1, 2}}, 0), config_error);
}

TEST(RoutingTable, FromTopology) {
  auto topo = Topology::uniform(4, 4);
  auto t = build_routing_table(topo, 2);
  for (Rank r = 0; r < 16; ++r) {
    const auto hop = t.next_hop(r);
    if (r / 4 == 2) {
      EXPECT_EQ(hop, NextHop::local(r % 4));
    } else {
      EXPECT_EQ(hop, NextHop::remote(r / 4));
    }
  }
}

TEST(Topology, ParsesRankRanges) {
  auto cfg = KeyValueConfig::parse_string(
      "node.0.address = 127.0.0.1:7000\n"
      "node.0.ranks = 0,1,4-5\n"
      "node.1.address = 127.0.0.1:7001\n"
      "node.1.ranks = 2-3\n");
  auto topo = Topology::from_config(cfg);
  EXPECT_EQ(topo.num_nodes(), 2u);
  EXPECT_EQ(topo.world_size(), 6u);
  EXPECT_EQ(topo.ranks_on(0), (std::vector<Rank>{0, 1, 4, 5}));
  EXPECT_EQ(topo.node(1).port, 7001);
  EXPECT_EQ(topo.node_of(4), 0u);
  EXPECT_EQ(topo.local_slot(4), 2u);
  EXPECT_EQ(topo.rank_peer(0), 2u);
}

TEST(Topology, RejectsBadInput) {
  EXPECT_THROW(Topology::from_config(KeyValueConfig::parse_string("node.0.ranks = 0,2\n")), config_error);
  EXPECT_THROW(Topology::from_config(KeyValueConfig::parse_string("node.0.ranks = 0,0\n")), config_error);
  EXPECT_THROW(Topology::from_config(KeyValueConfig::parse_string("x = 1\n")), config_error);
  EXPECT_THROW(Topology::from_config(KeyValueConfig::parse_string("node.0.ranks = a\n")), config_error);
  EXPECT_THROW(KeyValueConfig::parse_string("novalue\n"), config_error);
}

TEST(Topology, ConfigRoundtrip) {
  auto topo = Topology::uniform(3, 2);
  topo.node(1).port = 4444;
  KeyValueConfig cfg;
  topo.write_config(cfg);
  auto back = Topology::from_config(KeyValueConfig::parse_string(cfg.to_string()));
  EXPECT_EQ(back.world_size(), 6u);
  EXPECT_EQ(back.node(1).port, 4444);
  EXPECT_EQ(back.ranks_on(2), (std::vector<Rank>{4, 5}));
}

#include <gtest/gtest.h>

#include <deque>
#include <random>

#include "buddy/control.hpp"
#include "buddy/quiescence.hpp"

using namespace buddy;

TEST(Control, EncodeDecodeRoundtrip) {
  const ControlMessage msgs[] = {ControlMessage::local_done(), ControlMessage::probe(7),
                                 ControlMessage::ack(3, 1ull << 40, 12, true), ControlMessage::ack(0, 0, 0, false),
                                 ControlMessage::terminate()};
  for (const auto& m : msgs) {
    const auto bytes = encode_control(m);
    auto back = decode_control(bytes);
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(*back, m);
  }
}

TEST(Control, ByteLayout) {
  auto done = encode_control(ControlMessage::local_done());
  ASSERT_EQ(done.size(), 1u);
  EXPECT_EQ(std::to_integer<int>(done[0]), 0x01);
  auto probe = encode_control(ControlMessage::probe(0x01020304));
  ASSERT_EQ(probe.size(), 5u);
  const int expect[] = {0x02, 0x04, 0x03, 0x02, 0x01};
  for (int i = 0; i < 5; ++i) EXPECT_EQ(std::to_integer<int>(probe[i]), expect[i]);
  EXPECT_EQ(encode_control(ControlMessage::ack(1, 2, 3, true)).size(), 22u);
}

TEST(Control, RejectsMalformed) {
  EXPECT_FALSE(decode_control({}));
  std::vector<std::byte> bad_op{std::byte(0x09)};
  EXPECT_FALSE(decode_control(bad_op));
  std::vector<std::byte> short_probe{std::byte(0x02), std::byte(0)};
  EXPECT_FALSE(decode_control(short_probe));
  auto ack = encode_control(ControlMessage::ack(1, 2, 3, true));
  ack[21] = std::byte(7);
  EXPECT_FALSE(decode_control(ack));
}

namespace {

// Agents plus ranks exchanging control messages through one shuffled
// queue. Ranks are modelled only by their counters.
struct Sim {
  struct RankState {
    std::uint64_t sent = 0, received = 0;
    bool voted = false;
    bool terminated = false;
  };

  Sim(std::size_t nodes, std::size_t ranks_per_node, std::uint32_t seed)
      : topo(Topology::uniform(nodes, ranks_per_node)), rng(seed), ranks(nodes * ranks_per_node) {
    for (NodeId n = 0; n < nodes; ++n) {
      std::vector<PeerId> rp;
      for (Rank r : topo.ranks_on(n)) rp.push_back(topo.rank_peer(r));
      agents.emplace_back(n, nodes, rp, Micros(0));
    }
    std::vector<ControlSend> out;
    for (NodeId n = 0; n < nodes; ++n) {
      agents[n].start(now, out);
      enqueue(n, out);
    }
  }

  struct Msg {
    PeerId from, to;
    ControlMessage m;
  };

  void enqueue(PeerId from, std::vector<ControlSend>& out) {
    for (auto& s : out) q.push_back({from, s.to, s.msg});
    out.clear();
  }

  void vote(Rank r) {
    ranks[r].voted = true;
    q.push_back({topo.rank_peer(r), topo.agent_peer(topo.node_of(r)), ControlMessage::local_done()});
  }

  // Delivers one random queued message. False when the queue is empty.
  bool deliver_one() {
    if (q.empty()) return false;
    const std::size_t i = rng() % q.size();
    Msg msg = q[i];
    q.erase(q.begin() + static_cast<std::ptrdiff_t>(i));
    std::vector<ControlSend> out;
    if (topo.is_agent_peer(msg.to)) {
      const bool from_rank = !topo.is_agent_peer(msg.from);
      EXPECT_TRUE(agents[msg.to].handle(msg.from, from_rank, msg.m, now, out));
      enqueue(msg.to, out);
    } else {
      const Rank r = topo.rank_of_peer(msg.to);
      auto& rs = ranks[r];
      if (msg.m.op == ControlOp::probe) {
        q.push_back({msg.to, topo.agent_peer(topo.node_of(r)),
                     ControlMessage::ack(msg.m.round, rs.sent, rs.received, rs.voted)});
      } else if (msg.m.op == ControlOp::terminate) {
        rs.terminated = true;
      }
    }
    return true;
  }

  bool all_terminated() const {
    for (auto& r : ranks)
      if (!r.terminated) return false;
    return true;
  }

  Topology topo;
  std::mt19937 rng;
  std::vector<RankState> ranks;
  std::vector<Quiescence> agents;
  std::deque<Msg> q;
  TimePoint now{};
};

}  // namespace

TEST(Quiescence, SingleNodeNoRanksTerminatesImmediately) {
  Quiescence q(0, 1, {}, Micros(0));
  std::vector<ControlSend> out;
  q.start(TimePoint{}, out);
  EXPECT_TRUE(q.terminated());
  EXPECT_TRUE(out.empty());
}

TEST(Quiescence, BalancedIdleSystemTerminates) {
  Sim sim(3, 2, 1);
  for (Rank r = 0; r < 6; ++r) sim.vote(r);
  int steps = 0;
  while (sim.deliver_one() && steps++ < 10000) {
  }
  EXPECT_TRUE(sim.all_terminated());
  EXPECT_GE(sim.agents[0].rounds(), 2u);
}

TEST(Quiescence, NoTerminationBeforeAllVote) {
  Sim sim(2, 2, 2);
  for (Rank r = 0; r < 3; ++r) sim.vote(r);
  while (sim.deliver_one()) {
  }
  for (auto& a : sim.agents) EXPECT_FALSE(a.terminated());
  EXPECT_EQ(sim.agents[0].rounds(), 0u);
}

TEST(Quiescence, UnbalancedCountsBlockTermination) {
  Sim sim(2, 2, 3);
  sim.ranks[0].sent = 5;
  sim.ranks[3].received = 4;  // one message still in flight
  for (Rank r = 0; r < 4; ++r) sim.vote(r);
  for (int i = 0; i < 2000 && sim.deliver_one(); ++i) {
  }
  for (auto& a : sim.agents) EXPECT_FALSE(a.terminated());
  // The straggler is consumed: termination follows.
  sim.ranks[3].received = 5;
  for (int i = 0; i < 2000 && sim.deliver_one(); ++i) {
  }
  EXPECT_TRUE(sim.all_terminated());
}

TEST(Quiescence, ActivityBetweenRoundsDelaysTermination) {
  for (std::uint32_t seed = 0; seed < 50; ++seed) {
    Sim sim(2, 2, seed);
    for (Rank r = 0; r < 4; ++r) sim.vote(r);
    // A balanced exchange keeps happening for a while after every vote.
    int exchanges = 0;
    bool terminated_during_activity = false;
    for (int i = 0; i < 5000 && sim.deliver_one(); ++i) {
      if (exchanges < 40 && i % 3 == 0) {
        sim.ranks[0].sent++;
        sim.ranks[0].voted = false;
        sim.ranks[2].received++;
        sim.ranks[2].voted = false;
        ++exchanges;
        sim.ranks[0].voted = true;
        sim.ranks[2].voted = true;
        if (sim.agents[0].terminated()) terminated_during_activity = true;
      }
    }
    EXPECT_FALSE(terminated_during_activity);
    EXPECT_TRUE(sim.all_terminated()) << "seed " << seed;
  }
}

TEST(Quiescence, RejectsMisdirectedControl) {
  Quiescence q(1, 2, {5}, Micros(0));
  std::vector<ControlSend> out;
  EXPECT_FALSE(q.handle(0, false, ControlMessage::local_done(), TimePoint{}, out));  // not coordinator
  EXPECT_FALSE(q.handle(9, true, ControlMessage::local_done(), TimePoint{}, out));   // not a local rank
  EXPECT_FALSE(q.handle(1, false, ControlMessage::probe(1), TimePoint{}, out));      // probe not from 0
}

TEST(Quiescence, ProbeIntervalPacesRounds) {
  Quiescence q(0, 1, {7}, Micros(100));
  std::vector<ControlSend> out;
  TimePoint t{};
  q.start(t, out);
  q.handle(7, true, ControlMessage::local_done(), t, out);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].msg, ControlMessage::probe(1));
  out.clear();
  q.handle(7, true, ControlMessage::ack(1, 0, 0, true), t, out);
  EXPECT_TRUE(out.empty());  // round 2 waits for the interval
  q.tick(t + Micros(99), out);
  EXPECT_TRUE(out.empty());
  q.tick(t + Micros(100), out);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].msg, ControlMessage::probe(2));
  out.clear();
  q.handle(7, true, ControlMessage::ack(2, 0, 0, true), t + Micros(100), out);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].msg, ControlMessage::terminate());
  EXPECT_TRUE(q.terminated());
}

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <thread>
#include <vector>

#include "buddy/loopback.hpp"

using namespace buddy;

namespace {

Bundle make_bundle(std::size_t payload_bytes, Rank dst = 0, std::uint8_t fill = 0xAB) {
  Bundle b(payload_bytes + 8);
  std::vector<std::byte> p(payload_bytes, std::byte(fill));
  b.append(dst, p);
  return b;
}

std::vector<Completion> drain(Endpoint& ep, std::size_t want, Micros timeout = Micros(2'000'000)) {
  std::vector<Completion> out;
  const auto deadline = SteadyClock::now() + timeout;
  while (out.size() < want && SteadyClock::now() < deadline) {
    if (ep.poll(out, want - out.size()) == 0) ep.wait(Micros(1000));
  }
  return out;
}

}  // namespace

TEST(Loopback, SingleNodeHasNoPeers) {
  auto fabric = LoopbackFabric::create();
  TransportConfig cfg;
  cfg.self = 0;
  auto ep = connect_all(fabric, cfg);
  EXPECT_TRUE(ep->peers().empty());
}

TEST(Loopback, TwoEndpointsSeeOnePeer) {
  auto fabric = LoopbackFabric::create();
  TransportConfig a, b;
  a.self = 0;
  a.peers = {{1, {}, 0}};
  b.self = 1;
  b.peers = {{0, {}, 0}};
  std::unique_ptr<Endpoint> eb;
  std::thread t([&] { eb = connect_all(fabric, b); });
  auto ea = connect_all(fabric, a);
  t.join();
  EXPECT_EQ(ea->peers(), std::vector<PeerId>{1});
  EXPECT_EQ(eb->peers(), std::vector<PeerId>{0});
}

TEST(Loopback, MissingPeerIsStartupFault) {
  auto fabric = LoopbackFabric::create();
  TransportConfig a;
  a.self = 0;
  a.peers = {{1, {}, 0}};
  a.connect_timeout = std::chrono::milliseconds(50);
  EXPECT_THROW(connect_all(fabric, a), startup_error);
}

TEST(Loopback, DuplicateIdRejected) {
  auto fabric = LoopbackFabric::create();
  auto a = fabric->open(3, {});
  EXPECT_THROW(fabric->open(3, {}), config_error);
}

TEST(Loopback, EchoLength) {
  auto fabric = LoopbackFabric::create();
  auto a = fabric->open(0, {1});
  auto b = fabric->open(1, {0});
  b->post_recv(Bundle(64), 7);
  a->post_send(1, make_bundle(16), 11);
  auto ca = drain(*a, 1);
  ASSERT_EQ(ca.size(), 1u);
  EXPECT_EQ(ca[0].kind, CompletionKind::send);
  EXPECT_EQ(ca[0].id, 11u);
  EXPECT_TRUE(ca[0].ok());
  EXPECT_EQ(ca[0].buffer.tail(), 24u);
  auto cb = drain(*b, 1);
  ASSERT_EQ(cb.size(), 1u);
  EXPECT_EQ(cb[0].kind, CompletionKind::recv);
  EXPECT_EQ(cb[0].peer, 0u);
  EXPECT_EQ(cb[0].id, 7u);
  EXPECT_EQ(cb[0].length, 24u);
  EXPECT_EQ(cb[0].buffer.tail(), 24u);
}

TEST(Loopback, SendToSelf) {
  auto fabric = LoopbackFabric::create();
  auto a = fabric->open(0, {0});
  a->post_recv(Bundle(64));
  a->post_send(0, make_bundle(4));
  auto c = drain(*a, 2);
  ASSERT_EQ(c.size(), 2u);
  int recvs = 0;
  for (auto& x : c) recvs += x.kind == CompletionKind::recv;
  EXPECT_EQ(recvs, 1);
}

TEST(Loopback, HeldUntilReceivePosted) {
  auto fabric = LoopbackFabric::create();
  auto a = fabric->open(0, {1});
  auto b = fabric->open(1, {0});
  a->post_send(1, make_bundle(8));
  EXPECT_TRUE(b->poll().empty());
  EXPECT_TRUE(a->poll().empty());
  EXPECT_EQ(a->pending_sends(1), 1u);
  b->post_recv(Bundle(64));
  EXPECT_EQ(drain(*b, 1).size(), 1u);
  EXPECT_EQ(drain(*a, 1).size(), 1u);
  EXPECT_EQ(a->pending_sends(1), 0u);
}

TEST(Loopback, CountingPostedBuffers) {
  auto fabric = LoopbackFabric::create();
  auto a = fabric->open(0, {1});
  auto b = fabric->open(1, {0});
  for (int i = 0; i < 4; ++i) b->post_recv(Bundle(64));
  a->post_send(1, make_bundle(8));
  a->post_send(1, make_bundle(8));
  EXPECT_EQ(drain(*b, 2).size(), 2u);
  EXPECT_EQ(b->posted_recvs(), 2u);
}

TEST(Loopback, PollBatching) {
  auto fabric = LoopbackFabric::create();
  auto a = fabric->open(0, {1});
  auto b = fabric->open(1, {0});
  for (int i = 0; i < 3; ++i) b->post_recv(Bundle(64));
  for (int i = 0; i < 3; ++i) a->post_send(1, make_bundle(8));
  EXPECT_EQ(a->poll(2).size(), 2u);
  EXPECT_EQ(a->poll(2).size(), 1u);
  EXPECT_TRUE(a->poll(2).empty());
}

TEST(Loopback, IdlePollIsEmpty) {
  auto fabric = LoopbackFabric::create();
  auto a = fabric->open(0, {});
  EXPECT_TRUE(a->poll().empty());
  EXPECT_FALSE(a->wait(Micros(100)));
}

TEST(Loopback, SendAfterPeerShutdownFails) {
  auto fabric = LoopbackFabric::create();
  auto a = fabric->open(0, {1});
  auto b = fabric->open(1, {0});
  b.reset();
  a->post_send(1, make_bundle(8));
  auto c = drain(*a, 1);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_FALSE(c[0].ok());
}

TEST(Loopback, HeldBundlesFailOnClose) {
  auto fabric = LoopbackFabric::create();
  auto a = fabric->open(0, {1});
  auto b = fabric->open(1, {0});
  a->post_send(1, make_bundle(8));
  b.reset();
  auto c = drain(*a, 1);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].status, CompletionStatus::link_error);
  EXPECT_TRUE(c[0].buffer.valid());
}

// Randomized multi-threaded exchange; every send and receive completes
// exactly once and the per-pair multiset of bundles is preserved.
TEST(Loopback, ExactlyOnceUnderConcurrency) {
  auto fabric = LoopbackFabric::create();
  constexpr int kPeers = 4;
  constexpr int kPerPair = 2000;
  std::vector<std::unique_ptr<Endpoint>> eps;
  for (PeerId p = 0; p < kPeers; ++p) {
    std::vector<PeerId> others;
    for (PeerId q = 0; q < kPeers; ++q)
      if (q != p) others.push_back(q);
    eps.push_back(fabric->open(p, others));
  }
  std::vector<std::map<std::pair<PeerId, std::uint32_t>, int>> got(kPeers);
  std::vector<std::thread> threads;
  for (PeerId p = 0; p < kPeers; ++p) {
    threads.emplace_back([&, p] {
      auto& ep = *eps[p];
      std::mt19937 rng(p);
      for (int i = 0; i < 8; ++i) ep.post_recv(Bundle(64));
      const int expect_recv = kPerPair * (kPeers - 1);
      int sent = 0, send_done = 0, recvd = 0;
      std::vector<Completion> cs;
      while (recvd < expect_recv || send_done < sent || sent < expect_recv) {
        if (sent < expect_recv && ep.pending_sends((p + 1) % kPeers) < 16) {
          const PeerId dst = static_cast<PeerId>((p + 1 + sent % (kPeers - 1)) % kPeers);
          Bundle b(64);
          std::byte tag[4];
          detail::store_le32(tag, static_cast<std::uint32_t>(sent / (kPeers - 1)));
          b.append(p, tag);
          ep.post_send(dst, std::move(b));
          ++sent;
        }
        cs.clear();
        if (ep.poll(cs, 1 + rng() % 8) == 0 && sent == expect_recv) ep.wait(Micros(500));
        for (auto& c : cs) {
          ASSERT_TRUE(c.ok());
          if (c.kind == CompletionKind::send) {
            ++send_done;
          } else {
            const auto rec = *c.buffer.records().begin();
            ++got[p][{c.peer, detail::load_le32(rec.payload.data())}];
            ++recvd;
            ep.post_recv(std::move(c.buffer));
          }
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  for (PeerId p = 0; p < kPeers; ++p) {
    ASSERT_EQ(got[p].size(), static_cast<std::size_t>(kPerPair * (kPeers - 1)));
    for (auto& [key, n] : got[p]) ASSERT_EQ(n, 1);
  }
}

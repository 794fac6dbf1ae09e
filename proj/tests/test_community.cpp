#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "herln/community.hpp"

using namespace herln;
using fixtures::naive_modularity;

namespace {

CommunityAssignment assignment(std::vector<Index> comm) {
  CommunityAssignment a;
  a.community_of = std::move(comm);
  for (Index c : a.community_of) a.num_communities = std::max<std::size_t>(a.num_communities, c + 1);
  return a;
}

double best_partition(const fixtures::RandomLayered& g, std::vector<Index>* argmax = nullptr) {
  double best = -1e300;
  fixtures::for_each_partition(g.nodes, [&](const std::vector<Index>& p) {
    const double q = naive_modularity(g.nodes, g.layers, g.edges, p);
    if (q > best) {
      best = q;
      if (argmax) *argmax = p;
    }
  });
  return best;
}

fixtures::RandomLayered two_triangle_edges() {
  fixtures::RandomLayered g;
  g.nodes = 6;
  g.layers = 1;
  for (auto [i, j] : {std::pair{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}, {2, 3}})
    g.edges.emplace_back(static_cast<Index>(i), static_cast<Index>(j), 0, 1.0);
  return g;
}

}  // namespace

TEST_CASE("build_layered_graph") {
  SUBCASE("repeated facts accumulate weight") {
    TemporalGraph g({{0, 0, 1, 0}, {0, 0, 1, 5}}, 2, 1, 6);
    LayeredGraph lg = build_layered_graph(g);
    CHECK(lg.num_layers() == 1);
    CHECK(lg.weight(0, 1, 0) == 2.0);
    CHECK(lg.weight(1, 0, 0) == 2.0);
    CHECK(lg.layer_weight(0) == 2.0);
  }
  SUBCASE("single fact") {
    TemporalGraph g({{2, 1, 0, 0}}, 3, 2, 1);
    LayeredGraph lg = build_layered_graph(g);
    CHECK(lg.layer_weight(1) == 1.0);
    CHECK(lg.layer_weight(0) == 0.0);
    CHECK(lg.total_weight() == 1.0);
  }
  SUBCASE("layer totals equal per-relation fact counts; degrees sum to 2 m_r") {
    std::mt19937_64 rng(5);
    std::vector<Quadruple> facts;
    std::vector<double> count(3, 0.0);
    for (int i = 0; i < 100; ++i) {
      Index s = rng() % 8, o = rng() % 8;
      if (s == o) o = (o + 1) % 8;
      const Index r = rng() % 3;
      facts.push_back({s, r, o, static_cast<Index>(rng() % 5)});
      count[r] += 1.0;
    }
    TemporalGraph raw(facts, 8, 3, 5);
    LayeredGraph lg = build_layered_graph(raw);
    LayeredGraph lg_aug = build_layered_graph(add_inverse_quadruples(raw));
    for (Index r = 0; r < 3; ++r) {
      CHECK(lg.layer_weight(r) == count[r]);
      CHECK(lg_aug.layer_weight(r) == count[r]);  // inverse relations are ignored
      double deg = 0.0;
      for (Index i = 0; i < 8; ++i)
        for (auto [layer, k] : lg.degrees(i))
          if (layer == r) deg += k;
      CHECK(deg == doctest::Approx(2.0 * count[r]));
    }
  }
}

TEST_CASE("modularity") {
  SUBCASE("one community, one layer is zero") {
    LayeredGraph lg = fixtures::two_triangles();
    CHECK(std::abs(modularity(lg, assignment({0, 0, 0, 0, 0, 0}))) < 1e-12);
  }
  SUBCASE("singletons without self-loops are -sum a_c^2") {
    LayeredGraph lg = fixtures::two_triangles();
    double expected = 0.0;
    for (double k : {2.0, 2.0, 3.0, 3.0, 2.0, 2.0}) expected -= (k / 14.0) * (k / 14.0);
    const double q = modularity(lg, assignment({0, 1, 2, 3, 4, 5}));
    CHECK(q == doctest::Approx(expected).epsilon(1e-12));
    CHECK(q <= 0.0);
  }
  SUBCASE("two triangles is the exhaustive maximizer") {
    const auto g = two_triangle_edges();
    std::vector<Index> argmax;
    const double best = best_partition(g, &argmax);
    const std::vector<Index> triangles = {0, 0, 0, 1, 1, 1};
    const double q = modularity(g.build(), assignment(triangles));
    CHECK(q == doctest::Approx(naive_modularity(6, 1, g.edges, triangles)).epsilon(1e-12));
    CHECK(std::abs(q - best) < 1e-12);
    CHECK(argmax == triangles);
    std::size_t partitions = 0;
    fixtures::for_each_partition(6, [&](const std::vector<Index>&) { ++partitions; });
    CHECK(partitions == 203);
  }
  SUBCASE("matches the literal formula on random multi-layer graphs") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 30; ++trial) {
      const auto g = fixtures::random_layered(rng, 7, 2);
      const LayeredGraph lg = g.build();
      std::vector<Index> comm(g.nodes);
      for (auto& c : comm) c = static_cast<Index>(rng() % 3);
      CommunityAssignment a = assignment(comm);
      CHECK(modularity(lg, a) == doctest::Approx(naive_modularity(g.nodes, g.layers, g.edges, comm)).epsilon(1e-12));
    }
  }
}

TEST_CASE("delta_modularity") {
  SUBCASE("isolated node has zero gain") {
    LayeredGraph lg(4, 1);
    lg.add_edge(0, 1, 0);
    lg.add_edge(1, 2, 0);
    lg.finalize();
    CHECK(delta_modularity(lg, assignment({0, 0, 1, 2}), 3, 0) == 0.0);
  }
  SUBCASE("move into the community of all neighbours matches recomputation") {
    LayeredGraph lg = fixtures::two_triangles();
    CommunityAssignment a = assignment({0, 0, 1, 2, 2, 2});
    const double before = modularity(lg, a);
    const double dq = delta_modularity(lg, a, 2, 0);
    a.community_of[2] = 0;
    CHECK(std::abs(dq - (modularity(lg, a) - before)) < 1e-9);
    CHECK(dq > 0.0);
  }
  SUBCASE("random moves agree with recomputation and reverse") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 60; ++trial) {
      const auto g = fixtures::random_layered(rng, 7, 2);
      const LayeredGraph lg = g.build();
      std::vector<Index> comm(g.nodes);
      for (auto& c : comm) c = static_cast<Index>(rng() % 3);
      CommunityAssignment a = assignment(comm);
      const Index node = static_cast<Index>(rng() % g.nodes);
      const Index from = a.community_of[node];
      const Index to = static_cast<Index>(rng() % (a.num_communities + 1));
      const double before = naive_modularity(g.nodes, g.layers, g.edges, a.community_of);
      const double dq = delta_modularity(lg, a, node, to);
      a.community_of[node] = to;
      a.num_communities = std::max<std::size_t>(a.num_communities, to + 1);
      const double after = naive_modularity(g.nodes, g.layers, g.edges, a.community_of);
      CHECK(std::abs(dq - (after - before)) < 1e-9);
      CHECK(std::abs(delta_modularity(lg, a, node, from) + dq) < 1e-9);
    }
  }
  SUBCASE("target beyond K is rejected") {
    LayeredGraph lg = fixtures::two_triangles();
    CHECK_THROWS_AS(delta_modularity(lg, assignment({0, 0, 0, 1, 1, 1}), 0, 3), std::invalid_argument);
  }
}

TEST_CASE("detect_communities") {
  SUBCASE("edgeless graph keeps singletons") {
    LayeredGraph lg(5, 2);
    lg.finalize();
    CommunityAssignment a = detect_communities(lg, 1);
    CHECK(a.num_communities == 5);
  }
  SUBCASE("two disjoint cliques") {
    LayeredGraph lg(8, 1);
    for (Index i = 0; i < 4; ++i)
      for (Index j = i + 1; j < 4; ++j) {
        lg.add_edge(i, j, 0);
        lg.add_edge(i + 4, j + 4, 0);
      }
    lg.finalize();
    CommunityAssignment a = detect_communities(lg, 3);
    CHECK(a.num_communities == 2);
    for (Index i = 0; i < 4; ++i) {
      CHECK(community_indicator(a, 0, i) == 1);
      CHECK(community_indicator(a, 4, i + 4) == 1);
      CHECK(community_indicator(a, i, i + 4) == 0);
    }
  }
  SUBCASE("two triangles with a bridge, every seed") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CommunityAssignment a = detect_communities(fixtures::two_triangles(), seed);
      CHECK(a.community_of == std::vector<Index>{0, 0, 0, 1, 1, 1});
    }
  }
  SUBCASE("randomized suite against the exhaustive optimum") {
    std::mt19937_64 rng(8);
    std::size_t exact = 0;
    for (int trial = 0; trial < 60; ++trial) {
      const auto g = fixtures::random_layered(rng, 7, 2);
      const LayeredGraph lg = g.build();
      LouvainTrace trace;
      const CommunityAssignment a = detect_communities(lg, trial, &trace);
      const double q = modularity(lg, a);
      const double best = best_partition(g);
      CHECK(q >= 0.95 * best - 1e-12);
      if (std::abs(q - best) < 1e-9) ++exact;
      for (std::size_t i = 1; i < trace.level_modularity.size(); ++i)
        CHECK(trace.level_modularity[i] >= trace.level_modularity[i - 1] - 1e-12);
      // contiguous ids, each node once
      std::vector<bool> used(a.num_communities, false);
      REQUIRE(a.size() == g.nodes);
      for (Index c : a.community_of) {
        REQUIRE(c < a.num_communities);
        used[c] = true;
      }
      for (bool u : used) CHECK(u);
    }
    MESSAGE("exact optimum on " << exact << " of 60 graphs");
  }
  SUBCASE("restarts never lower modularity below the first run") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 30; ++trial) {
      const auto g = fixtures::random_layered(rng, 7, 2);
      const LayeredGraph lg = g.build();
      CHECK(modularity(lg, detect_communities(lg, trial, nullptr, 8)) >=
            modularity(lg, detect_communities(lg, trial, nullptr, 1)) - 1e-12);
    }
    CHECK_THROWS(detect_communities(fixtures::two_triangles(), 0, nullptr, 0));
  }
  SUBCASE("fixed seed is deterministic") {
    std::mt19937_64 rng(9);
    const auto g = fixtures::random_layered(rng, 7, 2);
    CHECK(detect_communities(g.build(), 42).community_of == detect_communities(g.build(), 42).community_of);
  }
}

TEST_CASE("community_indicator") {
  CommunityAssignment a = assignment({0, 1, 0, 2, 1});
  for (Index i = 0; i < 5; ++i) {
    CHECK(community_indicator(a, i, i) == 1);
    for (Index j = 0; j < 5; ++j) CHECK(community_indicator(a, i, j) == community_indicator(a, j, i));
  }
  CHECK(community_indicator(a, 0, 2) == 1);
  CHECK(community_indicator(a, 0, 1) == 0);
  CHECK_THROWS_AS(community_indicator(a, 0, 5), std::out_of_range);
}

TEST_CASE("partition cache round trip is byte-stable") {
  const auto dir = std::filesystem::temp_directory_path() / "herln_partition_test";
  std::filesystem::create_directories(dir);
  CommunityAssignment a = detect_communities(fixtures::two_triangles(), 4);
  save_partition(dir / "a.tsv", a, 4);
  save_partition(dir / "b.tsv", detect_communities(fixtures::two_triangles(), 4), 4);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  };
  CHECK(slurp(dir / "a.tsv") == slurp(dir / "b.tsv"));
  CHECK(slurp(dir / "a.tsv").rfind("#K=2 seed=4", 0) == 0);
  CommunityAssignment back = load_partition(dir / "a.tsv");
  CHECK(back.community_of == a.community_of);
  CHECK(back.num_communities == a.num_communities);
  std::filesystem::remove_all(dir);
}

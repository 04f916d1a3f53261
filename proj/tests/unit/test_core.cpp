#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "mars/core/errors.hpp"
#include "mars/core/tree.hpp"
#include "mars/env/environment.hpp"

using namespace mars;

namespace {

LogProbTrace one_token() {
    LogProbTrace t;
    t.logp_new = t.logp_old = t.logp_ref = t.logp_infer = {-0.5};
    t.action_mask = {1};
    return t;
}

int add(SearchTree& tree, int parent, double reward, int agent = 1) {
    Solution s{BitVector(4), AgentId{agent}, 0};
    EvalReport rep;
    rep.total_public = 2;
    rep.passed_public = reward == 1.0 ? 2 : 1;
    rep.total_private = 2;
    rep.passed_private = 2;
    return tree.add_node(parent, s, rep, reward, AgentId{agent}, FreshContext{}, one_token());
}

}  // namespace

TEST_SUITE("core") {
    TEST_CASE("bitvector hex round trip for every length up to 40") {
        Rng rng(7);
        for (std::size_t n = 1; n <= 40; ++n) {
            BitVector b(n);
            for (std::size_t i = 0; i < n; ++i) b.set(i, bernoulli(rng, 0.5));
            CHECK(BitVector::from_hex(b.to_hex(), n) == b);
            CHECK(b.to_hex().size() == (n + 3) / 4);
        }
    }

    TEST_CASE("bitvector hex packs most significant bit first") {
        const BitVector b{1, 0, 1, 1, 0};
        CHECK(b.to_hex() == "b0");
        CHECK(BitVector::from_hex("B0", 5) == b);
        CHECK_THROWS_AS((void)BitVector::from_hex("zz", 8), FormatError);
        CHECK_THROWS_AS((void)BitVector::from_hex("b1", 5), FormatError);
    }

    TEST_CASE("hamming and complement") {
        const BitVector a{1, 0, 1, 0};
        CHECK(a.hamming(a.complement()) == 4);
        CHECK(a.count() == 2);
        CHECK_THROWS((void)a.hamming(BitVector(3)));
    }

    TEST_CASE("collect_records is ordered by id and sized by expansions") {
        SearchTree tree;
        CHECK_THROWS_AS((void)collect_records(tree), EmptyTree);
        add(tree, 0, 1.0);
        add(tree, 1, 0.0);
        add(tree, 0, 1.0);
        const auto recs = collect_records(tree, "x");
        REQUIRE(recs.size() == 3);
        for (int i = 0; i < 3; ++i) CHECK(recs[static_cast<std::size_t>(i)].node_id == i + 1);
        CHECK(recs[1].task_id == "x");
        CHECK(passing_nodes(tree) == std::vector<int>{1, 3});
    }

    TEST_CASE("depth equals the number of parent links to the root") {
        SearchTree tree;
        Rng rng(3);
        for (int i = 0; i < 50; ++i) {
            const int parent = static_cast<int>(rng() % (tree.expansions() + 1));
            add(tree, parent, bernoulli(rng, 0.5) ? 1.0 : 0.0);
        }
        for (const auto& n : tree.nodes()) {
            int links = 0;
            for (auto p = n.parent; p; p = tree.node(*p).parent) ++links;
            CHECK(links == n.depth);
        }
    }

    TEST_CASE("passing_nodes matches a filter over collect_records") {
        SearchTree tree;
        Rng rng(11);
        for (int i = 0; i < 30; ++i) add(tree, 0, bernoulli(rng, 0.3) ? 1.0 : 0.0);
        std::vector<int> expect;
        for (const auto& r : collect_records(tree))
            if (r.reward == 1.0) expect.push_back(r.node_id);
        CHECK(passing_nodes(tree) == expect);
    }

    TEST_CASE("con posterior of a child starts from its own reward") {
        SearchTree tree;
        const int id = add(tree, 0, 1.0);
        CHECK(tree.node(id).con_posterior.alpha == doctest::Approx(2.0));
        CHECK(tree.node(id).con_posterior.beta == doctest::Approx(1.0));
        CHECK_THROWS((void)tree.node(99));
    }

    TEST_CASE("tree trace round trip") {
        SearchTree tree;
        add(tree, 0, 1.0, 2);
        add(tree, 1, 0.0, 1);
        std::stringstream ss;
        write_tree_trace(ss, tree);
        const auto back = read_tree_trace(ss);
        REQUIRE(back.size() == 2);
        CHECK(back[0].agent == 2);
        CHECK(back[1].parent == std::optional<int>(1));
        CHECK(back[1].depth == 2);
        CHECK(back[0].eval.passed_public == 2);
    }

    TEST_CASE("advantage is set exactly once") {
        NodeRecord r;
        CHECK_FALSE(r.has_advantage());
        CHECK_THROWS_AS((void)r.advantage(), StateError);
        r.set_advantage(0.5);
        CHECK(r.advantage() == 0.5);
        CHECK_THROWS_AS(r.set_advantage(1.0), StateError);
    }

    TEST_CASE("trace validation") {
        auto t = one_token();
        CHECK_NOTHROW(t.validate());
        t.logp_new.push_back(-1.0);
        CHECK_THROWS_AS(t.validate(), ShapeError);
        t = one_token();
        t.logp_ref[0] = 0.5;
        CHECK_THROWS_AS(t.validate(), ShapeError);
        t = one_token();
        t.logp_old[0] = std::nan("");
        CHECK_THROWS_AS(t.validate(), ShapeError);
        t = LogProbTrace{};
        CHECK_THROWS_AS(t.validate(), ShapeError);
    }
}

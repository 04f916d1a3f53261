#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mars/bandit/beta.hpp"
#include "mars/bandit/selection.hpp"
#include "mars/core/errors.hpp"

using namespace mars;
using namespace mars::bandit;

TEST_SUITE("bandit") {
    TEST_CASE("posterior updates are exact sums") {
        auto p = BetaPosterior::from_prior(1, 1);
        for (double s : {1.0, 1.0, 0.0}) p = update_posterior(p, s);
        CHECK(p.alpha == 3.0);
        CHECK(p.beta == 2.0);
        CHECK(p.observations() == 3.0);

        auto q = BetaPosterior::from_prior(0.5, 0.5);
        q = update_posterior(update_posterior(q, 0.3), 0.7);
        CHECK(q.alpha == doctest::Approx(1.5).epsilon(1e-15));
        CHECK(q.beta == doctest::Approx(1.5).epsilon(1e-15));

        CHECK_THROWS_AS((void)update_posterior(p, 1.5), InvalidScore);
        CHECK_THROWS_AS((void)update_posterior(p, -0.1), InvalidScore);
    }

    TEST_CASE("update mass equals the number of observations") {
        Rng rng(5);
        auto p = BetaPosterior::from_prior(2.0, 3.0);
        for (int i = 1; i <= 200; ++i) {
            p = update_posterior(p, uniform01(rng));
            CHECK(p.observations() == doctest::Approx(i));
        }
    }

    TEST_CASE("beta samples match the closed-form moments") {
        Rng rng(17);
        struct Case { double a, b; };
        for (auto c : {Case{1, 1}, Case{2, 2}, Case{0.5, 3}, Case{10, 1}}) {
            const auto post = BetaPosterior::from_prior(c.a, c.b);
            const int n = 100000;
            double s = 0, s2 = 0;
            for (int i = 0; i < n; ++i) {
                const double x = sample(post, rng);
                REQUIRE(x >= 0.0);
                REQUIRE(x <= 1.0);
                s += x;
                s2 += x * x;
            }
            const double mean = s / n, var = s2 / n - mean * mean;
            const double m = c.a / (c.a + c.b);
            const double v = c.a * c.b / ((c.a + c.b) * (c.a + c.b) * (c.a + c.b + 1));
            CHECK(mean == doctest::Approx(m).epsilon(0.01 / m));
            CHECK(var == doctest::Approx(v).epsilon(0.1));
        }
    }

    TEST_CASE("strongly separated posteriors") {
        Rng rng(9);
        const auto hi = BetaPosterior::from_prior(10, 1), lo = BetaPosterior::from_prior(1, 10);
        int wins = 0;
        for (int i = 0; i < 100000; ++i) wins += sample(hi, rng) > sample(lo, rng);
        CHECK(wins > 99000);

        std::map<AgentId, BetaPosterior> stats{{AgentId{1}, BetaPosterior::from_prior(50, 1)},
                                               {AgentId{2}, BetaPosterior::from_prior(1, 50)}};
        int a = 0;
        for (int i = 0; i < 10000; ++i) a += select_agent(stats, rng) == AgentId{1};
        CHECK(a > 9900);
    }

    TEST_CASE("agent selection with one agent and with symmetric agents") {
        Rng rng(1);
        std::map<AgentId, BetaPosterior> one{{AgentId{3}, BetaPosterior{}}};
        for (int i = 0; i < 100; ++i) CHECK(select_agent(one, rng) == AgentId{3});
        CHECK_THROWS_AS((void)select_agent({}, rng), NoAgents);

        std::map<AgentId, BetaPosterior> two{{AgentId{1}, BetaPosterior::from_prior(3, 4)},
                                             {AgentId{2}, BetaPosterior::from_prior(3, 4)}};
        int first = 0;
        for (int i = 0; i < 10000; ++i) first += select_agent(two, rng) == AgentId{1};
        CHECK(std::abs(first / 10000.0 - 0.5) < 0.02);
    }

    TEST_CASE("depth schedule and weight") {
        DepthSchedule s;
        CHECK(depth_weight(1, 0, s) == 1.0);
        CHECK(depth_weight(1, 5, s) == doctest::Approx(std::pow(0.98, 5)));
        CHECK(depth_weight(1, 5, s) == doctest::Approx(0.90392).epsilon(1e-5));
        CHECK(depth_weight(500, 1, s) == 0.5);
        for (int d = 1; d < 30; ++d) {
            CHECK(s.gamma(d + 1) <= s.gamma(d));
            for (int c = 0; c < 10; ++c) {
                CHECK(depth_weight(d, c + 1, s) <= depth_weight(d, c, s));
                CHECK(depth_weight(d + 1, c, s) <= depth_weight(d, c, s));
            }
        }
        DepthSchedule bad;
        bad.gamma_min = 0.99;
        CHECK_THROWS_AS(bad.validate(), InvalidArgument);
        bad = DepthSchedule{};
        bad.decay = 0.0;
        CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    }

    TEST_CASE("select_action: leaf always generates") {
        SearchTree tree;
        Rng rng(2);
        for (int i = 0; i < 100; ++i) CHECK(select_action(tree, 0, AgentId{1}, {}, std::nullopt, rng).is_gen());
    }

    TEST_CASE("select_action follows the posteriors and the depth weight") {
        Rng rng(4);
        auto build = [](BanditPriors pri, double child_reward_mass) {
            SearchTree tree(pri);
            LogProbTrace t;
            t.logp_new = t.logp_old = t.logp_ref = t.logp_infer = {-1};
            t.action_mask = {1};
            EvalReport rep;
            tree.add_node(0, Solution{BitVector(2), AgentId{1}, 0}, rep, 1.0, AgentId{1}, FreshContext{}, t);
            for (int i = 0; i < child_reward_mass; ++i) tree.observe_con(1, 1.0);
            return tree;
        };
        // GEN ~ Beta(1, 100) by observing 99 failures; child CON ~ Beta(100, 1).
        auto tree = build(BanditPriors{1, 1}, 98);
        for (int i = 0; i < 99; ++i) tree.observe_gen(0, AgentId{1}, 0.0);
        CHECK(tree.node(1).con_posterior.alpha == doctest::Approx(100));
        int con = 0;
        for (int i = 0; i < 10000; ++i) con += !select_action(tree, 0, AgentId{1}, {}, std::nullopt, rng).is_gen();
        CHECK(con > 9900);

        // Identical posteriors, weight 0.5^10 on GEN.
        auto even = build(BanditPriors{1, 1}, 0);
        auto same = even;
        same.observe_gen(0, AgentId{1}, 1.0);
        DepthSchedule half{0.5, 1.0, 0.5};
        const std::map<int, int> counts{{1, 10}};
        int gen = 0;
        for (int i = 0; i < 10000; ++i) gen += select_action(same, 0, AgentId{1}, counts, half, rng).is_gen();
        CHECK(gen < 1000);
    }

    TEST_CASE("a zero count at the child depth gives the unweighted draw") {
        SearchTree tree;
        LogProbTrace t;
        t.logp_new = t.logp_old = t.logp_ref = t.logp_infer = {-1};
        t.action_mask = {1};
        for (int i = 0; i < 3; ++i)
            tree.add_node(0, Solution{BitVector(2), AgentId{1}, 0}, EvalReport{}, i % 2, AgentId{1}, FreshContext{}, t);
        DepthSchedule s;
        const std::map<int, int> zero{{1, 0}};
        Rng a(8), b(8);
        for (int i = 0; i < 1000; ++i)
            CHECK(select_action(tree, 0, AgentId{1}, zero, s, a) == select_action(tree, 0, AgentId{1}, {}, std::nullopt, b));
    }
}

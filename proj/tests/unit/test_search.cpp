#include <doctest.h>

#include <omp.h>

#include <sstream>

#include "helpers.hpp"
#include "mars/core/errors.hpp"
#include "mars/env/environment.hpp"
#include "mars/search/search.hpp"
#include "mars_ref/reference.hpp"

using namespace mars;
using namespace mars::search;
using testing::make_agent;

namespace {

class FailingAgent final : public agents::Agent {
public:
    explicit FailingAgent(AgentId id) : id_(id) {}
    AgentId id() const override { return id_; }
    agents::Proposal propose(const TaskView&, Rng&) const override { throw TimeoutError("down"); }
    agents::Proposal refine(const TaskView&, const Solution&, const Feedback&, Rng&) const override {
        throw TimeoutError("down");
    }

private:
    AgentId id_;
};

AgentList two_agents(int m) {
    return {make_agent(1, std::vector<double>(static_cast<std::size_t>(m), 0.6)),
            make_agent(2, std::vector<double>(static_cast<std::size_t>(m), 0.4))};
}

std::vector<Task> tasks(int n, int m, int p, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Task> out;
    for (int i = 0; i < n; ++i) out.push_back(env::generate_task(m, p, rng, env::TaskOptions{"t" + std::to_string(i), 0.5}));
    return out;
}

void same_trace(const SearchTrace& a, const SearchTrace& b) {
    REQUIRE(a.tree.expansions() == b.tree.expansions());
    for (std::size_t i = 0; i < a.tree.nodes().size(); ++i) {
        const auto& x = a.tree.nodes()[i];
        const auto& y = b.tree.nodes()[i];
        CHECK(x.parent == y.parent);
        CHECK(x.agent == y.agent);
        CHECK(x.solution.bits == y.solution.bits);
        CHECK(x.reward == y.reward);
    }
    CHECK(a.chosen_final == b.chosen_final);
    CHECK(a.depth_histogram == b.depth_histogram);
}

}  // namespace

TEST_SUITE("search") {
    TEST_CASE("budget and record bookkeeping") {
        const auto ts = tasks(1, 10, 5, 1);
        SearchConfig cfg;
        cfg.budget = 40;
        Rng rng(2);
        const auto tr = run_search(ts[0], two_agents(10), cfg, rng);
        CHECK(tr.tree.expansions() == 40);
        CHECK(tr.records.size() == 40);
        int hist = 0;
        for (const auto& [d, c] : tr.depth_histogram) hist += c;
        CHECK(hist == 40);
        double mass = 0;
        for (const auto& [id, post] : tr.agent_stats) mass += post.observations();
        CHECK(mass == doctest::Approx(40));
        const auto stats = depth_stats(tr);
        double total = 0;
        for (const auto& [d, f] : stats) total += f;
        CHECK(total == doctest::Approx(1.0));
    }

    TEST_CASE("posteriors agree with a recount of the tree") {
        const auto ts = tasks(5, 8, 6, 4);
        SearchConfig cfg;
        cfg.budget = 50;
        cfg.depth_guidance = true;
        for (const auto& task : ts) {
            Rng rng(9);
            const auto tr = run_search(task, two_agents(8), cfg, rng);
            const auto nodes = tr.tree.nodes();
            // Subtree reward sums and sizes by walking parents.
            std::vector<double> sub_reward(nodes.size(), 0.0), sub_size(nodes.size(), 0.0);
            std::map<std::pair<int, AgentId>, std::pair<double, double>> gen;
            for (const auto& n : nodes) {
                if (n.is_root()) continue;
                auto& g = gen[{*n.parent, n.agent}];
                g.first += n.reward;
                g.second += 1;
                for (std::optional<int> a = n.id; a && *a != 0; a = nodes[static_cast<std::size_t>(*a)].parent) {
                    sub_reward[static_cast<std::size_t>(*a)] += n.reward;
                    sub_size[static_cast<std::size_t>(*a)] += 1;
                }
            }
            for (const auto& n : nodes) {
                if (n.is_root()) continue;
                const auto i = static_cast<std::size_t>(n.id);
                CHECK(n.con_posterior.alpha == doctest::Approx(1.0 + sub_reward[i]));
                CHECK(n.con_posterior.observations() == doctest::Approx(sub_size[i]));
                CHECK(n.depth == nodes[static_cast<std::size_t>(*n.parent)].depth + 1);
            }
            for (const auto& [key, g] : gen) {
                const auto post = tr.tree.gen_posterior(key.first, key.second);
                CHECK(post.alpha == doctest::Approx(1.0 + g.first));
                CHECK(post.observations() == doctest::Approx(g.second));
            }
        }
    }

    TEST_CASE("refinements carry the parent's public feedback") {
        const auto ts = tasks(1, 12, 8, 7);
        SearchConfig cfg;
        cfg.budget = 40;
        Rng rng(1);
        const auto tr = run_search(ts[0], two_agents(12), cfg, rng);
        int refinements = 0;
        for (const auto& rec : tr.records) {
            const auto& node = tr.tree.node(rec.node_id);
            if (const auto* ctx = std::get_if<RefinementContext>(&rec.context)) {
                ++refinements;
                CHECK(ctx->parent_id == *node.parent);
                const auto& parent = tr.tree.node(ctx->parent_id);
                CHECK(std::get<FeedbackReport>(ctx->feedback) == env::make_feedback(parent.eval_report));
            } else {
                CHECK(*node.parent == 0);
            }
            CHECK(rec.reward == env::public_reward(env::evaluate(ts[0], rec.output)));
        }
        CHECK(refinements > 0);

        cfg.feedback_mode = FeedbackMode::Binary;
        Rng rng2(1);
        for (const auto& rec : run_search(ts[0], two_agents(12), cfg, rng2).records)
            if (const auto* ctx = std::get_if<RefinementContext>(&rec.context))
                CHECK(std::holds_alternative<BinaryFeedback>(ctx->feedback));
    }

    TEST_CASE("training mode rewards need the private tests") {
        const auto ts = tasks(3, 8, 3, 5);
        SearchConfig cfg;
        cfg.budget = 30;
        cfg.training_mode = true;
        for (const auto& task : ts) {
            Rng rng(3);
            for (const auto& rec : run_search(task, two_agents(8), cfg, rng).records)
                CHECK(rec.reward == (env::evaluate(task, rec.output).all_passed() ? 1.0 : 0.0));
        }
    }

    TEST_CASE("final vanilla is the latest passing node") {
        const auto ts = tasks(10, 6, 3, 8);
        SearchConfig cfg;
        cfg.budget = 20;
        for (const auto& task : ts) {
            Rng rng(4);
            const auto tr = run_search(task, two_agents(6), cfg, rng);
            std::optional<int> want;
            for (const auto& n : tr.tree.nodes())
                if (!n.is_root() && n.reward == 1.0) want = n.id;
            CHECK(final_vanilla_id(tr) == want);
            CHECK(tr.chosen_final == want);
        }
    }

    TEST_CASE("batch equals the serial reference and ignores thread count") {
        const auto ts = tasks(12, 10, 6, 11);
        SearchConfig cfg;
        cfg.budget = 25;
        cfg.seed = 77;
        cfg.depth_guidance = true;
        const auto agents = two_agents(10);
        const auto want = ref::run_search_batch(ts, agents, cfg);
        const int saved = omp_get_max_threads();
        for (int threads : {1, 4}) {
            omp_set_num_threads(threads);
            const auto got = run_search_batch(ts, agents, cfg);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) same_trace(got[i], want[i]);
        }
        omp_set_num_threads(saved);
    }

    TEST_CASE("remote failures consume budget and leave posteriors alone") {
        const auto ts = tasks(1, 6, 3, 2);
        SearchConfig cfg;
        cfg.budget = 30;
        Rng rng(5);
        AgentList agents{make_agent(1, std::vector<double>(6, 0.5)), std::make_shared<FailingAgent>(AgentId{2})};
        const auto tr = run_search(ts[0], agents, cfg, rng);
        CHECK(tr.tree.expansions() + tr.failures.size() == 30);
        CHECK_FALSE(tr.failures.empty());
        CHECK(tr.agent_stats.at(AgentId{2}).observations() == 0.0);
        for (const auto& f : tr.failures) CHECK(f.agent == AgentId{2});
    }

    TEST_CASE("input validation") {
        const auto ts = tasks(1, 4, 2, 1);
        Rng rng(0);
        SearchConfig cfg;
        CHECK_THROWS_AS((void)run_search(ts[0], {}, cfg, rng), NoAgents);
        cfg.budget = 0;
        CHECK_THROWS_AS((void)run_search(ts[0], two_agents(4), cfg, rng), InvalidArgument);
        cfg.budget = 5;
        AgentList dup{make_agent(1, {0.5, 0.5, 0.5, 0.5}), make_agent(1, {0.5, 0.5, 0.5, 0.5})};
        CHECK_THROWS_AS((void)run_search(ts[0], dup, cfg, rng), InvalidArgument);
        SearchTrace empty;
        CHECK_THROWS_AS((void)depth_stats(empty), EmptyTree);
    }

    TEST_CASE("histogram and summary formats") {
        CHECK(format_histogram({{1, 10}, {2, 4}, {3, 1}}) == "1:10;2:4;3:1");
        CHECK(format_histogram({}).empty());
        const auto ts = tasks(2, 4, 2, 3);
        SearchConfig cfg;
        cfg.budget = 5;
        std::ostringstream os;
        write_summary_csv(os, run_search_batch(ts, two_agents(4), cfg));
        std::istringstream is(os.str());
        std::string line;
        std::getline(is, line);
        CHECK(line == "task_id,solved_public,solved_private,expansions,depth_histogram");
        int rows = 0;
        while (std::getline(is, line)) {
            ++rows;
            CHECK(line.find(",5,") != std::string::npos);
        }
        CHECK(rows == 2);
    }

    TEST_CASE("depth guidance pushes expansions deeper") {
        const auto ts = tasks(40, 12, 8, 21);
        SearchConfig cfg;
        cfg.budget = 40;
        auto deep = [&](bool guided) {
            cfg.depth_guidance = guided;
            double sum = 0;
            for (const auto& tr : run_search_batch(ts, two_agents(12), cfg))
                for (const auto& [d, c] : tr.depth_histogram) sum += static_cast<double>(d * c);
            return sum;
        };
        const double off = deep(false), on = deep(true);
        MESSAGE("mean depth off " << off / 1600 << " on " << on / 1600);
        CHECK(on > off);
    }
}

#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "mars/core/errors.hpp"
#include "mars/env/environment.hpp"
#include "mars/reward_model/reward_model.hpp"

using namespace mars;
using namespace mars::rm;

namespace {

std::vector<RmExample> random_examples(Rng& rng, std::size_t n, std::size_t width) {
    std::vector<RmExample> out;
    for (std::size_t i = 0; i < n; ++i) {
        RmExample e;
        e.task_id = "t";
        e.node_id = static_cast<int>(i);
        for (std::size_t k = 0; k < width; ++k) e.features.push_back(testing::uniform(rng, -1, 1));
        e.label = e.features[0] + 0.3 * testing::uniform(rng, -1, 1) > 0 ? 1 : 0;
        out.push_back(std::move(e));
    }
    return out;
}

RmModel random_model(Rng& rng, std::size_t width) {
    RmModel m;
    for (std::size_t k = 0; k < width; ++k) m.weights.push_back(testing::uniform(rng, -1, 1));
    m.bias = testing::uniform(rng, -0.5, 0.5);
    return m;
}

// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double good = 0, total = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1 && y[j] == 0) {
                total += 1;
                good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
    return good / total;
}

void add_passing(SearchTree& tree, BitVector bits) {
    LogProbTrace t;
    t.logp_new = t.logp_old = t.logp_ref = t.logp_infer = {-1};
    t.action_mask = {1};
    EvalReport rep;
    rep.total_public = rep.passed_public = 1;
    tree.add_node(0, Solution{std::move(bits), AgentId{1}, 0}, rep, 1.0, AgentId{1}, FreshContext{}, t);
}

}  // namespace

TEST_SUITE("reward_model") {
    TEST_CASE("features of a known candidate") {
        const TaskView task{"t", 6, 2, BitVector{1, 1, 0, 0, 1, 1}, {}};
        const PublicEvalReport rep{1, 2, {FailedCase{1, true, false}}};
        const auto f = featurize(task, BitVector{1, 0, 0, 1, 1, 0}, rep, 3, AgentId{2}, 3);
        REQUIRE(f.size() == 7);
        CHECK(f[0] == 0.5);
        CHECK(f[1] == doctest::Approx(0.5));  // bits 2..5: 0,1,1,0 vs 0,0,1,1
        CHECK(f[2] == doctest::Approx(0.5));
        CHECK(f[3] == doctest::Approx(std::log(4.0)));
        CHECK(f[4] == 0.0);
        CHECK(f[5] == 1.0);
        CHECK(f[6] == 0.0);
        CHECK(feature_names(3).size() == 7);

        const TaskView no_hint{"t", 6, 2, BitVector{}, {}};
        CHECK(featurize(no_hint, BitVector(6), rep, 1, AgentId{1}, 1)[1] == 0.5);
        const TaskView all_public{"t", 4, 4, BitVector{1, 1, 1, 1}, {}};
        CHECK(featurize(all_public, BitVector{1, 1, 0, 0}, rep, 1, AgentId{1}, 1)[1] == 0.5);
        CHECK_THROWS_AS((void)featurize(task, BitVector(5), rep, 1, AgentId{1}, 1), ShapeError);
    }

    TEST_CASE("losses of a worked example") {
        std::vector<RmExample> ex(2);
        ex[0].features = {1.0};
        ex[0].label = 1;
        ex[1].features = {2.0};
        ex[1].label = 0;
        const RmModel zero{{0.0}, 0.0};
        // sigmoid(0) = 0.5 is off by 0.5 from either label.
        CHECK(mse_loss(zero, ex) == doctest::Approx(0.25));
        const std::vector<RmPair> pair{{0, 1}};
        CHECK(bt_loss(zero, ex, pair) == doctest::Approx(std::log(2.0)));
        const RmModel w{{-1.0}, 0.0};  // margin +1
        CHECK(bt_loss(w, ex, pair) == doctest::Approx(std::log1p(std::exp(-1.0))));
    }

    TEST_CASE("loss gradients match central differences") {
        Rng rng(3);
        const auto ex = random_examples(rng, 30, 5);
        std::vector<RmPair> pairs;
        for (std::size_t i = 0; i + 1 < ex.size(); i += 2) pairs.push_back({i, i + 1});
        const auto model = random_model(rng, 5);
        const double h = 1e-6;
        const auto gm = mse_gradient(model, ex);
        const auto gb = bt_gradient(model, ex, pairs);
        for (std::size_t k = 0; k <= 5; ++k) {
            auto up = model, dn = model;
            double& u = k < 5 ? up.weights[k] : up.bias;
            double& d = k < 5 ? dn.weights[k] : dn.bias;
            u += h;
            d -= h;
            const double fd_m = (mse_loss(up, ex) - mse_loss(dn, ex)) / (2 * h);
            const double fd_b = (bt_loss(up, ex, pairs) - bt_loss(dn, ex, pairs)) / (2 * h);
            CHECK((k < 5 ? gm.weights[k] : gm.bias) == doctest::Approx(fd_m).epsilon(1e-5).scale(1e-8));
            CHECK((k < 5 ? gb.weights[k] : gb.bias) == doctest::Approx(fd_b).epsilon(1e-5).scale(1e-8));
        }
    }

    TEST_CASE("training lowers the loss and widens the margin") {
        Rng rng(4);
        auto data = random_examples(rng, 80, 3);
        const auto mse = train_mse(data, TrainOptions{200, 0.5});
        CHECK(mse.loss_history.back() < mse.loss_history.front());
        CHECK(mse.loss_history.size() == 201);
        CHECK(mse.warnings.empty());

        std::vector<RmPair> pairs;
        std::vector<std::size_t> pos, neg;
        for (std::size_t i = 0; i < data.size(); ++i) (data[i].label ? pos : neg).push_back(i);
        for (std::size_t k = 0; k < std::min(pos.size(), neg.size()); ++k) pairs.push_back({pos[k], neg[k]});
        const auto bt = train_bt(data, pairs, TrainOptions{200, 0.5});
        CHECK(bt.loss_history.back() < bt.loss_history.front());
        CHECK(bt.margin_history.back() > bt.margin_history.front());
        CHECK(mean_margin(bt.model, data, pairs) > 0.0);
        CHECK(eval_rm(bt.model, data).auc_roc > 0.8);

        CHECK_THROWS_AS((void)train_mse(std::vector<RmExample>(1)), InvalidArgument);
        CHECK_THROWS_AS((void)train_bt(data, {}), InvalidArgument);
        for (auto& e : data) e.label = 1;
        CHECK_FALSE(train_mse(data, TrainOptions{5, 0.5}).warnings.empty());
    }

    TEST_CASE("metrics against brute force") {
        Rng rng(8);
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<double> s;
            std::vector<int> y;
            for (int i = 0; i < 25; ++i) {
                s.push_back(std::round(testing::uniform(rng, 0, 5)));  // many ties
                y.push_back(bernoulli(rng, 0.4) ? 1 : 0);
            }
            y[0] = 1;
            y[1] = 0;
            const auto m = eval_scores(s, y);
            CHECK(m.auc_defined);
            CHECK(m.auc_roc == doctest::Approx(brute_auc(s, y)).epsilon(1e-12));
            CHECK(m.spearman >= -1.0);
            CHECK(m.spearman <= 1.0);
        }
    }

    TEST_CASE("metrics of a worked example") {
        const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
        const std::vector<int> y{0, 0, 1, 1};
        const auto m = eval_scores(s, y);
        CHECK(m.auc_roc == doctest::Approx(0.75));
        // Median 0.375: predictions 0,1,0,1 against labels 0,0,1,1.
        CHECK(m.adaptive_acc == doctest::Approx(0.5));
        // Ranks 1,3,2,4 against label midranks 1.5,1.5,3.5,3.5.
        CHECK(m.spearman == doctest::Approx(1.0 / std::sqrt(5.0)));

        const auto one = eval_scores(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1});
        CHECK_FALSE(one.auc_defined);
        CHECK(std::isnan(one.auc_roc));
    }

    TEST_CASE("select_final takes the best passing score, lowest id on ties") {
        search::SearchTrace tr;
        add_passing(tr.tree, BitVector{0, 0, 1, 0});
        add_passing(tr.tree, BitVector{1, 1, 1, 0});
        add_passing(tr.tree, BitVector{0, 1, 1, 1});
        const TaskView view{"t", 4, 2, BitVector{}, {}};
        RmModel density{{0, 0, 1, 0, 0}, 0};
        CHECK(select_final(tr, view, density, 1) == std::optional<int>(2));
        RmModel flat{{0, 0, 0, 0, 0}, 0};
        CHECK(select_final(tr, view, flat, 1) == std::optional<int>(1));
        search::SearchTrace empty;
        CHECK_FALSE(select_final(empty, view, flat, 1).has_value());
    }

    TEST_CASE("dataset building, balancing and pairs") {
        Rng rng(6);
        std::vector<Task> tasks;
        for (int i = 0; i < 6; ++i) tasks.push_back(env::generate_task(6, 3, rng, env::TaskOptions{"d" + std::to_string(i), 0.2}));
        search::AgentList agents{testing::make_agent(1, std::vector<double>(6, 0.5)),
                                 testing::make_agent(2, std::vector<double>(6, 0.5))};
        search::SearchConfig cfg;
        cfg.budget = 30;
        const auto traces = search::run_search_batch(tasks, agents, cfg);
        const auto data = build_rm_dataset(traces, tasks, 2);
        int pos = 0;
        for (const auto& e : data.examples) {
            pos += e.label;
            CHECK(e.features.size() == 6);
            const auto& task = tasks[static_cast<std::size_t>(std::stoi(e.task_id.substr(1)))];
            const auto& trace = traces[static_cast<std::size_t>(std::stoi(e.task_id.substr(1)))];
            CHECK(e.label == (env::evaluate(task, trace.tree.node(e.node_id).solution.bits).all_passed() ? 1 : 0));
        }
        CHECK(2 * pos == static_cast<int>(data.examples.size()));
        for (const auto& p : data.pairs) {
            CHECK(data.examples[p.winner].label == 1);
            CHECK(data.examples[p.loser].label == 0);
            CHECK(data.examples[p.winner].task_id == data.examples[p.loser].task_id);
        }
        const auto all = build_rm_dataset(traces, tasks, 2, DatasetOptions{false, false});
        CHECK(all.examples.size() == 6u * 30u);
        CHECK_THROWS_AS((void)build_rm_dataset(traces, {}, 2), InvalidArgument);

        std::stringstream ex, pr;
        write_dataset(ex, data, 2);
        write_pairs(pr, data);
        const auto back = read_dataset(ex, &pr);
        REQUIRE(back.examples.size() == data.examples.size());
        for (std::size_t i = 0; i < back.examples.size(); ++i) {
            CHECK(back.examples[i].features == data.examples[i].features);
            CHECK(back.examples[i].label == data.examples[i].label);
        }
        CHECK(back.pairs.size() == data.pairs.size());
        std::stringstream bad("nope\n");
        CHECK_THROWS_AS((void)read_dataset(bad, nullptr), FormatError);
    }

    TEST_CASE("model file round trip") {
        const RmModel m{{0.1, -2.5, 1e-9}, 0.3};
        std::stringstream ss;
        write_model(ss, m);
        const auto back = read_model(ss);
        CHECK(back.weights == m.weights);
        CHECK(back.bias == m.bias);
        std::stringstream bad("{}");
        CHECK_THROWS_AS((void)read_model(bad), FormatError);
    }
}

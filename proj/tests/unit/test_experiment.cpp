#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "mars/core/errors.hpp"
#include "mars/experiment/experiment.hpp"

using namespace mars;
using namespace mars::experiment;
using nlohmann::json;

namespace {

json small_config(const std::string& mode) {
    json j = {{"mode", mode},
              {"seed", 3},
              {"env",
               {{"m", 8},
                {"p", 5},
                {"train_tasks", 16},
                {"eval_tasks", 20},
                {"rm_tasks", 10},
                {"families", {{{"name", "a"}, {"volatility", 0.05}}, {{"name", "b"}, {"volatility", 0.05}}}}}},
              {"search", {{"budget", 8}}},
              {"train", {{"total_records", 64}, {"budget", 8}, {"checkpoint_every", 2}}},
              {"dispatch", {{"threshold", 16}}},
              {"eval", {{"budget", 8}, {"k_max", 4}}}};
    if (mode == "single")
        j["agents"] = {{{"name", "A"}, {"skill", "a"}}};
    else if (mode == "homo")
        j["agents"] = {{{"name", "A"}, {"skill", "a"}}, {{"name", "A2"}, {"skill", "a"}}};
    else
        j["agents"] = {{{"name", "A"}, {"skill", "a"}}, {{"name", "B"}, {"skill", "b"}}};
    return j;
}

std::string error_of(const json& j) {
    try {
        (void)config_from_json(j);
    } catch (const ConfigError& ex) {
        return ex.what();
    }
    return {};
}

std::string csv_of(const ExperimentResult& r) {
    std::ostringstream os;
    write_rows_csv(os, r.rows);
    write_curve(os, "x", r.curve);
    dispatch::write_update_log(os, r.updates);
    return os.str();
}

}  // namespace

TEST_SUITE("experiment") {
    TEST_CASE("nested and dotted keys are the same config") {
        const auto a = config_from_json(json{{"search", {{"budget", 7}}}, {"bandit", {{"depth_guidance", true}}}});
        const auto b = config_from_json(json{{"search.budget", 7}, {"bandit.depth_guidance", true}});
        CHECK(a.search.budget == 7);
        CHECK(b.search.budget == 7);
        CHECK(a.search.depth_guidance);
        CHECK(config_to_json(a) == config_to_json(b));
    }

    TEST_CASE("config errors name the key") {
        CHECK(error_of({{"search", {{"budgt", 3}}}}).find("search.budgt") != std::string::npos);
        CHECK(error_of({{"search.budget", 0}}).find("search.budget") != std::string::npos);
        CHECK(error_of({{"search.budget", "many"}}).find("search.budget") != std::string::npos);
        CHECK(error_of({{"bandit.decay", 0.0}}).find("bandit.decay") != std::string::npos);
        CHECK(error_of({{"bandit", {{"depth_guidance", true}, {"gamma1", 1.0}}}}).find("bandit.gamma1") !=
              std::string::npos);
        CHECK(error_of({{"environment.backend", "docker"}}).find("environment.backend") != std::string::npos);
        CHECK(error_of({{"mode", "solo"}}).find("mode") != std::string::npos);
        CHECK(error_of({{"agents", {{{"name", "A"}, {"skill", "zzz"}}}}}).find("agents[0].skill") != std::string::npos);
        auto two = small_config("heter");
        two["mode"] = "single";
        CHECK(error_of(two).find("agents") != std::string::npos);
        CHECK_THROWS_AS((void)load_config("/nonexistent/config.json"), ConfigError);
    }

    TEST_CASE("config JSON round trip") {
        const auto c = config_from_json(small_config("heter"));
        const auto again = config_from_json(config_to_json(c));
        CHECK(config_to_json(again) == config_to_json(c));
        CHECK(again.backend == "synthetic");
        CHECK(again.agents.size() == 2);
    }

    TEST_CASE("environment and population follow the mode") {
        const auto homo = config_from_json(small_config("homo"));
        const auto env = build_environment(homo);
        CHECK(env.train.size() == 16);
        CHECK(env.eval.size() == 20);
        const auto pop = build_population(homo, env);
        CHECK(pop.agents.size() == 2);
        CHECK(pop.distinct_stores.size() == 1);
        CHECK(pop.stores.at(AgentId{1}) == pop.stores.at(AgentId{2}));

        const auto heter = config_from_json(small_config("heter"));
        const auto hpop = build_population(heter, build_environment(heter));
        CHECK(hpop.distinct_stores.size() == 2);
        CHECK(hpop.evaluator->name() == "synthetic");

        const double p1 = analytic_pass1(hpop, env.eval);
        CHECK(p1 > 0.0);
        CHECK(p1 < 1.0);
    }

    TEST_CASE("skilled beliefs lean toward the family pattern") {
        const auto c = config_from_json(small_config("heter"));
        const auto env = build_environment(c);
        const auto params = initial_params(c.agents[0], env, c.env.m);
        const auto& pattern = env.families[0].pattern;
        const auto& belief = params.beliefs_for("a");
        for (std::size_t i = 0; i < pattern.size(); ++i) CHECK((belief[i] > 0.5) == pattern[i]);
    }

    TEST_CASE("runs are deterministic and account for every record") {
        for (const char* mode : {"single", "homo", "heter"}) {
            CAPTURE(mode);
            const auto c = config_from_json(small_config(mode));
            const auto r1 = run_experiment(c);
            const auto r2 = run_experiment(c);
            CHECK(csv_of(r1) == csv_of(r2));
            REQUIRE_FALSE(r1.rows.empty());
            CHECK(r1.rows.back().trained_records == 64);
            CHECK(r1.produced >= r1.dispatched + r1.filtered);
            std::size_t trained = 0;
            for (const auto& u : r1.updates) trained += u.batch_size;
            CHECK(trained == 64);
            CHECK(r1.curve.front().update == 0);
            for (std::size_t i = 1; i < r1.curve.size(); ++i) CHECK(r1.curve[i].step >= r1.curve[i - 1].step);
        }
    }

    TEST_CASE("curve targets") {
        ExperimentResult r;
        r.curve = {{0, 0, 0, 0.1}, {1, 16, 2, 0.2}, {2, 32, 3, 0.3}};
        CHECK(r.updates_to(0.2) == std::optional<int>(1));
        CHECK(r.steps_to(0.25) == std::optional<int>(3));
        CHECK_FALSE(r.updates_to(0.9).has_value());
        std::ostringstream os;
        write_curve(os, "s", r.curve);
        CHECK(os.str().rfind("series,update,step,trained_records,pass1\n", 0) == 0);
    }

    TEST_CASE("compare_modes checks shared budgets") {
        auto a = config_from_json(small_config("single"));
        auto b = config_from_json(small_config("heter"));
        b.eval.budget = 9;
        CHECK_THROWS_AS((void)compare_modes({a, b}), ConfigError);
        b.eval.budget = a.eval.budget;
        b.train.total_records = 0;
        a.train.total_records = 0;
        const auto cmp = compare_modes({a, b});
        CHECK(cmp.rows.size() == 2);
        CHECK(cmp.rows[0].mode == Mode::Single);
        CHECK(cmp.rows[1].agents == 2);
    }

    TEST_CASE("reward-model selection runs end to end") {
        auto j = small_config("heter");
        j["train"]["total_records"] = 0;
        j["env"]["hint_noise"] = 0.1;
        j["eval"]["select"] = "rm";
        j["rm"] = {{"epochs", 50}};
        const auto c = config_from_json(j);
        const auto r = run_experiment(c);
        REQUIRE(r.rows.size() == 1);
        CHECK(r.rows[0].pass1_mcts <= r.rows[0].pass_n);
    }
}

#include <benchmark/benchmark.h>

#include <algorithm>

#include <omp.h>

#include "mars/agents/agent.hpp"
#include "mars/diversity/diversity.hpp"
#include "mars/env/environment.hpp"
#include "mars/rl/objectives.hpp"
#include "mars/search/search.hpp"
#include "mars_ref/reference.hpp"

using namespace mars;

namespace {

std::vector<NodeRecord> make_batch(std::size_t n, std::size_t tokens) {
    Rng rng(1);
    std::vector<NodeRecord> batch(n);
    std::vector<double> rewards;
    for (auto& r : batch) {
        for (std::size_t t = 0; t < tokens; ++t) {
            const double base = -0.3 - 2.0 * uniform01(rng);
            r.trace.logp_old.push_back(base);
            r.trace.logp_new.push_back(std::min(0.0, base + 0.1 * (uniform01(rng) - 0.5)));
            r.trace.logp_ref.push_back(std::min(0.0, base + 0.1 * (uniform01(rng) - 0.5)));
            r.trace.logp_infer.push_back(base);
            r.trace.action_mask.push_back(1);
        }
        r.reward = bernoulli(rng, 0.3) ? 1.0 : 0.0;
        rewards.push_back(r.reward);
    }
    const auto adv = rl::tree_advantages(rewards);
    for (std::size_t i = 0; i < n; ++i) batch[i].set_advantage(adv[i]);
    return batch;
}

struct SearchFixture {
    std::vector<Task> tasks;
    search::AgentList agents;
    search::SearchConfig config;

    SearchFixture() {
        Rng rng(2);
        auto fam = env::make_family("f", 16, 0.05, rng);
        tasks = env::generate_task_set({fam}, 64, 10, 0.5, 3);
        for (int a = 1; a <= 2; ++a) {
            agents::SimAgentParams p;
            p.belief.assign(16, 0.5);
            for (std::size_t i = 0; i < 16; ++i) p.belief[i] = fam.pattern[i] ? 0.75 : 0.25;
            auto store = std::make_shared<agents::ParamStore>(p);
            agents.push_back(std::make_shared<agents::SimAgent>(AgentId{a}, store, store->load()));
        }
        config.budget = 32;
        config.depth_guidance = true;
    }
};

std::vector<std::vector<diversity::Vector>> make_points(std::size_t tasks, std::size_t n) {
    Rng rng(4);
    std::vector<std::vector<diversity::Vector>> out(tasks, std::vector<diversity::Vector>(n, diversity::Vector(8)));
    for (auto& t : out)
        for (auto& v : t)
            for (auto& x : v) x = uniform01(rng);
    return out;
}

void BM_Objective_Parallel(benchmark::State& state) {
    omp_set_num_threads(static_cast<int>(state.range(1)));
    const auto batch = make_batch(static_cast<std::size_t>(state.range(0)), 16);
    std::vector<std::vector<double>> g;
    for (auto _ : state)
        benchmark::DoNotOptimize(rl::agent_objective(batch, rl::LossParams{}, rl::Objective::Mars2Plus, nullptr, &g));
}

void BM_Objective_Serial(benchmark::State& state) {
    const auto batch = make_batch(static_cast<std::size_t>(state.range(0)), 16);
    std::vector<std::vector<double>> g;
    for (auto _ : state)
        benchmark::DoNotOptimize(ref::agent_objective(batch, rl::LossParams{}, rl::Objective::Mars2Plus, &g));
}

void BM_SearchBatch_Parallel(benchmark::State& state) {
    omp_set_num_threads(static_cast<int>(state.range(0)));
    const SearchFixture f;
    for (auto _ : state) benchmark::DoNotOptimize(search::run_search_batch(f.tasks, f.agents, f.config));
}

void BM_SearchBatch_Serial(benchmark::State& state) {
    const SearchFixture f;
    for (auto _ : state) benchmark::DoNotOptimize(ref::run_search_batch(f.tasks, f.agents, f.config));
}

void BM_Aec_Parallel(benchmark::State& state) {
    omp_set_num_threads(static_cast<int>(state.range(0)));
    const auto pts = make_points(64, 200);
    for (auto _ : state) benchmark::DoNotOptimize(diversity::aec(pts, 0.3, 4));
}

void BM_Aec_Serial(benchmark::State& state) {
    const auto pts = make_points(64, 200);
    for (auto _ : state) benchmark::DoNotOptimize(ref::aec(pts, 0.3, 4));
}

const int kThreads = std::max(2, omp_get_num_procs());

}  // namespace

BENCHMARK(BM_Objective_Serial)->Arg(256)->Arg(4096);
BENCHMARK(BM_Objective_Parallel)->Args({256, 1})->Args({4096, 1})->Args({4096, kThreads});
BENCHMARK(BM_SearchBatch_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SearchBatch_Parallel)->Arg(1)->Arg(kThreads)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Aec_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Aec_Parallel)->Arg(1)->Arg(kThreads)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "mars/agents/agent.hpp"
#include "mars/core/rng.hpp"
#include "mars/core/types.hpp"

namespace testing {

using namespace mars;

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Parallel log-prob lists of length n with small random gaps between them.
inline LogProbTrace random_trace(Rng& rng, std::size_t n, double spread = 0.2) {
    LogProbTrace t;
    for (std::size_t i = 0; i < n; ++i) {
        const double base = uniform(rng, -3.0, -0.3);
        t.logp_old.push_back(base);
        t.logp_new.push_back(std::min(0.0, base + uniform(rng, -spread, spread)));
        t.logp_ref.push_back(std::min(0.0, base + uniform(rng, -spread, spread)));
        t.logp_infer.push_back(std::min(0.0, base + uniform(rng, -spread, spread)));
        t.action_mask.push_back(1);
    }
    return t;
}

inline NodeRecord random_record(Rng& rng, std::size_t tokens, int agent = 1, double reward = -1.0) {
    NodeRecord r;
    r.task_id = "t";
    r.agent = AgentId{agent};
    r.trace = random_trace(rng, tokens);
    r.reward = reward >= 0.0 ? reward : (bernoulli(rng, 0.5) ? 1.0 : 0.0);
    return r;
}

inline std::shared_ptr<agents::ParamStore> make_store(std::vector<double> belief, double fix = 0.8, double drift = 0.05,
                                                      int trace_len = 4) {
    agents::SimAgentParams p;
    p.belief = std::move(belief);
    p.fix_prob = fix;
    p.drift_prob = drift;
    p.trace_len = trace_len;
    return std::make_shared<agents::ParamStore>(p);
}

inline std::shared_ptr<agents::SimAgent> make_agent(int id, std::vector<double> belief, double fix = 0.8,
                                                    double drift = 0.05, int trace_len = 4) {
    auto store = make_store(std::move(belief), fix, drift, trace_len);
    auto ref = store->load();
    return std::make_shared<agents::SimAgent>(AgentId{id}, store, ref);
}

}  // namespace testing

#pragma once

#include <vector>

#include "mars/core/types.hpp"
#include "mars/diversity/diversity.hpp"
#include "mars/rl/objectives.hpp"
#include "mars/search/search.hpp"

// Serial, direct-from-formula versions of the parallel kernels. Used by the
// tests as oracles and by the benchmark as the baseline.
namespace mars::ref {

[[nodiscard]] std::vector<double> tree_advantages(const std::vector<double>& rewards, double std_floor);

/// Same contract as rl::agent_objective, computed one record at a time with
/// the sequence ratio in product form.
[[nodiscard]] double agent_objective(const std::vector<NodeRecord>& batch, const rl::LossParams& params,
                                     rl::Objective kind, std::vector<std::vector<double>>* d_logp = nullptr);

[[nodiscard]] std::vector<search::SearchTrace> run_search_batch(const std::vector<Task>& tasks,
                                                                const search::AgentList& agents,
                                                                const search::SearchConfig& config);

[[nodiscard]] double aec(const std::vector<std::vector<diversity::Vector>>& per_task, double eps, int min_pts);

}  // namespace mars::ref

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mars/agents/agent.hpp"
#include "mars/bandit/beta.hpp"
#include "mars/core/tree.hpp"
#include "mars/env/environment.hpp"

namespace mars::search {

enum class FeedbackMode { Binary, Structured };

struct SearchConfig {
    int budget = 60;
    bool depth_guidance = false;
    bandit::DepthSchedule schedule;
    FeedbackMode feedback_mode = FeedbackMode::Structured;
    bool training_mode = false;
    std::uint64_t seed = 0;
    bandit::BanditPriors priors;

    /// Throws InvalidArgument for budget < 1 or a bad schedule.
    void validate() const;
};

struct ExpansionFailure {
    int step = 0;
    AgentId agent;
    int parent = 0;
    std::string error;
};

struct SearchTrace {
    std::string task_id;
    SearchTree tree;
    std::vector<NodeRecord> records;
    std::map<int, int> depth_histogram;
    std::optional<int> chosen_final;
    std::vector<ExpansionFailure> failures;
    std::map<AgentId, bandit::BetaPosterior> agent_stats;
};

using AgentList = std::vector<std::shared_ptr<const agents::Agent>>;

/// Budgeted adaptive-branching search over `agents`.
///
/// Each expansion draws one agent by Thompson sampling, then descends from
/// the virtual root with select_action until GEN fires. GEN at the root is a
/// fresh proposal; GEN below the root refines that node using its feedback
/// (binary or structured, per config). The new node is evaluated, and its
/// reward is backed up into the agent statistics, the GEN posterior at the
/// expansion point and the CON posteriors along the descent path.
///
/// A remote failure consumes its budget slot, is recorded in `failures`, and
/// leaves all posteriors unchanged.
[[nodiscard]] SearchTrace run_search(const Task& task, const AgentList& agents, const SearchConfig& config, Rng& rng,
                                     const env::Evaluator* evaluator = nullptr);

/// Runs one search per task, in parallel. Run i uses the stream
/// derive_stream(config.seed, tasks[i].id), so the output is independent of
/// thread count and scheduling.
[[nodiscard]] std::vector<SearchTrace> run_search_batch(const std::vector<Task>& tasks, const AgentList& agents,
                                                        const SearchConfig& config,
                                                        const env::Evaluator* evaluator = nullptr);

/// Id of the highest-id node with public reward 1.
[[nodiscard]] std::optional<int> final_vanilla_id(const SearchTrace& trace);
[[nodiscard]] std::optional<Solution> final_vanilla(const SearchTrace& trace);

/// Fraction of expansions at each depth. Throws EmptyTree for an empty trace.
[[nodiscard]] std::map<int, double> depth_stats(const SearchTrace& trace);

/// "1:10;2:4;3:1"
[[nodiscard]] std::string format_histogram(const std::map<int, int>& hist);

/// Summary CSV with header task_id,solved_public,solved_private,expansions,depth_histogram.
/// solved_* refer to the trace's chosen_final node.
void write_summary_csv(std::ostream& out, const std::vector<SearchTrace>& traces);

}  // namespace mars::search

#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mars/bandit/beta.hpp"
#include "mars/core/types.hpp"

namespace mars {

/// One expansion of the search tree. Node 0 is the virtual root: depth 0,
/// no solution, no evaluation.
struct SearchNode {
    int id = 0;
    std::optional<int> parent;
    int depth = 0;
    Solution solution;
    double reward = 0.0;
    EvalReport eval_report;
    AgentId agent;
    PromptContext context;
    LogProbTrace trace;

    /// GEN statistics per agent: scores of the children that agent generated here.
    std::map<AgentId, bandit::BetaPosterior> gen_posteriors;
    /// CON statistics: every score observed in this node's subtree, itself included.
    bandit::BetaPosterior con_posterior;
    std::vector<int> children;

    [[nodiscard]] bool is_root() const noexcept { return id == 0; }
};

/// Adaptive-branching search tree. Ids are assigned in expansion order, so a
/// node's id is also the expansion step that created it.
class SearchTree {
public:
    explicit SearchTree(bandit::BanditPriors priors = {});

    [[nodiscard]] const SearchNode& root() const noexcept { return nodes_.front(); }
    [[nodiscard]] const SearchNode& node(int id) const;
    [[nodiscard]] std::span<const SearchNode> nodes() const noexcept { return nodes_; }
    /// Number of expanded (non-root) nodes.
    [[nodiscard]] std::size_t expansions() const noexcept { return nodes_.size() - 1; }
    [[nodiscard]] const bandit::BanditPriors& priors() const noexcept { return priors_; }

    /// GEN posterior of (node, agent), or the prior if the agent never generated there.
    [[nodiscard]] bandit::BetaPosterior gen_posterior(int node_id, AgentId agent) const;

    /// Appends a child of parent_id and returns its id. The child's CON
    /// posterior starts at the prior updated with its own reward.
    int add_node(int parent_id, Solution solution, EvalReport report, double reward, AgentId agent,
                 PromptContext context, LogProbTrace trace);

    void observe_gen(int node_id, AgentId agent, double score);
    void observe_con(int node_id, double score);

private:
    SearchNode& mutable_node(int id);

    bandit::BanditPriors priors_;
    std::vector<SearchNode> nodes_;
};

/// One record per non-root node, in id order. Throws EmptyTree when only the
/// virtual root exists.
[[nodiscard]] std::vector<NodeRecord> collect_records(const SearchTree& tree, const std::string& task_id = {});

/// Ids of nodes whose public reward is 1, ascending.
[[nodiscard]] std::vector<int> passing_nodes(const SearchTree& tree);

/// Flat per-node summary used by the trace file format.
struct NodeSummary {
    int id = 0;
    std::optional<int> parent;
    int depth = 0;
    int agent = 0;
    double reward = 0.0;
    std::string bits_hex;
    int size = 0;
    EvalReport eval;

    friend bool operator==(const NodeSummary& a, const NodeSummary& b) {
        return a.id == b.id && a.parent == b.parent && a.depth == b.depth && a.agent == b.agent &&
               a.reward == b.reward && a.bits_hex == b.bits_hex && a.size == b.size &&
               a.eval.passed_public == b.eval.passed_public && a.eval.total_public == b.eval.total_public &&
               a.eval.passed_private == b.eval.passed_private && a.eval.total_private == b.eval.total_private;
    }
};

/// Line-delimited JSON, one object per expanded node in id order:
/// {"id","parent","depth","agent","reward","bits","m","eval":{...}}. The
/// virtual root is the implicit parent 0 and has no line of its own.
void write_tree_trace(std::ostream& out, const SearchTree& tree);
[[nodiscard]] std::vector<NodeSummary> read_tree_trace(std::istream& in);

}  // namespace mars

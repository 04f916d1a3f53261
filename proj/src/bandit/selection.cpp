#include "mars/bandit/selection.hpp"

namespace mars::bandit {

Action select_action(const SearchTree& tree, int node_id, AgentId agent, const std::map<int, int>& depth_counts,
                     const std::optional<DepthSchedule>& sched, Rng& rng) {
    const SearchNode& node = tree.node(node_id);
    if (node.children.empty()) return Action::gen();

    double gen_score = sample(tree.gen_posterior(node_id, agent), rng);
    if (sched) {
        const int child_depth = node.depth + 1;
        const auto it = depth_counts.find(child_depth);
        const int count = it == depth_counts.end() ? 0 : it->second;
        gen_score *= depth_weight(child_depth, count, *sched);
    }

    Action best = Action::gen();
    double best_score = gen_score;
    for (int child : node.children) {
        const double draw = sample(tree.node(child).con_posterior, rng);
        if (draw > best_score) {
            best_score = draw;
            best = Action::con(child);
        }
    }
    return best;
}

}  // namespace mars::bandit

#pragma once

#include <map>
#include <optional>

#include "mars/bandit/beta.hpp"
#include "mars/core/rng.hpp"
#include "mars/core/tree.hpp"

namespace mars::bandit {

/// GEN expands a new child at the current node; CON descends into `child`.
struct Action {
    enum class Kind { Gen, Con };
    Kind kind = Kind::Gen;
    int child = -1;

    static Action gen() { return {Kind::Gen, -1}; }
    static Action con(int child) { return {Kind::Con, child}; }
    [[nodiscard]] bool is_gen() const noexcept { return kind == Kind::Gen; }

    friend bool operator==(const Action&, const Action&) = default;
};

/// Node selection for one agent at one node. Draws the agent's GEN posterior
/// first, then one CON draw per child in id order; the largest draw wins,
/// ties prefer GEN and then the lowest child id.
///
/// With a depth schedule, the GEN draw is scaled by depth_weight(d, c_d)
/// where d = node.depth + 1 and c_d = depth_counts[d]. Without one the
/// weight is identically 1.
[[nodiscard]] Action select_action(const SearchTree& tree, int node_id, AgentId agent,
                                   const std::map<int, int>& depth_counts,
                                   const std::optional<DepthSchedule>& sched, Rng& rng);

}  // namespace mars::bandit

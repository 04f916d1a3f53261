#include "mars/bandit/beta.hpp"

#include <cmath>
#include <string>

#include "mars/core/errors.hpp"

namespace mars::bandit {

BetaPosterior update_posterior(BetaPosterior post, double score) {
    if (!(score >= 0.0 && score <= 1.0)) throw InvalidScore("score " + std::to_string(score) + " not in [0, 1]");
    post.alpha += score;
    post.beta += 1.0 - score;
    return post;
}

double sample(const BetaPosterior& post, Rng& rng) {
    std::gamma_distribution<double> ga(post.alpha, 1.0);
    std::gamma_distribution<double> gb(post.beta, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    const double s = x + y;
    // Both gamma draws can underflow to zero for tiny shape parameters.
    if (s <= 0.0) return post.alpha / (post.alpha + post.beta);
    return x / s;
}

AgentId select_agent(const std::map<AgentId, BetaPosterior>& stats, Rng& rng) {
    if (stats.empty()) throw NoAgents("agent statistics are empty");
    if (stats.size() == 1) return stats.begin()->first;
    AgentId best = stats.begin()->first;
    double best_draw = -1.0;
    for (const auto& [id, post] : stats) {
        const double draw = sample(post, rng);
        if (draw > best_draw) {
            best_draw = draw;
            best = id;
        }
    }
    return best;
}

double DepthSchedule::gamma(int depth) const {
    return std::max(gamma_min, gamma1 * std::pow(decay, depth - 1));
}

void DepthSchedule::validate() const {
    if (!(gamma1 > 0.0 && gamma1 < 1.0)) throw InvalidArgument("gamma1 must lie in (0, 1)");
    if (!(decay > 0.0 && decay <= 1.0)) throw InvalidArgument("decay must lie in (0, 1]");
    if (!(gamma_min > 0.0 && gamma_min <= gamma1)) throw InvalidArgument("gamma_min must lie in (0, gamma1]");
}

double depth_weight(int depth, int count_at_depth, const DepthSchedule& sched) {
    if (depth < 1) throw InvalidArgument("depth must be >= 1");
    if (count_at_depth < 0) throw InvalidArgument("depth count must be >= 0");
    if (count_at_depth == 0) return 1.0;
    return std::pow(sched.gamma(depth), count_at_depth);
}

}  // namespace mars::bandit

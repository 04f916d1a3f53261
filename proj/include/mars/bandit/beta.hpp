#pragma once

#include <map>

#include "mars/core/rng.hpp"
#include "mars/core/types.hpp"

namespace mars::bandit {

/// Beta(alpha, beta) posterior over an action's expected score, together
/// with the prior it started from.
struct BetaPosterior {
    double alpha = 1.0;
    double beta = 1.0;
    double prior_alpha = 1.0;
    double prior_beta = 1.0;

    static BetaPosterior from_prior(double a, double b) { return BetaPosterior{a, b, a, b}; }

    /// Total score mass observed so far; equals the number of updates.
    [[nodiscard]] double observations() const noexcept { return (alpha + beta) - (prior_alpha + prior_beta); }
    [[nodiscard]] double mean() const noexcept { return alpha / (alpha + beta); }
};

struct BanditPriors {
    double alpha = 1.0;
    double beta = 1.0;

    [[nodiscard]] BetaPosterior posterior() const { return BetaPosterior::from_prior(alpha, beta); }
};

/// alpha += score, beta += 1 - score. Throws InvalidScore outside [0, 1].
[[nodiscard]] BetaPosterior update_posterior(BetaPosterior post, double score);

/// One draw from Beta(alpha, beta), via the ratio of two gamma variates.
[[nodiscard]] double sample(const BetaPosterior& post, Rng& rng);

/// Model selection: one Thompson draw per agent, argmax wins, ties go to the
/// lowest agent index. Throws NoAgents on an empty map.
[[nodiscard]] AgentId select_agent(const std::map<AgentId, BetaPosterior>& stats, Rng& rng);

/// gamma(d) = max(gamma_min, gamma1 * decay^(d-1)).
struct DepthSchedule {
    double gamma1 = 0.98;
    double decay = 0.9;
    double gamma_min = 0.5;

    [[nodiscard]] double gamma(int depth) const;
    /// Throws InvalidArgument unless 0 < gamma_min <= gamma1 < 1 and 0 < decay <= 1.
    void validate() const;
};

/// gamma(d)^c_d: the multiplier applied to a GEN Thompson draw when the
/// prospective child would sit at depth d and c_d nodes already exist there.
[[nodiscard]] double depth_weight(int depth, int count_at_depth, const DepthSchedule& sched);

}  // namespace mars::bandit

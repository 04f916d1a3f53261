#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "mars/agents/agent.hpp"
#include "mars/core/types.hpp"

namespace mars::rl {

/// How the inference/training mismatch enters the sequence-ratio objective.
/// TruncatedRatio: min(exp(sum(infer - old)), tis_clip).
/// LogRatio: the log of that truncated ratio, used literally as a prefactor.
enum class TisMode { TruncatedRatio, LogRatio };

enum class Objective { Mars2, Mars2Plus };

struct LossParams {
    double eps_low = 0.2;
    double eps_high = 0.28;
    double beta_kl = 1e-3;
    double l_max = 16.0;
    double l_cache = 4.0;
    double tis_clip = 2.0;
    double std_floor = 1e-8;
    TisMode tis_mode = TisMode::TruncatedRatio;

    /// Throws InvalidArgument when a radius, std_floor or tis_clip is not
    /// positive, beta_kl is negative, or l_cache is outside (0, l_max).
    void validate() const;
};

/// Z-score over the whole tree with population std. Groups whose std falls
/// below std_floor get all-zero advantages.
[[nodiscard]] std::vector<double> tree_advantages(std::span<const double> rewards, double std_floor = 1e-8);
[[nodiscard]] std::vector<double> grpo_advantages(std::span<const double> rewards, double std_floor = 1e-8);

[[nodiscard]] double token_ratio(const LogProbTrace& trace, std::size_t t);
/// Geometric mean of the token ratios over active tokens.
[[nodiscard]] double gspo_ratio(const LogProbTrace& trace);
[[nodiscard]] double overlong_penalty(double length, const LossParams& params);
/// sum_t (logp_infer - logp_old) over active tokens.
[[nodiscard]] double tis_log_ratio(const LogProbTrace& trace);
/// Prefactor applied to each sequence term, per params.tis_mode.
[[nodiscard]] double tis_factor(const LogProbTrace& trace, const LossParams& params);
/// Mean per-token k3 estimate of KL(new || ref) over active tokens.
[[nodiscard]] double kl_k3(const LogProbTrace& trace);

/// Sets length_penalty on every record from its active token count.
void shape_rewards(std::span<NodeRecord> records, const LossParams& params);

/// Assigns tree advantages to all records of one tree, from shaped rewards
/// when `shaped` is set.
void assign_tree_advantages(std::span<NodeRecord> tree_records, double std_floor, bool shaped);

/// True when every reward in the tree is equal to 0 or every reward is 1.
[[nodiscard]] bool degenerate_tree(std::span<const NodeRecord> tree_records);

struct RecordTerm {
    double surrogate = 0.0;  // summed over active tokens, before normalization
    double kl = 0.0;         // summed per-token k3 over active tokens
    double prefactor = 1.0;  // TIS factor (1 for Mars2)
    double value = 0.0;      // prefactor * (surrogate - beta * kl) / N_j
};

struct ObjectiveResult {
    double value = 0.0;
    std::vector<double> per_agent;
    /// Flattened in group order, then record order.
    std::vector<RecordTerm> terms;
};

/// Objective of one agent buffer, normalized by its total active token count.
/// When d_logp is given it receives dJ/dlogp_new per record and token.
/// Throws StateError if a record has no advantage, DegenerateDenominator if
/// the buffer has no active tokens.
[[nodiscard]] double agent_objective(std::span<const NodeRecord> batch, const LossParams& params, Objective kind,
                                     std::vector<RecordTerm>* terms = nullptr,
                                     std::vector<std::vector<double>>* d_logp = nullptr);

[[nodiscard]] ObjectiveResult mars2_objective(const std::vector<std::vector<NodeRecord>>& groups,
                                              const LossParams& params);
[[nodiscard]] ObjectiveResult mars2plus_objective(const std::vector<std::vector<NodeRecord>>& groups,
                                                  const LossParams& params);

/// dJ/dz for z = logit(belief), one vector per topic seen in the batch.
using BeliefGradient = std::map<std::string, std::vector<double>>;

/// Rescores `batch` under `params` and returns the gradient of the agent
/// objective with respect to the logits of the beliefs each record used.
[[nodiscard]] BeliefGradient belief_gradient(std::vector<NodeRecord>& batch, const agents::SimAgentParams& params,
                                             const LossParams& loss, Objective kind);

/// Objective of `batch` after rescoring logp_new under `params`.
[[nodiscard]] double objective_at(std::vector<NodeRecord>& batch, const agents::SimAgentParams& params,
                                  const LossParams& loss, Objective kind);

}  // namespace mars::rl

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "mars/core/rng.hpp"
#include "mars/core/types.hpp"

namespace mars::agents {

struct Proposal {
    Solution solution;
    LogProbTrace trace;
};

/// Anything that can play a search agent. Implementations only ever see the
/// public TaskView and public feedback.
class Agent {
public:
    virtual ~Agent() = default;

    [[nodiscard]] virtual AgentId id() const = 0;
    /// GEN: a fresh candidate.
    [[nodiscard]] virtual Proposal propose(const TaskView& task, Rng& rng) const = 0;
    /// CON: a refinement of `parent` conditioned on its feedback.
    [[nodiscard]] virtual Proposal refine(const TaskView& task, const Solution& parent, const Feedback& feedback,
                                          Rng& rng) const = 0;
};

/// Parameters of a simulated stochastic policy over bit strings.
///
/// The policy is conditioned on the task topic: topic_belief[topic][i] is the
/// agent's probability that bit i is 1 on tasks of that topic, and `belief`
/// covers topics without an entry. Sampling uses
/// p_i = sigmoid(logit_scale * logit(belief[i])), so logit_scale = 1 samples
/// the belief directly and larger values sharpen it.
struct SimAgentParams {
    std::vector<double> belief;
    std::map<std::string, std::vector<double>> topic_belief;
    double fix_prob = 0.8;
    double drift_prob = 0.05;
    int trace_len = 4;
    double logit_scale = 1.0;

    static constexpr double kMinBelief = 1e-6;
    static constexpr double kMaxBelief = 1.0 - 1e-6;

    [[nodiscard]] int size() const noexcept { return static_cast<int>(belief.size()); }
    [[nodiscard]] const std::vector<double>& beliefs_for(const std::string& topic) const;
    /// Sampling probability of bit i being 1. Beliefs of exactly 0 or 1 sample
    /// deterministically.
    [[nodiscard]] double bit_prob(std::size_t i, const std::string& topic = {}) const;
    /// Log-probability of `bit`, with the probability clamped to
    /// [kMinBelief, kMaxBelief] so traces stay finite.
    [[nodiscard]] double bit_logprob(std::size_t i, bool bit, const std::string& topic = {}) const;
    /// Throws InvalidArgument on out-of-range probabilities, topic vectors of
    /// the wrong length, trace_len < 1 or a non-positive logit_scale.
    void validate() const;
};

/// Holds the live parameter snapshot of one simulated policy. Readers get an
/// immutable shared snapshot; store() swaps it in one step, so rollouts in
/// flight keep the version they started with.
class ParamStore {
public:
    explicit ParamStore(SimAgentParams initial);

    [[nodiscard]] std::shared_ptr<const SimAgentParams> load() const;
    void store(SimAgentParams next);
    [[nodiscard]] std::uint64_t version() const;

private:
    mutable std::mutex mu_;
    std::shared_ptr<const SimAgentParams> current_;
    std::uint64_t version_ = 0;
};

/// Contiguous bit ranges [begin, end) making up each of `tokens` pseudo-tokens.
[[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> token_chunks(std::size_t bits, int tokens);

/// Per-token log-probability of `bits` under `params` for `topic`; token t
/// sums the Bernoulli log-probabilities of its chunk.
[[nodiscard]] std::vector<double> token_logprobs(const SimAgentParams& params, const BitVector& bits,
                                                 const std::string& topic = {});

/// Recomputes record.trace.logp_new against `params` for the record's topic.
void rescore(NodeRecord& record, const SimAgentParams& params);

/// Simulated agent. Proposals draw every bit from the belief policy.
/// Refinements correct each feedback-named public failure with probability
/// fix_prob and flip every other bit with probability drift_prob.
///
/// Both kinds of output are scored under the belief policy: the trace holds
/// the log-probability the agent's policy assigns to the emitted bits.
/// logp_old is that value at sampling time, logp_ref is taken under the
/// frozen reference snapshot, and logp_infer adds N(0, infer_sigma) noise to
/// logp_old to stand in for an inference engine that disagrees slightly
/// with the trainer.
class SimAgent final : public Agent {
public:
    SimAgent(AgentId id, std::shared_ptr<ParamStore> params, std::shared_ptr<const SimAgentParams> reference,
             double infer_sigma = 0.0);

    [[nodiscard]] AgentId id() const override { return id_; }
    [[nodiscard]] Proposal propose(const TaskView& task, Rng& rng) const override;
    [[nodiscard]] Proposal refine(const TaskView& task, const Solution& parent, const Feedback& feedback,
                                  Rng& rng) const override;

    [[nodiscard]] const std::shared_ptr<ParamStore>& params() const noexcept { return params_; }

private:
    [[nodiscard]] Proposal finish(BitVector bits, const SimAgentParams& snapshot, const std::string& topic,
                                  Rng& rng) const;

    AgentId id_;
    std::shared_ptr<ParamStore> params_;
    std::shared_ptr<const SimAgentParams> reference_;
    double infer_sigma_;
};

}  // namespace mars::agents

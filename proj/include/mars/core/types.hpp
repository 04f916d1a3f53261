#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mars/core/bits.hpp"

namespace mars {

/// 1-based agent index j in {1..m}.
struct AgentId {
    int value = 1;

    [[nodiscard]] std::size_t slot() const noexcept { return static_cast<std::size_t>(value - 1); }
    static AgentId from_slot(std::size_t slot) noexcept { return AgentId{static_cast<int>(slot) + 1}; }

    friend auto operator<=>(const AgentId&, const AgentId&) = default;
};

enum class Visibility { Public, Private };

struct TestCase {
    int index = 0;
    Visibility visibility = Visibility::Public;
    bool expected = false;
};

/// What an agent (or the reward model) is allowed to know about a task.
/// The hidden target and the private test expectations are not reachable
/// from here.
struct TaskView {
    std::string id;
    int size = 0;
    int public_count = 0;
    BitVector hints;  // noisy copy of the target, empty when the task has no hint channel
    std::string topic;  // problem category shown with the prompt (the task family)
};

/// A synthetic verifiable problem. Test i checks bit i of a candidate against
/// target[i]; the first public_count tests are public.
struct Task {
    std::string id;
    BitVector target;
    std::vector<TestCase> tests;
    int public_count = 0;
    BitVector hints;
    double hint_noise = 0.5;
    std::uint64_t seed = 0;
    std::string family;

    [[nodiscard]] int size() const noexcept { return static_cast<int>(target.size()); }
    [[nodiscard]] int private_count() const noexcept { return size() - public_count; }
    [[nodiscard]] TaskView view() const { return TaskView{id, size(), public_count, hints, family}; }
};

struct Solution {
    BitVector bits;
    AgentId source_agent;
    int born_at = 0;
};

struct FailedCase {
    int index = 0;
    bool expected = false;
    bool produced = false;

    friend bool operator==(const FailedCase&, const FailedCase&) = default;
};

/// Public half of an evaluation. Everything downstream of the environment
/// that must not see private outcomes takes this type.
struct PublicEvalReport {
    int passed_public = 0;
    int total_public = 0;
    std::vector<FailedCase> failed_public_cases;

    [[nodiscard]] double pass_fraction() const noexcept {
        return total_public == 0 ? 1.0 : static_cast<double>(passed_public) / total_public;
    }
    [[nodiscard]] bool all_passed() const noexcept { return passed_public == total_public; }
};

struct EvalReport {
    int passed_public = 0;
    int total_public = 0;
    int passed_private = 0;
    int total_private = 0;
    std::vector<FailedCase> failed_public_cases;

    [[nodiscard]] PublicEvalReport public_view() const {
        return PublicEvalReport{passed_public, total_public, failed_public_cases};
    }
    /// Private pass rate; an empty private set counts as fully passed.
    [[nodiscard]] double private_pass_rate() const noexcept {
        return total_private == 0 ? 1.0 : static_cast<double>(passed_private) / total_private;
    }
    [[nodiscard]] bool private_passed() const noexcept { return passed_private == total_private; }
    [[nodiscard]] bool all_passed() const noexcept {
        return passed_public == total_public && passed_private == total_private;
    }
};

struct FeedbackSummary {
    int passed = 0;
    int total = 0;
    double pass_rate = 1.0;

    friend bool operator==(const FeedbackSummary&, const FeedbackSummary&) = default;
};

struct FailureDetail {
    int index = 0;
    bool produced = false;
    bool expected = false;

    friend bool operator==(const FailureDetail&, const FailureDetail&) = default;
};

/// Structured diagnostic feedback built from public tests only.
struct FeedbackReport {
    FeedbackSummary summary;
    std::vector<FailureDetail> failures;  // ordered by test index

    friend bool operator==(const FeedbackReport&, const FeedbackReport&) = default;
};

/// The vanilla refinement signal: pass or fail, nothing else.
struct BinaryFeedback {
    bool passed = false;

    friend bool operator==(const BinaryFeedback&, const BinaryFeedback&) = default;
};

using Feedback = std::variant<BinaryFeedback, FeedbackReport>;

/// Per-token log-probabilities of one generated output under the four
/// policies the objectives need.
struct LogProbTrace {
    std::vector<double> logp_new;
    std::vector<double> logp_old;
    std::vector<double> logp_ref;
    std::vector<double> logp_infer;
    std::vector<std::uint8_t> action_mask;

    [[nodiscard]] std::size_t size() const noexcept { return logp_new.size(); }
    [[nodiscard]] std::size_t active_tokens() const noexcept;

    /// Throws ShapeError unless all lists are parallel, non-empty, finite and <= 0.
    void validate() const;
};

struct FreshContext {};

struct RefinementContext {
    int parent_id = 0;
    Feedback feedback;
};

using PromptContext = std::variant<FreshContext, RefinementContext>;

/// Everything one expansion contributes to training.
class NodeRecord {
public:
    std::string task_id;
    int node_id = 0;
    AgentId agent;
    std::string topic;
    PromptContext context;
    LogProbTrace trace;
    BitVector output;
    double reward = 0.0;          // environment reward in {0, 1}
    double length_penalty = 0.0;  // overlong shaping, in [-1, 0]

    [[nodiscard]] double shaped_reward() const noexcept { return reward + length_penalty; }

    [[nodiscard]] bool has_advantage() const noexcept { return advantage_.has_value(); }
    /// Throws StateError if no advantage was assigned yet.
    [[nodiscard]] double advantage() const;
    /// Throws StateError on a second assignment.
    void set_advantage(double a);

private:
    std::optional<double> advantage_;
};

}  // namespace mars

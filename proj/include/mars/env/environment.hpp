#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "mars/core/rng.hpp"
#include "mars/core/types.hpp"

namespace mars::env {

struct TaskOptions {
    std::string id = "task";
    /// Probability that a hint bit disagrees with the target. 0.5 makes the
    /// hint channel pure noise.
    double hint_noise = 0.5;
};

/// Uniformly random target of length m; the first p tests are public.
/// Throws InvalidArgument unless 0 < p <= m.
[[nodiscard]] Task generate_task(int m, int p, Rng& rng, const TaskOptions& opts = {});

/// A family of related tasks: each task's target is `pattern` with bit i
/// flipped independently with probability volatility[i]. A family whose
/// pattern is itself uniformly random yields marginally uniform targets,
/// but tasks of one family share structure that training can pick up.
struct TaskFamily {
    std::string name;
    BitVector pattern;
    std::vector<double> volatility;
    double weight = 1.0;

    [[nodiscard]] int size() const noexcept { return static_cast<int>(pattern.size()); }
};

/// Family with a uniformly random pattern and constant per-bit volatility.
[[nodiscard]] TaskFamily make_family(std::string name, int m, double volatility, Rng& rng);

[[nodiscard]] Task generate_family_task(const TaskFamily& family, int p, Rng& rng, const TaskOptions& opts = {});

/// Deterministic task set: task i is drawn from the stream (seed, prefix-i),
/// its family chosen in proportion to the family weights.
[[nodiscard]] std::vector<Task> generate_task_set(const std::vector<TaskFamily>& families, int count, int p,
                                                  double hint_noise, std::uint64_t seed,
                                                  const std::string& id_prefix = "task");

/// Exact per-test comparison. Throws ShapeError on a length mismatch.
[[nodiscard]] EvalReport evaluate(const Task& task, const BitVector& bits);
[[nodiscard]] inline EvalReport evaluate(const Task& task, const Solution& s) { return evaluate(task, s.bits); }

/// 1 iff every public test passed; in training mode every private test must
/// pass as well.
[[nodiscard]] int public_reward(const EvalReport& report, bool training_mode = false);

/// Summary plus public failures in test-index order. Only public data is read.
[[nodiscard]] FeedbackReport make_feedback(const PublicEvalReport& report);
[[nodiscard]] inline FeedbackReport make_feedback(const EvalReport& report) {
    return make_feedback(report.public_view());
}

/// Pluggable verification backend. The synthetic bit-matching backend is the
/// default; an external one (e.g. real code execution) registers by name.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    [[nodiscard]] virtual EvalReport evaluate(const Task& task, const BitVector& bits) const = 0;
    [[nodiscard]] virtual FeedbackReport make_feedback(const PublicEvalReport& report) const {
        return env::make_feedback(report);
    }
};

class SyntheticEvaluator final : public Evaluator {
public:
    [[nodiscard]] std::string name() const override { return "synthetic"; }
    [[nodiscard]] EvalReport evaluate(const Task& task, const BitVector& bits) const override {
        return env::evaluate(task, bits);
    }
};

/// Name -> factory map behind the `environment.backend` config key, which
/// takes "synthetic" or "external:<name>".
class EvaluatorRegistry {
public:
    using Factory = std::function<std::shared_ptr<const Evaluator>()>;

    static EvaluatorRegistry& global();

    void register_external(const std::string& name, Factory factory);
    /// Throws ConfigError for unknown backends.
    [[nodiscard]] std::shared_ptr<const Evaluator> resolve(const std::string& backend) const;

private:
    mutable std::mutex mu_;
    std::map<std::string, Factory> external_;
};

/// Task-set file: one JSON object per line with
/// {"id","M","P","target","seed","hint_noise","hints","family"}; target and
/// hints are hex (see BitVector::to_hex).
void write_tasks(std::ostream& out, const std::vector<Task>& tasks);
[[nodiscard]] std::vector<Task> read_tasks(std::istream& in);

}  // namespace mars::env

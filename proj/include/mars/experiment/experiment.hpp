#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mars/agents/agent.hpp"
#include "mars/agents/remote_agent.hpp"
#include "mars/dispatch/dispatch.hpp"
#include "mars/env/environment.hpp"
#include "mars/reward_model/reward_model.hpp"
#include "mars/rl/objectives.hpp"
#include "mars/search/search.hpp"

namespace mars::experiment {

/// single: one agent trained on flat sampled groups (GRPO-style).
/// homo: several roles in one search tree sharing one parameter store.
/// heter: several agents in one search tree, each with its own store.
enum class Mode { Single, Homo, Heter };

[[nodiscard]] std::string to_string(Mode mode);
[[nodiscard]] Mode parse_mode(const std::string& s);

struct FamilySpec {
    std::string name;
    double volatility = 0.05;
    double weight = 1.0;
};

struct EnvConfig {
    int m = 16;
    int p = 10;
    double hint_noise = 0.5;
    int train_tasks = 64;
    int eval_tasks = 100;
    int rm_tasks = 100;
    std::vector<FamilySpec> families{{"base", 0.05, 1.0}};
};

struct AgentSpec {
    std::string name = "agent";
    /// Family whose pattern seeds the belief; empty means belief 0.5 everywhere.
    std::string skill;
    double confidence = 0.75;
    double fix_prob = 0.8;
    double drift_prob = 0.05;
    int trace_len = 4;
    double logit_scale = 1.0;
    /// When set the agent is served over HTTP instead of simulated.
    std::optional<std::string> remote_endpoint;
};

struct TrainConfig {
    rl::LossParams loss;
    rl::Objective objective = rl::Objective::Mars2Plus;
    double step_size = 4.0;
    int threshold = 64;
    bool filter = true;
    /// Training stops once this many records have been trained on; a
    /// multiple of threshold.
    int total_records = 0;
    int rollout_batch = 8;
    /// Evaluate a checkpoint every this many updates (0: start and end only).
    int checkpoint_every = 0;
    double infer_sigma = 0.0;
    /// Rollout budget per training task (tree expansions or flat group size).
    int budget = 16;
};

enum class Selector { Vanilla, RewardModel };

struct EvalConfig {
    int budget = 16;
    Selector select = Selector::Vanilla;
    int k_max = 8;
};

struct RmConfig {
    std::string loss = "mse";
    int epochs = 400;
    double lr = 0.5;
};

struct ExperimentConfig {
    Mode mode = Mode::Heter;
    std::uint64_t seed = 1;
    EnvConfig env;
    std::vector<AgentSpec> agents{AgentSpec{}};
    search::SearchConfig search;
    TrainConfig train;
    EvalConfig eval;
    RmConfig rm;
    /// "synthetic" or "external:<name>" (see env::EvaluatorRegistry).
    std::string backend = "synthetic";
    int remote_timeout_ms = 30000;
    int remote_retries = 0;

    /// Throws ConfigError naming the offending key.
    void validate() const;
};

/// Reads a config object. Nested objects are flattened to dotted keys, so
/// {"search": {"budget": 8}} and {"search.budget": 8} are the same. Unknown
/// keys and bad values throw ConfigError with the key path.
[[nodiscard]] ExperimentConfig config_from_json(const nlohmann::json& j);
[[nodiscard]] ExperimentConfig load_config(const std::string& path);
[[nodiscard]] nlohmann::json config_to_json(const ExperimentConfig& config);

/// Task families and task sets of a config, all derived from config.seed.
struct Environment {
    std::vector<env::TaskFamily> families;
    std::vector<Task> train;
    std::vector<Task> eval;
    std::vector<Task> rm;
};
[[nodiscard]] Environment build_environment(const ExperimentConfig& config);

[[nodiscard]] agents::SimAgentParams initial_params(const AgentSpec& spec, const Environment& env, int m);

/// Agents of one mode with the stores that back them. In homo mode every
/// role points at the same store.
struct Population {
    search::AgentList agents;
    std::map<AgentId, std::shared_ptr<agents::ParamStore>> stores;
    std::vector<std::shared_ptr<agents::ParamStore>> distinct_stores;
    std::shared_ptr<const env::Evaluator> evaluator;
};
[[nodiscard]] Population build_population(const ExperimentConfig& config, const Environment& env);

/// Mean over tasks and distinct stores of the probability that one fresh
/// proposal is fully correct.
[[nodiscard]] double analytic_pass1(const Population& pop, const std::vector<Task>& tasks);

struct Row {
    Mode mode = Mode::Single;
    int agents = 1;
    int checkpoint_step = 0;
    std::uint64_t trained_records = 0;
    double pass1 = 0.0;
    double pass1_mcts = 0.0;
    double pass_n = 0.0;
    std::map<int, int> depth_histogram;
    double ea = 0.0;
    double naudc = 0.0;
    std::uint64_t eval_expansions = 0;
};

struct CurvePoint {
    int update = 0;
    std::uint64_t trained_records = 0;
    int step = 0;  // rollout round the update was applied in
    double pass1 = 0.0;
};

struct ExperimentResult {
    std::vector<Row> rows;
    std::vector<CurvePoint> curve;
    std::vector<dispatch::UpdateLogEntry> updates;
    std::uint64_t produced = 0;
    std::uint64_t filtered = 0;
    std::uint64_t dispatched = 0;

    /// First update at which the curve reaches `target`, if any.
    [[nodiscard]] std::optional<int> updates_to(double target) const;
    /// First rollout step at which the curve reaches `target`, if any.
    [[nodiscard]] std::optional<int> steps_to(double target) const;
};

/// Fits the configured reward model on searches over the rm task set.
[[nodiscard]] rm::RmModel train_reward_model(const ExperimentConfig& config, const Environment& env,
                                             const Population& pop);

/// Evaluates the population on the eval tasks with budget config.eval.budget.
[[nodiscard]] Row evaluate_population(const ExperimentConfig& config, const Environment& env, const Population& pop,
                                      const std::optional<rm::RmModel>& model, int step);

/// Full pipeline: rollouts, dispatch, training with checkpoints, evaluation.
[[nodiscard]] ExperimentResult run_experiment(const ExperimentConfig& config);

/// Rows as CSV with a fixed column order and fixed-precision numbers.
void write_rows_csv(std::ostream& out, const std::vector<Row>& rows);
/// Plot data for the Pass@1 curve: series,update,step,trained_records,pass1.
void write_curve(std::ostream& out, const std::string& series, const std::vector<CurvePoint>& curve,
                 bool header = true);

struct Comparison {
    std::vector<Row> rows;
    std::vector<ExperimentResult> results;
};

/// Runs every config and reports one row per config: the best checkpoint by
/// Pass@1(MCTS) for homo, the final checkpoint otherwise. Throws ConfigError
/// unless all configs share the task sets, seed, eval budget and training
/// record budget.
[[nodiscard]] Comparison compare_modes(const std::vector<ExperimentConfig>& configs);

}  // namespace mars::experiment

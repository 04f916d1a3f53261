#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mars/core/types.hpp"
#include "mars/search/search.hpp"

namespace mars::rm {

/// Feature layout: public_pass_fraction, hint_agreement, bit_density,
/// log_depth, then one indicator per agent slot.
[[nodiscard]] std::vector<std::string> feature_names(int num_agents);

/// Features of one candidate. Only public information is reachable from the
/// arguments. hint_agreement is measured on the bits no public test covers
/// (all bits when every bit is public); it is 0.5 when the task has no hints.
[[nodiscard]] std::vector<double> featurize(const TaskView& task, const BitVector& bits,
                                            const PublicEvalReport& report, int depth, AgentId agent, int num_agents);

struct RmExample {
    std::string task_id;
    int node_id = 0;
    std::vector<double> features;
    int label = 0;
};

struct RmPair {
    std::size_t winner = 0;  // row index into the example list
    std::size_t loser = 0;
};

struct RmModel {
    std::vector<double> weights;
    double bias = 0.0;

    [[nodiscard]] double score(std::span<const double> features) const;
};

struct TrainOptions {
    int epochs = 400;
    double lr = 0.5;
};

struct TrainReport {
    RmModel model;
    std::vector<double> loss_history;    // mean loss before each epoch, then final
    std::vector<double> margin_history;  // BT only: mean R_w - R_l, same schedule
    std::vector<std::string> warnings;
};

struct Gradient {
    std::vector<double> weights;
    double bias = 0.0;
};

/// Mean of (sigmoid(score) - label)^2.
[[nodiscard]] double mse_loss(const RmModel& model, std::span<const RmExample> examples);
[[nodiscard]] Gradient mse_gradient(const RmModel& model, std::span<const RmExample> examples);
/// Mean of -log sigmoid(R_w - R_l).
[[nodiscard]] double bt_loss(const RmModel& model, std::span<const RmExample> examples, std::span<const RmPair> pairs);
[[nodiscard]] Gradient bt_gradient(const RmModel& model, std::span<const RmExample> examples,
                                   std::span<const RmPair> pairs);
[[nodiscard]] double mean_margin(const RmModel& model, std::span<const RmExample> examples,
                                 std::span<const RmPair> pairs);

/// Full-batch gradient descent from zero weights. A single-class dataset
/// adds a warning and trains anyway. Throws InvalidArgument with fewer than
/// two examples.
[[nodiscard]] TrainReport train_mse(std::span<const RmExample> examples, const TrainOptions& options = {});
/// Throws InvalidArgument without pairs.
[[nodiscard]] TrainReport train_bt(std::span<const RmExample> examples, std::span<const RmPair> pairs,
                                   const TrainOptions& options = {});

struct RmMetrics {
    double adaptive_acc = 0.0;
    double auc_roc = 0.0;
    double spearman = 0.0;
    bool auc_defined = true;
};

/// Adaptive accuracy predicts positive for scores strictly above the median
/// score. AUC uses midranks for ties. Spearman is the Pearson correlation of
/// midranks. A single-class benchmark gives AUC NaN and auc_defined=false.
[[nodiscard]] RmMetrics eval_scores(std::span<const double> scores, std::span<const int> labels);
[[nodiscard]] RmMetrics eval_rm(const RmModel& model, std::span<const RmExample> benchmark);

/// Among nodes with public reward 1, the one with the highest score; ties go
/// to the lowest id. No passing node gives nullopt.
[[nodiscard]] std::optional<int> select_final(const search::SearchTrace& trace, const TaskView& task,
                                              const RmModel& model, int num_agents);

struct RmDataset {
    std::vector<RmExample> examples;
    std::vector<RmPair> pairs;
};

struct DatasetOptions {
    bool balance = true;
    /// Pair the k-th failing node with the k-th passing node, so each failure
    /// is used at most once.
    bool one_pair_per_fail = true;
};

/// Labels come from full evaluation (public and private tests), so the
/// caller needs the full tasks. Each task contributes its nodes in id order;
/// with balance on, both classes are cut to the smaller class size.
[[nodiscard]] RmDataset build_rm_dataset(const std::vector<search::SearchTrace>& traces, const std::vector<Task>& tasks,
                                         int num_agents, const DatasetOptions& options = {});

/// CSV: row,task_id,node_id,<feature names>,label
void write_dataset(std::ostream& out, const RmDataset& data, int num_agents);
/// CSV: winner_row,loser_row
void write_pairs(std::ostream& out, const RmDataset& data);
/// Reads both files back. Throws FormatError.
[[nodiscard]] RmDataset read_dataset(std::istream& examples, std::istream* pairs);

void write_model(std::ostream& out, const RmModel& model);
[[nodiscard]] RmModel read_model(std::istream& in);

}  // namespace mars::rm

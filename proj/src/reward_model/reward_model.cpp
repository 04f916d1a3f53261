#include "mars/reward_model/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "mars/core/errors.hpp"

namespace mars::rm {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(sigmoid(x)) without overflow for large |x|.
double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

std::vector<double> midranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    const auto n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

void check_width(const RmModel& model, std::span<const double> f) {
    if (f.size() != model.weights.size())
        throw ShapeError("feature length " + std::to_string(f.size()) + " does not match model width " +
                         std::to_string(model.weights.size()));
}

std::size_t width_of(std::span<const RmExample> examples) {
    const std::size_t w = examples.front().features.size();
    for (const auto& e : examples)
        if (e.features.size() != w) throw ShapeError("examples have differing feature lengths");
    return w;
}

}  // namespace

std::vector<std::string> feature_names(int num_agents) {
    std::vector<std::string> names{"public_pass_fraction", "hint_agreement", "bit_density", "log_depth"};
    for (int a = 0; a < num_agents; ++a) names.push_back("agent_" + std::to_string(a + 1));
    return names;
}

std::vector<double> featurize(const TaskView& task, const BitVector& bits, const PublicEvalReport& report, int depth,
                              AgentId agent, int num_agents) {
    if (static_cast<int>(bits.size()) != task.size) throw ShapeError("solution length does not match task");
    std::vector<double> f;
    f.reserve(4 + static_cast<std::size_t>(num_agents));
    f.push_back(report.pass_fraction());

    double agreement = 0.5;
    if (task.hints.size() == bits.size() && bits.size() > 0) {
        std::size_t from = static_cast<std::size_t>(task.public_count);
        if (from >= bits.size()) from = 0;
        std::size_t same = 0;
        for (std::size_t i = from; i < bits.size(); ++i) same += bits[i] == task.hints[i] ? 1 : 0;
        agreement = static_cast<double>(same) / static_cast<double>(bits.size() - from);
    }
    f.push_back(agreement);
    f.push_back(bits.size() == 0 ? 0.0 : static_cast<double>(bits.count()) / static_cast<double>(bits.size()));
    f.push_back(std::log1p(static_cast<double>(std::max(depth, 0))));
    for (int a = 0; a < num_agents; ++a) f.push_back(agent.slot() == static_cast<std::size_t>(a) ? 1.0 : 0.0);
    return f;
}

double RmModel::score(std::span<const double> features) const {
    check_width(*this, features);
    double s = bias;
    for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * features[i];
    return s;
}

double mse_loss(const RmModel& model, std::span<const RmExample> examples) {
    double total = 0.0;
    for (const auto& e : examples) {
        const double d = sigmoid(model.score(e.features)) - e.label;
        total += d * d;
    }
    return total / static_cast<double>(examples.size());
}

Gradient mse_gradient(const RmModel& model, std::span<const RmExample> examples) {
    Gradient g{std::vector<double>(model.weights.size(), 0.0), 0.0};
    const double inv = 1.0 / static_cast<double>(examples.size());
    for (const auto& e : examples) {
        const double p = sigmoid(model.score(e.features));
        const double ds = 2.0 * (p - e.label) * p * (1.0 - p) * inv;
        for (std::size_t i = 0; i < g.weights.size(); ++i) g.weights[i] += ds * e.features[i];
        g.bias += ds;
    }
    return g;
}

double bt_loss(const RmModel& model, std::span<const RmExample> examples, std::span<const RmPair> pairs) {
    double total = 0.0;
    for (const auto& p : pairs)
        total -= log_sigmoid(model.score(examples[p.winner].features) - model.score(examples[p.loser].features));
    return total / static_cast<double>(pairs.size());
}

Gradient bt_gradient(const RmModel& model, std::span<const RmExample> examples, std::span<const RmPair> pairs) {
    Gradient g{std::vector<double>(model.weights.size(), 0.0), 0.0};
    const double inv = 1.0 / static_cast<double>(pairs.size());
    for (const auto& p : pairs) {
        const auto& fw = examples[p.winner].features;
        const auto& fl = examples[p.loser].features;
        const double m = model.score(fw) - model.score(fl);
        const double dm = -(1.0 - sigmoid(m)) * inv;
        for (std::size_t i = 0; i < g.weights.size(); ++i) g.weights[i] += dm * (fw[i] - fl[i]);
    }
    return g;
}

double mean_margin(const RmModel& model, std::span<const RmExample> examples, std::span<const RmPair> pairs) {
    double total = 0.0;
    for (const auto& p : pairs) total += model.score(examples[p.winner].features) - model.score(examples[p.loser].features);
    return total / static_cast<double>(pairs.size());
}

TrainReport train_mse(std::span<const RmExample> examples, const TrainOptions& options) {
    if (examples.size() < 2) throw InvalidArgument("MSE training needs at least two examples");
    TrainReport rep;
    rep.model.weights.assign(width_of(examples), 0.0);
    const bool has0 = std::any_of(examples.begin(), examples.end(), [](const auto& e) { return e.label == 0; });
    const bool has1 = std::any_of(examples.begin(), examples.end(), [](const auto& e) { return e.label == 1; });
    if (!has0 || !has1) rep.warnings.push_back("DegenerateData: all labels are equal");
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        rep.loss_history.push_back(mse_loss(rep.model, examples));
        const auto g = mse_gradient(rep.model, examples);
        for (std::size_t i = 0; i < g.weights.size(); ++i) rep.model.weights[i] -= options.lr * g.weights[i];
        rep.model.bias -= options.lr * g.bias;
    }
    rep.loss_history.push_back(mse_loss(rep.model, examples));
    return rep;
}

TrainReport train_bt(std::span<const RmExample> examples, std::span<const RmPair> pairs, const TrainOptions& options) {
    if (pairs.empty()) throw InvalidArgument("Bradley-Terry training needs at least one pair");
    for (const auto& p : pairs)
        if (p.winner >= examples.size() || p.loser >= examples.size()) throw ShapeError("pair row out of range");
    TrainReport rep;
    rep.model.weights.assign(width_of(examples), 0.0);
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        rep.loss_history.push_back(bt_loss(rep.model, examples, pairs));
        rep.margin_history.push_back(mean_margin(rep.model, examples, pairs));
        const auto g = bt_gradient(rep.model, examples, pairs);
        for (std::size_t i = 0; i < g.weights.size(); ++i) rep.model.weights[i] -= options.lr * g.weights[i];
    }
    rep.loss_history.push_back(bt_loss(rep.model, examples, pairs));
    rep.margin_history.push_back(mean_margin(rep.model, examples, pairs));
    return rep;
}

RmMetrics eval_scores(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
    if (scores.empty()) throw InvalidArgument("empty benchmark");
    RmMetrics m;

    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += (scores[i] > median) == (labels[i] == 1) ? 1 : 0;
    m.adaptive_acc = static_cast<double>(correct) / static_cast<double>(n);

    const auto ranks = midranks(scores);
    double pos = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (labels[i] == 1) {
            pos += 1.0;
            rank_sum += ranks[i];
        }
    const double neg = static_cast<double>(n) - pos;
    if (pos == 0.0 || neg == 0.0) {
        m.auc_roc = std::numeric_limits<double>::quiet_NaN();
        m.auc_defined = false;
    } else {
        m.auc_roc = (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
    }

    std::vector<double> lab(labels.begin(), labels.end());
    const auto label_ranks = midranks(lab);
    m.spearman = pearson(ranks, label_ranks);
    return m;
}

RmMetrics eval_rm(const RmModel& model, std::span<const RmExample> benchmark) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& e : benchmark) {
        scores.push_back(model.score(e.features));
        labels.push_back(e.label);
    }
    return eval_scores(scores, labels);
}

std::optional<int> select_final(const search::SearchTrace& trace, const TaskView& task, const RmModel& model,
                                int num_agents) {
    std::optional<int> best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int id : passing_nodes(trace.tree)) {
        const auto& node = trace.tree.node(id);
        const auto f = featurize(task, node.solution.bits, node.eval_report.public_view(), node.depth, node.agent,
                                 num_agents);
        const double s = model.score(f);
        if (!best || s > best_score) {
            best = id;
            best_score = s;
        }
    }
    return best;
}

RmDataset build_rm_dataset(const std::vector<search::SearchTrace>& traces, const std::vector<Task>& tasks,
                           int num_agents, const DatasetOptions& options) {
    std::map<std::string, const Task*> by_id;
    for (const auto& t : tasks) by_id[t.id] = &t;

    RmDataset out;
    for (const auto& trace : traces) {
        auto it = by_id.find(trace.task_id);
        if (it == by_id.end()) throw InvalidArgument("no task for trace " + trace.task_id);
        const TaskView view = it->second->view();

        std::vector<RmExample> pass, fail;
        for (const auto& node : trace.tree.nodes()) {
            if (node.is_root()) continue;
            RmExample e{trace.task_id, node.id,
                        featurize(view, node.solution.bits, node.eval_report.public_view(), node.depth, node.agent,
                                  num_agents),
                        node.eval_report.all_passed() ? 1 : 0};
            (e.label == 1 ? pass : fail).push_back(std::move(e));
        }
        if (options.balance) {
            const std::size_t keep = std::min(pass.size(), fail.size());
            pass.resize(keep);
            fail.resize(keep);
        }
        const std::size_t pass_base = out.examples.size();
        for (auto& e : pass) out.examples.push_back(std::move(e));
        const std::size_t fail_base = out.examples.size();
        for (auto& e : fail) out.examples.push_back(std::move(e));

        const std::size_t np = fail_base - pass_base;
        const std::size_t nf = out.examples.size() - fail_base;
        if (options.one_pair_per_fail) {
            for (std::size_t k = 0; k < std::min(np, nf); ++k) out.pairs.push_back({pass_base + k, fail_base + k});
        } else {
            for (std::size_t a = 0; a < np; ++a)
                for (std::size_t b = 0; b < nf; ++b) out.pairs.push_back({pass_base + a, fail_base + b});
        }
    }
    return out;
}

void write_dataset(std::ostream& out, const RmDataset& data, int num_agents) {
    out << "row,task_id,node_id";
    for (const auto& n : feature_names(num_agents)) out << ',' << n;
    out << ",label\n";
    const auto old = out.precision(17);
    for (std::size_t r = 0; r < data.examples.size(); ++r) {
        const auto& e = data.examples[r];
        out << r << ',' << e.task_id << ',' << e.node_id;
        for (double v : e.features) out << ',' << v;
        out << ',' << e.label << '\n';
    }
    out.precision(old);
}

void write_pairs(std::ostream& out, const RmDataset& data) {
    out << "winner_row,loser_row\n";
    for (const auto& p : data.pairs) out << p.winner << ',' << p.loser << '\n';
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double to_double(const std::string& s, int line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError("line " + std::to_string(line) + ": bad number '" + s + "'");
    }
}

}  // namespace

RmDataset read_dataset(std::istream& examples, std::istream* pairs) {
    RmDataset data;
    std::string line;
    if (!std::getline(examples, line)) throw FormatError("dataset file is empty");
    const auto header = split_csv(line);
    if (header.size() < 5 || header.front() != "row" || header.back() != "label")
        throw FormatError("dataset header must start with row and end with label");
    const std::size_t width = header.size() - 4;
    int ln = 1;
    while (std::getline(examples, line)) {
        ++ln;
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) throw FormatError("line " + std::to_string(ln) + ": wrong column count");
        if (static_cast<std::size_t>(to_double(cells[0], ln)) != data.examples.size())
            throw FormatError("line " + std::to_string(ln) + ": rows out of order");
        RmExample e;
        e.task_id = cells[1];
        e.node_id = static_cast<int>(to_double(cells[2], ln));
        for (std::size_t i = 0; i < width; ++i) e.features.push_back(to_double(cells[3 + i], ln));
        e.label = static_cast<int>(to_double(cells.back(), ln));
        if (e.label != 0 && e.label != 1) throw FormatError("line " + std::to_string(ln) + ": label must be 0 or 1");
        data.examples.push_back(std::move(e));
    }
    if (pairs) {
        if (!std::getline(*pairs, line) || line != "winner_row,loser_row") throw FormatError("bad pairs header");
        ln = 1;
        while (std::getline(*pairs, line)) {
            ++ln;
            if (line.empty()) continue;
            const auto cells = split_csv(line);
            if (cells.size() != 2) throw FormatError("pairs line " + std::to_string(ln) + ": need two columns");
            RmPair p{static_cast<std::size_t>(to_double(cells[0], ln)), static_cast<std::size_t>(to_double(cells[1], ln))};
            if (p.winner >= data.examples.size() || p.loser >= data.examples.size())
                throw FormatError("pairs line " + std::to_string(ln) + ": row out of range");
            data.pairs.push_back(p);
        }
    }
    return data;
}

void write_model(std::ostream& out, const RmModel& model) {
    nlohmann::json j{{"weights", model.weights}, {"bias", model.bias}};
    out << j.dump(2) << '\n';
}

RmModel read_model(std::istream& in) {
    try {
        const auto j = nlohmann::json::parse(in);
        RmModel m{j.at("weights").get<std::vector<double>>(), j.at("bias").get<double>()};
        return m;
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("bad model file: ") + ex.what());
    }
}

}  // namespace mars::rm

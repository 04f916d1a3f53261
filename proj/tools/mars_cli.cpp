#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <omp.h>

#include <CLI11.hpp>

#include "mars/core/errors.hpp"
#include "mars/core/tree.hpp"
#include "mars/diversity/diversity.hpp"
#include "mars/experiment/experiment.hpp"
#include "mars/reward_model/reward_model.hpp"
#include "mars/search/search.hpp"

namespace fs = std::filesystem;
using namespace mars;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    int workers = 0;
};

experiment::ExperimentConfig load(const Globals& g, const std::string& path) {
    if (path.empty()) throw ConfigError("--config is required");
    auto c = experiment::load_config(path);
    if (g.seed) c.seed = *g.seed;
    return c;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return in;
}

bool parse_on_off(const std::string& s, const std::string& flag) {
    if (s == "on") return true;
    if (s == "off") return false;
    throw ConfigError(flag + ": expected on|off, got '" + s + "'");
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// ---- gen-tasks ------------------------------------------------------------

void cmd_gen_tasks(const Globals& g) {
    const auto config = load(g, g.config);
    const auto env = experiment::build_environment(config);
    for (const auto& [name, set] : {std::pair{"train", &env.train}, {"eval", &env.eval}, {"rm", &env.rm}}) {
        auto out = open_out(fs::path(g.out) / ("tasks_" + std::string(name) + ".jsonl"));
        env::write_tasks(out, *set);
    }
}

// ---- search ---------------------------------------------------------------

struct SearchArgs {
    std::string tasks;
    std::string agents;
    int budget = 0;
    std::string depth_guidance;
    std::string feedback;
};

void cmd_search(const Globals& g, const SearchArgs& a) {
    auto config = load(g, a.agents.empty() ? g.config : a.agents);
    auto in = open_in(a.tasks);
    const auto tasks = env::read_tasks(in);

    auto scfg = config.search;
    scfg.seed = config.seed;
    if (a.budget > 0) scfg.budget = a.budget;
    if (!a.depth_guidance.empty()) scfg.depth_guidance = parse_on_off(a.depth_guidance, "--depth-guidance");
    if (a.feedback == "binary") scfg.feedback_mode = search::FeedbackMode::Binary;
    else if (a.feedback == "structured") scfg.feedback_mode = search::FeedbackMode::Structured;
    else if (!a.feedback.empty()) throw ConfigError("--feedback: expected binary|structured");
    scfg.validate();

    const auto env = experiment::build_environment(config);
    const auto pop = experiment::build_population(config, env);
    const auto traces = search::run_search_batch(tasks, pop.agents, scfg, pop.evaluator.get());

    for (const auto& t : traces) {
        auto out = open_out(fs::path(g.out) / "traces" / (t.task_id + ".jsonl"));
        write_tree_trace(out, t.tree);
    }
    auto summary = open_out(fs::path(g.out) / "summary.csv");
    search::write_summary_csv(summary, traces);
}

// ---- train / experiment / compare -----------------------------------------

void cmd_train(const Globals& g) {
    const auto config = load(g, g.config);
    const auto result = experiment::run_experiment(config);
    auto updates = open_out(fs::path(g.out) / "updates.csv");
    dispatch::write_update_log(updates, result.updates);
    auto curve = open_out(fs::path(g.out) / "curve.csv");
    experiment::write_curve(curve, experiment::to_string(config.mode), result.curve);
    std::cout << "updates " << result.updates.size() << ", produced " << result.produced << ", filtered "
              << result.filtered << ", final pass1 " << fmt(result.curve.back().pass1) << '\n';
}

void cmd_experiment(const Globals& g) {
    const auto config = load(g, g.config);
    const auto result = experiment::run_experiment(config);
    auto rows = open_out(fs::path(g.out) / "results.csv");
    experiment::write_rows_csv(rows, result.rows);
    auto curve = open_out(fs::path(g.out) / "curve.csv");
    experiment::write_curve(curve, experiment::to_string(config.mode), result.curve);
    auto updates = open_out(fs::path(g.out) / "updates.csv");
    dispatch::write_update_log(updates, result.updates);
}

void cmd_compare(const Globals& g, const std::vector<std::string>& configs) {
    std::vector<experiment::ExperimentConfig> cs;
    for (const auto& p : configs) cs.push_back(load(g, p));
    if (cs.empty()) throw ConfigError("compare needs at least one --configs file");
    const auto cmp = experiment::compare_modes(cs);
    auto rows = open_out(fs::path(g.out) / "compare.csv");
    experiment::write_rows_csv(rows, cmp.rows);
    auto curve = open_out(fs::path(g.out) / "curves.csv");
    for (std::size_t i = 0; i < cs.size(); ++i)
        experiment::write_curve(curve, experiment::to_string(cs[i].mode) + std::to_string(i), cmp.results[i].curve,
                                   i == 0);
}

// ---- rm -------------------------------------------------------------------

struct RmArgs {
    std::string loss = "mse";
    std::string examples;
    std::string pairs;
    std::string model;
    std::string tasks;
    int epochs = 400;
    double lr = 0.5;
};

rm::RmDataset read_data(const RmArgs& a, bool need_pairs) {
    auto ex = open_in(a.examples);
    if (!need_pairs) return rm::read_dataset(ex, nullptr);
    if (a.pairs.empty()) throw ConfigError("--pairs is required for bt loss");
    auto pr = open_in(a.pairs);
    return rm::read_dataset(ex, &pr);
}

void cmd_rm_build(const Globals& g) {
    const auto config = load(g, g.config);
    const auto env = experiment::build_environment(config);
    const auto pop = experiment::build_population(config, env);
    auto scfg = config.search;
    scfg.budget = config.eval.budget;
    scfg.seed = config.seed;
    const auto traces = search::run_search_batch(env.rm, pop.agents, scfg, pop.evaluator.get());
    const int n_agents = static_cast<int>(config.agents.size());
    const auto data = rm::build_rm_dataset(traces, env.rm, n_agents);
    auto ex = open_out(fs::path(g.out) / "rm_examples.csv");
    rm::write_dataset(ex, data, n_agents);
    auto pr = open_out(fs::path(g.out) / "rm_pairs.csv");
    rm::write_pairs(pr, data);
    std::cout << data.examples.size() << " examples, " << data.pairs.size() << " pairs\n";
}

void cmd_rm_train(const Globals& g, const RmArgs& a) {
    if (a.loss != "mse" && a.loss != "bt" && a.loss != "both") throw ConfigError("--loss: expected mse|bt|both");
    const bool bt = a.loss != "mse";
    const auto data = read_data(a, bt);
    const rm::TrainOptions opts{a.epochs, a.lr};
    auto emit = [&](const std::string& name, const rm::TrainReport& rep) {
        for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
        auto out = open_out(fs::path(g.out) / ("rm_model_" + name + ".json"));
        rm::write_model(out, rep.model);
        auto hist = open_out(fs::path(g.out) / ("rm_loss_" + name + ".csv"));
        hist << "epoch,loss\n";
        for (std::size_t i = 0; i < rep.loss_history.size(); ++i) hist << i << ',' << fmt(rep.loss_history[i]) << '\n';
    };
    if (a.loss == "mse" || a.loss == "both") emit("mse", rm::train_mse(data.examples, opts));
    if (bt) emit("bt", rm::train_bt(data.examples, data.pairs, opts));
}

void cmd_rm_eval(const Globals& g, const RmArgs& a) {
    auto in = open_in(a.model);
    const auto model = rm::read_model(in);
    const auto data = read_data(a, false);
    const auto m = rm::eval_rm(model, data.examples);
    auto out = open_out(fs::path(g.out) / "rm_metrics.csv");
    out << "adaptive_acc,auc_roc,spearman,auc_defined\n"
        << fmt(m.adaptive_acc) << ',' << fmt(m.auc_roc) << ',' << fmt(m.spearman) << ',' << (m.auc_defined ? 1 : 0)
        << '\n';
}

void cmd_rm_select(const Globals& g, const RmArgs& a) {
    const auto config = load(g, g.config);
    auto min = open_in(a.model);
    const auto model = rm::read_model(min);
    auto tin = open_in(a.tasks);
    const auto tasks = env::read_tasks(tin);
    const auto env = experiment::build_environment(config);
    const auto pop = experiment::build_population(config, env);
    auto scfg = config.search;
    scfg.budget = config.eval.budget;
    scfg.seed = config.seed;
    const auto traces = search::run_search_batch(tasks, pop.agents, scfg, pop.evaluator.get());
    const int n_agents = static_cast<int>(config.agents.size());

    auto out = open_out(fs::path(g.out) / "rm_select.csv");
    out << "task_id,vanilla_node,vanilla_private_pass,rm_node,rm_private_pass\n";
    auto passed = [](const search::SearchTrace& t, std::optional<int> id) {
        return id && t.tree.node(*id).eval_report.all_passed() ? 1 : 0;
    };
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& t = traces[i];
        const auto van = search::final_vanilla_id(t);
        const auto sel = rm::select_final(t, tasks[i].view(), model, n_agents);
        out << t.task_id << ',' << (van ? std::to_string(*van) : "") << ',' << passed(t, van) << ','
            << (sel ? std::to_string(*sel) : "") << ',' << passed(t, sel) << '\n';
    }
}

// ---- diversity ------------------------------------------------------------

struct DivArgs {
    std::string metric;
    std::vector<std::string> in;
    std::string correct;
    double eps = 0.5;
    int min_pts = 2;
    int k = 1;
    int k_max = 8;
    int proj_dim = 0;
};

// Drops rows of a clusters file whose (task, solution) is marked incorrect in
// a task_id,solution_id,correct file. Returns the filtered text.
std::string filter_correct(std::istream& clusters, const std::string& correct_path, int& dropped) {
    std::set<std::pair<std::string, std::string>> bad;
    auto cin = open_in(correct_path);
    std::string line;
    std::getline(cin, line);
    while (std::getline(cin, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string task, sol, ok;
        std::getline(ss, task, ',');
        std::getline(ss, sol, ',');
        std::getline(ss, ok, ',');
        if (ok == "0" || ok == "false") bad.emplace(task, sol);
    }
    std::string out, header;
    std::getline(clusters, header);
    out += header + '\n';
    dropped = 0;
    while (std::getline(clusters, line)) {
        std::stringstream ss(line);
        std::string task, sol;
        std::getline(ss, task, ',');
        std::getline(ss, sol, ',');
        if (bad.contains({task, sol})) {
            ++dropped;
            continue;
        }
        out += line + '\n';
    }
    return out;
}

void cmd_diversity(const Globals& g, const DivArgs& a) {
    if (a.in.empty()) throw ConfigError("--in is required");
    const std::uint64_t seed = g.seed.value_or(1);
    auto out = open_out(fs::path(g.out) / ("diversity_" + a.metric + ".csv"));

    if (a.metric == "passk") {
        // Input: task_id,n,c
        auto in = open_in(a.in.front());
        std::string line;
        std::getline(in, line);
        out << "task_id,n,c,k,pass_at_k\n";
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string task, n, c;
            std::getline(ss, task, ',');
            std::getline(ss, n, ',');
            std::getline(ss, c, ',');
            const double v = diversity::pass_at_k(std::stoi(n), std::stoi(c), a.k);
            out << task << ',' << n << ',' << c << ',' << a.k << ',' << fmt(v) << '\n';
        }
        return;
    }

    if (a.metric == "aec" || a.metric == "gvendi") {
        auto in = open_in(a.in.front());
        const auto sets = diversity::read_vectors(in);
        if (a.metric == "aec") {
            std::vector<std::vector<diversity::Vector>> per_task;
            out << "task_id,clusters\n";
            for (const auto& [task, e] : sets) {
                out << task << ',' << diversity::count_clusters(e.vectors, a.eps, a.min_pts) << '\n';
                per_task.push_back(e.vectors);
            }
            out << "mean," << fmt(diversity::aec(per_task, a.eps, a.min_pts)) << '\n';
        } else {
            out << "task_id,g_vendi,dropped\n";
            for (const auto& [task, e] : sets) {
                const int dim = a.proj_dim > 0 ? a.proj_dim : 4 * static_cast<int>(e.vectors.size());
                const auto r = diversity::g_vendi(e.vectors, dim, seed);
                out << task << ',' << fmt(r.score) << ',' << r.dropped << '\n';
            }
        }
        return;
    }

    if (a.metric != "dak" && a.metric != "ea" && a.metric != "naudc")
        throw ConfigError("--metric: expected passk|aec|dak|ea|naudc|gvendi");
    auto in = open_in(a.in.front());
    std::map<std::string, diversity::ClusterProfile> profiles;
    if (!a.correct.empty()) {
        int dropped = 0;
        std::stringstream filtered(filter_correct(in, a.correct, dropped));
        if (dropped > 0) std::cerr << "dropped " << dropped << " incorrect solutions\n";
        profiles = diversity::read_clusters(filtered);
    } else {
        profiles = diversity::read_clusters(in);
    }
    out << "task_id," << a.metric << '\n';
    for (const auto& [task, p] : profiles) {
        double v = 0.0;
        if (a.metric == "dak") v = diversity::da_at_k(p, a.k);
        else if (a.metric == "ea") v = diversity::ea(p);
        else v = diversity::naudc(p, a.k_max);
        out << task << ',' << fmt(v) << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent tree search and training on a synthetic code environment"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "JSON config file");
    app.add_option("--seed", g.seed, "Override the config seed");
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_option("--workers", g.workers, "OpenMP threads (0: runtime default)");

    auto* gen = app.add_subcommand("gen-tasks", "Write the train/eval/rm task sets of a config");

    SearchArgs sa;
    auto* search = app.add_subcommand("search", "Run budgeted search on a task file");
    search->add_option("--tasks", sa.tasks, "Task file (JSON lines)")->required();
    search->add_option("--agents", sa.agents, "Config file providing the agents (defaults to --config)");
    search->add_option("--budget", sa.budget, "Expansions per task");
    search->add_option("--depth-guidance", sa.depth_guidance, "on|off");
    search->add_option("--feedback", sa.feedback, "binary|structured");

    auto* train = app.add_subcommand("train", "Run training and write the update log and Pass@1 curve");
    auto* exp = app.add_subcommand("experiment", "Full pipeline with evaluation rows");
    std::vector<std::string> compare_configs;
    auto* compare = app.add_subcommand("compare", "Compare modes at equal compute");
    compare->add_option("--configs", compare_configs, "One config per mode")->required();

    RmArgs ra;
    auto* rmc = app.add_subcommand("rm", "Reward model: build, train, eval, select");
    rmc->require_subcommand(1);
    auto* rm_build = rmc->add_subcommand("build", "Build a dataset from searches over the rm task set");
    auto* rm_train = rmc->add_subcommand("train", "Fit a reward model");
    rm_train->add_option("--loss", ra.loss, "mse|bt|both")->capture_default_str();
    rm_train->add_option("--examples", ra.examples)->required();
    rm_train->add_option("--pairs", ra.pairs);
    rm_train->add_option("--epochs", ra.epochs)->capture_default_str();
    rm_train->add_option("--lr", ra.lr)->capture_default_str();
    auto* rm_eval = rmc->add_subcommand("eval", "Benchmark metrics of a model on a dataset");
    rm_eval->add_option("--model", ra.model)->required();
    rm_eval->add_option("--examples", ra.examples)->required();
    auto* rm_select = rmc->add_subcommand("select", "Compare vanilla and reward-model final selection");
    rm_select->add_option("--model", ra.model)->required();
    rm_select->add_option("--tasks", ra.tasks)->required();

    DivArgs da;
    auto* div = app.add_subcommand("diversity", "Diversity metrics from vector or cluster files");
    div->add_option("--metric", da.metric, "passk|aec|dak|ea|naudc|gvendi")->required();
    div->add_option("--in", da.in, "Input file(s)")->required();
    div->add_option("--correct", da.correct, "task_id,solution_id,correct file; incorrect rows are dropped");
    div->add_option("--eps", da.eps)->capture_default_str();
    div->add_option("--min-pts", da.min_pts)->capture_default_str();
    div->add_option("--k", da.k)->capture_default_str();
    div->add_option("--k-max", da.k_max)->capture_default_str();
    div->add_option("--proj-dim", da.proj_dim, "Projection dim (0: 4x the number of vectors)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }
    if (g.workers > 0) omp_set_num_threads(g.workers);

    try {
        if (*gen) cmd_gen_tasks(g);
        else if (*search) cmd_search(g, sa);
        else if (*train) cmd_train(g);
        else if (*exp) cmd_experiment(g);
        else if (*compare) cmd_compare(g, compare_configs);
        else if (*rm_build) cmd_rm_build(g);
        else if (*rm_train) cmd_rm_train(g, ra);
        else if (*rm_eval) cmd_rm_eval(g, ra);
        else if (*rm_select) cmd_rm_select(g, ra);
        else if (*div) cmd_diversity(g, da);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}

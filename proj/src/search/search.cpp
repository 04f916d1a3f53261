#include "mars/search/search.hpp"

#include <ostream>
#include <sstream>

#include "mars/bandit/selection.hpp"
#include "mars/core/errors.hpp"

namespace mars::search {

void SearchConfig::validate() const {
    if (budget < 1) throw InvalidArgument("search budget must be >= 1");
    if (depth_guidance) schedule.validate();
    if (!(priors.alpha > 0.0 && priors.beta > 0.0)) throw InvalidArgument("bandit priors must be positive");
}

SearchTrace run_search(const Task& task, const AgentList& agents, const SearchConfig& config, Rng& rng,
                       const env::Evaluator* evaluator) {
    config.validate();
    if (agents.empty()) throw NoAgents("search needs at least one agent");
    const env::SyntheticEvaluator fallback;
    const env::Evaluator& eval = evaluator ? *evaluator : fallback;

    std::map<AgentId, const agents::Agent*> by_id;
    for (const auto& a : agents) {
        if (!a) throw InvalidArgument("null agent");
        if (!by_id.emplace(a->id(), a.get()).second)
            throw InvalidArgument("duplicate agent id " + std::to_string(a->id().value));
    }

    SearchTrace trace{task.id, SearchTree(config.priors), {}, {}, std::nullopt, {}, {}};
    for (const auto& [id, _] : by_id) trace.agent_stats.emplace(id, config.priors.posterior());

    const std::optional<bandit::DepthSchedule> sched =
        config.depth_guidance ? std::optional(config.schedule) : std::nullopt;
    const TaskView view = task.view();
    SearchTree& tree = trace.tree;

    for (int step = 1; step <= config.budget; ++step) {
        const AgentId agent_id = bandit::select_agent(trace.agent_stats, rng);
        const agents::Agent& agent = *by_id.at(agent_id);

        // Descend until GEN fires; `path` holds the CON choices taken.
        std::vector<int> path;
        int at = 0;
        for (;;) {
            const auto action = bandit::select_action(tree, at, agent_id, trace.depth_histogram, sched, rng);
            if (action.is_gen()) break;
            path.push_back(action.child);
            at = action.child;
        }

        agents::Proposal proposal;
        PromptContext context;
        try {
            if (at == 0) {
                context = FreshContext{};
                proposal = agent.propose(view, rng);
            } else {
                const SearchNode& parent = tree.node(at);
                Feedback fb = config.feedback_mode == FeedbackMode::Structured
                                  ? Feedback{eval.make_feedback(parent.eval_report.public_view())}
                                  : Feedback{BinaryFeedback{parent.reward == 1.0}};
                context = RefinementContext{at, fb};
                proposal = agent.refine(view, parent.solution, fb, rng);
            }
        } catch (const RemoteError& ex) {
            trace.failures.push_back(ExpansionFailure{step, agent_id, at, ex.what()});
            continue;
        }

        proposal.solution.source_agent = agent_id;
        proposal.solution.born_at = step;
        EvalReport report = eval.evaluate(task, proposal.solution.bits);
        const double reward = env::public_reward(report, config.training_mode);

        const int id = tree.add_node(at, proposal.solution, std::move(report), reward, agent_id, context,
                                     proposal.trace);
        tree.observe_gen(at, agent_id, reward);
        for (int n : path) tree.observe_con(n, reward);
        trace.agent_stats[agent_id] = bandit::update_posterior(trace.agent_stats[agent_id], reward);
        ++trace.depth_histogram[tree.node(id).depth];

        NodeRecord rec;
        rec.task_id = task.id;
        rec.node_id = id;
        rec.agent = agent_id;
        rec.topic = view.topic;
        rec.context = std::move(context);
        rec.trace = std::move(proposal.trace);
        rec.output = std::move(proposal.solution.bits);
        rec.reward = reward;
        trace.records.push_back(std::move(rec));
    }

    trace.chosen_final = final_vanilla_id(trace);
    return trace;
}

std::vector<SearchTrace> run_search_batch(const std::vector<Task>& tasks, const AgentList& agents,
                                          const SearchConfig& config, const env::Evaluator* evaluator) {
    std::vector<std::optional<SearchTrace>> slots(tasks.size());
    std::vector<std::string> errors(tasks.size());
    const auto n = static_cast<long>(tasks.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
        const auto& task = tasks[static_cast<std::size_t>(i)];
        try {
            Rng rng = derive_stream(config.seed, task.id);
            slots[static_cast<std::size_t>(i)] = run_search(task, agents, config, rng, evaluator);
        } catch (const std::exception& ex) {
            errors[static_cast<std::size_t>(i)] = ex.what();
        }
    }
    std::vector<SearchTrace> out;
    out.reserve(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (!errors[i].empty()) throw Error("search on " + tasks[i].id + " failed: " + errors[i]);
        out.push_back(std::move(*slots[i]));
    }
    return out;
}

std::optional<int> final_vanilla_id(const SearchTrace& trace) {
    const auto passing = passing_nodes(trace.tree);
    if (passing.empty()) return std::nullopt;
    return passing.back();
}

std::optional<Solution> final_vanilla(const SearchTrace& trace) {
    const auto id = final_vanilla_id(trace);
    if (!id) return std::nullopt;
    return trace.tree.node(*id).solution;
}

std::map<int, double> depth_stats(const SearchTrace& trace) {
    int total = 0;
    for (const auto& [d, c] : trace.depth_histogram) total += c;
    if (total == 0) throw EmptyTree("trace has no expansions");
    std::map<int, double> out;
    for (const auto& [d, c] : trace.depth_histogram) out[d] = static_cast<double>(c) / total;
    return out;
}

std::string format_histogram(const std::map<int, int>& hist) {
    std::ostringstream os;
    bool first = true;
    for (const auto& [d, c] : hist) {
        if (!first) os << ';';
        os << d << ':' << c;
        first = false;
    }
    return os.str();
}

void write_summary_csv(std::ostream& out, const std::vector<SearchTrace>& traces) {
    out << "task_id,solved_public,solved_private,expansions,depth_histogram\n";
    for (const auto& t : traces) {
        bool pub = false;
        bool priv = false;
        if (t.chosen_final) {
            const auto& n = t.tree.node(*t.chosen_final);
            pub = n.eval_report.passed_public == n.eval_report.total_public;
            priv = pub && n.eval_report.private_passed();
        }
        out << t.task_id << ',' << (pub ? 1 : 0) << ',' << (priv ? 1 : 0) << ',' << t.tree.expansions() << ','
            << format_histogram(t.depth_histogram) << '\n';
    }
}

}  // namespace mars::search

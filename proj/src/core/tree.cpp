#include "mars/core/tree.hpp"

#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "mars/core/errors.hpp"

namespace mars {

SearchTree::SearchTree(bandit::BanditPriors priors) : priors_(priors) {
    SearchNode root;
    root.id = 0;
    root.depth = 0;
    root.con_posterior = priors_.posterior();
    nodes_.push_back(std::move(root));
}

const SearchNode& SearchTree::node(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw InvalidArgument("no node with id " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
}

SearchNode& SearchTree::mutable_node(int id) {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw InvalidArgument("no node with id " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
}

bandit::BetaPosterior SearchTree::gen_posterior(int node_id, AgentId agent) const {
    const auto& n = node(node_id);
    if (auto it = n.gen_posteriors.find(agent); it != n.gen_posteriors.end()) return it->second;
    return priors_.posterior();
}

int SearchTree::add_node(int parent_id, Solution solution, EvalReport report, double reward, AgentId agent,
                         PromptContext context, LogProbTrace trace) {
    const int parent_depth = node(parent_id).depth;
    SearchNode child;
    child.id = static_cast<int>(nodes_.size());
    child.parent = parent_id;
    child.depth = parent_depth + 1;
    child.solution = std::move(solution);
    child.reward = reward;
    child.eval_report = std::move(report);
    child.agent = agent;
    child.context = std::move(context);
    child.trace = std::move(trace);
    child.con_posterior = bandit::update_posterior(priors_.posterior(), reward);
    const int id = child.id;
    nodes_.push_back(std::move(child));
    mutable_node(parent_id).children.push_back(id);
    return id;
}

void SearchTree::observe_gen(int node_id, AgentId agent, double score) {
    auto& n = mutable_node(node_id);
    auto [it, inserted] = n.gen_posteriors.try_emplace(agent, priors_.posterior());
    it->second = bandit::update_posterior(it->second, score);
}

void SearchTree::observe_con(int node_id, double score) {
    auto& n = mutable_node(node_id);
    n.con_posterior = bandit::update_posterior(n.con_posterior, score);
}

std::vector<NodeRecord> collect_records(const SearchTree& tree, const std::string& task_id) {
    if (tree.expansions() == 0) throw EmptyTree("tree has no expanded nodes");
    std::vector<NodeRecord> out;
    out.reserve(tree.expansions());
    for (const auto& n : tree.nodes().subspan(1)) {
        NodeRecord r;
        r.task_id = task_id;
        r.node_id = n.id;
        r.agent = n.agent;
        r.context = n.context;
        r.trace = n.trace;
        r.output = n.solution.bits;
        r.reward = n.reward;
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<int> passing_nodes(const SearchTree& tree) {
    std::vector<int> ids;
    for (const auto& n : tree.nodes().subspan(1))
        if (n.reward == 1.0) ids.push_back(n.id);
    return ids;
}

void write_tree_trace(std::ostream& out, const SearchTree& tree) {
    for (const auto& n : tree.nodes().subspan(1)) {
        nlohmann::ordered_json j;
        j["id"] = n.id;
        j["parent"] = n.parent.value_or(0);
        j["depth"] = n.depth;
        j["agent"] = n.agent.value;
        j["reward"] = n.reward;
        j["bits"] = n.solution.bits.to_hex();
        j["m"] = n.solution.bits.size();
        j["eval"] = {{"passed_public", n.eval_report.passed_public},
                     {"total_public", n.eval_report.total_public},
                     {"passed_private", n.eval_report.passed_private},
                     {"total_private", n.eval_report.total_private}};
        out << j.dump() << '\n';
    }
}

std::vector<NodeSummary> read_tree_trace(std::istream& in) {
    std::vector<NodeSummary> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            NodeSummary s;
            s.id = j.at("id").get<int>();
            s.parent = j.at("parent").get<int>();
            s.depth = j.at("depth").get<int>();
            s.agent = j.at("agent").get<int>();
            s.reward = j.at("reward").get<double>();
            s.bits_hex = j.at("bits").get<std::string>();
            s.size = j.at("m").get<int>();
            const auto& e = j.at("eval");
            s.eval.passed_public = e.at("passed_public").get<int>();
            s.eval.total_public = e.at("total_public").get<int>();
            s.eval.passed_private = e.at("passed_private").get<int>();
            s.eval.total_private = e.at("total_private").get<int>();
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError("trace line " + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return out;
}

}  // namespace mars

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "mars/agents/agent.hpp"
#include "mars/core/errors.hpp"

namespace mars::agents {

namespace {

double clamp_belief(double b) {
    return std::clamp(b, SimAgentParams::kMinBelief, SimAgentParams::kMaxBelief);
}

}  // namespace

const std::vector<double>& SimAgentParams::beliefs_for(const std::string& topic) const {
    if (topic.empty()) return belief;
    auto it = topic_belief.find(topic);
    return it == topic_belief.end() ? belief : it->second;
}

double SimAgentParams::bit_prob(std::size_t i, const std::string& topic) const {
    const double b = beliefs_for(topic)[i];
    if (logit_scale == 1.0 || b <= 0.0 || b >= 1.0) return b;
    const double z = logit_scale * std::log(b / (1.0 - b));
    return 1.0 / (1.0 + std::exp(-z));
}

double SimAgentParams::bit_logprob(std::size_t i, bool bit, const std::string& topic) const {
    const double p = clamp_belief(bit_prob(i, topic));
    return bit ? std::log(p) : std::log1p(-p);
}

void SimAgentParams::validate() const {
    if (belief.empty()) throw InvalidArgument("belief vector is empty");
    for (double b : belief)
        if (!(b >= 0.0 && b <= 1.0)) throw InvalidArgument("belief outside [0, 1]");
    for (const auto& [topic, v] : topic_belief) {
        if (v.size() != belief.size()) throw InvalidArgument("belief for topic '" + topic + "' has the wrong length");
        for (double b : v)
            if (!(b >= 0.0 && b <= 1.0)) throw InvalidArgument("belief outside [0, 1]");
    }
    if (!(fix_prob >= 0.0 && fix_prob <= 1.0)) throw InvalidArgument("fix_prob outside [0, 1]");
    if (!(drift_prob >= 0.0 && drift_prob <= 1.0)) throw InvalidArgument("drift_prob outside [0, 1]");
    if (trace_len < 1) throw InvalidArgument("trace_len must be >= 1");
    if (!(logit_scale > 0.0) || !std::isfinite(logit_scale)) throw InvalidArgument("logit_scale must be positive");
}

ParamStore::ParamStore(SimAgentParams initial) {
    initial.validate();
    current_ = std::make_shared<const SimAgentParams>(std::move(initial));
}

std::shared_ptr<const SimAgentParams> ParamStore::load() const {
    std::lock_guard lock(mu_);
    return current_;
}

void ParamStore::store(SimAgentParams next) {
    next.validate();
    auto snapshot = std::make_shared<const SimAgentParams>(std::move(next));
    std::lock_guard lock(mu_);
    current_ = std::move(snapshot);
    ++version_;
}

std::uint64_t ParamStore::version() const {
    std::lock_guard lock(mu_);
    return version_;
}

std::vector<std::pair<std::size_t, std::size_t>> token_chunks(std::size_t bits, int tokens) {
    if (tokens < 1) throw InvalidArgument("token count must be >= 1");
    const auto l = static_cast<std::size_t>(tokens);
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(l);
    for (std::size_t t = 0; t < l; ++t) out.emplace_back(t * bits / l, (t + 1) * bits / l);
    return out;
}

std::vector<double> token_logprobs(const SimAgentParams& params, const BitVector& bits, const std::string& topic) {
    if (bits.size() != params.belief.size())
        throw ShapeError("bit vector length " + std::to_string(bits.size()) + " does not match belief length " +
                         std::to_string(params.belief.size()));
    const auto chunks = token_chunks(bits.size(), params.trace_len);
    std::vector<double> out(chunks.size(), 0.0);
    for (std::size_t t = 0; t < chunks.size(); ++t) {
        double lp = 0.0;
        for (std::size_t i = chunks[t].first; i < chunks[t].second; ++i) lp += params.bit_logprob(i, bits[i], topic);
        out[t] = lp;
    }
    return out;
}

void rescore(NodeRecord& record, const SimAgentParams& params) {
    record.trace.logp_new = token_logprobs(params, record.output, record.topic);
}

SimAgent::SimAgent(AgentId id, std::shared_ptr<ParamStore> params, std::shared_ptr<const SimAgentParams> reference,
                   double infer_sigma)
    : id_(id), params_(std::move(params)), reference_(std::move(reference)), infer_sigma_(infer_sigma) {
    if (!params_) throw InvalidArgument("simulated agent needs a parameter store");
    if (!reference_) reference_ = params_->load();
    if (infer_sigma_ < 0.0) throw InvalidArgument("infer_sigma must be >= 0");
}

Proposal SimAgent::propose(const TaskView& task, Rng& rng) const {
    const auto snapshot = params_->load();
    if (snapshot->size() != task.size)
        throw ShapeError("agent configured for " + std::to_string(snapshot->size()) + " bits, task has " +
                         std::to_string(task.size));
    BitVector bits(static_cast<std::size_t>(task.size));
    for (std::size_t i = 0; i < bits.size(); ++i) bits.set(i, bernoulli(rng, snapshot->bit_prob(i, task.topic)));
    return finish(std::move(bits), *snapshot, task.topic, rng);
}

Proposal SimAgent::refine(const TaskView& task, const Solution& parent, const Feedback& feedback, Rng& rng) const {
    const auto snapshot = params_->load();
    if (parent.bits.size() != static_cast<std::size_t>(task.size))
        throw ShapeError("parent solution length does not match task");
    std::map<int, bool> named;
    if (const auto* report = std::get_if<FeedbackReport>(&feedback))
        for (const auto& f : report->failures) named[f.index] = f.expected;

    BitVector bits = parent.bits;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (auto it = named.find(static_cast<int>(i)); it != named.end()) {
            if (bernoulli(rng, snapshot->fix_prob)) bits.set(i, it->second);
        } else if (bernoulli(rng, snapshot->drift_prob)) {
            bits.flip(i);
        }
    }
    return finish(std::move(bits), *snapshot, task.topic, rng);
}

Proposal SimAgent::finish(BitVector bits, const SimAgentParams& snapshot, const std::string& topic, Rng& rng) const {
    Proposal p;
    p.trace.logp_old = token_logprobs(snapshot, bits, topic);
    p.trace.logp_new = p.trace.logp_old;
    p.trace.logp_ref = token_logprobs(*reference_, bits, topic);
    p.trace.logp_infer = p.trace.logp_old;
    if (infer_sigma_ > 0.0) {
        std::normal_distribution<double> noise(0.0, infer_sigma_);
        for (double& v : p.trace.logp_infer) v = std::min(0.0, v + noise(rng));
    }
    p.trace.action_mask.assign(p.trace.logp_old.size(), 1);
    p.solution = Solution{std::move(bits), id_, 0};
    return p;
}

}  // namespace mars::agents

#include "mars/rl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mars/core/errors.hpp"

namespace mars::rl {

void LossParams::validate() const {
    if (!(eps_low > 0.0) || !(eps_high > 0.0)) throw InvalidArgument("clip radii must be positive");
    if (!(beta_kl >= 0.0)) throw InvalidArgument("kl coefficient must be >= 0");
    if (!(l_cache > 0.0 && l_cache < l_max)) throw InvalidArgument("need 0 < l_cache < l_max");
    if (!(tis_clip > 0.0)) throw InvalidArgument("tis_clip must be positive");
    if (!(std_floor > 0.0)) throw InvalidArgument("std_floor must be positive");
}

std::vector<double> tree_advantages(std::span<const double> rewards, double std_floor) {
    const auto n = rewards.size();
    std::vector<double> out(n, 0.0);
    if (n == 0) return out;
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (sd < std_floor) return out;
    for (std::size_t i = 0; i < n; ++i) out[i] = (rewards[i] - mean) / sd;
    return out;
}

std::vector<double> grpo_advantages(std::span<const double> rewards, double std_floor) {
    return tree_advantages(rewards, std_floor);
}

double token_ratio(const LogProbTrace& trace, std::size_t t) {
    if (t >= trace.logp_new.size() || t >= trace.logp_old.size())
        throw ShapeError("token index " + std::to_string(t) + " out of range");
    return std::exp(trace.logp_new[t] - trace.logp_old[t]);
}

double gspo_ratio(const LogProbTrace& trace) {
    double sum = 0.0;
    std::size_t active = 0;
    for (std::size_t t = 0; t < trace.size(); ++t) {
        if (!trace.action_mask[t]) continue;
        sum += trace.logp_new[t] - trace.logp_old[t];
        ++active;
    }
    if (active == 0) return 1.0;
    return std::exp(sum / static_cast<double>(active));
}

double overlong_penalty(double length, const LossParams& params) {
    const double soft = params.l_max - params.l_cache;
    if (length <= soft) return 0.0;
    if (length <= params.l_max) return (soft - length) / params.l_cache;
    return -1.0;
}

double tis_log_ratio(const LogProbTrace& trace) {
    double sum = 0.0;
    for (std::size_t t = 0; t < trace.size(); ++t)
        if (trace.action_mask[t]) sum += trace.logp_infer[t] - trace.logp_old[t];
    return sum;
}

double tis_factor(const LogProbTrace& trace, const LossParams& params) {
    const double log_clip = std::log(params.tis_clip);
    const double lr = std::min(tis_log_ratio(trace), log_clip);
    return params.tis_mode == TisMode::TruncatedRatio ? std::exp(lr) : lr;
}

namespace {

double k3(double ref, double cur) {
    const double x = ref - cur;
    return std::exp(x) - x - 1.0;
}

// d/dcur of k3(ref, cur).
double k3_grad(double ref, double cur) { return 1.0 - std::exp(ref - cur); }

struct Clipped {
    double value;
    double slope;  // d value / d ratio
};

// min(r*A, clip(r, 1-lo, 1+hi)*A) and its derivative in r.
Clipped clipped_surrogate(double r, double adv, double lo, double hi) {
    const double unclipped = r * adv;
    const double clipped = std::clamp(r, 1.0 - lo, 1.0 + hi) * adv;
    if (unclipped <= clipped) return {unclipped, adv};
    return {clipped, 0.0};
}

std::size_t active_tokens(std::span<const NodeRecord> batch) {
    std::size_t n = 0;
    for (const auto& r : batch) n += r.trace.active_tokens();
    return n;
}

}  // namespace

double kl_k3(const LogProbTrace& trace) {
    double sum = 0.0;
    std::size_t active = 0;
    for (std::size_t t = 0; t < trace.size(); ++t) {
        if (!trace.action_mask[t]) continue;
        sum += k3(trace.logp_ref[t], trace.logp_new[t]);
        ++active;
    }
    return active == 0 ? 0.0 : sum / static_cast<double>(active);
}

void shape_rewards(std::span<NodeRecord> records, const LossParams& params) {
    for (auto& r : records) r.length_penalty = overlong_penalty(static_cast<double>(r.trace.active_tokens()), params);
}

void assign_tree_advantages(std::span<NodeRecord> tree_records, double std_floor, bool shaped) {
    std::vector<double> rewards;
    rewards.reserve(tree_records.size());
    for (const auto& r : tree_records) rewards.push_back(shaped ? r.shaped_reward() : r.reward);
    const auto adv = tree_advantages(rewards, std_floor);
    for (std::size_t i = 0; i < tree_records.size(); ++i) tree_records[i].set_advantage(adv[i]);
}

bool degenerate_tree(std::span<const NodeRecord> tree_records) {
    if (tree_records.empty()) return true;
    const bool all0 = std::all_of(tree_records.begin(), tree_records.end(), [](const auto& r) { return r.reward == 0.0; });
    const bool all1 = std::all_of(tree_records.begin(), tree_records.end(), [](const auto& r) { return r.reward == 1.0; });
    return all0 || all1;
}

double agent_objective(std::span<const NodeRecord> batch, const LossParams& params, Objective kind,
                       std::vector<RecordTerm>* terms, std::vector<std::vector<double>>* d_logp) {
    for (const auto& r : batch)
        if (!r.has_advantage()) throw StateError("record " + r.task_id + "/" + std::to_string(r.node_id) + " has no advantage");
    const std::size_t tokens = active_tokens(batch);
    if (tokens == 0) throw DegenerateDenominator("agent buffer has no active tokens");
    const double inv_n = 1.0 / static_cast<double>(tokens);

    const auto count = static_cast<long>(batch.size());
    std::vector<RecordTerm> local(batch.size());
    if (d_logp) d_logp->assign(batch.size(), {});

#pragma omp parallel for schedule(static)
    for (long k = 0; k < count; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const NodeRecord& rec = batch[i];
        const LogProbTrace& tr = rec.trace;
        const double adv = rec.advantage();
        RecordTerm term;
        std::vector<double> grad;
        if (d_logp) grad.assign(tr.size(), 0.0);

        if (kind == Objective::Mars2) {
            for (std::size_t t = 0; t < tr.size(); ++t) {
                if (!tr.action_mask[t]) continue;
                const double w = std::exp(tr.logp_new[t] - tr.logp_old[t]);
                const auto c = clipped_surrogate(w, adv, params.eps_low, params.eps_high);
                term.surrogate += c.value;
                term.kl += k3(tr.logp_ref[t], tr.logp_new[t]);
                if (d_logp) grad[t] = (c.slope * w - params.beta_kl * k3_grad(tr.logp_ref[t], tr.logp_new[t])) * inv_n;
            }
        } else {
            const double s = gspo_ratio(tr);
            const auto c = clipped_surrogate(s, adv, params.eps_low, params.eps_high);
            const double len = static_cast<double>(tr.active_tokens());
            term.prefactor = tis_factor(tr, params);
            term.surrogate = len * c.value;
            for (std::size_t t = 0; t < tr.size(); ++t) {
                if (!tr.action_mask[t]) continue;
                term.kl += k3(tr.logp_ref[t], tr.logp_new[t]);
                // ds/dlogp_new[t] = s / len, times len from the token sum.
                if (d_logp)
                    grad[t] = term.prefactor *
                              (c.slope * s - params.beta_kl * k3_grad(tr.logp_ref[t], tr.logp_new[t])) * inv_n;
            }
        }
        term.value = term.prefactor * (term.surrogate - params.beta_kl * term.kl) * inv_n;
        local[i] = term;
        if (d_logp) (*d_logp)[i] = std::move(grad);
    }

    double total = 0.0;
    for (const auto& t : local) total += t.value;
    if (terms) terms->insert(terms->end(), local.begin(), local.end());
    return total;
}

namespace {

ObjectiveResult grouped(const std::vector<std::vector<NodeRecord>>& groups, const LossParams& params,
                        Objective kind) {
    ObjectiveResult out;
    for (const auto& g : groups) {
        if (g.empty()) {
            out.per_agent.push_back(0.0);
            continue;
        }
        const double v = agent_objective(g, params, kind, &out.terms);
        out.per_agent.push_back(v);
        out.value += v;
    }
    return out;
}

}  // namespace

ObjectiveResult mars2_objective(const std::vector<std::vector<NodeRecord>>& groups, const LossParams& params) {
    return grouped(groups, params, Objective::Mars2);
}

ObjectiveResult mars2plus_objective(const std::vector<std::vector<NodeRecord>>& groups, const LossParams& params) {
    return grouped(groups, params, Objective::Mars2Plus);
}

double objective_at(std::vector<NodeRecord>& batch, const agents::SimAgentParams& params, const LossParams& loss,
                    Objective kind) {
    for (auto& r : batch) agents::rescore(r, params);
    return agent_objective(batch, loss, kind);
}

BeliefGradient belief_gradient(std::vector<NodeRecord>& batch, const agents::SimAgentParams& params,
                               const LossParams& loss, Objective kind) {
    for (auto& r : batch) agents::rescore(r, params);
    std::vector<std::vector<double>> d_logp;
    (void)agent_objective(batch, loss, kind, nullptr, &d_logp);

    const std::size_t m = params.belief.size();
    struct TopicProbs {
        std::vector<double> p;
        std::vector<bool> live;
    };
    std::map<std::string, TopicProbs> probs;
    BeliefGradient grad;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& rec = batch[i];
        auto [it, fresh] = probs.try_emplace(rec.topic);
        if (fresh) {
            it->second.p.resize(m);
            it->second.live.resize(m);
            for (std::size_t b = 0; b < m; ++b) {
                const double p = params.bit_prob(b, rec.topic);
                it->second.p[b] = p;
                it->second.live[b] = p > agents::SimAgentParams::kMinBelief && p < agents::SimAgentParams::kMaxBelief;
            }
            grad[rec.topic].assign(m, 0.0);
        }
        const auto& tp = it->second;
        auto& g_topic = grad[rec.topic];
        const auto chunks = agents::token_chunks(m, static_cast<int>(rec.trace.size()));
        for (std::size_t t = 0; t < chunks.size(); ++t) {
            const double g = d_logp[i][t];
            if (g == 0.0) continue;
            for (std::size_t b = chunks[t].first; b < chunks[t].second; ++b)
                if (tp.live[b]) g_topic[b] += g * params.logit_scale * ((rec.output[b] ? 1.0 : 0.0) - tp.p[b]);
        }
    }
    return grad;
}

}  // namespace mars::rl

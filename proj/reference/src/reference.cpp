#include "mars_ref/reference.hpp"

#include <algorithm>
#include <cmath>

#include "mars/core/errors.hpp"
#include "mars/core/rng.hpp"

namespace mars::ref {

std::vector<double> tree_advantages(const std::vector<double>& rewards, double std_floor) {
    const double n = static_cast<double>(rewards.size());
    double sum = 0.0, sum_sq = 0.0;
    for (double r : rewards) sum += r;
    const double mean = rewards.empty() ? 0.0 : sum / n;
    for (double r : rewards) sum_sq += (r - mean) * (r - mean);
    const double sd = rewards.empty() ? 0.0 : std::sqrt(sum_sq / n);
    std::vector<double> out;
    for (double r : rewards) out.push_back(sd < std_floor ? 0.0 : (r - mean) / sd);
    return out;
}

double agent_objective(const std::vector<NodeRecord>& batch, const rl::LossParams& params, rl::Objective kind,
                       std::vector<std::vector<double>>* d_logp) {
    double n_tokens = 0.0;
    for (const auto& rec : batch) {
        if (!rec.has_advantage()) throw StateError("record without advantage");
        for (std::size_t t = 0; t < rec.trace.size(); ++t) n_tokens += rec.trace.action_mask[t] ? 1.0 : 0.0;
    }
    if (n_tokens == 0.0) throw DegenerateDenominator("no active tokens");
    if (d_logp) d_logp->clear();

    double total = 0.0;
    for (const auto& rec : batch) {
        const auto& tr = rec.trace;
        const double a = rec.advantage();
        std::vector<double> g(tr.size(), 0.0);
        const double lo = 1.0 - params.eps_low, hi = 1.0 + params.eps_high;

        if (kind == rl::Objective::Mars2) {
            for (std::size_t t = 0; t < tr.size(); ++t) {
                if (!tr.action_mask[t]) continue;
                const double w = std::exp(tr.logp_new[t]) / std::exp(tr.logp_old[t]);
                const double plain = w * a;
                const double clipped = std::min(std::max(w, lo), hi) * a;
                const double x = tr.logp_ref[t] - tr.logp_new[t];
                const double kl = std::exp(x) - x - 1.0;
                total += (std::min(plain, clipped) - params.beta_kl * kl) / n_tokens;
                const double d_sur = plain <= clipped ? w * a : 0.0;
                g[t] = (d_sur - params.beta_kl * (1.0 - std::exp(x))) / n_tokens;
            }
        } else {
            double prod = 1.0, len = 0.0, log_is = 0.0;
            for (std::size_t t = 0; t < tr.size(); ++t) {
                if (!tr.action_mask[t]) continue;
                prod *= std::exp(tr.logp_new[t] - tr.logp_old[t]);
                log_is += tr.logp_infer[t] - tr.logp_old[t];
                len += 1.0;
            }
            const double s = len > 0.0 ? std::pow(prod, 1.0 / len) : 1.0;
            const double is = std::min(std::exp(log_is), params.tis_clip);
            const double rho = params.tis_mode == rl::TisMode::TruncatedRatio ? is : std::log(is);
            const double plain = s * a;
            const double clipped = std::min(std::max(s, lo), hi) * a;
            const double d_sur = plain <= clipped ? a : 0.0;  // per unit of s
            double seq = 0.0;
            for (std::size_t t = 0; t < tr.size(); ++t) {
                if (!tr.action_mask[t]) continue;
                const double x = tr.logp_ref[t] - tr.logp_new[t];
                seq += std::min(plain, clipped) - params.beta_kl * (std::exp(x) - x - 1.0);
                g[t] = rho * (d_sur * s - params.beta_kl * (1.0 - std::exp(x))) / n_tokens;
            }
            total += rho * seq / n_tokens;
        }
        if (d_logp) d_logp->push_back(std::move(g));
    }
    return total;
}

std::vector<search::SearchTrace> run_search_batch(const std::vector<Task>& tasks, const search::AgentList& agents,
                                                  const search::SearchConfig& config) {
    std::vector<search::SearchTrace> out;
    for (const auto& task : tasks) {
        Rng rng = derive_stream(config.seed, task.id);
        out.push_back(search::run_search(task, agents, config, rng));
    }
    return out;
}

double aec(const std::vector<std::vector<diversity::Vector>>& per_task, double eps, int min_pts) {
    if (per_task.empty()) throw InvalidArgument("no tasks");
    double sum = 0.0;
    for (const auto& pts : per_task) {
        if (pts.empty()) throw InvalidArgument("task has no solutions");
        const auto labels = diversity::dbscan(pts, eps, min_pts);
        int clusters = 0, noise = 0;
        for (int l : labels) {
            clusters = std::max(clusters, l + 1);
            noise += l < 0 ? 1 : 0;
        }
        sum += clusters + noise;
    }
    return sum / static_cast<double>(per_task.size());
}

}  // namespace mars::ref

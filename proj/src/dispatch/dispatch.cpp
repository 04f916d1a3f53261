#include "mars/dispatch/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include "mars/core/errors.hpp"

namespace mars::dispatch {

AgentBuffer::AgentBuffer(AgentId agent, int threshold) : agent_(agent), threshold_(threshold) {
    if (threshold < 1) throw InvalidArgument("dispatch.threshold must be >= 1");
}

std::size_t AgentBuffer::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

void AgentBuffer::append(NodeRecord record) {
    if (record.agent != agent_)
        throw RoutingError("record of agent " + std::to_string(record.agent.value) + " sent to buffer of agent " +
                           std::to_string(agent_.value));
    std::lock_guard lock(mu_);
    records_.push_back(std::move(record));
    ++appended_;
}

std::optional<TrainBatch> AgentBuffer::maybe_trigger(std::uint64_t wall_step) {
    std::lock_guard lock(mu_);
    const auto n = static_cast<std::size_t>(threshold_);
    if (records_.size() < n) return std::nullopt;
    TrainBatch batch{agent_, {}, wall_step};
    batch.records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        batch.records.push_back(std::move(records_.front()));
        records_.pop_front();
    }
    drained_ += n;
    return batch;
}

BufferSet::BufferSet(const std::vector<AgentId>& agents, int threshold) {
    for (AgentId a : agents) buffers_.emplace(a, std::make_unique<AgentBuffer>(a, threshold));
}

AgentBuffer& BufferSet::at(AgentId agent) {
    auto it = buffers_.find(agent);
    if (it == buffers_.end()) throw RoutingError("no buffer for agent " + std::to_string(agent.value));
    return *it->second;
}

const AgentBuffer& BufferSet::at(AgentId agent) const {
    auto it = buffers_.find(agent);
    if (it == buffers_.end()) throw RoutingError("no buffer for agent " + std::to_string(agent.value));
    return *it->second;
}

std::vector<AgentId> BufferSet::agents() const {
    std::vector<AgentId> out;
    for (const auto& [a, _] : buffers_) out.push_back(a);
    return out;
}

DispatchStats& DispatchStats::operator+=(const DispatchStats& other) {
    for (const auto& [a, n] : other.appended) appended[a] += n;
    filtered += other.filtered;
    produced += other.produced;
    return *this;
}

DispatchStats dispatch(std::vector<NodeRecord> tree_records, BufferSet& buffers, bool filter) {
    DispatchStats stats;
    stats.produced = tree_records.size();
    if (filter && rl::degenerate_tree(tree_records)) {
        stats.filtered = tree_records.size();
        return stats;
    }
    for (const auto& r : tree_records) {
        if (!r.has_advantage())
            throw StateError("record " + r.task_id + "/" + std::to_string(r.node_id) + " dispatched without advantage");
        (void)buffers.at(r.agent);
    }
    for (auto& r : tree_records) {
        const AgentId a = r.agent;
        buffers.at(a).append(std::move(r));
        ++stats.appended[a];
    }
    return stats;
}

agents::SimAgentParams apply_update(const agents::SimAgentParams& params, const std::vector<NodeRecord>& batch,
                                    double step_size, const rl::LossParams& loss, rl::Objective kind) {
    if (batch.empty()) throw InvalidArgument("apply_update needs a non-empty batch");
    agents::SimAgentParams next = params;
    if (step_size == 0.0) return next;
    std::vector<NodeRecord> work = batch;
    const auto grads = rl::belief_gradient(work, params, loss, kind);
    for (const auto& [topic, grad] : grads) {
        if (std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; })) continue;
        // A topic trained for the first time starts from the default beliefs.
        auto& target = topic.empty() ? next.belief : next.topic_belief.try_emplace(topic, params.belief).first->second;
        const auto& before = params.beliefs_for(topic);
        for (std::size_t b = 0; b < target.size(); ++b) {
            if (grad[b] == 0.0) continue;
            const double p = std::clamp(before[b], agents::SimAgentParams::kMinBelief,
                                        agents::SimAgentParams::kMaxBelief);
            const double z = std::log(p / (1.0 - p)) + step_size * grad[b];
            target[b] = std::clamp(1.0 / (1.0 + std::exp(-z)), agents::SimAgentParams::kMinBelief,
                                   agents::SimAgentParams::kMaxBelief);
        }
    }
    return next;
}

void write_update_log(std::ostream& out, const std::vector<UpdateLogEntry>& log) {
    out << "wall_step,agent,batch_size,objective_before,objective_after\n";
    const auto old = out.precision(17);
    for (const auto& e : log)
        out << e.wall_step << ',' << e.agent.value << ',' << e.batch_size << ',' << e.objective_before << ','
            << e.objective_after << '\n';
    out.precision(old);
}

UpdateLogEntry train_on_batch(agents::ParamStore& store, const TrainBatch& batch, double step_size,
                              const rl::LossParams& loss, rl::Objective kind) {
    const auto before = store.load();
    auto next = apply_update(*before, batch.records, step_size, loss, kind);
    std::vector<NodeRecord> work = batch.records;
    UpdateLogEntry e;
    e.wall_step = batch.wall_step;
    e.agent = batch.agent;
    e.batch_size = batch.records.size();
    e.objective_before = rl::objective_at(work, *before, loss, kind);
    e.objective_after = rl::objective_at(work, next, loss, kind);
    store.store(std::move(next));
    return e;
}

AsyncTrainer::AsyncTrainer(std::map<AgentId, std::shared_ptr<agents::ParamStore>> stores, TrainerOptions options,
                           UpdateHook hook)
    : options_(std::move(options)), hook_(std::move(hook)), buffers_([&] {
          std::vector<AgentId> ids;
          for (const auto& [a, _] : stores) ids.push_back(a);
          return ids;
      }(), options_.threshold) {
    if (stores.empty()) throw NoAgents("trainer needs at least one agent");
    options_.loss.validate();
    for (auto& [a, s] : stores) {
        if (!s) throw InvalidArgument("null parameter store");
        auto w = std::make_unique<Worker>();
        w->store = std::move(s);
        workers_.emplace(a, std::move(w));
    }
    for (auto& [a, w] : workers_) {
        Worker* wp = w.get();
        const AgentId id = a;
        wp->thread = std::thread([this, id, wp] { run(id, *wp); });
    }
}

AsyncTrainer::~AsyncTrainer() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    cv_work_.notify_all();
    for (auto& [_, w] : workers_)
        if (w->thread.joinable()) w->thread.join();
}

DispatchStats AsyncTrainer::submit(std::vector<NodeRecord> tree_records) {
    auto stats = dispatch(std::move(tree_records), buffers_, options_.filter);
    const auto step = (produced_ += stats.produced);
    filtered_ += stats.filtered;
    for (const auto& [agent, _] : stats.appended) {
        while (auto batch = buffers_.at(agent).maybe_trigger(step)) {
            Worker& w = *workers_.at(agent);
            ++w.triggered;
            std::lock_guard lock(mu_);
            w.queue.push_back(std::move(*batch));
        }
    }
    cv_work_.notify_all();
    return stats;
}

void AsyncTrainer::run(AgentId agent, Worker& w) {
    for (;;) {
        TrainBatch batch;
        {
            std::unique_lock lock(mu_);
            cv_work_.wait(lock, [&] { return stopping_ || !w.queue.empty(); });
            if (w.queue.empty()) return;
            batch = std::move(w.queue.front());
            w.queue.pop_front();
            w.busy = true;
        }
        try {
            if (hook_) hook_(agent);
            auto entry = train_on_batch(*w.store, batch, options_.step_size, options_.loss, options_.kind);
            buffers_.at(agent).note_update();
            std::lock_guard lock(mu_);
            log_.push_back(entry);
        } catch (...) {
            std::lock_guard lock(mu_);
            if (!error_) error_ = std::current_exception();
        }
        {
            std::lock_guard lock(mu_);
            w.busy = false;
        }
        cv_idle_.notify_all();
    }
}

void AsyncTrainer::wait_idle() {
    std::unique_lock lock(mu_);
    cv_idle_.wait(lock, [&] {
        for (const auto& [_, w] : workers_)
            if (w->busy || !w->queue.empty()) return false;
        return true;
    });
}

std::uint64_t AsyncTrainer::triggered(AgentId agent) const {
    auto it = workers_.find(agent);
    if (it == workers_.end()) throw RoutingError("unknown agent " + std::to_string(agent.value));
    return it->second->triggered.load();
}

std::vector<UpdateLogEntry> AsyncTrainer::log() const {
    std::lock_guard lock(mu_);
    return log_;
}

void AsyncTrainer::check() const {
    std::lock_guard lock(mu_);
    if (error_) std::rethrow_exception(error_);
}

}  // namespace mars::dispatch

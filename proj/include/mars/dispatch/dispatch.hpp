#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "mars/agents/agent.hpp"
#include "mars/rl/objectives.hpp"

namespace mars::dispatch {

struct TrainBatch {
    AgentId agent;
    std::vector<NodeRecord> records;
    /// Records produced by the run when the batch was drained.
    std::uint64_t wall_step = 0;
};

/// FIFO experience buffer of one agent. Appends and trigger checks may come
/// from any thread.
class AgentBuffer {
public:
    AgentBuffer(AgentId agent, int threshold);

    [[nodiscard]] AgentId agent() const noexcept { return agent_; }
    [[nodiscard]] int threshold() const noexcept { return threshold_; }
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] std::uint64_t appended() const noexcept { return appended_.load(); }
    [[nodiscard]] std::uint64_t drained() const noexcept { return drained_.load(); }
    [[nodiscard]] std::uint64_t updates_applied() const noexcept { return updates_.load(); }
    void note_update() noexcept { ++updates_; }

    /// Throws RoutingError if the record belongs to another agent.
    void append(NodeRecord record);

    /// Drains exactly `threshold` records, oldest first, once enough are
    /// queued.
    [[nodiscard]] std::optional<TrainBatch> maybe_trigger(std::uint64_t wall_step = 0);

private:
    AgentId agent_;
    int threshold_;
    mutable std::mutex mu_;
    std::deque<NodeRecord> records_;
    std::atomic<std::uint64_t> appended_{0};
    std::atomic<std::uint64_t> drained_{0};
    std::atomic<std::uint64_t> updates_{0};
};

class BufferSet {
public:
    BufferSet(const std::vector<AgentId>& agents, int threshold);

    /// Throws RoutingError for an unknown agent.
    [[nodiscard]] AgentBuffer& at(AgentId agent);
    [[nodiscard]] const AgentBuffer& at(AgentId agent) const;
    [[nodiscard]] std::vector<AgentId> agents() const;

private:
    std::map<AgentId, std::unique_ptr<AgentBuffer>> buffers_;
};

struct DispatchStats {
    std::map<AgentId, std::size_t> appended;
    std::size_t filtered = 0;
    std::size_t produced = 0;

    DispatchStats& operator+=(const DispatchStats& other);
};

/// Routes the records of one search tree to their agents' buffers. With
/// `filter` on, a tree whose rewards are all 0 or all 1 is dropped whole.
/// Every agent id is checked before anything is appended, so a RoutingError
/// leaves the buffers untouched.
DispatchStats dispatch(std::vector<NodeRecord> tree_records, BufferSet& buffers, bool filter = true);

/// One ascent step on the agent objective in logit(belief) space. Beliefs
/// are clamped to [kMinBelief, kMaxBelief] afterwards. Throws InvalidArgument
/// on an empty batch.
[[nodiscard]] agents::SimAgentParams apply_update(const agents::SimAgentParams& params,
                                                  const std::vector<NodeRecord>& batch, double step_size,
                                                  const rl::LossParams& loss,
                                                  rl::Objective kind = rl::Objective::Mars2Plus);

struct UpdateLogEntry {
    std::uint64_t wall_step = 0;
    AgentId agent;
    std::size_t batch_size = 0;
    double objective_before = 0.0;
    double objective_after = 0.0;
};

/// Header: wall_step,agent,batch_size,objective_before,objective_after
void write_update_log(std::ostream& out, const std::vector<UpdateLogEntry>& log);

/// Applies one batch to a store: computes the update, swaps the snapshot in
/// and returns the log entry.
UpdateLogEntry train_on_batch(agents::ParamStore& store, const TrainBatch& batch, double step_size,
                              const rl::LossParams& loss, rl::Objective kind);

struct TrainerOptions {
    int threshold = 256;
    double step_size = 0.5;
    rl::LossParams loss;
    rl::Objective kind = rl::Objective::Mars2Plus;
    bool filter = true;
};

/// Dispatcher with one update worker per agent. submit() routes a tree and
/// hands any triggered batch to that agent's worker without waiting for it,
/// so a slow update never holds up other agents.
class AsyncTrainer {
public:
    /// Called on the worker thread right before an update; tests use it to
    /// inject delays.
    using UpdateHook = std::function<void(AgentId)>;

    AsyncTrainer(std::map<AgentId, std::shared_ptr<agents::ParamStore>> stores, TrainerOptions options,
                 UpdateHook hook = {});
    ~AsyncTrainer();
    AsyncTrainer(const AsyncTrainer&) = delete;
    AsyncTrainer& operator=(const AsyncTrainer&) = delete;

    DispatchStats submit(std::vector<NodeRecord> tree_records);
    /// Blocks until every queued update has finished.
    void wait_idle();

    [[nodiscard]] const BufferSet& buffers() const noexcept { return buffers_; }
    [[nodiscard]] std::uint64_t triggered(AgentId agent) const;
    [[nodiscard]] std::uint64_t produced() const noexcept { return produced_.load(); }
    [[nodiscard]] std::uint64_t filtered() const noexcept { return filtered_.load(); }
    [[nodiscard]] std::vector<UpdateLogEntry> log() const;
    /// Rethrows the first exception raised by a worker, if any.
    void check() const;

private:
    struct Worker {
        std::shared_ptr<agents::ParamStore> store;
        std::deque<TrainBatch> queue;
        std::atomic<std::uint64_t> triggered{0};
        bool busy = false;
        std::thread thread;
    };

    void run(AgentId agent, Worker& w);

    TrainerOptions options_;
    UpdateHook hook_;
    BufferSet buffers_;
    std::map<AgentId, std::unique_ptr<Worker>> workers_;
    mutable std::mutex mu_;
    std::condition_variable cv_work_;
    std::condition_variable cv_idle_;
    bool stopping_ = false;
    std::atomic<std::uint64_t> produced_{0};
    std::atomic<std::uint64_t> filtered_{0};
    std::vector<UpdateLogEntry> log_;
    std::exception_ptr error_;
};

}  // namespace mars::dispatch

#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "mars/agents/agent.hpp"

namespace mars::agents {

/// Where and how to reach an HTTP agent backend.
/// Config keys: agents.remote.timeout_ms, agents.remote.retries.
struct RemoteEndpoint {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string path = "/agent";
    int timeout_ms = 30000;
    int retries = 0;

    /// Parses "http://host:port/path".
    static RemoteEndpoint parse(const std::string& url);
};

/// Request body:
///   {"task_id", "M", "mode": "fresh"|"refine", "parent_bits_hex"?,
///    "feedback"?: {"summary": {"passed","total","pass_rate"}, "failures": [{"index","produced","expected"}]}}
/// Binary feedback is sent as {"binary": true, "passed": bool}.
[[nodiscard]] nlohmann::json make_remote_request(const TaskView& task, const Solution* parent,
                                                 const Feedback* feedback);

/// Response body: {"bits_hex", "token_logprobs": [...]}. Throws ProtocolError on
/// malformed bodies, including a bit string of the wrong length.
[[nodiscard]] Proposal parse_remote_response(const std::string& body, int m, AgentId agent);

/// One POST round trip. Throws TimeoutError, ProtocolError or RemoteError
/// (connection failures and non-2xx statuses). Retries apply to timeouts
/// and connection failures only.
[[nodiscard]] Proposal remote_propose(const RemoteEndpoint& endpoint, const TaskView& task, AgentId agent);
[[nodiscard]] Proposal remote_refine(const RemoteEndpoint& endpoint, const TaskView& task, const Solution& parent,
                                     const Feedback& feedback, AgentId agent);

class RemoteAgent final : public Agent {
public:
    RemoteAgent(AgentId id, RemoteEndpoint endpoint) : id_(id), endpoint_(std::move(endpoint)) {}

    [[nodiscard]] AgentId id() const override { return id_; }
    [[nodiscard]] Proposal propose(const TaskView& task, Rng&) const override {
        return remote_propose(endpoint_, task, id_);
    }
    [[nodiscard]] Proposal refine(const TaskView& task, const Solution& parent, const Feedback& feedback,
                                  Rng&) const override {
        return remote_refine(endpoint_, task, parent, feedback, id_);
    }

private:
    AgentId id_;
    RemoteEndpoint endpoint_;
};

}  // namespace mars::agents

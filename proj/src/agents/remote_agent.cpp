#include "mars/agents/remote_agent.hpp"

#include <cmath>

#include <httplib.h>

#include "mars/core/errors.hpp"

namespace mars::agents {

RemoteEndpoint RemoteEndpoint::parse(const std::string& url) {
    RemoteEndpoint ep;
    std::string rest = url;
    constexpr std::string_view scheme = "http://";
    if (rest.starts_with(scheme)) rest = rest.substr(scheme.size());
    const auto slash = rest.find('/');
    const std::string authority = rest.substr(0, slash);
    ep.path = slash == std::string::npos ? "/" : rest.substr(slash);
    const auto colon = authority.rfind(':');
    if (colon == std::string::npos) {
        ep.host = authority;
        ep.port = 80;
    } else {
        ep.host = authority.substr(0, colon);
        try {
            ep.port = std::stoi(authority.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("agents.remote.endpoint: bad port in '" + url + "'");
        }
    }
    if (ep.host.empty()) throw ConfigError("agents.remote.endpoint: missing host in '" + url + "'");
    return ep;
}

nlohmann::json make_remote_request(const TaskView& task, const Solution* parent, const Feedback* feedback) {
    nlohmann::ordered_json req;
    req["task_id"] = task.id;
    req["M"] = task.size;
    req["mode"] = parent ? "refine" : "fresh";
    if (parent) req["parent_bits_hex"] = parent->bits.to_hex();
    if (feedback) {
        if (const auto* bin = std::get_if<BinaryFeedback>(feedback)) {
            req["feedback"] = {{"binary", true}, {"passed", bin->passed}};
        } else {
            const auto& fb = std::get<FeedbackReport>(*feedback);
            nlohmann::ordered_json failures = nlohmann::ordered_json::array();
            for (const auto& f : fb.failures)
                failures.push_back({{"index", f.index}, {"produced", f.produced ? 1 : 0}, {"expected", f.expected ? 1 : 0}});
            req["feedback"] = {{"summary",
                                {{"passed", fb.summary.passed},
                                 {"total", fb.summary.total},
                                 {"pass_rate", fb.summary.pass_rate}}},
                               {"failures", failures}};
        }
    }
    return req;
}

Proposal parse_remote_response(const std::string& body, int m, AgentId agent) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& ex) {
        throw ProtocolError(std::string("response is not JSON: ") + ex.what());
    }
    if (!j.is_object() || !j.contains("bits_hex") || !j["bits_hex"].is_string())
        throw ProtocolError("response lacks a bits_hex string");
    Proposal p;
    try {
        p.solution = Solution{BitVector::from_hex(j["bits_hex"].get<std::string>(), static_cast<std::size_t>(m)), agent, 0};
    } catch (const Error& ex) {
        throw ProtocolError(std::string("bad bits_hex: ") + ex.what());
    }
    std::vector<double> lp;
    if (j.contains("token_logprobs")) {
        if (!j["token_logprobs"].is_array()) throw ProtocolError("token_logprobs must be an array");
        for (const auto& v : j["token_logprobs"]) {
            if (!v.is_number()) throw ProtocolError("token_logprobs entries must be numbers");
            lp.push_back(v.get<double>());
        }
    }
    if (lp.empty()) lp.push_back(0.0);
    p.trace.logp_old = lp;
    p.trace.logp_new = lp;
    p.trace.logp_ref = lp;
    p.trace.logp_infer = lp;
    p.trace.action_mask.assign(lp.size(), 1);
    try {
        p.trace.validate();
    } catch (const ShapeError& ex) {
        throw ProtocolError(ex.what());
    }
    return p;
}

namespace {

Proposal round_trip(const RemoteEndpoint& ep, const nlohmann::json& request, int m, AgentId agent) {
    const auto seconds = ep.timeout_ms / 1000;
    const auto micros = (ep.timeout_ms % 1000) * 1000;
    const std::string body = request.dump();
    for (int attempt = 0;; ++attempt) {
        httplib::Client cli(ep.host, ep.port);
        cli.set_connection_timeout(seconds, micros);
        cli.set_read_timeout(seconds, micros);
        cli.set_write_timeout(seconds, micros);
        auto res = cli.Post(ep.path, body, "application/json");
        if (res) {
            if (res->status < 200 || res->status >= 300)
                throw RemoteError("HTTP status " + std::to_string(res->status) + " from " + ep.host);
            return parse_remote_response(res->body, m, agent);
        }
        const auto err = res.error();
        if (attempt < ep.retries) continue;
        if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout)
            throw TimeoutError("no response from " + ep.host + ":" + std::to_string(ep.port) + " within " +
                               std::to_string(ep.timeout_ms) + " ms");
        throw RemoteError("request to " + ep.host + ":" + std::to_string(ep.port) + " failed: " + httplib::to_string(err));
    }
}

}  // namespace

Proposal remote_propose(const RemoteEndpoint& endpoint, const TaskView& task, AgentId agent) {
    return round_trip(endpoint, make_remote_request(task, nullptr, nullptr), task.size, agent);
}

Proposal remote_refine(const RemoteEndpoint& endpoint, const TaskView& task, const Solution& parent,
                       const Feedback& feedback, AgentId agent) {
    return round_trip(endpoint, make_remote_request(task, &parent, &feedback), task.size, agent);
}

}  // namespace mars::agents

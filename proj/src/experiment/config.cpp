#include <fstream>
#include <set>

#include "mars/core/errors.hpp"
#include "mars/experiment/experiment.hpp"

namespace mars::experiment {

using nlohmann::json;

std::string to_string(Mode mode) {
    switch (mode) {
        case Mode::Single: return "single";
        case Mode::Homo: return "homo";
        case Mode::Heter: return "heter";
    }
    return "?";
}

Mode parse_mode(const std::string& s) {
    if (s == "single") return Mode::Single;
    if (s == "homo") return Mode::Homo;
    if (s == "heter") return Mode::Heter;
    throw ConfigError("mode: expected single, homo or heter, got '" + s + "'");
}

namespace {

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
    for (const auto& [k, v] : j.items()) {
        const std::string key = prefix.empty() ? k : prefix + "." + k;
        if (v.is_object())
            flatten(v, key, out);
        else
            out[key] = v;
    }
}

class Reader {
public:
    Reader(const json& j, std::string path) : path_(std::move(path)) {
        if (!j.is_object()) throw ConfigError((path_.empty() ? "config" : path_) + ": expected an object");
        flatten(j, "", kv_);
    }

    template <class T>
    void read(const std::string& key, T& target) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return;
        used_.insert(key);
        try {
            target = it->second.get<T>();
        } catch (const json::exception&) {
            throw ConfigError(full(key) + ": bad value " + it->second.dump());
        }
    }

    [[nodiscard]] const json* raw(const std::string& key) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return nullptr;
        used_.insert(key);
        return &it->second;
    }

    void finish() const {
        for (const auto& [k, _] : kv_)
            if (!used_.contains(k)) throw ConfigError(full(k) + ": unknown key");
    }

    [[nodiscard]] std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string path_;
    std::map<std::string, json> kv_;
    std::set<std::string> used_;
};

template <class E>
E read_enum(Reader& r, const std::string& key, E current, std::initializer_list<std::pair<const char*, E>> names) {
    std::string s;
    r.read(key, s);
    if (s.empty()) return current;
    for (const auto& [n, v] : names)
        if (s == n) return v;
    throw ConfigError(r.full(key) + ": unrecognised value '" + s + "'");
}

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key + ": " + what);
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    Reader r(j, "");

    std::string mode;
    r.read("mode", mode);
    if (!mode.empty()) c.mode = parse_mode(mode);
    r.read("seed", c.seed);

    r.read("env.m", c.env.m);
    r.read("env.p", c.env.p);
    r.read("env.hint_noise", c.env.hint_noise);
    r.read("env.train_tasks", c.env.train_tasks);
    r.read("env.eval_tasks", c.env.eval_tasks);
    r.read("env.rm_tasks", c.env.rm_tasks);
    if (const json* fams = r.raw("env.families")) {
        if (!fams->is_array()) throw ConfigError("env.families: expected an array");
        c.env.families.clear();
        for (std::size_t i = 0; i < fams->size(); ++i) {
            Reader fr((*fams)[i], "env.families[" + std::to_string(i) + "]");
            FamilySpec f;
            fr.read("name", f.name);
            fr.read("volatility", f.volatility);
            fr.read("weight", f.weight);
            fr.finish();
            c.env.families.push_back(f);
        }
    }

    if (const json* agents = r.raw("agents")) {
        if (!agents->is_array()) throw ConfigError("agents: expected an array");
        c.agents.clear();
        for (std::size_t i = 0; i < agents->size(); ++i) {
            Reader ar((*agents)[i], "agents[" + std::to_string(i) + "]");
            AgentSpec a;
            ar.read("name", a.name);
            ar.read("skill", a.skill);
            ar.read("confidence", a.confidence);
            ar.read("fix_prob", a.fix_prob);
            ar.read("drift_prob", a.drift_prob);
            ar.read("trace_len", a.trace_len);
            ar.read("logit_scale", a.logit_scale);
            std::string endpoint;
            ar.read("endpoint", endpoint);
            if (!endpoint.empty()) a.remote_endpoint = endpoint;
            ar.finish();
            c.agents.push_back(a);
        }
    }
    r.read("environment.backend", c.backend);
    r.read("agents.remote.timeout_ms", c.remote_timeout_ms);
    r.read("agents.remote.retries", c.remote_retries);

    r.read("search.budget", c.search.budget);
    r.read("bandit.depth_guidance", c.search.depth_guidance);
    r.read("bandit.gamma1", c.search.schedule.gamma1);
    r.read("bandit.decay", c.search.schedule.decay);
    r.read("bandit.gamma_min", c.search.schedule.gamma_min);
    r.read("bandit.prior_alpha", c.search.priors.alpha);
    r.read("bandit.prior_beta", c.search.priors.beta);
    c.search.feedback_mode = read_enum(r, "search.feedback", c.search.feedback_mode,
                                       {{"binary", search::FeedbackMode::Binary},
                                        {"structured", search::FeedbackMode::Structured}});

    r.read("train.eps_low", c.train.loss.eps_low);
    r.read("train.eps_high", c.train.loss.eps_high);
    r.read("train.kl_coef", c.train.loss.beta_kl);
    r.read("train.l_max", c.train.loss.l_max);
    r.read("train.l_cache", c.train.loss.l_cache);
    r.read("train.tis_clip", c.train.loss.tis_clip);
    r.read("train.std_floor", c.train.loss.std_floor);
    c.train.loss.tis_mode = read_enum(r, "train.tis_mode", c.train.loss.tis_mode,
                                      {{"truncated_ratio", rl::TisMode::TruncatedRatio},
                                       {"log_ratio", rl::TisMode::LogRatio}});
    c.train.objective = read_enum(r, "train.objective", c.train.objective,
                                  {{"mars2", rl::Objective::Mars2}, {"mars2plus", rl::Objective::Mars2Plus}});
    r.read("train.step_size", c.train.step_size);
    r.read("train.total_records", c.train.total_records);
    r.read("train.rollout_batch", c.train.rollout_batch);
    r.read("train.checkpoint_every", c.train.checkpoint_every);
    r.read("train.infer_sigma", c.train.infer_sigma);
    r.read("train.budget", c.train.budget);
    r.read("dispatch.threshold", c.train.threshold);
    r.read("dispatch.filter", c.train.filter);

    r.read("eval.budget", c.eval.budget);
    r.read("eval.k_max", c.eval.k_max);
    c.eval.select = read_enum(r, "eval.select", c.eval.select,
                              {{"vanilla", Selector::Vanilla}, {"rm", Selector::RewardModel}});

    r.read("rm.loss", c.rm.loss);
    r.read("rm.epochs", c.rm.epochs);
    r.read("rm.lr", c.rm.lr);

    r.finish();
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& ex) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + ex.what());
    }
    return config_from_json(j);
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["mode"] = to_string(c.mode);
    j["seed"] = c.seed;
    json fams = json::array();
    for (const auto& f : c.env.families) fams.push_back({{"name", f.name}, {"volatility", f.volatility}, {"weight", f.weight}});
    j["env"] = {{"m", c.env.m},
                {"p", c.env.p},
                {"hint_noise", c.env.hint_noise},
                {"train_tasks", c.env.train_tasks},
                {"eval_tasks", c.env.eval_tasks},
                {"rm_tasks", c.env.rm_tasks},
                {"families", fams}};
    json agents = json::array();
    for (const auto& a : c.agents) {
        json aj{{"name", a.name},         {"skill", a.skill},           {"confidence", a.confidence},
                {"fix_prob", a.fix_prob}, {"drift_prob", a.drift_prob}, {"trace_len", a.trace_len},
                {"logit_scale", a.logit_scale}};
        if (a.remote_endpoint) aj["endpoint"] = *a.remote_endpoint;
        agents.push_back(aj);
    }
    j["agents"] = agents;
    j["agents.remote.timeout_ms"] = c.remote_timeout_ms;
    j["agents.remote.retries"] = c.remote_retries;
    j["environment.backend"] = c.backend;
    j["search"] = {{"budget", c.search.budget},
                   {"feedback", c.search.feedback_mode == search::FeedbackMode::Binary ? "binary" : "structured"}};
    j["bandit"] = {{"depth_guidance", c.search.depth_guidance},
                   {"gamma1", c.search.schedule.gamma1},
                   {"decay", c.search.schedule.decay},
                   {"gamma_min", c.search.schedule.gamma_min},
                   {"prior_alpha", c.search.priors.alpha},
                   {"prior_beta", c.search.priors.beta}};
    j["train"] = {{"eps_low", c.train.loss.eps_low},
                  {"eps_high", c.train.loss.eps_high},
                  {"kl_coef", c.train.loss.beta_kl},
                  {"l_max", c.train.loss.l_max},
                  {"l_cache", c.train.loss.l_cache},
                  {"tis_clip", c.train.loss.tis_clip},
                  {"std_floor", c.train.loss.std_floor},
                  {"tis_mode", c.train.loss.tis_mode == rl::TisMode::LogRatio ? "log_ratio" : "truncated_ratio"},
                  {"objective", c.train.objective == rl::Objective::Mars2 ? "mars2" : "mars2plus"},
                  {"step_size", c.train.step_size},
                  {"total_records", c.train.total_records},
                  {"rollout_batch", c.train.rollout_batch},
                  {"checkpoint_every", c.train.checkpoint_every},
                  {"infer_sigma", c.train.infer_sigma},
                  {"budget", c.train.budget}};
    j["dispatch"] = {{"threshold", c.train.threshold}, {"filter", c.train.filter}};
    j["eval"] = {{"budget", c.eval.budget},
                 {"k_max", c.eval.k_max},
                 {"select", c.eval.select == Selector::RewardModel ? "rm" : "vanilla"}};
    j["rm"] = {{"loss", c.rm.loss}, {"epochs", c.rm.epochs}, {"lr", c.rm.lr}};
    return j;
}

void ExperimentConfig::validate() const {
    require(env.m >= 1, "env.m", "must be >= 1");
    require(env.p >= 1 && env.p <= env.m, "env.p", "must be in [1, env.m]");
    require(env.hint_noise >= 0.0 && env.hint_noise <= 1.0, "env.hint_noise", "must be in [0, 1]");
    require(env.train_tasks >= 1, "env.train_tasks", "must be >= 1");
    require(env.eval_tasks >= 1, "env.eval_tasks", "must be >= 1");
    require(env.rm_tasks >= 1, "env.rm_tasks", "must be >= 1");
    require(!env.families.empty(), "env.families", "needs at least one family");
    std::set<std::string> names;
    for (std::size_t i = 0; i < env.families.size(); ++i) {
        const auto& f = env.families[i];
        const std::string key = "env.families[" + std::to_string(i) + "]";
        require(!f.name.empty(), key + ".name", "must not be empty");
        require(names.insert(f.name).second, key + ".name", "duplicate family '" + f.name + "'");
        require(f.volatility >= 0.0 && f.volatility <= 1.0, key + ".volatility", "must be in [0, 1]");
        require(f.weight > 0.0, key + ".weight", "must be positive");
    }

    require(!agents.empty(), "agents", "needs at least one agent");
    if (mode == Mode::Single) require(agents.size() == 1, "agents", "single mode takes exactly one agent");
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const auto& a = agents[i];
        const std::string key = "agents[" + std::to_string(i) + "]";
        require(a.skill.empty() || names.contains(a.skill), key + ".skill", "unknown family '" + a.skill + "'");
        require(a.confidence >= 0.0 && a.confidence <= 1.0, key + ".confidence", "must be in [0, 1]");
        require(a.fix_prob >= 0.0 && a.fix_prob <= 1.0, key + ".fix_prob", "must be in [0, 1]");
        require(a.drift_prob >= 0.0 && a.drift_prob <= 1.0, key + ".drift_prob", "must be in [0, 1]");
        require(a.trace_len >= 1, key + ".trace_len", "must be >= 1");
        require(a.logit_scale > 0.0, key + ".logit_scale", "must be positive");
        if (a.remote_endpoint) {
            require(train.total_records == 0, key + ".endpoint", "remote agents cannot be trained");
            require(mode != Mode::Homo, key + ".endpoint", "remote agents cannot share parameters");
            try {
                (void)agents::RemoteEndpoint::parse(*a.remote_endpoint);
            } catch (const ConfigError& ex) {
                throw ConfigError(key + ".endpoint: " + ex.what());
            }
        }
    }
    require(remote_timeout_ms >= 1, "agents.remote.timeout_ms", "must be >= 1");
    require(remote_retries >= 0, "agents.remote.retries", "must be >= 0");

    require(search.budget >= 1, "search.budget", "must be >= 1");
    require(backend == "synthetic" || backend.starts_with("external:"), "environment.backend",
            "must be 'synthetic' or 'external:<name>'");
    require(search.priors.alpha > 0.0, "bandit.prior_alpha", "must be positive");
    require(search.priors.beta > 0.0, "bandit.prior_beta", "must be positive");
    require(search.schedule.gamma1 > 0.0 && search.schedule.gamma1 <= 1.0, "bandit.gamma1", "must be in (0, 1]");
    require(search.schedule.decay > 0.0 && search.schedule.decay <= 1.0, "bandit.decay", "must be in (0, 1]");
    require(search.schedule.gamma_min > 0.0 && search.schedule.gamma_min <= 1.0, "bandit.gamma_min",
            "must be in (0, 1]");
    require(!search.depth_guidance || (search.schedule.gamma1 < 1.0 && search.schedule.gamma_min <= search.schedule.gamma1),
            "bandit.gamma1", "depth guidance needs bandit.gamma_min <= bandit.gamma1 < 1");

    require(train.loss.eps_low > 0.0, "train.eps_low", "must be positive");
    require(train.loss.eps_high > 0.0, "train.eps_high", "must be positive");
    require(train.loss.beta_kl >= 0.0, "train.kl_coef", "must be >= 0");
    require(train.loss.l_cache > 0.0 && train.loss.l_cache < train.loss.l_max, "train.l_cache",
            "must be in (0, train.l_max)");
    require(train.loss.tis_clip > 0.0, "train.tis_clip", "must be positive");
    require(train.loss.std_floor > 0.0, "train.std_floor", "must be positive");
    require(train.step_size >= 0.0, "train.step_size", "must be >= 0");
    require(train.threshold >= 1, "dispatch.threshold", "must be >= 1");
    require(train.total_records >= 0 && train.total_records % train.threshold == 0, "train.total_records",
            "must be a non-negative multiple of dispatch.threshold");
    require(train.rollout_batch >= 1, "train.rollout_batch", "must be >= 1");
    require(train.checkpoint_every >= 0, "train.checkpoint_every", "must be >= 0");
    require(train.infer_sigma >= 0.0, "train.infer_sigma", "must be >= 0");
    require(train.budget >= 1, "train.budget", "must be >= 1");

    require(eval.budget >= 1, "eval.budget", "must be >= 1");
    require(eval.k_max >= 2, "eval.k_max", "must be >= 2");
    require(rm.loss == "mse" || rm.loss == "bt", "rm.loss", "must be mse or bt");
    require(rm.epochs >= 1, "rm.epochs", "must be >= 1");
    require(rm.lr > 0.0, "rm.lr", "must be positive");
}

}  // namespace mars::experiment

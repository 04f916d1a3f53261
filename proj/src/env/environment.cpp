#include "mars/env/environment.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "mars/core/errors.hpp"

namespace mars::env {

namespace {

std::vector<TestCase> make_tests(const BitVector& target, int p) {
    std::vector<TestCase> tests;
    tests.reserve(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
        tests.push_back(TestCase{static_cast<int>(i),
                                 static_cast<int>(i) < p ? Visibility::Public : Visibility::Private, target[i]});
    }
    return tests;
}

void check_split(int m, int p) {
    if (m <= 0) throw InvalidArgument("task length must be positive");
    if (p <= 0 || p > m)
        throw InvalidArgument("public count " + std::to_string(p) + " not in (0, " + std::to_string(m) + "]");
}

BitVector make_hints(const BitVector& target, double noise, Rng& rng) {
    BitVector hints = target;
    for (std::size_t i = 0; i < hints.size(); ++i)
        if (bernoulli(rng, noise)) hints.flip(i);
    return hints;
}

Task assemble(BitVector target, int p, const TaskOptions& opts, std::uint64_t seed, Rng& local,
              std::string family) {
    Task t;
    t.id = opts.id;
    t.public_count = p;
    t.tests = make_tests(target, p);
    t.hints = make_hints(target, opts.hint_noise, local);
    t.hint_noise = opts.hint_noise;
    t.target = std::move(target);
    t.seed = seed;
    t.family = std::move(family);
    return t;
}

}  // namespace

Task generate_task(int m, int p, Rng& rng, const TaskOptions& opts) {
    check_split(m, p);
    const std::uint64_t seed = rng();
    Rng local(seed);
    BitVector target(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) target.set(static_cast<std::size_t>(i), bernoulli(local, 0.5));
    return assemble(std::move(target), p, opts, seed, local, {});
}

TaskFamily make_family(std::string name, int m, double volatility, Rng& rng) {
    if (m <= 0) throw InvalidArgument("family length must be positive");
    TaskFamily f;
    f.name = std::move(name);
    f.pattern = BitVector(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) f.pattern.set(static_cast<std::size_t>(i), bernoulli(rng, 0.5));
    f.volatility.assign(static_cast<std::size_t>(m), volatility);
    return f;
}

Task generate_family_task(const TaskFamily& family, int p, Rng& rng, const TaskOptions& opts) {
    check_split(family.size(), p);
    if (family.volatility.size() != family.pattern.size())
        throw ShapeError("family volatility length does not match its pattern");
    const std::uint64_t seed = rng();
    Rng local(seed);
    BitVector target = family.pattern;
    for (std::size_t i = 0; i < target.size(); ++i)
        if (bernoulli(local, family.volatility[i])) target.flip(i);
    return assemble(std::move(target), p, opts, seed, local, family.name);
}

std::vector<Task> generate_task_set(const std::vector<TaskFamily>& families, int count, int p, double hint_noise,
                                    std::uint64_t seed, const std::string& id_prefix) {
    if (families.empty()) throw InvalidArgument("no task families");
    double total = 0.0;
    for (const auto& f : families) total += f.weight;
    std::vector<Task> tasks;
    tasks.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const std::string id = id_prefix + "-" + std::to_string(i);
        Rng rng = derive_stream(seed, id);
        double u = uniform01(rng) * total;
        std::size_t pick = families.size() - 1;
        for (std::size_t k = 0; k < families.size(); ++k) {
            if (u < families[k].weight) {
                pick = k;
                break;
            }
            u -= families[k].weight;
        }
        tasks.push_back(generate_family_task(families[pick], p, rng, TaskOptions{id, hint_noise}));
    }
    return tasks;
}

EvalReport evaluate(const Task& task, const BitVector& bits) {
    if (bits.size() != task.target.size())
        throw ShapeError("solution has " + std::to_string(bits.size()) + " bits, task expects " +
                         std::to_string(task.target.size()));
    EvalReport r;
    for (const auto& tc : task.tests) {
        const bool produced = bits[static_cast<std::size_t>(tc.index)];
        const bool ok = produced == tc.expected;
        if (tc.visibility == Visibility::Public) {
            ++r.total_public;
            if (ok) ++r.passed_public;
            else r.failed_public_cases.push_back(FailedCase{tc.index, tc.expected, produced});
        } else {
            ++r.total_private;
            if (ok) ++r.passed_private;
        }
    }
    return r;
}

int public_reward(const EvalReport& report, bool training_mode) {
    const bool pub = report.passed_public == report.total_public;
    if (!training_mode) return pub ? 1 : 0;
    return pub && report.passed_private == report.total_private ? 1 : 0;
}

FeedbackReport make_feedback(const PublicEvalReport& report) {
    FeedbackReport fb;
    fb.summary = FeedbackSummary{report.passed_public, report.total_public, report.pass_fraction()};
    fb.failures.reserve(report.failed_public_cases.size());
    for (const auto& f : report.failed_public_cases) fb.failures.push_back(FailureDetail{f.index, f.produced, f.expected});
    std::sort(fb.failures.begin(), fb.failures.end(),
              [](const FailureDetail& a, const FailureDetail& b) { return a.index < b.index; });
    return fb;
}

EvaluatorRegistry& EvaluatorRegistry::global() {
    static EvaluatorRegistry registry;
    return registry;
}

void EvaluatorRegistry::register_external(const std::string& name, Factory factory) {
    std::lock_guard lock(mu_);
    external_[name] = std::move(factory);
}

std::shared_ptr<const Evaluator> EvaluatorRegistry::resolve(const std::string& backend) const {
    if (backend == "synthetic") return std::make_shared<SyntheticEvaluator>();
    constexpr std::string_view prefix = "external:";
    if (backend.starts_with(prefix)) {
        const std::string name = backend.substr(prefix.size());
        std::lock_guard lock(mu_);
        if (auto it = external_.find(name); it != external_.end()) return it->second();
        throw ConfigError("environment.backend: no external evaluator named '" + name + "'");
    }
    throw ConfigError("environment.backend: unknown backend '" + backend + "'");
}

void write_tasks(std::ostream& out, const std::vector<Task>& tasks) {
    for (const auto& t : tasks) {
        nlohmann::ordered_json j;
        j["id"] = t.id;
        j["M"] = t.size();
        j["P"] = t.public_count;
        j["target"] = t.target.to_hex();
        j["seed"] = t.seed;
        j["hint_noise"] = t.hint_noise;
        j["hints"] = t.hints.to_hex();
        j["family"] = t.family;
        out << j.dump() << '\n';
    }
}

std::vector<Task> read_tasks(std::istream& in) {
    std::vector<Task> tasks;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const int m = j.at("M").get<int>();
            const int p = j.at("P").get<int>();
            check_split(m, p);
            Task t;
            t.id = j.at("id").get<std::string>();
            t.target = BitVector::from_hex(j.at("target").get<std::string>(), static_cast<std::size_t>(m));
            t.public_count = p;
            t.tests = make_tests(t.target, p);
            t.seed = j.value("seed", std::uint64_t{0});
            t.hint_noise = j.value("hint_noise", 0.5);
            if (j.contains("hints"))
                t.hints = BitVector::from_hex(j.at("hints").get<std::string>(), static_cast<std::size_t>(m));
            t.family = j.value("family", std::string{});
            tasks.push_back(std::move(t));
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError("task line " + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return tasks;
}

}  // namespace mars::env

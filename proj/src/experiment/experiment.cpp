#include "mars/experiment/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "mars/core/errors.hpp"
#include "mars/diversity/diversity.hpp"

namespace mars::experiment {

Environment build_environment(const ExperimentConfig& config) {
    Environment env;
    Rng rng = derive_stream(config.seed, "families");
    for (const auto& f : config.env.families) {
        auto fam = env::make_family(f.name, config.env.m, f.volatility, rng);
        fam.weight = f.weight;
        env.families.push_back(std::move(fam));
    }
    const auto& e = config.env;
    env.train = env::generate_task_set(env.families, e.train_tasks, e.p, e.hint_noise, config.seed, "train");
    env.eval = env::generate_task_set(env.families, e.eval_tasks, e.p, e.hint_noise, config.seed, "eval");
    env.rm = env::generate_task_set(env.families, e.rm_tasks, e.p, e.hint_noise, config.seed, "rm");
    return env;
}

agents::SimAgentParams initial_params(const AgentSpec& spec, const Environment& env, int m) {
    agents::SimAgentParams p;
    p.belief.assign(static_cast<std::size_t>(m), 0.5);
    if (!spec.skill.empty()) {
        auto it = std::find_if(env.families.begin(), env.families.end(),
                               [&](const auto& f) { return f.name == spec.skill; });
        if (it == env.families.end()) throw ConfigError("unknown family '" + spec.skill + "'");
        auto& b = p.topic_belief[spec.skill];
        b.resize(p.belief.size());
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = it->pattern[i] ? spec.confidence : 1.0 - spec.confidence;
    }
    p.fix_prob = spec.fix_prob;
    p.drift_prob = spec.drift_prob;
    p.trace_len = spec.trace_len;
    p.logit_scale = spec.logit_scale;
    return p;
}

Population build_population(const ExperimentConfig& config, const Environment& env) {
    Population pop;
    pop.evaluator = env::EvaluatorRegistry::global().resolve(config.backend);
    const double sigma = config.train.infer_sigma;
    auto make_remote = [&](const AgentSpec& spec, AgentId id) {
        auto ep = agents::RemoteEndpoint::parse(*spec.remote_endpoint);
        ep.timeout_ms = config.remote_timeout_ms;
        ep.retries = config.remote_retries;
        return std::make_shared<const agents::RemoteAgent>(id, ep);
    };

    if (config.mode == Mode::Homo) {
        auto init = initial_params(config.agents.front(), env, config.env.m);
        auto reference = std::make_shared<const agents::SimAgentParams>(init);
        auto store = std::make_shared<agents::ParamStore>(std::move(init));
        pop.distinct_stores.push_back(store);
        for (std::size_t i = 0; i < config.agents.size(); ++i) {
            const AgentId id = AgentId::from_slot(i);
            pop.agents.push_back(std::make_shared<const agents::SimAgent>(id, store, reference, sigma));
            pop.stores[id] = store;
        }
        return pop;
    }
    for (std::size_t i = 0; i < config.agents.size(); ++i) {
        const AgentId id = AgentId::from_slot(i);
        const auto& spec = config.agents[i];
        if (spec.remote_endpoint) {
            pop.agents.push_back(make_remote(spec, id));
            continue;
        }
        auto init = initial_params(spec, env, config.env.m);
        auto reference = std::make_shared<const agents::SimAgentParams>(init);
        auto store = std::make_shared<agents::ParamStore>(std::move(init));
        pop.agents.push_back(std::make_shared<const agents::SimAgent>(id, store, reference, sigma));
        pop.stores[id] = store;
        pop.distinct_stores.push_back(store);
    }
    return pop;
}

double analytic_pass1(const Population& pop, const std::vector<Task>& tasks) {
    if (pop.distinct_stores.empty() || tasks.empty()) return 0.0;
    double total = 0.0;
    for (const auto& store : pop.distinct_stores) {
        const auto params = store->load();
        for (const auto& t : tasks) {
            double prob = 1.0;
            for (std::size_t i = 0; i < t.target.size(); ++i) {
                const double p1 = params->bit_prob(i, t.family);
                prob *= t.target[i] ? p1 : 1.0 - p1;
            }
            total += prob;
        }
    }
    return total / static_cast<double>(pop.distinct_stores.size() * tasks.size());
}

std::optional<int> ExperimentResult::updates_to(double target) const {
    for (const auto& c : curve)
        if (c.pass1 >= target) return c.update;
    return std::nullopt;
}

std::optional<int> ExperimentResult::steps_to(double target) const {
    for (const auto& c : curve)
        if (c.pass1 >= target) return c.step;
    return std::nullopt;
}

namespace {

search::SearchConfig eval_search_config(const ExperimentConfig& config) {
    auto s = config.search;
    s.budget = config.eval.budget;
    s.training_mode = false;
    s.seed = config.seed;
    return s;
}

int num_agents(const ExperimentConfig& config) { return static_cast<int>(config.agents.size()); }

}  // namespace

rm::RmModel train_reward_model(const ExperimentConfig& config, const Environment& env, const Population& pop) {
    auto scfg = eval_search_config(config);
    scfg.seed = fnv1a("rm-data") ^ config.seed;
    const auto traces = search::run_search_batch(env.rm, pop.agents, scfg, pop.evaluator.get());
    const auto data = rm::build_rm_dataset(traces, env.rm, num_agents(config));
    const rm::TrainOptions opts{config.rm.epochs, config.rm.lr};
    if (config.rm.loss == "bt") {
        if (data.pairs.empty()) throw Error("reward model data has no preference pairs");
        return rm::train_bt(data.examples, data.pairs, opts).model;
    }
    if (data.examples.size() < 2) throw Error("reward model data has fewer than two examples");
    return rm::train_mse(data.examples, opts).model;
}

Row evaluate_population(const ExperimentConfig& config, const Environment& env, const Population& pop,
                        const std::optional<rm::RmModel>& model, int step) {
    const auto traces = search::run_search_batch(env.eval, pop.agents, eval_search_config(config), pop.evaluator.get());
    Row row;
    row.mode = config.mode;
    row.agents = num_agents(config);
    row.checkpoint_step = step;
    row.pass1 = analytic_pass1(pop, env.eval);

    int solved = 0;
    int any = 0;
    double ea_sum = 0.0, naudc_sum = 0.0;
    int ea_tasks = 0, naudc_tasks = 0;
    for (std::size_t t = 0; t < traces.size(); ++t) {
        const auto& tr = traces[t];
        row.eval_expansions += tr.tree.expansions() + tr.failures.size();
        for (const auto& [d, c] : tr.depth_histogram) row.depth_histogram[d] += c;

        std::optional<int> chosen = tr.chosen_final;
        if (model) chosen = rm::select_final(tr, env.eval[t].view(), *model, num_agents(config));
        if (chosen && tr.tree.node(*chosen).eval_report.all_passed()) ++solved;

        bool hit = false;
        std::vector<std::string> labels;
        for (const auto& n : tr.tree.nodes()) {
            if (n.is_root()) continue;
            hit = hit || n.eval_report.all_passed();
            if (n.reward == 1.0) labels.push_back(n.solution.bits.to_hex());
        }
        if (hit) ++any;
        if (!labels.empty()) {
            const auto profile = diversity::profile_from_labels(labels);
            ea_sum += diversity::ea(profile);
            ++ea_tasks;
            const int k = std::min(config.eval.k_max, profile.total());
            if (k >= 2) {
                naudc_sum += diversity::naudc(profile, k);
                ++naudc_tasks;
            }
        }
    }
    const auto n = static_cast<double>(traces.size());
    row.pass1_mcts = solved / n;
    row.pass_n = any / n;
    row.ea = ea_tasks ? ea_sum / ea_tasks : 0.0;
    row.naudc = naudc_tasks ? naudc_sum / naudc_tasks : 0.0;
    return row;
}

namespace {

// Records of one training rollout on `task`, advantages assigned.
std::vector<NodeRecord> rollout(const ExperimentConfig& config, const Population& pop, const Task& task,
                                std::uint64_t round) {
    Rng rng = derive_stream(config.seed, task.id, round);
    std::vector<NodeRecord> records;
    if (config.mode == Mode::Single) {
        const auto& agent = *pop.agents.front();
        const TaskView view = task.view();
        for (int g = 0; g < config.train.budget; ++g) {
            auto prop = agent.propose(view, rng);
            const auto report = pop.evaluator->evaluate(task, prop.solution.bits);
            NodeRecord rec;
            rec.task_id = task.id;
            rec.node_id = g + 1;
            rec.agent = agent.id();
            rec.topic = view.topic;
            rec.context = FreshContext{};
            rec.trace = std::move(prop.trace);
            rec.output = std::move(prop.solution.bits);
            rec.reward = env::public_reward(report, true);
            records.push_back(std::move(rec));
        }
    } else {
        auto scfg = config.search;
        scfg.budget = config.train.budget;
        scfg.training_mode = true;
        records = search::run_search(task, pop.agents, scfg, rng, pop.evaluator.get()).records;
    }
    const bool shaped = config.train.objective == rl::Objective::Mars2Plus;
    if (shaped) rl::shape_rewards(records, config.train.loss);
    rl::assign_tree_advantages(records, config.train.loss.std_floor, shaped);
    return records;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    const Environment env = build_environment(config);
    const Population pop = build_population(config, env);
    ExperimentResult result;

    auto checkpoint = [&](int step) {
        std::optional<rm::RmModel> model;
        if (config.eval.select == Selector::RewardModel) model = train_reward_model(config, env, pop);
        Row row = evaluate_population(config, env, pop, model, step);
        std::uint64_t trained = 0;
        for (const auto& u : result.updates) trained += u.batch_size;
        row.trained_records = trained;
        result.rows.push_back(std::move(row));
    };

    checkpoint(0);
    result.curve.push_back({0, 0, 0, analytic_pass1(pop, env.eval)});

    const int max_updates = config.train.total_records / config.train.threshold;
    std::vector<AgentId> ids;
    for (const auto& a : pop.agents) ids.push_back(a->id());
    dispatch::BufferSet buffers(ids, config.train.threshold);

    int updates = 0;
    std::uint64_t trained = 0;
    std::uint64_t round = 0;
    std::size_t cursor = 0;
    int idle_rounds = 0;
    const auto batch = static_cast<std::size_t>(config.train.rollout_batch);

    while (updates < max_updates) {
        ++round;
        std::vector<const Task*> chunk;
        for (std::size_t k = 0; k < batch; ++k) chunk.push_back(&env.train[(cursor + k) % env.train.size()]);
        cursor = (cursor + batch) % env.train.size();

        std::vector<std::vector<NodeRecord>> produced(chunk.size());
        std::vector<std::string> errors(chunk.size());
        const auto n = static_cast<long>(chunk.size());
#pragma omp parallel for schedule(dynamic)
        for (long i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            try {
                produced[k] = rollout(config, pop, *chunk[k], round);
            } catch (const std::exception& ex) {
                errors[k] = ex.what();
            }
        }
        for (std::size_t k = 0; k < chunk.size(); ++k)
            if (!errors[k].empty()) throw Error("rollout on " + chunk[k]->id + " failed: " + errors[k]);

        std::size_t dispatched_now = 0;
        for (auto& recs : produced) {
            const auto stats = dispatch::dispatch(std::move(recs), buffers, config.train.filter);
            result.produced += stats.produced;
            result.filtered += stats.filtered;
            for (const auto& [_, c] : stats.appended) dispatched_now += c;
        }
        result.dispatched += dispatched_now;
        idle_rounds = dispatched_now == 0 ? idle_rounds + 1 : 0;
        if (idle_rounds > 200)
            throw Error("training stalled: 200 rollout rounds in a row produced no trainable records");

        for (AgentId a : ids) {
            while (updates < max_updates) {
                auto b = buffers.at(a).maybe_trigger(result.produced);
                if (!b) break;
                auto entry = dispatch::train_on_batch(*pop.stores.at(a), *b, config.train.step_size,
                                                      config.train.loss, config.train.objective);
                buffers.at(a).note_update();
                result.updates.push_back(entry);
                ++updates;
                trained += b->records.size();
                result.curve.push_back({updates, trained, static_cast<int>(round), analytic_pass1(pop, env.eval)});
                if (config.train.checkpoint_every > 0 && updates % config.train.checkpoint_every == 0 &&
                    updates < max_updates)
                    checkpoint(updates);
            }
        }
    }
    if (max_updates > 0) checkpoint(updates);
    return result;
}

void write_rows_csv(std::ostream& out, const std::vector<Row>& rows) {
    out << "mode,agents,checkpoint_step,trained_records,pass1,pass1_mcts,pass_n,depth_histogram,ea,naudc,"
           "eval_expansions\n";
    char buf[64];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    for (const auto& r : rows)
        out << to_string(r.mode) << ',' << r.agents << ',' << r.checkpoint_step << ',' << r.trained_records << ','
            << fmt(r.pass1) << ',' << fmt(r.pass1_mcts) << ',' << fmt(r.pass_n) << ','
            << search::format_histogram(r.depth_histogram) << ',' << fmt(r.ea) << ',' << fmt(r.naudc) << ','
            << r.eval_expansions << '\n';
}

void write_curve(std::ostream& out, const std::string& series, const std::vector<CurvePoint>& curve, bool header) {
    if (header) out << "series,update,step,trained_records,pass1\n";
    char buf[64];
    for (const auto& c : curve) {
        std::snprintf(buf, sizeof buf, "%.6f", c.pass1);
        out << series << ',' << c.update << ',' << c.step << ',' << c.trained_records << ',' << buf << '\n';
    }
}

Comparison compare_modes(const std::vector<ExperimentConfig>& configs) {
    if (configs.empty()) throw ConfigError("compare: no configs");
    const auto& first = configs.front();
    const auto env_json = config_to_json(first)["env"];
    for (std::size_t i = 1; i < configs.size(); ++i) {
        const auto& c = configs[i];
        const std::string key = "configs[" + std::to_string(i) + "]";
        if (c.seed != first.seed) throw ConfigError(key + ".seed: differs from configs[0]");
        if (config_to_json(c)["env"] != env_json) throw ConfigError(key + ".env: task sets differ from configs[0]");
        if (c.eval.budget != first.eval.budget) throw ConfigError(key + ".eval.budget: differs from configs[0]");
        if (c.train.total_records != first.train.total_records)
            throw ConfigError(key + ".train.total_records: differs from configs[0]");
    }

    Comparison cmp;
    for (const auto& c : configs) cmp.results.push_back(run_experiment(c));

    for (std::size_t i = 0; i < configs.size(); ++i) {
        const auto& rows = cmp.results[i].rows;
        const Row* pick = &rows.back();
        if (configs[i].mode == Mode::Homo)
            for (const auto& r : rows)
                if (r.pass1_mcts > pick->pass1_mcts) pick = &r;
        cmp.rows.push_back(*pick);
    }
    for (const auto& r : cmp.rows) {
        if (r.eval_expansions != cmp.rows.front().eval_expansions)
            throw Error("equal-compute check failed: evaluation expansions differ between modes");
    }
    for (const auto& res : cmp.results) {
        std::uint64_t trained = 0;
        for (const auto& u : res.updates) trained += u.batch_size;
        if (trained != static_cast<std::uint64_t>(first.train.total_records))
            throw Error("equal-compute check failed: trained record counts differ between modes");
    }
    return cmp;
}

}  // namespace mars::experiment

#include "rbfdqn/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "rbfdqn/checkpoint.hpp"

namespace rbfdqn::bench {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    while (true) {
        const auto pos = line.find(sep);
        out.push_back(line.substr(0, pos));
        if (pos == std::string_view::npos) break;
        line.remove_prefix(pos + 1);
    }
    return out;
}

template <typename T>
T parse_field(std::string_view s, std::string_view what) {
    T out{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw FormatError(fmt::format("run.csv: bad {} field '{}'", what, s));
    }
    return out;
}

void append_eval_row(const std::filesystem::path& dir, std::string_view source, const std::filesystem::path& ckpt,
                     const RunConfig& cfg, std::size_t episodes, double rate) {
    std::filesystem::create_directories(dir);
    const auto path = dir / "eval.csv";
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw FormatError(fmt::format("cannot append to '{}'", path.string()));
    if (fresh) out << kEvalCsvHeader << '\n';
    out << fmt::format("{},{},{},{},{},{}\n", source, ckpt.string(), cfg.task, cfg.seed, episodes, rate);
}

// Extended-precision reference forward pass for the finite-difference side of gradcheck.
using Real = long double;

std::vector<Real> mlp_forward_ld(const nn::MlpSpec& spec, const std::vector<nn::ParamSlot>& layout,
                                 const std::vector<Real>& theta, std::vector<Real> x) {
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const auto& w = layout[2 * l];
        const auto& b = layout[2 * l + 1];
        const std::size_t out = spec.layer_out(l);
        const std::size_t in = spec.layer_in(l);
        std::vector<Real> y(out);
        for (std::size_t r = 0; r < out; ++r) {
            Real acc = theta[b.offset + r];
            for (std::size_t c = 0; c < in; ++c) acc += theta[w.offset + r * in + c] * x[c];
            switch (spec.layer_activation(l)) {
            case nn::Activation::ReLU:
                acc = acc > 0 ? acc : 0;
                break;
            case nn::Activation::Tanh:
                acc = std::tanh(acc);
                break;
            case nn::Activation::Identity:
                break;
            }
            y[r] = acc;
        }
        x = std::move(y);
    }
    return x;
}

Real q_value_ld(const rbf::RbfQNet& net, const std::vector<Real>& loc_theta, const std::vector<Real>& val_theta,
                std::span<const double> s, std::span<const double> a) {
    const std::vector<Real> x(s.begin(), s.end());
    const auto raw = mlp_forward_ld(net.location_spec, net.location_params.layout(), loc_theta, x);
    const auto v = mlp_forward_ld(net.value_spec, net.value_params.layout(), val_theta, x);
    const std::size_t dim = net.action_dim();
    std::vector<Real> logits(net.num_centroids);
    for (std::size_t i = 0; i < net.num_centroids; ++i) {
        Real d = 0;
        for (std::size_t j = 0; j < dim; ++j) {
            const Real lo = net.action_low[j];
            const Real hi = net.action_high[j];
            const Real loc = (lo + hi) / 2 + (hi - lo) / 2 * std::tanh(raw[i * dim + j]);
            const Real diff = loc - static_cast<Real>(a[j]);
            d += net.norm == rbf::Norm::L2 ? diff * diff : std::fabs(diff);
        }
        if (net.norm == rbf::Norm::L2) d = std::sqrt(d);
        logits[i] = -static_cast<Real>(net.beta) * d;
    }
    const Real top = *std::max_element(logits.begin(), logits.end());
    Real num = 0;
    Real den = 0;
    for (std::size_t i = 0; i < net.num_centroids; ++i) {
        const Real w = std::exp(logits[i] - top);
        num += w * v[i];
        den += w;
    }
    return num / den;
}

std::vector<Real> widen(const nn::ParamStore& store) {
    const auto v = store.values();
    return {v.begin(), v.end()};
}

// Worst relative error of `claimed` against central differences of
// objective(theta) in extended precision.
template <typename Objective>
double probe_ld(std::vector<Real> theta, const nn::Gradient& claimed, Objective&& objective, double step) {
    double worst = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const Real saved = theta[i];
        theta[i] = saved + step;
        const Real plus = objective(theta);
        theta[i] = saved - step;
        const Real minus = objective(theta);
        theta[i] = saved;
        const double numeric = static_cast<double>((plus - minus) / (2 * static_cast<Real>(step)));
        worst = std::max(worst, nn::relative_error(claimed.values[i], numeric));
    }
    return worst;
}

std::vector<double> random_vector(std::size_t n, double lo, double hi, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

} // namespace

std::vector<double> rolling_mean(std::span<const int> successes, std::size_t window) {
    std::vector<double> out(successes.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < successes.size(); ++i) {
        sum += successes[i];
        if (i >= window) sum -= successes[i - window];
        out[i] = sum / static_cast<double>(std::min(window, i + 1));
    }
    return out;
}

std::string format_run_row(const RunRecord& r) {
    return fmt::format("{},{},{},{},{},{},{},{}", r.episode, r.steps, r.success, r.ret, r.rolling_success, r.epsilon,
                       r.mean_loss, r.wall_ms);
}

void write_run_csv(const std::filesystem::path& path, std::span<const RunRecord> records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(fmt::format("cannot open '{}' for writing", path.string()));
    out << kRunCsvHeader << '\n';
    for (const auto& r : records) out << format_run_row(r) << '\n';
}

std::vector<RunRecord> read_run_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(fmt::format("cannot open '{}'", path.string()));
    std::string line;
    if (!std::getline(in, line) || line != kRunCsvHeader) {
        throw FormatError(fmt::format("'{}': missing or unexpected header", path.string()));
    }
    std::vector<RunRecord> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 8) throw FormatError(fmt::format("'{}': expected 8 fields, got {}", path.string(), f.size()));
        RunRecord r;
        r.episode = parse_field<std::size_t>(f[0], "episode");
        r.steps = parse_field<std::size_t>(f[1], "steps");
        r.success = parse_field<int>(f[2], "success");
        r.ret = parse_field<double>(f[3], "return");
        r.rolling_success = parse_field<double>(f[4], "rolling_success");
        r.epsilon = parse_field<double>(f[5], "epsilon");
        r.mean_loss = parse_field<double>(f[6], "mean_loss");
        r.wall_ms = parse_field<std::int64_t>(f[7], "wall_ms");
        rows.push_back(r);
    }
    return rows;
}

std::optional<std::size_t> episodes_to_threshold(std::span<const RunRecord> records, double threshold) {
    for (const auto& r : records) {
        if (r.rolling_success >= threshold) return r.episode;
    }
    return std::nullopt;
}

MeanCi normal_ci(std::span<const double> xs) {
    MeanCi ci;
    ci.n = xs.size();
    if (xs.empty()) return ci;
    double sum = 0.0;
    for (double x : xs) sum += x;
    ci.mean = sum / static_cast<double>(ci.n);
    if (ci.n > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - ci.mean) * (x - ci.mean);
        ci.sd = std::sqrt(ss / static_cast<double>(ci.n - 1));
    }
    const double half = 1.96 * ci.sd / std::sqrt(static_cast<double>(ci.n));
    ci.lo = ci.mean - half;
    ci.hi = ci.mean + half;
    return ci;
}

TrainOutcome run_training(const RunConfig& cfg, std::ostream* log) {
    auto env = envs::make_env(cfg.task, cfg.env);
    agent::RngStreams streams(cfg.seed);
    agent::Learner learner(env->spec(), cfg.agent, cfg.net, cfg.per, cfg.her, env->goal_mapping(), streams.init);

    std::filesystem::create_directories(cfg.output_dir);
    {
        std::ofstream resolved(cfg.output_dir / "config.resolved.txt", std::ios::binary | std::ios::trunc);
        resolved << cfg.raw.resolved_text();
    }
    std::ofstream csv(cfg.output_dir / "run.csv", std::ios::binary | std::ios::trunc);
    if (!csv) throw FormatError(fmt::format("cannot write run.csv in '{}'", cfg.output_dir.string()));
    csv << kRunCsvHeader << '\n';

    TrainOutcome outcome;
    std::vector<int> successes;
    for (std::size_t e = 1; e <= cfg.episodes; ++e) {
        const auto start = std::chrono::steady_clock::now();
        agent::EpisodeResult res;
        try {
            res = agent::run_episode(*env, learner, streams);
        } catch (const NumericalError& err) {
            csv.flush();
            throw TrainingFailure(e, fmt::format("episode {}: {}", e, err.what()));
        }
        const auto elapsed = std::chrono::steady_clock::now() - start;
        successes.push_back(res.success ? 1 : 0);

        RunRecord rec;
        rec.episode = e;
        rec.steps = res.steps;
        rec.success = res.success ? 1 : 0;
        rec.ret = res.ret;
        rec.rolling_success = rolling_mean(successes).back();
        rec.epsilon = res.epsilon;
        rec.mean_loss = res.mean_loss;
        rec.wall_ms =
            cfg.log_wall_ms ? std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() : std::int64_t{0};
        csv << format_run_row(rec) << '\n';
        outcome.records.push_back(rec);

        if (cfg.checkpoint_every > 0 && e % cfg.checkpoint_every == 0) {
            rbf::save_rbf_q(cfg.output_dir / fmt::format("checkpoint_ep{}.rbfq", e), learner.net());
        }
        if (log && (e % 25 == 0 || e == cfg.episodes)) {
            fmt::print(*log, "[{} {} seed {}] episode {}/{} rolling success {:.2f} epsilon {:.3f} loss {:.5f}\n",
                       cfg.task, agent::to_string(cfg.variant), cfg.seed, e, cfg.episodes, rec.rolling_success,
                       rec.epsilon, rec.mean_loss);
        }
    }
    csv.close();

    outcome.final_checkpoint = cfg.output_dir / "final.rbfq";
    rbf::save_rbf_q(outcome.final_checkpoint, learner.net());
    Rng eval_rng(cfg.seed, "eval");
    auto eval_env = envs::make_env(cfg.task, cfg.env);
    outcome.final_eval = agent::evaluate(*eval_env, learner.net(), cfg.eval_episodes, eval_rng);
    append_eval_row(cfg.output_dir, "train", outcome.final_checkpoint, cfg, cfg.eval_episodes, outcome.final_eval);
    return outcome;
}

double run_eval(const std::filesystem::path& checkpoint, const RunConfig& cfg, std::string_view source) {
    const auto net = rbf::load_rbf_q(checkpoint);
    auto env = envs::make_env(cfg.task, cfg.env);
    const auto& spec = env->spec();
    const std::size_t obs_dim = spec.state_dim + spec.goal_dim;
    if (net.state_dim() != obs_dim || net.action_dim() != spec.action_dim) {
        throw ShapeError(fmt::format("checkpoint expects (observation {}, action {}), task {} has (observation {}, action {})",
                                     net.state_dim(), net.action_dim(), cfg.task, obs_dim, spec.action_dim));
    }
    for (std::size_t j = 0; j < spec.action_dim; ++j) {
        if (net.action_low[j] != spec.action_low[j] || net.action_high[j] != spec.action_high[j]) {
            throw ShapeError(fmt::format("checkpoint action box differs from task {} in dimension {}", cfg.task, j));
        }
    }
    Rng eval_rng(cfg.seed, "eval");
    const double rate = agent::evaluate(*env, net, cfg.episodes, eval_rng);
    append_eval_row(cfg.output_dir, source, checkpoint, cfg, cfg.episodes, rate);
    return rate;
}

AblationOutcome run_ablation(const RunConfig& cfg, std::span<const agent::Variant> variants, std::ostream* log) {
    struct Job {
        agent::Variant variant;
        std::uint64_t seed;
        std::filesystem::path dir;
        std::vector<RunRecord> records;
        bool ok = false;
        std::string error;
    };
    std::vector<Job> jobs;
    for (auto v : variants) {
        for (auto s : cfg.seeds) {
            jobs.push_back({v, s, cfg.output_dir / agent::to_string(v) / fmt::format("seed_{}", s), {}, false, {}});
        }
    }

    std::mutex log_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            auto& job = jobs[i];
            try {
                auto run_cfg = cfg.with("variant", agent::to_string(job.variant))
                                   .with("seed", std::to_string(job.seed))
                                   .with("output_dir", job.dir.string());
                std::ostringstream progress;
                job.records = run_training(run_cfg, log ? &progress : nullptr).records;
                job.ok = true;
                if (log) {
                    std::lock_guard lock(log_mutex);
                    *log << progress.str();
                }
            } catch (const std::exception& e) {
                job.error = e.what();
                if (log) {
                    std::lock_guard lock(log_mutex);
                    fmt::print(*log, "run {} seed {} failed: {}\n", agent::to_string(job.variant), job.seed, e.what());
                }
            }
        }
    };
    const std::size_t threads = std::min(cfg.jobs, jobs.size());
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    AblationOutcome outcome;
    outcome.runs = jobs.size();
    std::filesystem::create_directories(cfg.output_dir);
    std::ofstream summary(cfg.output_dir / "summary.csv", std::ios::binary | std::ios::trunc);
    summary << kSummaryCsvHeader << '\n';
    for (auto v : variants) {
        VariantRanking rank{v, {}, std::nullopt, 0};
        std::vector<const Job*> ok;
        for (const auto& job : jobs) {
            if (job.variant != v) continue;
            if (job.ok) {
                ok.push_back(&job);
                rank.per_seed.push_back(episodes_to_threshold(job.records, cfg.success_threshold));
            } else {
                ++rank.failed_runs;
                ++outcome.failures;
            }
        }
        if (ok.empty()) {
            outcome.any_variant_all_failed = true;
        } else {
            for (std::size_t e = 0; e < cfg.episodes; ++e) {
                std::vector<double> xs;
                for (const auto* job : ok) xs.push_back(job->records[e].rolling_success);
                const auto ci = normal_ci(xs);
                summary << fmt::format("{},{},{},{},{},{},{},normal95\n", agent::to_string(v), e + 1, ci.n, ci.mean,
                                       ci.sd, ci.lo, ci.hi);
            }
            auto sorted = rank.per_seed;
            std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
                const auto inf = std::numeric_limits<std::size_t>::max();
                return a.value_or(inf) < b.value_or(inf);
            });
            rank.median = sorted[sorted.size() / 2];
        }
        outcome.ranking.push_back(std::move(rank));
    }
    std::stable_sort(outcome.ranking.begin(), outcome.ranking.end(), [](const auto& a, const auto& b) {
        const auto inf = std::numeric_limits<std::size_t>::max();
        const bool a_dead = a.per_seed.empty();
        const bool b_dead = b.per_seed.empty();
        if (a_dead != b_dead) return b_dead;
        return a.median.value_or(inf) < b.median.value_or(inf);
    });

    std::ofstream ranking(cfg.output_dir / "ranking.txt", std::ios::binary | std::ios::trunc);
    ranking << fmt::format("# task {}; episodes to rolling success >= {} (upper median over seeds)\n", cfg.task,
                           cfg.success_threshold);
    std::size_t place = 1;
    for (const auto& r : outcome.ranking) {
        std::vector<std::string> seeds;
        for (const auto& s : r.per_seed) seeds.push_back(s ? std::to_string(*s) : "never");
        const std::string median = r.per_seed.empty() ? "failed" : (r.median ? std::to_string(*r.median) : "never");
        ranking << fmt::format("{}. {}: {} (per seed: {}; failed runs: {})\n", place++, agent::to_string(r.variant),
                               median, fmt::join(seeds, " "), r.failed_runs);
    }
    return outcome;
}

GradcheckReport run_gradcheck(std::size_t trials, std::uint64_t seed) {
    constexpr double kStep = 1e-5;
    GradcheckReport report;
    report.trials = trials;
    Rng rng(seed, "gradcheck");
    for (std::size_t t = 0; t < trials; ++t) {
        // nn_core: 2-4-3 tanh net
        const auto spec = nn::MlpSpec::make(2, {4}, 3, nn::Activation::Tanh);
        auto params = nn::ParamStore::for_spec(spec);
        nn::init_uniform_fan_in(spec, params, rng);
        const auto x = random_vector(2, -1.0, 1.0, rng);
        const auto up = random_vector(3, -1.0, 1.0, rng);
        report.mlp_error = std::max(report.mlp_error, nn::finite_diff_check(spec, params, x, up, kStep));

        // rbf_q: q_gradient through both heads
        rbf::RbfQConfig rc;
        rc.num_centroids = 4;
        rc.beta = 2.0;
        rc.hidden_dims = {6};
        rc.activation = nn::Activation::Tanh;
        const std::vector<double> low{-1.0, -0.5};
        const std::vector<double> high{1.0, 1.5};
        auto net = rbf::make_rbf_q(3, low, high, rc, rng);
        const auto s = random_vector(3, -1.0, 1.0, rng);
        const std::vector<double> a{rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 1.5)};
        const double upstream = rng.uniform(0.5, 1.5);
        const auto g = rbf::q_gradient(net, s, a, upstream);
        const auto loc0 = widen(net.location_params);
        const auto val0 = widen(net.value_params);
        auto q_loc = [&](const std::vector<Real>& th) { return upstream * q_value_ld(net, th, val0, s, a); };
        auto q_val = [&](const std::vector<Real>& th) { return upstream * q_value_ld(net, loc0, th, s, a); };
        report.rbf_error = std::max(report.rbf_error, probe_ld(loc0, g.location, q_loc, kStep));
        report.rbf_error = std::max(report.rbf_error, probe_ld(val0, g.value, q_val, kStep));

        // end-to-end loss on a single transition, target net held fixed
        agent::TargetNet target;
        target.sync(rbf::make_rbf_q(3, low, high, rc, rng));
        agent::Transition tr;
        tr.state = random_vector(2, -1.0, 1.0, rng);
        tr.goal = random_vector(1, -1.0, 1.0, rng);
        tr.action = a;
        tr.next_state = random_vector(2, -1.0, 1.0, rng);
        tr.reward = rng.uniform() < 0.5 ? 0.0 : 1.0;
        tr.done = false;
        agent::AgentConfig ac;
        const std::vector<agent::Transition> batch{tr};
        const std::vector<double> w{1.0};
        const auto lg = agent::loss_gradient(net, target, batch, w, ac);
        const Real y = agent::td_target(target, tr, ac.gamma);
        const auto obs = agent::observation(tr.state, tr.goal);
        auto loss = [&](const Real q) { return (y - q) * (y - q) / 2; };
        auto l_loc = [&](const std::vector<Real>& th) { return loss(q_value_ld(net, th, val0, obs, a)); };
        auto l_val = [&](const std::vector<Real>& th) { return loss(q_value_ld(net, loc0, th, obs, a)); };
        report.loss_error = std::max(report.loss_error, probe_ld(loc0, lg.grad.location, l_loc, kStep));
        report.loss_error = std::max(report.loss_error, probe_ld(val0, lg.grad.value, l_val, kStep));
    }
    report.passed = report.mlp_error < 1e-4 && report.rbf_error < 1e-4 && report.loss_error < 1e-4;
    return report;
}

} // namespace rbfdqn::bench

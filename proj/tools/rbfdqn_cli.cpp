#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "rbfdqn/bench.hpp"

using namespace rbfdqn;

namespace {

struct ConfigFlags {
    std::string file;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", file, "flat key = value config file");
        for (const auto& k : bench::config_keys()) {
            options[k.name] = cmd->add_option("--" + k.name, values[k.name], fmt::format("{} (default {})", k.help, k.default_value));
        }
    }

    bool given(const std::string& key) const { return options.at(key)->count() > 0; }

    bench::RunConfig resolve() const {
        auto raw = bench::RawConfig::defaults();
        if (!file.empty()) raw.merge_file(file);
        for (const auto& [key, opt] : options) {
            if (opt->count() > 0) raw.set(key, values.at(key));
        }
        raw.apply_environment();
        return bench::RunConfig::from_raw(raw);
    }
};

int cmd_train(const ConfigFlags& flags) {
    const auto cfg = flags.resolve();
    const auto out = bench::run_training(cfg, &std::cout);
    fmt::print("final evaluation success rate {} over {} episodes\n", out.final_eval, cfg.eval_episodes);
    fmt::print("artifacts in {}\n", cfg.output_dir.string());
    return 0;
}

int cmd_eval(const ConfigFlags& flags, const std::string& checkpoint) {
    auto cfg = flags.resolve();
    if (!flags.given("episodes")) cfg = cfg.with("episodes", std::to_string(cfg.eval_episodes));
    const double rate = bench::run_eval(checkpoint, cfg);
    fmt::print("success_rate {}\n", rate);
    return 0;
}

int cmd_ablate(const ConfigFlags& flags) {
    const auto cfg = flags.resolve();
    const auto out = bench::run_ablation(cfg, agent::kAllVariants, &std::cout);
    for (const auto& r : out.ranking) {
        const std::string median = r.per_seed.empty() ? "failed" : (r.median ? std::to_string(*r.median) : "never");
        fmt::print("{:<8} episodes to {}: {}\n", agent::to_string(r.variant), cfg.success_threshold, median);
    }
    fmt::print("{} runs, {} failed; summary in {}\n", out.runs, out.failures, (cfg.output_dir / "summary.csv").string());
    return out.any_variant_all_failed ? 1 : 0;
}

int cmd_gradcheck(std::size_t trials, std::uint64_t seed) {
    const auto r = bench::run_gradcheck(trials, seed);
    fmt::print("mlp  max relative error {:.3e}\n", r.mlp_error);
    fmt::print("rbf  max relative error {:.3e}\n", r.rbf_error);
    fmt::print("loss max relative error {:.3e}\n", r.loss_error);
    fmt::print("{} over {} trials\n", r.passed ? "PASS" : "FAIL", r.trials);
    return r.passed ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"RBF-DQN with HER and PER on goal-conditioned desk tasks"};
    app.require_subcommand(1);

    ConfigFlags train_flags, eval_flags, ablate_flags;
    auto* train = app.add_subcommand("train", "train one seeded run");
    train_flags.attach(train);

    std::string checkpoint;
    auto* eval = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
    eval_flags.attach(eval);
    eval->add_option("--checkpoint", checkpoint, "checkpoint file (.rbfq)")->required();

    auto* ablate = app.add_subcommand("ablate", "vanilla / her / per / her_per over the seed list");
    ablate_flags.attach(ablate);

    std::size_t trials = 100;
    std::uint64_t gc_seed = 0;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of all analytic gradients");
    gradcheck->add_option("--trials", trials, "random networks per suite")->check(CLI::PositiveNumber);
    gradcheck->add_option("--seed", gc_seed, "seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*train) return cmd_train(train_flags);
        if (*eval) return cmd_eval(eval_flags, checkpoint);
        if (*ablate) return cmd_ablate(ablate_flags);
        if (*gradcheck) return cmd_gradcheck(trials, gc_seed);
    } catch (const ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        fmt::print(stderr, "checkpoint error: {}\n", e.what());
        return 2;
    } catch (const ShapeError& e) {
        fmt::print(stderr, "shape mismatch: {}\n", e.what());
        return 2;
    } catch (const bench::TrainingFailure& e) {
        fmt::print(stderr, "numerical failure at episode {}: {}\n", e.episode(), e.what());
        return 3;
    } catch (const NumericalError& e) {
        fmt::print(stderr, "numerical failure: {}\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}

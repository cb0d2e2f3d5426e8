#pragma once

// Experiment harness behind the CLI: seeded training runs with CSV logs,
// greedy evaluation of checkpoints, the four-variant ablation with normal 95%
// confidence intervals, and the finite-difference gradient suite.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rbfdqn/agent.hpp"
#include "rbfdqn/errors.hpp"
#include "rbfdqn/run_config.hpp"

namespace rbfdqn::bench {

inline constexpr std::size_t kRollingWindow = 5;
inline constexpr std::string_view kRunCsvHeader =
    "episode,steps,success,return,rolling_success,epsilon,mean_loss,wall_ms";
inline constexpr std::string_view kSummaryCsvHeader =
    "variant,episode,n,mean_rolling_success,sd,ci_low,ci_high,ci_method";
inline constexpr std::string_view kEvalCsvHeader = "source,checkpoint,task,seed,episodes,success_rate";

struct RunRecord {
    std::size_t episode = 0; // 1-based
    std::size_t steps = 0;
    int success = 0;
    double ret = 0.0;
    double rolling_success = 0.0;
    double epsilon = 0.0;
    double mean_loss = 0.0;
    std::int64_t wall_ms = 0;

    bool operator==(const RunRecord&) const = default;
};

// Mean of the last min(window, i + 1) entries, for each i.
std::vector<double> rolling_mean(std::span<const int> successes, std::size_t window = kRollingWindow);

std::string format_run_row(const RunRecord& r);
void write_run_csv(const std::filesystem::path& path, std::span<const RunRecord> records);
std::vector<RunRecord> read_run_csv(const std::filesystem::path& path);

// First 1-based episode whose rolling success reaches `threshold`.
std::optional<std::size_t> episodes_to_threshold(std::span<const RunRecord> records, double threshold);

struct MeanCi {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0; // sample standard deviation, 0 when n < 2
    double lo = 0.0;
    double hi = 0.0;
};

// mean +- 1.96 * sd / sqrt(n)
MeanCi normal_ci(std::span<const double> xs);

// Numerical failure during training, tagged with the 1-based episode.
class TrainingFailure : public NumericalError {
public:
    TrainingFailure(std::size_t episode, const std::string& what)
        : NumericalError(what), episode_(episode) {}
    std::size_t episode() const { return episode_; }

private:
    std::size_t episode_;
};

struct TrainOutcome {
    std::vector<RunRecord> records;
    double final_eval = 0.0;
    std::filesystem::path final_checkpoint;
};

// Writes run.csv, config.resolved.txt, periodic checkpoint_ep<N>.rbfq files,
// final.rbfq and an eval.csv row for the final greedy evaluation.
// Progress lines go to `log` when non-null.
TrainOutcome run_training(const RunConfig& cfg, std::ostream* log = nullptr);

// Greedy evaluation of a checkpoint on cfg.task over cfg.episodes episodes with
// the seed's eval stream. Appends to <output_dir>/eval.csv. ShapeError naming
// both shapes if the checkpoint does not fit the task.
double run_eval(const std::filesystem::path& checkpoint, const RunConfig& cfg, std::string_view source = "eval");

struct VariantRanking {
    agent::Variant variant;
    std::vector<std::optional<std::size_t>> per_seed; // episodes to threshold per surviving seed
    std::optional<std::size_t> median;                // upper median, "never" sorts last
    std::size_t failed_runs = 0;
};

struct AblationOutcome {
    std::vector<VariantRanking> ranking; // best first
    std::size_t runs = 0;
    std::size_t failures = 0;
    bool any_variant_all_failed = false;
};

// Runs variants x seeds (cfg.jobs worker threads) into
// <output_dir>/<variant>/seed_<s>/, then writes summary.csv and ranking.txt.
AblationOutcome run_ablation(const RunConfig& cfg, std::span<const agent::Variant> variants = agent::kAllVariants,
                             std::ostream* log = nullptr);

struct GradcheckReport {
    double mlp_error = 0.0;      // worst over nn_core trials
    double rbf_error = 0.0;      // worst over q_gradient trials
    double loss_error = 0.0;     // worst over end-to-end loss trials
    std::size_t trials = 0;
    bool passed = false;
};

// Central differences (step 1e-5) against the analytic gradients on seeded
// random networks; passes when every relative error is below 1e-4.
GradcheckReport run_gradcheck(std::size_t trials, std::uint64_t seed);

} // namespace rbfdqn::bench

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tbench/ddpg_her.hpp"
#include "tbench/grasp_sim.hpp"
#include "tbench/ppo.hpp"
#include "tbench/run_record.hpp"

namespace tbench {

/// Library version stamped into manifests.
std::string code_version();

struct StatsSettings {
    int bins = 50;
    long reps_converged = 1000;
    long reps_curve = 50000;
    std::uint64_t seed = 0;
};

struct ExperimentConfig {
    LearnerProfile profile = LearnerProfile::MPL_PPO;
    std::vector<int> config_ids;
    std::vector<RunType> run_types = {RunType::MAIN, RunType::CONTROL};
    std::vector<std::uint64_t> seeds;
    double scale = 1.0;
    std::string learner_json = "{}";  // overrides for the profile's learner
    std::string sim_json = "{}";      // overrides on the profile's SimParams
    StatsSettings stats;
    std::filesystem::path output_dir = "runs";
    int workers = 1;

    /// Learner settings after overrides and scaling.
    PpoConfig ppo_config() const;
    DdpgHerConfig ddpg_config() const;
    SimParams sim_params() const;

    /// Resolved per-run epoch count and the timesteps it represents.
    long epochs() const;
    long total_timesteps() const;

    /// Normalized document with every default filled in.
    std::string to_json() const;
    /// Hash of the normalized document without output_dir and workers, which
    /// do not affect results.
    std::string hash() const;
};

/// Parses and validates a config document. Throws ValidationError naming the
/// offending field.
ExperimentConfig validate_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Epochs left after applying `scale` to `full_epochs`: round to nearest, at least one.
long scaled_epochs(long full_epochs, double scale);

struct Cell {
    int config_id = 1;
    RunType run_type = RunType::MAIN;
    std::uint64_t seed = 0;
};

/// Cells in config, run type, seed order.
std::vector<Cell> enumerate_cells(const ExperimentConfig& cfg);

enum class CellStatus : std::uint8_t { COMPLETED, SKIPPED, FAILED };
std::string to_string(CellStatus s);

struct CellOutcome {
    Cell cell;
    CellStatus status = CellStatus::COMPLETED;
    std::string file;
    double wall_seconds = 0.0;
    std::string error;
};

struct RunOptions {
    /// Directory for per-cell JSON-lines traces; empty disables tracing.
    std::filesystem::path trace_dir;
    /// Called from worker threads; calls are serialized.
    std::function<void(const CellOutcome&, std::size_t done, std::size_t total)> on_cell;
};

struct RunSummary {
    std::vector<CellOutcome> cells;
    std::filesystem::path manifest;

    std::size_t count(CellStatus s) const;
    bool all_ok() const { return count(CellStatus::FAILED) == 0; }
};

/// Pool width: cfg.workers capped by BENCH_THREADS (if set) and the cell count.
int effective_workers(const ExperimentConfig& cfg, std::size_t cells);

/// Trains one cell and returns its record without touching disk.
RunRecord run_cell(const ExperimentConfig& cfg, const Cell& cell, std::ostream* trace = nullptr);

/// Runs every cell into cfg.output_dir. Cells whose record already exists with
/// the same config hash are skipped. Failures are listed in manifest.json.
RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

struct ReportBundle {
    std::filesystem::path converged_csv;
    std::filesystem::path overlap_csv;
    std::vector<std::filesystem::path> curve_csvs;
    std::filesystem::path manifest;
    std::vector<std::string> absent_groups;  // "config/type" keys without runs
};

/// Reads every *.run.json in `runs_dir` and writes the report bundle into
/// `out_dir`. Requested groups come from runs_dir/manifest.json when present,
/// else configs 1..6 with both run types.
ReportBundle make_report(const std::filesystem::path& runs_dir, const std::filesystem::path& out_dir,
                         const StatsSettings& stats = {});

}  // namespace tbench

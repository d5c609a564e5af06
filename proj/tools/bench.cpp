// bench: run tactile-layout experiments and build report bundles.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "tbench/errors.hpp"
#include "tbench/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitPartial = 3;

int cmd_validate(const std::string& config_path) {
    const auto cfg = tbench::load_config(config_path);
    std::cout << cfg.to_json();
    std::cout << "config_hash " << cfg.hash() << "\n"
              << "cells " << tbench::enumerate_cells(cfg).size() << "\n"
              << "epochs " << cfg.epochs() << "\n"
              << "total_timesteps " << cfg.total_timesteps() << "\n";
    return kExitOk;
}

int cmd_run(const std::string& config_path, double scale, int workers, const std::string& out,
            const std::string& trace) {
    std::string text;
    {
        auto cfg = tbench::load_config(config_path);
        if (scale >= 0.0) cfg.scale = scale;
        if (workers > 0) cfg.workers = workers;
        if (!out.empty()) cfg.output_dir = out;
        // Re-validate so command-line overrides obey the same rules as the document.
        text = cfg.to_json();
    }
    const auto cfg = tbench::validate_config(text);
    const auto cells = tbench::enumerate_cells(cfg);
    spdlog::info("config {} | {} cells | {} epochs each | {} worker(s) | out {}", cfg.hash(), cells.size(),
                 cfg.epochs(), tbench::effective_workers(cfg, cells.size()), cfg.output_dir.string());

    tbench::RunOptions opts;
    opts.trace_dir = trace;
    opts.on_cell = [](const tbench::CellOutcome& c, std::size_t done, std::size_t total) {
        if (c.status == tbench::CellStatus::FAILED) {
            spdlog::error("[{}/{}] {} failed: {}", done, total, c.file, c.error);
        } else {
            spdlog::info("[{}/{}] {} {} ({:.1f} s)", done, total, c.file, tbench::to_string(c.status),
                         c.wall_seconds);
        }
    };
    const auto summary = tbench::run_experiment(cfg, opts);
    spdlog::info("completed {} | skipped {} | failed {} | manifest {}",
                 summary.count(tbench::CellStatus::COMPLETED), summary.count(tbench::CellStatus::SKIPPED),
                 summary.count(tbench::CellStatus::FAILED), summary.manifest.string());
    return summary.all_ok() ? kExitOk : kExitPartial;
}

int cmd_report(const std::string& in, const std::string& out, const tbench::StatsSettings& stats) {
    const auto bundle = tbench::make_report(in, out, stats);
    spdlog::info("wrote {}, {} and {} curve file(s)", bundle.converged_csv.string(), bundle.overlap_csv.string(),
                 bundle.curve_csvs.size());
    for (const auto& g : bundle.absent_groups) spdlog::warn("group {} has no runs; reported as NA", g);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tactile sensor layout benchmark"};
    app.require_subcommand(1);

    std::string config_path, out, trace, in;
    double scale = -1.0;
    int workers = 0;
    tbench::StatsSettings stats;

    auto* run = app.add_subcommand("run", "Train every (config, run type, seed) cell");
    run->add_option("--config", config_path, "Experiment config document")->required()->check(CLI::ExistingFile);
    run->add_option("--scale", scale, "Fraction of the full training budget, in (0, 1]");
    run->add_option("--workers", workers, "Worker pool width (capped by BENCH_THREADS)")->check(CLI::PositiveNumber);
    run->add_option("--out", out, "Directory for run records");
    run->add_option("--trace", trace, "Directory for per-cell JSON-lines state traces");

    auto* report = app.add_subcommand("report", "Aggregate run records into CSV tables");
    report->add_option("--in", in, "Directory of run records")->required()->check(CLI::ExistingDirectory);
    report->add_option("--out", out, "Output directory")->required();
    report->add_option("--bins", stats.bins, "Histogram bins for the converged rate")->check(CLI::Range(2, 100000));
    report->add_option("--reps-converged", stats.reps_converged, "Bootstrap replications for converged tables")
        ->check(CLI::PositiveNumber);
    report->add_option("--reps-curve", stats.reps_curve, "Bootstrap replications per curve epoch")
        ->check(CLI::PositiveNumber);
    report->add_option("--seed", stats.seed, "Statistics seed");

    auto* validate = app.add_subcommand("validate", "Check a config document and print it with defaults");
    validate->add_option("--config", config_path, "Experiment config document")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*run) return cmd_run(config_path, scale, workers, out, trace);
        if (*report) return cmd_report(in, out, stats);
        if (*validate) return cmd_validate(config_path);
    } catch (const tbench::ValidationError& e) {
        spdlog::error("invalid config: {}", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tbench {

enum class Metric : std::uint8_t { MEDIAN, IQM, MEAN };

std::string to_string(Metric m);

double median(std::span<const double> values);
/// 25% symmetric trimmed mean; when n/4 is fractional the boundary order
/// statistics get partial weight.
double iqm(std::span<const double> values);
double mean(std::span<const double> values);
double compute_metric(Metric m, std::span<const double> values);

/// Linear-interpolation percentile of already sorted data, q in [0, 1].
double percentile_sorted(std::span<const double> sorted, double q);

/// Center of the most populated of `bins` equal-width bins over [0, 1];
/// ties go to the lower bin.
double converged_rate(std::span<const double> curve, int bins = 50);

struct AggregateEstimate {
    Metric metric = Metric::IQM;
    double point = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    long replications = 0;  // resamples actually evaluated
    double ci_level = 0.95;
    bool exhaustive = false;
};

/// Percentile bootstrap over seeds. When n^n <= replications every resample
/// is enumerated once (the exact bootstrap distribution); otherwise
/// `replications` resamples are drawn, replication r using stream (seed, r).
AggregateEstimate stratified_bootstrap(std::span<const double> values, Metric metric, long replications,
                                       double ci = 0.95, std::uint64_t seed = 0);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Fraction of `control` covered by `main`.
double ci_overlap(Interval main, Interval control);

struct EfficiencyCurve {
    std::vector<double> iqm;
    std::vector<double> ci_low;
    std::vector<double> ci_high;

    std::size_t size() const noexcept { return iqm.size(); }
};

/// Per-epoch IQM bootstrap across seeds; epoch e uses seed hash(seed, e).
EfficiencyCurve efficiency_curve(const std::vector<std::vector<double>>& runs, long replications = 50000,
                                 std::uint64_t seed = 0);

}  // namespace tbench

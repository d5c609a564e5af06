#include "tbench/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tbench/errors.hpp"
#include "tbench/rng.hpp"

namespace tbench {

namespace {

void require_non_empty(std::span<const double> v, const char* what) {
    if (v.empty()) throw InterfaceError(std::string(what) + ": empty input");
    for (double x : v) {
        if (!std::isfinite(x)) throw InterfaceError(std::string(what) + ": non-finite value");
    }
}

double median_sorted(std::span<const double> s) {
    const std::size_t n = s.size();
    return n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

double iqm_sorted(std::span<const double> s) {
    const double n = static_cast<double>(s.size());
    const double g = 0.25 * n;
    const double lo = g, hi = n - g;
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double a = static_cast<double>(i), b = a + 1.0;
        const double w = std::max(0.0, std::min(b, hi) - std::max(a, lo));
        if (w > 0.0) acc += w * s[i];
    }
    return acc / (hi - lo);
}

double mean_of(std::span<const double> s) {
    return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

double metric_sorted(Metric m, std::span<const double> s) {
    // Constant samples are returned exactly rather than through weighted sums.
    if (s.front() == s.back()) return s.front();
    switch (m) {
        case Metric::MEDIAN: return median_sorted(s);
        case Metric::IQM: return iqm_sorted(s);
        case Metric::MEAN: return mean_of(s);
    }
    return 0.0;
}

}  // namespace

std::string to_string(Metric m) {
    switch (m) {
        case Metric::MEDIAN: return "median";
        case Metric::IQM: return "iqm";
        case Metric::MEAN: return "mean";
    }
    return "?";
}

double median(std::span<const double> values) {
    require_non_empty(values, "median");
    std::vector<double> s(values.begin(), values.end());
    std::sort(s.begin(), s.end());
    return median_sorted(s);
}

double iqm(std::span<const double> values) {
    require_non_empty(values, "iqm");
    std::vector<double> s(values.begin(), values.end());
    std::sort(s.begin(), s.end());
    return metric_sorted(Metric::IQM, s);
}

double mean(std::span<const double> values) {
    require_non_empty(values, "mean");
    return compute_metric(Metric::MEAN, values);
}

double compute_metric(Metric m, std::span<const double> values) {
    require_non_empty(values, "compute_metric");
    std::vector<double> s(values.begin(), values.end());
    std::sort(s.begin(), s.end());
    return metric_sorted(m, s);
}

double percentile_sorted(std::span<const double> sorted, double q) {
    require_non_empty(sorted, "percentile");
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(i);
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

double converged_rate(std::span<const double> curve, int bins) {
    if (bins < 2) throw InterfaceError("converged_rate: need at least 2 bins");
    require_non_empty(curve, "converged_rate");
    std::vector<long> counts(static_cast<std::size_t>(bins), 0);
    for (double v : curve) {
        if (!std::isfinite(v)) throw InterfaceError("converged_rate: non-finite curve value");
        // The epsilon keeps values such as 0.6 (stored as 0.59999...) in their nominal bin.
        long b = static_cast<long>(std::floor(std::clamp(v, 0.0, 1.0) * bins + 1e-9));
        b = std::clamp(b, 0L, static_cast<long>(bins) - 1);
        ++counts[static_cast<std::size_t>(b)];
    }
    const auto best = std::max_element(counts.begin(), counts.end()) - counts.begin();
    return (static_cast<double>(best) + 0.5) / static_cast<double>(bins);
}

AggregateEstimate stratified_bootstrap(std::span<const double> values, Metric metric, long replications,
                                       double ci, std::uint64_t seed) {
    require_non_empty(values, "stratified_bootstrap");
    if (replications < 1) throw InterfaceError("stratified_bootstrap: replications must be >= 1");
    if (!(ci > 0.0 && ci < 1.0)) throw InterfaceError("stratified_bootstrap: ci must lie in (0, 1)");

    AggregateEstimate est;
    est.metric = metric;
    est.ci_level = ci;
    est.point = compute_metric(metric, values);

    const std::size_t n = values.size();
    long combos = 1;
    for (std::size_t i = 0; i < n && combos <= replications; ++i) combos *= static_cast<long>(n);

    std::vector<double> stats;
    std::vector<double> sample(n);
    if (combos <= replications) {
        est.exhaustive = true;
        stats.reserve(static_cast<std::size_t>(combos));
        std::vector<std::size_t> idx(n, 0);
        for (long c = 0; c < combos; ++c) {
            for (std::size_t i = 0; i < n; ++i) sample[i] = values[idx[i]];
            std::sort(sample.begin(), sample.end());
            stats.push_back(metric_sorted(metric, sample));
            for (std::size_t i = 0; i < n && ++idx[i] == n; ++i) idx[i] = 0;
        }
    } else {
        stats.reserve(static_cast<std::size_t>(replications));
        for (long r = 0; r < replications; ++r) {
            CounterRng rng(hash64({seed, static_cast<std::uint64_t>(r)}), streams::kBootstrap);
            for (std::size_t i = 0; i < n; ++i) sample[i] = values[rng.below(n)];
            std::sort(sample.begin(), sample.end());
            stats.push_back(metric_sorted(metric, sample));
        }
    }
    est.replications = static_cast<long>(stats.size());
    std::sort(stats.begin(), stats.end());
    // Percent units keep ci = 0.95 on exactly the 2.5 and 97.5 levels.
    const double pct = 100.0 * ci;
    est.ci_low = std::min(percentile_sorted(stats, (100.0 - pct) / 200.0), est.point);
    est.ci_high = std::max(percentile_sorted(stats, (100.0 + pct) / 200.0), est.point);
    return est;
}

double ci_overlap(Interval main, Interval control) {
    if (!(main.lo <= main.hi) || !(control.lo <= control.hi)) {
        throw InterfaceError("ci_overlap: interval with lo > hi");
    }
    const double width = control.hi - control.lo;
    if (width == 0.0) return control.lo >= main.lo && control.lo <= main.hi ? 1.0 : 0.0;
    const double inter = std::min(main.hi, control.hi) - std::max(main.lo, control.lo);
    return std::clamp(inter / width, 0.0, 1.0);
}

EfficiencyCurve efficiency_curve(const std::vector<std::vector<double>>& runs, long replications,
                                 std::uint64_t seed) {
    if (runs.empty()) throw InterfaceError("efficiency_curve: no runs");
    const std::size_t len = runs.front().size();
    for (const auto& r : runs) {
        if (r.size() != len) throw InterfaceError("efficiency_curve: curves have different lengths");
    }
    EfficiencyCurve out;
    out.iqm.reserve(len);
    out.ci_low.reserve(len);
    out.ci_high.reserve(len);
    std::vector<double> column(runs.size());
    for (std::size_t e = 0; e < len; ++e) {
        for (std::size_t s = 0; s < runs.size(); ++s) column[s] = runs[s][e];
        const auto est = stratified_bootstrap(column, Metric::IQM, replications, 0.95,
                                              hash64({seed, static_cast<std::uint64_t>(e)}));
        out.iqm.push_back(est.point);
        out.ci_low.push_back(est.ci_low);
        out.ci_high.push_back(est.ci_high);
    }
    return out;
}

}  // namespace tbench

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "condest/error.hpp"

namespace condest::bench {

/// Logarithmic relative error in percent:
///   100 * |log10 k_hat - log10 k| / (|log10 k| + 1e-16)
inline double compute_lre(double kappa_hat, double kappa_true) {
    if (!(kappa_hat > 0.0) || !(kappa_true > 0.0)) {
        throw InvalidArgument("compute_lre: condition numbers must be positive");
    }
    const double num = std::abs(std::log10(kappa_hat) - std::log10(kappa_true));
    return 100.0 * num / (std::abs(std::log10(kappa_true)) + 1e-16);
}

/// One method's outcome on one matrix.
struct MethodRecord {
    std::string method;
    int norm = 1;
    bool ok = true;
    double lre = 0.0;            // percent
    double time_ms = std::numeric_limits<double>::quiet_NaN();    // mean over timed runs
    double median_ms = std::numeric_limits<double>::quiet_NaN();  // median over timed runs
    double inference_ms = std::numeric_limits<double>::quiet_NaN();
};

struct MetricRow {
    std::string method;
    int norm = 1;
    std::size_t count = 0;
    std::size_t failures = 0;
    /// Averages over matrices of the per-matrix mean and median run times.
    double mean_time_ms = std::numeric_limits<double>::quiet_NaN();
    double median_time_ms = std::numeric_limits<double>::quiet_NaN();
    double inference_ms = std::numeric_limits<double>::quiet_NaN();
    double lre_mean = 0.0;
    double lre_max = 0.0;
    double acc_05 = 0.0;  // percent of matrices with LRE < 50%
    double acc_10 = 0.0;  // percent of matrices with LRE < 100%
};

inline double median_of(std::vector<double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const std::size_t m = xs.size() / 2;
    return xs.size() % 2 == 1 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

inline double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Groups records by (norm, method) in first-appearance order. Failed records
/// are counted but excluded from every statistic; NaN times are skipped.
inline std::vector<MetricRow> aggregate(const std::vector<MethodRecord>& records) {
    if (records.empty()) {
        throw InvalidArgument("aggregate: no records");
    }
    std::vector<std::pair<int, std::string>> order;
    std::map<std::pair<int, std::string>, std::vector<const MethodRecord*>> groups;
    for (const auto& r : records) {
        const auto key = std::make_pair(r.norm, r.method);
        if (groups.find(key) == groups.end()) order.push_back(key);
        groups[key].push_back(&r);
    }
    std::vector<MetricRow> rows;
    for (const auto& key : order) {
        MetricRow row;
        row.norm = key.first;
        row.method = key.second;
        std::vector<double> lre, times, medians, inference;
        for (const auto* r : groups[key]) {
            if (!r->ok) {
                ++row.failures;
                continue;
            }
            lre.push_back(r->lre);
            if (!std::isnan(r->time_ms)) times.push_back(r->time_ms);
            if (!std::isnan(r->median_ms)) medians.push_back(r->median_ms);
            if (!std::isnan(r->inference_ms)) inference.push_back(r->inference_ms);
        }
        row.count = lre.size();
        if (!lre.empty()) {
            row.lre_mean = mean_of(lre);
            row.lre_max = *std::max_element(lre.begin(), lre.end());
            const auto share = [&](double thr) {
                const auto c = std::count_if(lre.begin(), lre.end(), [&](double x) { return x < thr; });
                return 100.0 * static_cast<double>(c) / static_cast<double>(lre.size());
            };
            row.acc_05 = share(50.0);
            row.acc_10 = share(100.0);
        }
        row.mean_time_ms = mean_of(times);
        row.median_time_ms = mean_of(medians);
        row.inference_ms = mean_of(inference);
        rows.push_back(row);
    }
    return rows;
}

struct TimingStats {
    double mean_ms = 0.0;
    double median_ms = 0.0;
    std::vector<double> runs_ms;
};

/// Runs `runner` once untimed, then R timed times on a monotonic clock.
inline TimingStats time_method(const std::function<void()>& runner, int repeats = 4) {
    if (repeats < 1) {
        throw InvalidArgument("time_method: need at least one repetition");
    }
    using clock = std::chrono::steady_clock;
    runner();
    TimingStats s;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = clock::now();
        runner();
        s.runs_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
    }
    s.mean_ms = mean_of(s.runs_ms);
    s.median_ms = median_of(s.runs_ms);
    return s;
}

}  // namespace condest::bench

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace genweb {

/// Streaming mean / standard-error accumulator over replica-level values.
struct Accumulator {
    double sum = 0.0;
    double sumsq = 0.0;
    std::int64_t n = 0;

    void add(double x) noexcept {
        sum += x;
        sumsq += x * x;
        ++n;
    }
    void merge(const Accumulator& o) noexcept {
        sum += o.sum;
        sumsq += o.sumsq;
        n += o.n;
    }
    double mean() const noexcept { return n > 0 ? sum / static_cast<double>(n) : 0.0; }
    double variance() const noexcept {
        if (n < 2) return 0.0;
        double m = mean();
        double v = (sumsq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
        return v > 0.0 ? v : 0.0;
    }
    double std_error() const noexcept {
        return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
    }
};

inline double pooled_se(double se1, double se2) noexcept {
    return std::sqrt(se1 * se1 + se2 * se2);
}

/// One gated statistic inside an experiment report. The tolerance formula is
/// recorded alongside the numbers so a pass flag is never a bare boolean.
struct StatRecord {
    std::string name;
    double estimate = 0.0;
    double std_error = 0.0;
    double target = std::numeric_limits<double>::quiet_NaN();
    double tolerance = 0.0;
    std::string tolerance_formula;
    bool pass = false;

    static StatRecord two_sided(std::string name, double est, double se, double target,
                                double tol, std::string formula) {
        StatRecord r;
        r.name = std::move(name);
        r.estimate = est;
        r.std_error = se;
        r.target = target;
        r.tolerance = tol;
        r.tolerance_formula = std::move(formula);
        r.pass = std::abs(est - target) <= tol;
        return r;
    }

    // One-sided: estimate must not exceed bound + slack.
    static StatRecord upper_bound(std::string name, double est, double se, double bound,
                                  double slack, std::string formula) {
        StatRecord r;
        r.name = std::move(name);
        r.estimate = est;
        r.std_error = se;
        r.target = bound;
        r.tolerance = slack;
        r.tolerance_formula = std::move(formula);
        r.pass = est <= bound + slack;
        return r;
    }
};

struct ExperimentReport {
    std::string name;
    std::string parameters;  // JSON text of the configuration
    std::vector<StatRecord> records;
    std::int64_t replicas = 0;
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;  // excluded from canonical serialization

    bool all_pass() const noexcept {
        for (const auto& r : records)
            if (!r.pass) return false;
        return true;
    }
};

}  // namespace genweb

#include "dsc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "dsc/errors.hpp"

namespace dsc::stats {

namespace {

constexpr double kFisherClamp = 1.0 - 1e-7;

void check_inputs(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        std::ostringstream os;
        os << "correlation inputs differ in length: " << x.size() << " vs " << y.size();
        throw ValidationError(os.str());
    }
    if (x.size() < 3) {
        std::ostringstream os;
        os << "correlation requires at least 3 pairs, got " << x.size();
        throw ValidationError(os.str());
    }
}

double sample_sd(const std::vector<double>& v) {
    const size_t n = v.size();
    // constant sets have exactly zero spread; the mean-based formula can
    // otherwise leak a one-ulp residue
    if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; })) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : v) {
        const double d = x - mean;
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(n - 1));
}

// Two-sided normal quantile for the CI half-width. The 95% case uses the
// conventional 1.96 exactly.
double z_quantile(double alpha) {
    if (alpha == 0.05) return 1.96;
    // Newton iteration on the normal CDF, started from a logistic approximation.
    const double target = 1.0 - alpha / 2.0;
    double z = std::log(target / (1.0 - target)) / 1.702;
    for (int i = 0; i < 60; ++i) {
        const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
        const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
        if (pdf <= 0.0) break;
        const double step = (cdf - target) / pdf;
        z -= step;
        if (std::abs(step) < 1e-14) break;
    }
    return z;
}

}  // namespace

double lcc(std::span<const double> x, std::span<const double> y) {
    check_inputs(x, y);
    const size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);

    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw UndefinedCorrelation(sxx == 0.0 ? "lcc: first argument has zero variance"
                                              : "lcc: second argument has zero variance");
    }
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

std::vector<double> fractional_ranks(std::span<const double> v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });

    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        // positions i..j (0-based) share the average 1-based rank
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double srcc(std::span<const double> x, std::span<const double> y) {
    check_inputs(x, y);
    const std::vector<double> rx = fractional_ranks(x);
    const std::vector<double> ry = fractional_ranks(y);
    try {
        return lcc(rx, ry);
    } catch (const UndefinedCorrelation&) {
        throw UndefinedCorrelation("srcc: an argument has zero rank variance (all values tied)");
    }
}

double fisher(double r) {
    if (std::isnan(r)) throw ValidationError("fisher: NaN input");
    const double clamped = std::clamp(r, -kFisherClamp, kFisherClamp);
    return std::atanh(clamped);
}

double inv_fisher(double z) { return std::tanh(z); }

AggregateCorrelation aggregate(const CorrelationSet& cs, SeMode mode,
                               size_t pairs_per_replication) {
    if (cs.values.empty()) throw ValidationError("aggregate: empty correlation set");
    const size_t n = cs.values.size();

    std::vector<double> z(n);
    for (size_t i = 0; i < n; ++i) z[i] = fisher(cs.values[i]);

    AggregateCorrelation agg;
    agg.n = n;
    agg.z_mean = std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(n);
    agg.r_avg = inv_fisher(agg.z_mean);

    // A constant set aggregates to the constant exactly (when it is inside the
    // clamp region); tanh(atanh(x)) may otherwise be off by an ulp.
    const bool constant =
        std::all_of(cs.values.begin(), cs.values.end(), [&](double v) { return v == cs.values[0]; });
    if (constant && std::abs(cs.values[0]) <= kFisherClamp) agg.r_avg = cs.values[0];

    switch (mode) {
        case SeMode::Sample:
            agg.z_se = (n > 1) ? sample_sd(z) / std::sqrt(static_cast<double>(n)) : 0.0;
            break;
        case SeMode::Analytic: {
            if (pairs_per_replication <= 3) {
                throw ValidationError("aggregate: analytic SE requires more than 3 pairs per replication");
            }
            agg.z_se = 1.0 / std::sqrt(static_cast<double>(n) *
                                       static_cast<double>(pairs_per_replication - 3));
            break;
        }
    }
    return agg;
}

SignificanceResult significant_difference(const CorrelationSet& a, const CorrelationSet& b,
                                          double alpha) {
    const AggregateCorrelation za = aggregate(a);
    const AggregateCorrelation zb = aggregate(b);

    SignificanceResult res;
    if (za.n < 2 || zb.n < 2) {
        res.significant = false;
        res.infinite_width = true;
        res.ci_lo = -std::numeric_limits<double>::infinity();
        res.ci_hi = std::numeric_limits<double>::infinity();
        return res;
    }

    const double d = za.z_mean - zb.z_mean;
    const double se_d = std::sqrt(za.z_se * za.z_se + zb.z_se * zb.z_se);
    const double half = z_quantile(alpha) * se_d;
    res.ci_lo = d - half;
    res.ci_hi = d + half;
    res.significant = (res.ci_lo > 0.0) || (res.ci_hi < 0.0);
    return res;
}

namespace {

CorrelationSet abs_set(const CorrelationSet& cs) {
    CorrelationSet out;
    out.kind = cs.kind;
    out.values.reserve(cs.values.size());
    for (double v : cs.values) out.values.push_back(std::abs(v));
    return out;
}

}  // namespace

GapResult gaps(const AggregateCorrelation& rho_i, const AggregateCorrelation& rho_g,
               const AggregateCorrelation& rho_c, const CorrelationSet& sets_i,
               const CorrelationSet& sets_g, const CorrelationSet& sets_c) {
    GapResult res;
    res.v = std::abs(rho_i.r_avg) - std::abs(rho_g.r_avg);
    res.c = std::abs(rho_g.r_avg) - std::abs(rho_c.r_avg);
    res.ci_v = significant_difference(abs_set(sets_i), abs_set(sets_g));
    res.ci_c = significant_difference(abs_set(sets_g), abs_set(sets_c));
    res.v_significant = res.ci_v.significant;
    res.c_significant = res.ci_c.significant;
    return res;
}

}  // namespace dsc::stats

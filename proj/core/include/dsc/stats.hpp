#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dsc::stats {

enum class CorrelationKind { LCC, SRCC };

// One correlation value per replication.
struct CorrelationSet {
    std::vector<double> values;
    CorrelationKind kind = CorrelationKind::LCC;
};

// Fisher-z aggregated correlation: r_avg = inv_fisher(mean of z values).
struct AggregateCorrelation {
    double r_avg = 0.0;
    double z_mean = 0.0;
    double z_se = 0.0;  // standard error of z_mean
    size_t n = 0;       // replication count
};

enum class SeMode {
    Sample,    // sample stddev of the per-replication z values / sqrt(n)
    Analytic,  // 1/sqrt(pairs - 3) per replication, combined over n replications
};

struct SignificanceResult {
    bool significant = false;
    double ci_lo = 0.0;  // on the Fisher-z scale
    double ci_hi = 0.0;
    bool infinite_width = false;  // set when either set has n == 1
};

// Versatility gap v = |rho_I| - |rho_G| and concealment gap c = |rho_G| - |rho_C|,
// with significance of each difference on sign-corrected Fisher-z sets.
struct GapResult {
    double v = 0.0;
    double c = 0.0;
    bool v_significant = false;
    bool c_significant = false;
    SignificanceResult ci_v;
    SignificanceResult ci_c;
};

// Pearson linear correlation. Requires equal lengths >= 3 and nonzero variance
// in both arguments; zero variance raises UndefinedCorrelation.
double lcc(std::span<const double> x, std::span<const double> y);

// Spearman rank correlation: Pearson correlation of fractional ranks,
// ties receive average ranks. Same preconditions as lcc.
double srcc(std::span<const double> x, std::span<const double> y);

// Average ranks (1-based, ties averaged).
std::vector<double> fractional_ranks(std::span<const double> v);

// Fisher z-transform. r is clamped to +/-(1 - 1e-7) before atanh, so the
// transform is finite for the full closed interval [-1, 1].
double fisher(double r);
double inv_fisher(double z);

// Fisher-z aggregation of per-replication correlations. For SeMode::Analytic,
// pairs_per_replication is the per-replication sample count m and the SE is
// 1/sqrt(n * (m - 3)); it requires m > 3.
AggregateCorrelation aggregate(const CorrelationSet& cs, SeMode mode = SeMode::Sample,
                               size_t pairs_per_replication = 0);

// 95% CI of the difference of the Fisher-z transformed averages.
// d = z_mean(a) - z_mean(b), SE_d = sqrt(se_a^2 + se_b^2), ci = d +/- 1.96 SE_d,
// significant iff 0 is outside the interval. If either set is a singleton the
// result is not-significant with an infinite-width flag.
SignificanceResult significant_difference(const CorrelationSet& a, const CorrelationSet& b,
                                          double alpha = 0.05);

// DSC gap computation from the three aggregated correlations plus the
// underlying per-replication sets (used for gap significance). Correlations
// are sign-corrected (absolute value) before the z-transform for the
// significance tests, mirroring the |.| in the gap definitions.
GapResult gaps(const AggregateCorrelation& rho_i, const AggregateCorrelation& rho_g,
               const AggregateCorrelation& rho_c, const CorrelationSet& sets_i,
               const CorrelationSet& sets_g, const CorrelationSet& sets_c);

}  // namespace dsc::stats

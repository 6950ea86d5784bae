#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dsc/errors.hpp"
#include "dsc/rng.hpp"
#include "dsc/stats.hpp"

using namespace dsc;
using stats::CorrelationKind;
using stats::CorrelationSet;

namespace {

// Definition-level Pearson oracle: the raw sigma formula, no shortcuts.
double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxy += x[i] * y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
    }
    return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

// O(n^2) fractional ranks, independent of the implementation's sort-based path.
std::vector<double> rank_oracle(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        size_t below = 0, equal = 0;
        for (size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++below;
            if (v[j] == v[i]) ++equal;
        }
        out[i] = static_cast<double>(below) + 1.0 + (static_cast<double>(equal) - 1.0) * 0.5;
    }
    return out;
}

double spearman_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson_oracle(rank_oracle(x), rank_oracle(y));
}

}  // namespace

TEST_CASE("lcc perfect linear relations") {
    std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> y, neg;
    for (double v : x) {
        y.push_back(2 * v + 1);
        neg.push_back(-v);
    }
    CHECK(stats::lcc(x, y) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(stats::lcc(x, neg) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("lcc matches the definition-level oracle") {
    std::vector<double> x{1, 2, 3, 4};
    std::vector<double> y{1.2, 1.9, 3.3, 3.6};
    CHECK(std::abs(stats::lcc(x, y) - pearson_oracle(x, y)) < 1e-12);

    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const size_t n = 3 + rng.index(40);
        std::vector<double> a(n), b(n);
        for (size_t i = 0; i < n; ++i) {
            a[i] = rng.uniform(-5, 5);
            b[i] = rng.uniform(-5, 5);
        }
        CHECK(std::abs(stats::lcc(a, b) - pearson_oracle(a, b)) < 1e-12);
    }
}

TEST_CASE("lcc rejects zero variance and bad shapes") {
    std::vector<double> c{2, 2, 2, 2};
    std::vector<double> y{1, 2, 3, 4};
    CHECK_THROWS_AS(stats::lcc(c, y), UndefinedCorrelation);
    CHECK_THROWS_AS(stats::lcc(y, c), UndefinedCorrelation);
    std::vector<double> two{1, 2};
    CHECK_THROWS_AS(stats::lcc(two, two), ValidationError);
    std::vector<double> three{1, 2, 3};
    CHECK_THROWS_AS(stats::lcc(three, two), ValidationError);
}

TEST_CASE("lcc affine invariance property") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t n = 5 + rng.index(30);
        std::vector<double> x(n), y(n), pos(n), neg(n);
        for (size_t i = 0; i < n; ++i) {
            x[i] = rng.uniform(-3, 3);
            y[i] = rng.uniform(-3, 3);
        }
        const double a = rng.uniform(0.1, 4.0);
        const double b = rng.uniform(-2, 2);
        for (size_t i = 0; i < n; ++i) {
            pos[i] = a * x[i] + b;
            neg[i] = -a * x[i] + b;
        }
        const double base = stats::lcc(x, y);
        CHECK(stats::lcc(pos, y) == doctest::Approx(base).epsilon(1e-9));
        CHECK(stats::lcc(neg, y) == doctest::Approx(-base).epsilon(1e-9));
    }
}

TEST_CASE("srcc is invariant under monotone transforms") {
    std::vector<double> x{0.5, 1.0, 1.7, 2.4, 3.0, 3.3};
    std::vector<double> y;
    for (double v : x) y.push_back(std::exp(v));
    CHECK(stats::srcc(x, y) == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t n = 5 + rng.index(30);
        std::vector<double> a(n), b(n), warped(n);
        for (size_t i = 0; i < n; ++i) {
            a[i] = rng.uniform(-3, 3);
            b[i] = rng.uniform(-3, 3);
        }
        for (size_t i = 0; i < n; ++i) warped[i] = std::exp(a[i]) + a[i];  // strictly increasing
        CHECK(stats::srcc(warped, b) == doctest::Approx(stats::srcc(a, b)).epsilon(1e-9));
    }
}

TEST_CASE("srcc tie handling matches the rank-then-Pearson oracle") {
    std::vector<double> x{1, 2, 2, 3, 5};
    std::vector<double> y{2, 1, 4, 4, 5};
    CHECK(std::abs(stats::srcc(x, y) - spearman_oracle(x, y)) < 1e-12);

    Rng rng(1234);
    for (int trial = 0; trial < 200; ++trial) {
        const size_t n = 4 + rng.index(20);
        std::vector<double> a(n), b(n);
        for (size_t i = 0; i < n; ++i) {
            // coarse grid forces ties
            a[i] = std::floor(rng.uniform(0, 5));
            b[i] = std::floor(rng.uniform(0, 5));
        }
        const auto defined = [&](const std::vector<double>& v) {
            return std::any_of(v.begin(), v.end(), [&](double q) { return q != v[0]; });
        };
        if (!defined(a) || !defined(b)) continue;
        CHECK(std::abs(stats::srcc(a, b) - spearman_oracle(a, b)) < 1e-12);
    }
}

TEST_CASE("srcc rejects constant input") {
    std::vector<double> x{1, 2, 3, 4};
    std::vector<double> c{7, 7, 7, 7};
    CHECK_THROWS_AS(stats::srcc(x, c), UndefinedCorrelation);
}

TEST_CASE("fisher transform basics") {
    CHECK(stats::fisher(0.0) == 0.0);
    // atanh(0.5) == ln(3)/2
    CHECK(stats::fisher(0.5) == doctest::Approx(0.5 * std::log(3.0)).epsilon(1e-15));
    CHECK(stats::fisher(0.5) == doctest::Approx(0.5493061443340548).epsilon(1e-14));

    // clamping keeps +/-1 finite and nearly invertible
    const double z1 = stats::fisher(1.0);
    CHECK(std::isfinite(z1));
    CHECK(stats::inv_fisher(z1) >= 0.9999999);
    const double zm1 = stats::fisher(-1.0);
    CHECK(std::isfinite(zm1));
    CHECK(stats::inv_fisher(zm1) <= -0.9999999);
}

TEST_CASE("fisher round trip under 1e-12 for |r| <= 0.999999") {
    for (int i = -999999; i <= 999999; i += 4321) {
        const double r = static_cast<double>(i) / 1000000.0;
        CHECK(std::abs(stats::inv_fisher(stats::fisher(r)) - r) < 1e-12);
    }
    CHECK(std::abs(stats::inv_fisher(stats::fisher(0.999999)) - 0.999999) < 1e-12);
    CHECK(std::abs(stats::inv_fisher(stats::fisher(-0.999999)) + 0.999999) < 1e-12);
}

TEST_CASE("aggregate of a constant set is exact") {
    CorrelationSet cs{{0.7, 0.7, 0.7, 0.7}, CorrelationKind::LCC};
    const auto agg = stats::aggregate(cs);
    CHECK(agg.r_avg == 0.7);
    CHECK(agg.z_se == 0.0);
    CHECK(agg.n == 4);
    CHECK(std::abs(agg.r_avg - stats::inv_fisher(agg.z_mean)) < 1e-12);
}

TEST_CASE("aggregate is the inverse-transformed mean of z values") {
    CorrelationSet cs{{0.6, 0.8}, CorrelationKind::LCC};
    const auto agg = stats::aggregate(cs);
    // independent evaluation: mean z = (atanh .6 + atanh .8)/2 = ln(6)/2,
    // tanh of which is (6-1)/(6+1) = 5/7
    const double oracle = std::tanh((std::atanh(0.6) + std::atanh(0.8)) / 2.0);
    CHECK(agg.r_avg == doctest::Approx(oracle).epsilon(1e-15));
    CHECK(agg.r_avg == doctest::Approx(5.0 / 7.0).epsilon(1e-12));
    CHECK(agg.r_avg > 0.7);  // differs from the arithmetic mean in this direction
}

TEST_CASE("aggregate of a single value is that value") {
    CorrelationSet cs{{0.42}, CorrelationKind::SRCC};
    const auto agg = stats::aggregate(cs);
    CHECK(agg.r_avg == 0.42);
    CHECK(agg.z_se == 0.0);
    CHECK(agg.n == 1);
}

TEST_CASE("aggregate is order independent") {
    CorrelationSet cs{{0.1, 0.5, 0.9, -0.2, 0.3}, CorrelationKind::LCC};
    CorrelationSet perm = cs;
    std::reverse(perm.values.begin(), perm.values.end());
    const auto a = stats::aggregate(cs);
    const auto b = stats::aggregate(perm);
    CHECK(a.r_avg == doctest::Approx(b.r_avg).epsilon(1e-15));
    CHECK(a.z_se == doctest::Approx(b.z_se).epsilon(1e-15));
}

TEST_CASE("aggregate analytic SE variant") {
    CorrelationSet cs{{0.6, 0.7, 0.65}, CorrelationKind::LCC};
    const auto agg = stats::aggregate(cs, stats::SeMode::Analytic, 103);
    CHECK(agg.z_se == doctest::Approx(1.0 / std::sqrt(3.0 * 100.0)).epsilon(1e-12));
    CHECK_THROWS_AS(stats::aggregate(cs, stats::SeMode::Analytic, 3), ValidationError);
}

TEST_CASE("significant_difference of identical sets is centered at zero") {
    CorrelationSet a{{0.6, 0.7, 0.8}, CorrelationKind::LCC};
    const auto res = stats::significant_difference(a, a);
    CHECK_FALSE(res.significant);
    CHECK(res.ci_lo == doctest::Approx(-res.ci_hi).epsilon(1e-12));
    CHECK(std::abs((res.ci_lo + res.ci_hi) / 2.0) < 1e-15);
}

TEST_CASE("significant_difference degenerate zero-SE contract") {
    CorrelationSet a{std::vector<double>(10, 0.9), CorrelationKind::LCC};
    CorrelationSet b{std::vector<double>(10, 0.5), CorrelationKind::LCC};
    const auto res = stats::significant_difference(a, b);
    CHECK(res.significant);
    CHECK(res.ci_lo == res.ci_hi);  // SE_d == 0
    CHECK(res.ci_lo > 0.0);
}

TEST_CASE("significant_difference singleton sets report infinite width") {
    CorrelationSet a{{0.9}, CorrelationKind::LCC};
    CorrelationSet b{{0.1, 0.2}, CorrelationKind::LCC};
    const auto res = stats::significant_difference(a, b);
    CHECK_FALSE(res.significant);
    CHECK(res.infinite_width);
    CHECK(std::isinf(res.ci_lo));
    CHECK(std::isinf(res.ci_hi));
}

TEST_CASE("gaps reproduce the telescoping identity") {
    auto make = [](std::vector<double> v) {
        return CorrelationSet{std::move(v), CorrelationKind::LCC};
    };

    SUBCASE("literal example values") {
        const auto si = make({0.9, 0.9});
        const auto sg = make({0.7, 0.7});
        const auto sc = make({0.2, 0.2});
        const auto res = stats::gaps(stats::aggregate(si), stats::aggregate(sg),
                                     stats::aggregate(sc), si, sg, sc);
        CHECK(res.v == doctest::Approx(0.2).epsilon(1e-12));
        CHECK(res.c == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(std::abs((res.v + res.c) - (0.9 - 0.2)) < 1e-12);
    }

    SUBCASE("small concealment gap, zero versatility gap") {
        // the pattern where the individual-vs-concealed difference is
        // almost entirely the concealment gap
        const auto si = make({0.83, 0.83});
        const auto sg = make({0.83, 0.83});
        const auto sc = make({0.81, 0.81});
        const auto res = stats::gaps(stats::aggregate(si), stats::aggregate(sg),
                                     stats::aggregate(sc), si, sg, sc);
        CHECK(res.v == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(res.c == doctest::Approx(0.02).epsilon(1e-12));
    }

    SUBCASE("all equal -> both gaps zero") {
        const auto s = make({0.75, 0.8});
        const auto agg = stats::aggregate(s);
        const auto res = stats::gaps(agg, agg, agg, s, s, s);
        CHECK(res.v == 0.0);
        CHECK(res.c == 0.0);
        CHECK_FALSE(res.v_significant);
        CHECK_FALSE(res.c_significant);
    }

    SUBCASE("random telescoping property") {
        Rng rng(5);
        for (int trial = 0; trial < 100; ++trial) {
            auto gen = [&] {
                std::vector<double> v(4);
                for (auto& x : v) x = rng.uniform(-0.95, 0.95);
                return make(v);
            };
            const auto si = gen(), sg = gen(), sc = gen();
            const auto ai = stats::aggregate(si), ag = stats::aggregate(sg),
                       ac = stats::aggregate(sc);
            const auto res = stats::gaps(ai, ag, ac, si, sg, sc);
            CHECK(std::abs((res.v + res.c) - (std::abs(ai.r_avg) - std::abs(ac.r_avg))) < 1e-12);
        }
    }
}

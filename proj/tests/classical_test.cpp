#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "unmix/classical.hpp"
#include "unmix/mixing.hpp"

using namespace unmix;

namespace {

/// Exhaustive max-volume simplex oracle for R=3: the pixel triple spanning the
/// largest triangle area (Gram determinant of the edge vectors).
std::set<std::int64_t> max_volume_triple(const Eigen::MatrixXd& y) {
    const std::int64_t n = y.cols();
    double best = -1.0;
    std::set<std::int64_t> best_set;
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = i + 1; j < n; ++j)
            for (std::int64_t k = j + 1; k < n; ++k) {
                const Eigen::VectorXd u = y.col(j) - y.col(i);
                const Eigen::VectorXd v = y.col(k) - y.col(i);
                const double uu = u.dot(u), vv = v.dot(v), uv = u.dot(v);
                const double gram = uu * vv - uv * uv;  // squared area (x4)
                if (gram > best) {
                    best = gram;
                    best_set = {i, j, k};
                }
            }
    return best_set;
}

/// Pure-pixel scene: R true endmembers placed as pixels, the rest interior
/// Dirichlet mixtures, optional noise at `snr_db`.
struct PurePixelScene {
    Eigen::MatrixXd y;
    Eigen::MatrixXd endmembers;
    std::set<std::int64_t> pure_indices;
};

PurePixelScene make_pure_pixel_scene(std::int64_t bands, std::int64_t n, double snr_db,
                                     std::uint64_t seed) {
    SceneConfig cfg;
    cfg.B = bands;
    cfg.H = 1;
    cfg.W = 1;
    cfg.R = 3;
    cfg.seed = seed;
    Scene stub = synth_scene(cfg);  // just for the bump-model endmembers
    const Eigen::MatrixXd e = stub.endmembers.E;

    RngStream rng(seed ^ 0xabcd);
    Eigen::MatrixXd y(bands, n);
    PurePixelScene scene;
    // Pure pixels at fixed slots, deterministically scattered.
    std::vector<std::int64_t> slots = {0, n / 2, n - 1};
    for (int r = 0; r < 3; ++r) {
        y.col(slots[static_cast<std::size_t>(r)]) = e.col(r);
        scene.pure_indices.insert(slots[static_cast<std::size_t>(r)]);
    }
    for (std::int64_t j = 0; j < n; ++j) {
        if (scene.pure_indices.count(j)) continue;
        const auto a = rng.dirichlet(1.0, 3);
        // Keep mixtures strictly interior.
        Eigen::Vector3d mix(0.1 + 0.8 * a[0], 0.1 + 0.8 * a[1], 0.1 + 0.8 * a[2]);
        mix /= mix.sum();
        y.col(j) = e * mix;
    }
    if (std::isfinite(snr_db)) {
        const double p_sig = y.squaredNorm();
        Eigen::MatrixXd noise(bands, n);
        for (std::int64_t j = 0; j < n; ++j)
            for (std::int64_t b = 0; b < bands; ++b) noise(b, j) = rng.normal();
        y += noise * std::sqrt(p_sig / (noise.squaredNorm() * std::pow(10.0, snr_db / 10.0)));
    }
    scene.y = y;
    scene.endmembers = e;
    return scene;
}

}  // namespace

// ---------------------------------------------------------------------------
// VCA
// ---------------------------------------------------------------------------

TEST(Vca, FindsPurePixelsNoiseless) {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const auto scene = make_pure_pixel_scene(25, 40, std::numeric_limits<double>::infinity(), seed);
        const auto oracle = max_volume_triple(scene.y);
        const auto result = vca(scene.y, 3, seed + 100);
        const std::set<std::int64_t> picked(result.indices.begin(), result.indices.end());
        EXPECT_EQ(picked, oracle) << "seed " << seed;
        EXPECT_EQ(picked, scene.pure_indices) << "seed " << seed;
    }
}

TEST(Vca, TwoEndmembersOnASegment) {
    Eigen::VectorXd a(3), b(3);
    a << 1.0, 0.2, 0.1;
    b << 0.2, 1.0, 0.3;
    const std::int64_t n = 11;
    Eigen::MatrixXd y(3, n);
    for (std::int64_t j = 0; j < n; ++j) {
        const double t = static_cast<double>(j) / static_cast<double>(n - 1);
        y.col(j) = t * a + (1.0 - t) * b;
    }
    const auto result = vca(y, 2, 5);
    std::set<std::int64_t> picked(result.indices.begin(), result.indices.end());
    EXPECT_EQ(picked, (std::set<std::int64_t>{0, n - 1}));
}

TEST(Vca, DeterministicUnderSeed) {
    const auto scene = make_pure_pixel_scene(20, 30, 35.0, 9);
    const auto r1 = vca(scene.y, 3, 42);
    const auto r2 = vca(scene.y, 3, 42);
    EXPECT_EQ(r1.indices, r2.indices);
    EXPECT_EQ(r1.endmembers.E, r2.endmembers.E);
}

TEST(Vca, DegenerateRankThrows) {
    // All columns parallel: rank(Y) = 1 < R-1 = 2.
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(10, 0.1, 1.0);
    Eigen::MatrixXd y(10, 20);
    for (std::int64_t j = 0; j < 20; ++j) y.col(j) = (1.0 + 0.1 * static_cast<double>(j)) * v;
    EXPECT_THROW(vca(y, 3, 1), DataError);
}

TEST(Vca, ClampsNegativeEntries) {
    Eigen::MatrixXd y = Eigen::MatrixXd::Random(6, 20);  // mixed-sign data
    const auto result = vca(y, 3, 7);
    EXPECT_GE(result.endmembers.E.minCoeff(), 0.0);
}

TEST(Vca, MatchesOracleAcrossManySeedsAtHighSnr) {
    int hits = 0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
        const auto scene = make_pure_pixel_scene(20, 50, 45.0, 200 + static_cast<std::uint64_t>(t));
        const auto oracle = max_volume_triple(scene.y);
        const auto result = vca(scene.y, 3, 300 + static_cast<std::uint64_t>(t));
        const std::set<std::int64_t> picked(result.indices.begin(), result.indices.end());
        if (picked == oracle) ++hits;
    }
    EXPECT_GE(hits, 19) << hits << "/" << trials;
}

// ---------------------------------------------------------------------------
// NNLS / FCLSU
// ---------------------------------------------------------------------------

TEST(Nnls, MatchesUnconstrainedWhenInterior) {
    Eigen::MatrixXd a(4, 2);
    a << 1, 0, 0, 1, 1, 1, 0.5, 0.25;
    Eigen::VectorXd x_true(2);
    x_true << 0.7, 1.3;
    const Eigen::VectorXd b = a * x_true;
    const Eigen::VectorXd x = nnls(a, b);
    EXPECT_NEAR((x - x_true).cwiseAbs().maxCoeff(), 0.0, 1e-10);
}

TEST(Nnls, ActivatesConstraint) {
    Eigen::MatrixXd a(2, 2);
    a << 1, 0, 0, 1;
    Eigen::VectorXd b(2);
    b << -0.5, 2.0;  // unconstrained optimum has a negative coordinate
    const Eigen::VectorXd x = nnls(a, b);
    EXPECT_DOUBLE_EQ(x[0], 0.0);
    EXPECT_NEAR(x[1], 2.0, 1e-12);
}

TEST(Fclsu, ExactInteriorMixture) {
    RngStream rng(61);
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(10, 2);
    for (std::int64_t b = 0; b < 10; ++b) {
        e(b, 0) = rng.uniform(0.1, 1.0);
        e(b, 1) = rng.uniform(0.1, 1.0);
    }
    Eigen::VectorXd a_true(2);
    a_true << 0.3, 0.7;
    Eigen::MatrixXd y = e * a_true;
    const Eigen::MatrixXd a = fclsu_matrix(y, e);
    EXPECT_NEAR(a(0, 0), 0.3, 1e-6);
    EXPECT_NEAR(a(1, 0), 0.7, 1e-6);
}

TEST(Fclsu, VertexGivesOneHot) {
    RngStream rng(62);
    Eigen::MatrixXd e(8, 3);
    for (std::int64_t b = 0; b < 8; ++b)
        for (std::int64_t r = 0; r < 3; ++r) e(b, r) = rng.uniform(0.05, 1.0);
    for (std::int64_t r = 0; r < 3; ++r) {
        const Eigen::MatrixXd a = fclsu_matrix(e.col(r), e);
        for (std::int64_t i = 0; i < 3; ++i)
            EXPECT_NEAR(a(i, 0), i == r ? 1.0 : 0.0, 1e-6) << "vertex " << r;
    }
}

TEST(Fclsu, BeatsBarycentricGridOracle) {
    RngStream rng(63);
    Eigen::MatrixXd e(12, 3);
    for (std::int64_t b = 0; b < 12; ++b)
        for (std::int64_t r = 0; r < 3; ++r) e(b, r) = rng.uniform(0.05, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd y(12);
        for (std::int64_t b = 0; b < 12; ++b) y[b] = rng.uniform(0.0, 1.2);
        const Eigen::MatrixXd a = fclsu_matrix(y, e);
        const double fclsu_obj = (y - e * a.col(0)).squaredNorm();
        double grid_best = std::numeric_limits<double>::infinity();
        const int g = 100;
        for (int i = 0; i <= g; ++i)
            for (int j = 0; j <= g - i; ++j) {
                Eigen::Vector3d cand(static_cast<double>(i) / g, static_cast<double>(j) / g,
                                     static_cast<double>(g - i - j) / g);
                grid_best = std::min(grid_best, (y - e * cand).squaredNorm());
            }
        ASSERT_LE(fclsu_obj, grid_best + 1e-12);
    }
}

TEST(Fclsu, RankDeficientEndmembersThrow) {
    Eigen::MatrixXd e(6, 3);
    e.col(0).setConstant(0.5);
    e.col(1).setConstant(0.5);  // duplicate column
    e.col(2) = Eigen::VectorXd::LinSpaced(6, 0.1, 0.6);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(6, 0.4);
    EXPECT_THROW(fclsu_matrix(y, e), NumericalError);
}

// ---------------------------------------------------------------------------
// match_endmembers
// ---------------------------------------------------------------------------

namespace {
EndmemberMatrix random_endmembers(std::int64_t bands, std::int64_t r, RngStream& rng) {
    EndmemberMatrix em;
    em.E.resize(bands, r);
    for (std::int64_t b = 0; b < bands; ++b)
        for (std::int64_t c = 0; c < r; ++c) em.E(b, c) = rng.uniform(0.05, 1.0);
    return em;
}
}  // namespace

TEST(Match, IdentityForEqualMatrices) {
    RngStream rng(71);
    const auto em = random_endmembers(10, 4, rng);
    const auto perm = match_endmembers(em, em);
    for (std::int64_t i = 0; i < 4; ++i) EXPECT_EQ(perm.map[static_cast<std::size_t>(i)], i);
}

TEST(Match, RecoversColumnSwap) {
    RngStream rng(72);
    const auto ref = random_endmembers(10, 3, rng);
    EndmemberMatrix shuffled;
    shuffled.E.resize(10, 3);
    shuffled.E.col(0) = ref.E.col(2);
    shuffled.E.col(1) = ref.E.col(0);
    shuffled.E.col(2) = ref.E.col(1);
    const auto perm = match_endmembers(shuffled, ref);
    // aligned(i) = shuffled.col(perm[i]) must equal ref.col(i)
    EXPECT_EQ(perm.map, (std::vector<std::int64_t>{1, 2, 0}));
    const auto aligned = apply_permutation(shuffled, perm);
    EXPECT_EQ(aligned.E, ref.E);
}

TEST(Match, ExhaustiveBeatsGreedyAndRandomSampler) {
    RngStream rng(73);
    for (int trial = 0; trial < 10; ++trial) {
        const auto ref = random_endmembers(12, 5, rng);
        EndmemberMatrix noisy;
        noisy.E.resize(12, 5);
        std::vector<std::int64_t> shuffle = {3, 0, 4, 1, 2};
        for (std::int64_t i = 0; i < 5; ++i)
            for (std::int64_t b = 0; b < 12; ++b)
                noisy.E(b, shuffle[static_cast<std::size_t>(i)]) =
                    std::max(1e-6, ref.E(b, i) + rng.uniform(-0.05, 0.05));
        const auto perm = match_endmembers(noisy, ref);
        const auto best_cost = sad(apply_permutation(noisy, perm), ref).mean;

        // Greedy assignment can only do worse or equal.
        std::set<std::int64_t> used;
        double greedy_cost = 0.0;
        for (std::int64_t i = 0; i < 5; ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::int64_t pick = -1;
            for (std::int64_t j = 0; j < 5; ++j) {
                if (used.count(j)) continue;
                const double ang = spectral_angle(ref.E.col(i), noisy.E.col(j));
                if (ang < best) {
                    best = ang;
                    pick = j;
                }
            }
            used.insert(pick);
            greedy_cost += best;
        }
        greedy_cost /= 5.0;
        EXPECT_LE(best_cost, greedy_cost + 1e-12);

        // Random permutation sampling never finds a lower cost.
        std::vector<std::int64_t> p = {0, 1, 2, 3, 4};
        RngStream sampler(404 + static_cast<std::uint64_t>(trial));
        for (int s = 0; s < 200; ++s) {
            for (std::size_t i = 4; i > 0; --i)
                std::swap(p[i], p[sampler.next_u64() % (i + 1)]);
            const auto cost = sad(apply_permutation(noisy, Permutation{p}), ref).mean;
            ASSERT_GE(cost, best_cost - 1e-12);
        }
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

TEST(Rmse, ZeroForIdenticalInputs) {
    RngStream rng(81);
    AbundanceCube a(3, 4, 5);
    for (auto& v : a.data) v = rng.uniform();
    const auto rep = rmse(a, a);
    EXPECT_DOUBLE_EQ(rep.overall, 0.0);
    for (double v : rep.per_endmember) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Rmse, ConstantOffsetGivesAbsOffset) {
    RngStream rng(82);
    AbundanceCube ref(2, 3, 3);
    for (auto& v : ref.data) v = rng.uniform();
    AbundanceCube hat = ref;
    const double d = -0.037;
    for (auto& v : hat.data) v += d;
    const auto rep = rmse(hat, ref);
    EXPECT_NEAR(rep.overall, std::abs(d), 1e-12);
    for (double v : rep.per_endmember) EXPECT_NEAR(v, std::abs(d), 1e-12);
}

TEST(Rmse, ReportedSamsonAggregationIdentity) {
    // Per-endmember values from the proposed-method column must aggregate to
    // the reported overall as sqrt(mean of squares), within table rounding.
    AbundanceCube ref(3, 1, 1), hat(3, 1, 1);
    ref.data = {0.0, 0.0, 0.0};
    hat.data = {0.0712, 0.0683, 0.0930};
    const auto rep = rmse(hat, ref);
    EXPECT_NEAR(rep.per_endmember[0], 0.0712, 1e-12);
    EXPECT_NEAR(rep.per_endmember[1], 0.0683, 1e-12);
    EXPECT_NEAR(rep.per_endmember[2], 0.0930, 1e-12);
    EXPECT_NEAR(rep.overall, 0.0783, 5e-5);
}

TEST(Rmse, SymmetricInArguments) {
    RngStream rng(83);
    AbundanceCube a(2, 4, 4), b(2, 4, 4);
    for (auto& v : a.data) v = rng.uniform();
    for (auto& v : b.data) v = rng.uniform();
    EXPECT_DOUBLE_EQ(rmse(a, b).overall, rmse(b, a).overall);
}

TEST(Sad, ScaleInvariance) {
    RngStream rng(91);
    EndmemberMatrix ref = random_endmembers(15, 3, rng);
    EndmemberMatrix scaled = ref;
    scaled.E.col(0) *= 7.3;
    scaled.E.col(1) *= 0.02;
    scaled.E.col(2) *= 1234.0;
    const auto rep = sad(scaled, ref);
    for (double v : rep.per_endmember) EXPECT_NEAR(v, 0.0, 1e-12);

    // Invariance to scaling either argument on random pairs.
    for (int t = 0; t < 10; ++t) {
        EndmemberMatrix a = random_endmembers(8, 2, rng);
        EndmemberMatrix b = random_endmembers(8, 2, rng);
        EndmemberMatrix a2 = a;
        a2.E *= rng.uniform(0.01, 100.0);
        ASSERT_NEAR(sad(a, b).mean, sad(a2, b).mean, 1e-12);
        ASSERT_NEAR(sad(a, b).mean, sad(b, a).mean, 1e-12);  // symmetry
    }
}

TEST(Sad, OrthogonalAndFortyFiveDegrees) {
    EndmemberMatrix ref, hat;
    ref.E.resize(2, 2);
    hat.E.resize(2, 2);
    ref.E << 1, 1, 0, 0;   // columns (1,0) and (1,0)
    hat.E << 0, 1, 1, 1;   // columns (0,1) and (1,1)
    const auto rep = sad(hat, ref);
    EXPECT_NEAR(rep.per_endmember[0], M_PI / 2, 1e-12);
    EXPECT_NEAR(rep.per_endmember[1], M_PI / 4, 1e-12);
}

TEST(Sad, ReportedSamsonMeanIdentity) {
    // Per-class SAD values of the proposed column average to the reported overall.
    const double mean = (0.0128 + 0.0674 + 0.0729) / 3.0;
    EXPECT_NEAR(mean, 0.0510, 5e-5);
}

TEST(Sad, StableFormulaAgreesWithClampedAcos) {
    // The metric path uses 2*atan2(|u-v|, |u+v|); it must agree with the
    // direct clamped-arccos evaluation away from the degenerate endpoints.
    RngStream rng(92);
    for (int t = 0; t < 200; ++t) {
        Eigen::VectorXd a(6), b(6);
        for (int i = 0; i < 6; ++i) {
            a[i] = rng.uniform(0.01, 1.0);
            b[i] = rng.uniform(0.01, 1.0);
        }
        const double stable = spectral_angle(a, b);
        double cosine = a.dot(b) / (a.norm() * b.norm());
        cosine = std::min(1.0, std::max(-1.0, cosine));
        ASSERT_NEAR(stable, std::acos(cosine), 1e-7);
    }
}

TEST(Sad, ZeroColumnRejected) {
    EndmemberMatrix ref, hat;
    ref.E = Eigen::MatrixXd::Ones(4, 2);
    hat.E = Eigen::MatrixXd::Ones(4, 2);
    hat.E.col(1).setZero();
    EXPECT_THROW(sad(hat, ref), DataError);
}

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "unmix/errors.hpp"
#include "unmix/rng.hpp"

namespace unmix {

/// B x H x W reflectance cube. Flat storage is band-major, then row-major over
/// H and W; reshaping to the B x n pixel matrix (n = H*W) is order-fixed.
struct HsiCube {
    std::int64_t bands = 0;
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<double> data;            // bands*height*width
    std::vector<double> wavelengths;     // empty or size == bands, nm
    std::vector<std::string> band_names; // empty or size == bands

    HsiCube() = default;
    HsiCube(std::int64_t b, std::int64_t h, std::int64_t w)
        : bands(b), height(h), width(w), data(static_cast<std::size_t>(b * h * w), 0.0) {
        if (b < 1 || h < 1 || w < 1) throw DimensionError("cube: extents must be >= 1");
    }

    std::int64_t pixels() const { return height * width; }

    double& at(std::int64_t b, std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>((b * height + y) * width + x)];
    }
    double at(std::int64_t b, std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>((b * height + y) * width + x)];
    }

    /// Y in R^{B x n}, column j is the spectrum of pixel (j / W, j % W).
    Eigen::MatrixXd to_matrix() const {
        Eigen::MatrixXd y(bands, pixels());
        for (std::int64_t b = 0; b < bands; ++b)
            for (std::int64_t j = 0; j < pixels(); ++j)
                y(b, j) = data[static_cast<std::size_t>(b * pixels() + j)];
        return y;
    }

    static HsiCube from_matrix(const Eigen::MatrixXd& y, std::int64_t h, std::int64_t w) {
        if (y.cols() != h * w) throw DimensionError("cube: matrix has " + std::to_string(y.cols()) +
                                                    " pixels, expected " + std::to_string(h * w));
        HsiCube cube(y.rows(), h, w);
        for (std::int64_t b = 0; b < y.rows(); ++b)
            for (std::int64_t j = 0; j < h * w; ++j)
                cube.data[static_cast<std::size_t>(b * h * w + j)] = y(b, j);
        return cube;
    }
};

/// B x R nonnegative spectra; column r is endmember r.
struct EndmemberMatrix {
    Eigen::MatrixXd E;
    std::vector<std::string> names;  // empty or size == R

    std::int64_t bands() const { return E.rows(); }
    std::int64_t count() const { return E.cols(); }

    void validate() const {
        if (E.size() == 0) throw DimensionError("endmembers: empty matrix");
        if (E.minCoeff() < 0.0) throw DataError("endmembers: negative entries");
        for (std::int64_t r = 0; r < E.cols(); ++r)
            if (E.col(r).norm() == 0.0)
                throw DataError("endmembers: column " + std::to_string(r) + " is all zero");
    }

    std::string name_of(std::int64_t r) const {
        if (r < static_cast<std::int64_t>(names.size()) && !names[static_cast<std::size_t>(r)].empty())
            return names[static_cast<std::size_t>(r)];
        return "em" + std::to_string(r + 1);
    }
};

/// R x H x W fractional abundance stack; same flat layout convention as HsiCube.
struct AbundanceCube {
    std::int64_t count = 0;  // R
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<double> data;

    AbundanceCube() = default;
    AbundanceCube(std::int64_t r, std::int64_t h, std::int64_t w)
        : count(r), height(h), width(w), data(static_cast<std::size_t>(r * h * w), 0.0) {
        if (r < 1 || h < 1 || w < 1) throw DimensionError("abundances: extents must be >= 1");
    }

    std::int64_t pixels() const { return height * width; }

    double& at(std::int64_t r, std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>((r * height + y) * width + x)];
    }
    double at(std::int64_t r, std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>((r * height + y) * width + x)];
    }

    Eigen::MatrixXd to_matrix() const {
        Eigen::MatrixXd a(count, pixels());
        for (std::int64_t r = 0; r < count; ++r)
            for (std::int64_t j = 0; j < pixels(); ++j)
                a(r, j) = data[static_cast<std::size_t>(r * pixels() + j)];
        return a;
    }

    static AbundanceCube from_matrix(const Eigen::MatrixXd& a, std::int64_t h, std::int64_t w) {
        if (a.cols() != h * w) throw DimensionError("abundances: matrix/pixel count mismatch");
        AbundanceCube cube(a.rows(), h, w);
        for (std::int64_t r = 0; r < a.rows(); ++r)
            for (std::int64_t j = 0; j < h * w; ++j)
                cube.data[static_cast<std::size_t>(r * h * w + j)] = a(r, j);
        return cube;
    }
};

struct AbundanceReport {
    double max_negative = 0.0;       // worst ANC violation, as a positive magnitude
    double max_sum_deviation = 0.0;  // worst |1'a - 1|

    bool pass(double tol) const { return max_negative <= tol && max_sum_deviation <= tol; }
};

/// Worst ANC violation and worst per-pixel sum deviation.
inline AbundanceReport validate(const AbundanceCube& a, double /*tol*/ = 1e-6) {
    AbundanceReport rep;
    const std::int64_t n = a.pixels();
    for (std::int64_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::int64_t r = 0; r < a.count; ++r) {
            const double v = a.data[static_cast<std::size_t>(r * n + j)];
            s += v;
            if (v < 0.0) rep.max_negative = std::max(rep.max_negative, -v);
        }
        rep.max_sum_deviation = std::max(rep.max_sum_deviation, std::abs(s - 1.0));
    }
    return rep;
}

struct NoiseSpec {
    double snr_db;
    std::uint64_t seed;
};

/// Y = E*A, plus white Gaussian noise scaled so the realized cube-level SNR is
/// exactly snr_db: 10*log10(|EA|_F^2 / |N|_F^2) = snr_db.
inline HsiCube lmm_forward(const EndmemberMatrix& em, const AbundanceCube& a,
                           std::optional<NoiseSpec> noise = std::nullopt) {
    if (em.count() != a.count)
        throw DimensionError("lmm_forward: endmember count " + std::to_string(em.count()) +
                             " vs abundance count " + std::to_string(a.count));
    Eigen::MatrixXd y = em.E * a.to_matrix();
    if (noise) {
        const double p_sig = y.squaredNorm();
        if (p_sig <= 0.0) throw DataError("lmm_forward: zero-signal cube cannot be noised at a target SNR");
        RngStream rng(noise->seed);
        Eigen::MatrixXd n(y.rows(), y.cols());
        for (std::int64_t j = 0; j < n.cols(); ++j)
            for (std::int64_t b = 0; b < n.rows(); ++b) n(b, j) = rng.normal();
        const double p_n = n.squaredNorm();
        if (p_n <= 0.0) throw NumericalError("lmm_forward: degenerate noise draw");
        const double target = p_sig / std::pow(10.0, noise->snr_db / 10.0);
        y += n * std::sqrt(target / p_n);
    }
    HsiCube cube = HsiCube::from_matrix(y, a.height, a.width);
    return cube;
}

enum class EndmemberModel { kGaussianBumps, kUserSupplied };

struct SceneConfig {
    std::int64_t B = 64;
    std::int64_t H = 32;
    std::int64_t W = 32;
    std::int64_t R = 3;
    double snr_db = 30.0;
    double dirichlet_alpha = 1.0;
    double smoothing_sigma = 0.0;  // pixels; 0 disables
    EndmemberModel endmember_model = EndmemberModel::kGaussianBumps;
    Eigen::MatrixXd user_endmembers;  // used when kUserSupplied
    std::uint64_t seed = 0;

    void validate() const {
        if (B < 1 || H < 1 || W < 1 || R < 1) throw ConfigError("scene: extents must be >= 1");
        if (snr_db <= 0.0) throw ConfigError("scene: snr_db must be positive");
        if (dirichlet_alpha <= 0.0) throw ConfigError("scene: dirichlet_alpha must be positive");
        if (smoothing_sigma < 0.0) throw ConfigError("scene: smoothing_sigma must be >= 0");
        if (endmember_model == EndmemberModel::kUserSupplied &&
            (user_endmembers.rows() != B || user_endmembers.cols() != R))
            throw ConfigError("scene: user endmembers must be B x R");
    }
};

struct Scene {
    HsiCube cube;
    EndmemberMatrix endmembers;
    AbundanceCube abundances;
};

namespace detail_mix {

/// arccos(<a,b>/(|a||b|)), evaluated through the well-conditioned
/// 2*atan2(|u-v|, |u+v|) form so identical vectors give exactly zero and
/// small angles do not lose precision to acos near 1.
inline double spectral_angle(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw DataError("spectral angle of a zero vector");
    const Eigen::VectorXd u = a / na;
    const Eigen::VectorXd v = b / nb;
    return 2.0 * std::atan2((u - v).norm(), (u + v).norm());
}

/// One endmember as 2-4 Gaussian bumps over band position, min-max scaled to [0.05, 0.9].
inline Eigen::VectorXd gaussian_bump_spectrum(std::int64_t bands, RngStream& rng) {
    const int n_bumps = 2 + static_cast<int>(rng.next_u64() % 3);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(bands);
    for (int bump = 0; bump < n_bumps; ++bump) {
        const double center = rng.uniform();
        const double width = rng.uniform(0.05, 0.2);
        const double amp = rng.uniform(0.5, 1.0);
        for (std::int64_t b = 0; b < bands; ++b) {
            const double t = bands == 1 ? 0.5 : static_cast<double>(b) / static_cast<double>(bands - 1);
            const double d = (t - center) / width;
            s[b] += amp * std::exp(-0.5 * d * d);
        }
    }
    const double lo = s.minCoeff(), hi = s.maxCoeff();
    if (hi - lo < 1e-12) return Eigen::VectorXd::Constant(bands, 0.5);
    return ((s.array() - lo) / (hi - lo) * 0.85 + 0.05).matrix();
}

/// Separable Gaussian blur with edge-renormalized kernel.
inline void smooth_plane(std::vector<double>& plane, std::int64_t h, std::int64_t w, double sigma) {
    const std::int64_t radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
    if (radius < 1) return;
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    for (std::int64_t i = -radius; i <= radius; ++i)
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));

    std::vector<double> tmp(plane.size());
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            double acc = 0.0, wsum = 0.0;
            for (std::int64_t i = -radius; i <= radius; ++i) {
                const std::int64_t xx = x + i;
                if (xx < 0 || xx >= w) continue;
                const double kv = kernel[static_cast<std::size_t>(i + radius)];
                acc += kv * plane[static_cast<std::size_t>(y * w + xx)];
                wsum += kv;
            }
            tmp[static_cast<std::size_t>(y * w + x)] = acc / wsum;
        }
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            double acc = 0.0, wsum = 0.0;
            for (std::int64_t i = -radius; i <= radius; ++i) {
                const std::int64_t yy = y + i;
                if (yy < 0 || yy >= h) continue;
                const double kv = kernel[static_cast<std::size_t>(i + radius)];
                acc += kv * tmp[static_cast<std::size_t>(yy * w + x)];
                wsum += kv;
            }
            plane[static_cast<std::size_t>(y * w + x)] = acc / wsum;
        }
}

}  // namespace detail_mix

/// Synthetic ground-truth scene: bump-model endmembers with pairwise SAD >= 5 deg,
/// per-pixel Dirichlet(alpha) abundances, optional spatial smoothing followed by
/// re-projection onto the simplex (clamp at 0, renormalize), and a noisy cube.
inline Scene synth_scene(const SceneConfig& cfg) {
    cfg.validate();
    RngStream root(cfg.seed);
    RngStream em_rng = root.split(1);
    RngStream ab_rng = root.split(2);

    constexpr double kMinAngle = 5.0 * M_PI / 180.0;
    Eigen::MatrixXd e(cfg.B, cfg.R);
    if (cfg.endmember_model == EndmemberModel::kUserSupplied) {
        e = cfg.user_endmembers;
    } else {
        int retries = 0;
        std::int64_t accepted = 0;
        while (accepted < cfg.R) {
            Eigen::VectorXd cand = detail_mix::gaussian_bump_spectrum(cfg.B, em_rng);
            bool ok = true;
            for (std::int64_t r = 0; r < accepted; ++r)
                if (detail_mix::spectral_angle(cand, e.col(r)) < kMinAngle) {
                    ok = false;
                    break;
                }
            if (ok) {
                e.col(accepted++) = cand;
            } else if (++retries > 100) {
                throw GenerationError("scene: could not reach pairwise SAD >= 5 deg after 100 retries");
            }
        }
    }
    EndmemberMatrix em;
    em.E = e;
    em.validate();

    AbundanceCube a(cfg.R, cfg.H, cfg.W);
    const std::int64_t n = a.pixels();
    for (std::int64_t j = 0; j < n; ++j) {
        const auto draw = ab_rng.dirichlet(cfg.dirichlet_alpha, static_cast<int>(cfg.R));
        for (std::int64_t r = 0; r < cfg.R; ++r)
            a.data[static_cast<std::size_t>(r * n + j)] = draw[static_cast<std::size_t>(r)];
    }

    if (cfg.smoothing_sigma > 0.0) {
        for (std::int64_t r = 0; r < cfg.R; ++r) {
            std::vector<double> plane(a.data.begin() + r * n, a.data.begin() + (r + 1) * n);
            detail_mix::smooth_plane(plane, cfg.H, cfg.W, cfg.smoothing_sigma);
            std::copy(plane.begin(), plane.end(), a.data.begin() + r * n);
        }
        // Re-project onto the simplex so ANC/ASC hold exactly.
        for (std::int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::int64_t r = 0; r < cfg.R; ++r) {
                double& v = a.data[static_cast<std::size_t>(r * n + j)];
                if (v < 0.0) v = 0.0;
                s += v;
            }
            if (s <= 0.0) {
                for (std::int64_t r = 0; r < cfg.R; ++r)
                    a.data[static_cast<std::size_t>(r * n + j)] = 1.0 / static_cast<double>(cfg.R);
            } else {
                for (std::int64_t r = 0; r < cfg.R; ++r)
                    a.data[static_cast<std::size_t>(r * n + j)] /= s;
            }
        }
    }

    Scene scene;
    scene.cube = lmm_forward(em, a, NoiseSpec{cfg.snr_db, root.split(3).seed()});
    scene.endmembers = std::move(em);
    scene.abundances = std::move(a);
    return scene;
}

}  // namespace unmix

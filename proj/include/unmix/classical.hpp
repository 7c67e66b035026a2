#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "unmix/errors.hpp"
#include "unmix/mixing.hpp"
#include "unmix/rng.hpp"

namespace unmix {

/// Bijection on {0..R-1}. map[i] is the estimate column matched to reference column i.
struct Permutation {
    std::vector<std::int64_t> map;

    void validate() const {
        std::vector<bool> seen(map.size(), false);
        for (auto v : map) {
            if (v < 0 || v >= static_cast<std::int64_t>(map.size()) || seen[static_cast<std::size_t>(v)])
                throw ContractError("permutation: mapping is not a bijection");
            seen[static_cast<std::size_t>(v)] = true;
        }
    }
};

namespace detail_cls {

/// Columns of the top-`k` eigenvector basis of a symmetric PSD matrix,
/// ordered by decreasing eigenvalue.
inline Eigen::MatrixXd top_eigvecs(const Eigen::MatrixXd& sym, std::int64_t k) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    const std::int64_t b = sym.rows();
    Eigen::MatrixXd u(b, k);
    for (std::int64_t i = 0; i < k; ++i) u.col(i) = es.eigenvectors().col(b - 1 - i);
    return u;
}

inline std::int64_t numerical_rank(const Eigen::MatrixXd& sym) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
    if (lmax <= 0.0) return 0;
    std::int64_t rank = 0;
    for (std::int64_t i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()[i] > lmax * 1e-10) ++rank;
    return rank;
}

}  // namespace detail_cls

struct VcaResult {
    EndmemberMatrix endmembers;
    std::vector<std::int64_t> indices;  // chosen pixel columns of Y
};

/// Vertex component analysis over Y in R^{B x n}. Estimates the SNR, picks the
/// projective (d = R) or lifted affine (d = R-1 plus a constant component)
/// representation against the threshold SNR_th = 15 + 10*log10(R) dB, then
/// iteratively selects the pixel with the largest |projection| onto a random
/// direction orthogonal to the span of the picks so far. Returns the selected
/// columns of Y, clamped at zero.
inline VcaResult vca(const Eigen::MatrixXd& y, std::int64_t r, std::uint64_t seed) {
    const std::int64_t b = y.rows(), n = y.cols();
    if (r < 2) throw ConfigError("vca: need R >= 2");
    if (n < r) throw DataError("vca: fewer pixels than endmembers");
    if (b < r) throw DataError("vca: fewer bands than endmembers");
    if (!y.allFinite()) throw DataError("vca: non-finite values in Y");

    const double nf = static_cast<double>(n);
    const Eigen::VectorXd y_mean = y.rowwise().mean();
    const Eigen::MatrixXd y0 = y.colwise() - y_mean;
    const Eigen::MatrixXd cov0 = (y0 * y0.transpose()) / nf;
    const Eigen::MatrixXd cov_raw = (y * y.transpose()) / nf;

    if (detail_cls::numerical_rank(cov_raw) < r - 1)
        throw DataError("vca: data rank " + std::to_string(detail_cls::numerical_rank(cov_raw)) +
                        " is below R-1 = " + std::to_string(r - 1) + ", degenerate input");

    // SNR estimate from the energy captured by the R-dimensional signal subspace.
    const Eigen::MatrixXd ud_snr = detail_cls::top_eigvecs(cov0, std::min(r, b));
    const Eigen::MatrixXd xp_snr = ud_snr.transpose() * y0;
    const double p_y = y.squaredNorm() / nf;
    const double p_x = xp_snr.squaredNorm() / nf + y_mean.squaredNorm();
    double snr_est;
    if (p_y - p_x <= std::numeric_limits<double>::epsilon() * p_y)
        snr_est = std::numeric_limits<double>::infinity();
    else
        snr_est = 10.0 * std::log10(std::max(0.0, p_x - (static_cast<double>(r) / b) * p_y) /
                                    (p_y - p_x));
    const double snr_th = 15.0 + 10.0 * std::log10(static_cast<double>(r));

    // Build the d-dimensional working representation `proj` (columns = pixels, d = R).
    Eigen::MatrixXd proj(r, n);
    if (snr_est > snr_th) {
        const Eigen::MatrixXd ud = detail_cls::top_eigvecs(cov_raw, r);
        const Eigen::MatrixXd x = ud.transpose() * y;
        const Eigen::VectorXd u = x.rowwise().mean();
        for (std::int64_t j = 0; j < n; ++j) {
            const double denom = x.col(j).dot(u);
            if (std::abs(denom) < 1e-300) throw DataError("vca: projective scaling hit a zero denominator");
            proj.col(j) = x.col(j) / denom;
        }
    } else {
        const Eigen::MatrixXd ud = detail_cls::top_eigvecs(cov0, r - 1);
        const Eigen::MatrixXd x = ud.transpose() * y0;
        double c = 0.0;
        for (std::int64_t j = 0; j < n; ++j) c = std::max(c, x.col(j).norm());
        proj.topRows(r - 1) = x;
        proj.row(r - 1).setConstant(c);
    }

    RngStream rng(seed);
    std::vector<std::int64_t> indices;
    indices.reserve(static_cast<std::size_t>(r));
    // Span starts at the last coordinate axis; after each pick it is rebuilt
    // from the chosen projected pixels (modified Gram-Schmidt).
    std::vector<Eigen::VectorXd> basis;
    Eigen::VectorXd e_last = Eigen::VectorXd::Zero(r);
    e_last[r - 1] = 1.0;
    basis.push_back(e_last);

    for (std::int64_t i = 0; i < r; ++i) {
        Eigen::VectorXd f(r);
        for (;;) {
            for (std::int64_t kk = 0; kk < r; ++kk) f[kk] = rng.normal();
            for (const auto& q : basis) f -= q.dot(f) * q;
            const double norm = f.norm();
            if (norm > 1e-12) {
                f /= norm;
                break;
            }
        }
        const Eigen::VectorXd v = proj.transpose() * f;
        std::int64_t best = 0;
        double best_abs = -1.0;
        for (std::int64_t j = 0; j < n; ++j) {
            const double m = std::abs(v[j]);
            if (m > best_abs) {
                best_abs = m;
                best = j;
            }
        }
        indices.push_back(best);

        basis.clear();
        for (std::int64_t t = 0; t < static_cast<std::int64_t>(indices.size()); ++t) {
            Eigen::VectorXd q = proj.col(indices[static_cast<std::size_t>(t)]);
            for (const auto& prev : basis) q -= prev.dot(q) * prev;
            const double norm = q.norm();
            if (norm > 1e-12) basis.push_back(q / norm);
        }
        if (basis.empty()) basis.push_back(e_last);
    }

    VcaResult result;
    result.endmembers.E = Eigen::MatrixXd(b, r);
    for (std::int64_t i = 0; i < r; ++i)
        result.endmembers.E.col(i) = y.col(indices[static_cast<std::size_t>(i)]).cwiseMax(0.0);
    result.indices = std::move(indices);
    return result;
}

inline VcaResult vca(const HsiCube& cube, std::int64_t r, std::uint64_t seed) {
    return vca(cube.to_matrix(), r, seed);
}

/// Lawson-Hanson active-set NNLS: argmin_x |A x - b| s.t. x >= 0.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    const std::int64_t m = a.rows(), n = a.cols();
    if (b.size() != m) throw DimensionError("nnls: rhs length mismatch");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<bool> passive(static_cast<std::size_t>(n), false);
    const double tol = 10.0 * std::numeric_limits<double>::epsilon() *
                       a.cwiseAbs().colwise().sum().maxCoeff() * static_cast<double>(std::max(m, n));

    Eigen::VectorXd w = a.transpose() * (b - a * x);
    const std::int64_t max_outer = 3 * n + 30;
    for (std::int64_t outer = 0; outer < max_outer; ++outer) {
        std::int64_t t = -1;
        double wmax = tol;
        for (std::int64_t i = 0; i < n; ++i)
            if (!passive[static_cast<std::size_t>(i)] && w[i] > wmax) {
                wmax = w[i];
                t = i;
            }
        if (t < 0) break;
        passive[static_cast<std::size_t>(t)] = true;

        for (;;) {
            std::vector<std::int64_t> pidx;
            for (std::int64_t i = 0; i < n; ++i)
                if (passive[static_cast<std::size_t>(i)]) pidx.push_back(i);
            Eigen::MatrixXd ap(m, static_cast<std::int64_t>(pidx.size()));
            for (std::size_t c = 0; c < pidx.size(); ++c) ap.col(static_cast<std::int64_t>(c)) = a.col(pidx[c]);
            const Eigen::VectorXd z = ap.colPivHouseholderQr().solve(b);

            bool all_positive = true;
            for (std::int64_t i = 0; i < z.size(); ++i)
                if (z[i] <= 0.0) {
                    all_positive = false;
                    break;
                }
            if (all_positive) {
                x.setZero();
                for (std::size_t c = 0; c < pidx.size(); ++c) x[pidx[c]] = z[static_cast<std::int64_t>(c)];
                break;
            }
            double alpha = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < pidx.size(); ++c) {
                const double zc = z[static_cast<std::int64_t>(c)];
                if (zc <= 0.0) {
                    const double xc = x[pidx[c]];
                    alpha = std::min(alpha, xc / (xc - zc));
                }
            }
            for (std::size_t c = 0; c < pidx.size(); ++c)
                x[pidx[c]] += alpha * (z[static_cast<std::int64_t>(c)] - x[pidx[c]]);
            for (std::size_t c = 0; c < pidx.size(); ++c)
                if (x[pidx[c]] <= tol) {
                    x[pidx[c]] = 0.0;
                    passive[static_cast<std::size_t>(pidx[c])] = false;
                }
        }
        w = a.transpose() * (b - a * x);
    }
    return x;
}

/// Fully constrained least squares per pixel: NNLS on the augmented system
/// [delta*1'; E], [delta; y] with delta = 1e3 * max|E|, then exact
/// renormalization to unit sum.
inline Eigen::MatrixXd fclsu_matrix(const Eigen::MatrixXd& y, const Eigen::MatrixXd& e) {
    const std::int64_t b = e.rows(), r = e.cols(), n = y.cols();
    if (y.rows() != b) throw DimensionError("fclsu: band count mismatch, Y has " +
                                            std::to_string(y.rows()) + ", E has " + std::to_string(b));
    if (Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(e).rank() < r)
        throw NumericalError("fclsu: endmember matrix is rank deficient");

    const double delta = 1e3 * e.cwiseAbs().maxCoeff();
    Eigen::MatrixXd aug(b + 1, r);
    aug.row(0).setConstant(delta);
    aug.bottomRows(b) = e;

    Eigen::MatrixXd a(r, n);
    Eigen::VectorXd rhs(b + 1);
    for (std::int64_t j = 0; j < n; ++j) {
        rhs[0] = delta;
        rhs.tail(b) = y.col(j);
        Eigen::VectorXd sol = nnls(aug, rhs);
        const double s = sol.sum();
        if (s <= 0.0) throw NumericalError("fclsu: zero solution at pixel " + std::to_string(j) +
                                           " (conditioning failure)");
        a.col(j) = sol / s;
    }
    return a;
}

inline AbundanceCube fclsu(const HsiCube& cube, const EndmemberMatrix& em) {
    return AbundanceCube::from_matrix(fclsu_matrix(cube.to_matrix(), em.E), cube.height, cube.width);
}

/// Spectral angle in radians, scale invariant, cosine clamped to [-1, 1].
inline double spectral_angle(const Eigen::VectorXd& s, const Eigen::VectorXd& s_hat) {
    return detail_mix::spectral_angle(s, s_hat);
}

/// Permutation minimizing mean SAD over columns, exhaustive over R! (R <= 8).
inline Permutation match_endmembers(const EndmemberMatrix& e_hat, const EndmemberMatrix& e_ref) {
    const std::int64_t r = e_ref.count();
    if (e_hat.count() != r)
        throw DimensionError("match_endmembers: column counts disagree");
    if (e_hat.bands() != e_ref.bands())
        throw DimensionError("match_endmembers: band counts disagree");
    if (r > 8) throw ConfigError("match_endmembers: exhaustive matching supports R <= 8");

    Eigen::MatrixXd angles(r, r);  // angles(i, j) = angle(ref_i, hat_j)
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < r; ++j)
            angles(i, j) = spectral_angle(e_ref.E.col(i), e_hat.E.col(j));

    std::vector<std::int64_t> perm(static_cast<std::size_t>(r));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<std::int64_t> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (std::int64_t i = 0; i < r; ++i) cost += angles(i, perm[static_cast<std::size_t>(i)]);
        if (cost < best_cost) {
            best_cost = cost;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    Permutation p{std::move(best)};
    p.validate();
    return p;
}

inline EndmemberMatrix apply_permutation(const EndmemberMatrix& e, const Permutation& p) {
    EndmemberMatrix out;
    out.E.resize(e.bands(), e.count());
    out.names.resize(static_cast<std::size_t>(e.count()));
    for (std::int64_t i = 0; i < e.count(); ++i) {
        out.E.col(i) = e.E.col(p.map[static_cast<std::size_t>(i)]);
        out.names[static_cast<std::size_t>(i)] = e.name_of(p.map[static_cast<std::size_t>(i)]);
    }
    return out;
}

inline AbundanceCube apply_permutation(const AbundanceCube& a, const Permutation& p) {
    AbundanceCube out(a.count, a.height, a.width);
    const std::int64_t n = a.pixels();
    for (std::int64_t i = 0; i < a.count; ++i)
        std::copy(a.data.begin() + p.map[static_cast<std::size_t>(i)] * n,
                  a.data.begin() + (p.map[static_cast<std::size_t>(i)] + 1) * n,
                  out.data.begin() + i * n);
    return out;
}

struct RmseReport {
    std::vector<double> per_endmember;
    double overall = 0.0;
};

/// Root mean squared abundance error; overall over R*H*W, per slice over H*W.
inline RmseReport rmse(const AbundanceCube& a_hat, const AbundanceCube& a_ref) {
    if (a_hat.count != a_ref.count || a_hat.height != a_ref.height || a_hat.width != a_ref.width)
        throw DimensionError("rmse: abundance shapes disagree");
    RmseReport rep;
    const std::int64_t n = a_ref.pixels();
    double total = 0.0;
    for (std::int64_t r = 0; r < a_ref.count; ++r) {
        double s = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            const double d = a_hat.data[static_cast<std::size_t>(r * n + j)] -
                             a_ref.data[static_cast<std::size_t>(r * n + j)];
            s += d * d;
        }
        total += s;
        rep.per_endmember.push_back(std::sqrt(s / static_cast<double>(n)));
    }
    rep.overall = std::sqrt(total / static_cast<double>(a_ref.count * n));
    return rep;
}

struct SadReport {
    std::vector<double> per_endmember;  // radians
    double mean = 0.0;
};

/// Spectral angle distance per endmember column plus the mean, in radians.
inline SadReport sad(const EndmemberMatrix& e_hat, const EndmemberMatrix& e_ref) {
    if (e_hat.count() != e_ref.count() || e_hat.bands() != e_ref.bands())
        throw DimensionError("sad: endmember shapes disagree");
    SadReport rep;
    double total = 0.0;
    for (std::int64_t r = 0; r < e_ref.count(); ++r) {
        const double ang = spectral_angle(e_ref.E.col(r), e_hat.E.col(r));
        rep.per_endmember.push_back(ang);
        total += ang;
    }
    rep.mean = total / static_cast<double>(e_ref.count());
    return rep;
}

}  // namespace unmix

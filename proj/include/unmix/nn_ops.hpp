#pragma once

#include <cmath>
#include <vector>

#include "unmix/tensor.hpp"

namespace unmix {

/// Per-channel running statistics plus the normalization constants.
struct BatchNormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    explicit BatchNormState(std::int64_t channels = 0, double momentum_ = 0.1, double eps_ = 1e-5)
        : running_mean(static_cast<std::size_t>(channels), 0.0),
          running_var(static_cast<std::size_t>(channels), 1.0),
          momentum(momentum_),
          eps(eps_) {
        if (eps <= 0.0) throw ConfigError("batch norm: eps must be positive");
    }

    std::int64_t channels() const { return static_cast<std::int64_t>(running_mean.size()); }
};

/// Cross-correlation with zero padding. x [Cin x H x W], w [Cout x Cin x k x k],
/// bias [Cout] or undefined. Kernel size limited to what the model uses.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::int64_t stride,
                     std::int64_t padding) {
    if (x.rank() != 3 || w.rank() != 4)
        throw DimensionError("conv2d: x must be [CxHxW], w [OxCxkxk]; got " + shape_str(x.shape()) +
                             ", " + shape_str(w.shape()));
    const std::int64_t cin = x.dim(0), h = x.dim(1), ww = x.dim(2);
    const std::int64_t cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin)
        throw DimensionError("conv2d: input channels " + std::to_string(cin) + " vs kernel " +
                             std::to_string(w.dim(1)));
    if (w.dim(3) != k) throw DimensionError("conv2d: kernel must be square");
    if (k != 1 && k != 3) throw ConfigError("conv2d: kernel size must be 1 or 3");
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
    if ((h + 2 * padding - k) % stride != 0 || (ww + 2 * padding - k) % stride != 0)
        throw ConfigError("conv2d: non-integral output size for input " + shape_str(x.shape()) +
                          ", k=" + std::to_string(k) + ", stride=" + std::to_string(stride) +
                          ", padding=" + std::to_string(padding));
    const std::int64_t oh = (h + 2 * padding - k) / stride + 1;
    const std::int64_t ow = (ww + 2 * padding - k) / stride + 1;
    if (oh <= 0 || ow <= 0) throw ConfigError("conv2d: empty output");
    const bool with_bias = bias.defined();
    if (with_bias && (bias.rank() != 1 || bias.dim(0) != cout))
        throw DimensionError("conv2d: bias must be [Cout]");

    bool rg = with_bias ? detail::grad_wanted({&x, &w, &bias}) : detail::grad_wanted({&x, &w});
    Tensor out = Tensor::zeros({cout, oh, ow}, rg);
    const double* xd = x.data().data();
    const double* wd = w.data().data();
    double* od = out.data().data();
    // Kernel-outer, spatial-inner ordering keeps both buffers streaming.
    for (std::int64_t co = 0; co < cout; ++co) {
        const double b0 = with_bias ? bias.data()[static_cast<std::size_t>(co)] : 0.0;
        double* oc = od + co * oh * ow;
        for (std::int64_t i = 0; i < oh * ow; ++i) oc[i] = b0;
        for (std::int64_t ci = 0; ci < cin; ++ci)
            for (std::int64_t ky = 0; ky < k; ++ky)
                for (std::int64_t kx = 0; kx < k; ++kx) {
                    const double wv = wd[((co * cin + ci) * k + ky) * k + kx];
                    for (std::int64_t oy = 0; oy < oh; ++oy) {
                        const std::int64_t iy = oy * stride + ky - padding;
                        if (iy < 0 || iy >= h) continue;
                        const double* xrow = xd + (ci * h + iy) * ww;
                        double* orow = oc + oy * ow;
                        for (std::int64_t ox = 0; ox < ow; ++ox) {
                            const std::int64_t ix = ox * stride + kx - padding;
                            if (ix < 0 || ix >= ww) continue;
                            orow[ox] += wv * xrow[ix];
                        }
                    }
                }
    }
    if (out.requires_grad()) {
        auto back = [x, w, bias, with_bias, cin, h, ww, cout, k, stride, padding, oh,
                     ow](const detail::TensorImpl& o) {
            const double* go = o.grad.data();
            if (x.requires_grad()) x.impl()->ensure_grad();
            if (w.requires_grad()) w.impl()->ensure_grad();
            double* gx = x.requires_grad() ? x.impl()->grad.data() : nullptr;
            double* gw = w.requires_grad() ? w.impl()->grad.data() : nullptr;
            const double* xd = x.data().data();
            const double* wd = w.data().data();
            for (std::int64_t co = 0; co < cout; ++co) {
                const double* gc = go + co * oh * ow;
                for (std::int64_t ci = 0; ci < cin; ++ci)
                    for (std::int64_t ky = 0; ky < k; ++ky)
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::size_t wi = static_cast<std::size_t>(((co * cin + ci) * k + ky) * k + kx);
                            const double wv = wd[wi];
                            double gw_acc = 0.0;
                            for (std::int64_t oy = 0; oy < oh; ++oy) {
                                const std::int64_t iy = oy * stride + ky - padding;
                                if (iy < 0 || iy >= h) continue;
                                const double* xrow = xd + (ci * h + iy) * ww;
                                double* gxrow = gx ? gx + (ci * h + iy) * ww : nullptr;
                                const double* grow = gc + oy * ow;
                                for (std::int64_t ox = 0; ox < ow; ++ox) {
                                    const std::int64_t ix = ox * stride + kx - padding;
                                    if (ix < 0 || ix >= ww) continue;
                                    const double gv = grow[ox];
                                    if (gxrow) gxrow[ix] += gv * wv;
                                    gw_acc += gv * xrow[ix];
                                }
                            }
                            if (gw) gw[wi] += gw_acc;
                        }
            }
            if (with_bias && bias.requires_grad()) {
                bias.impl()->ensure_grad();
                double* gb = bias.impl()->grad.data();
                for (std::int64_t co = 0; co < cout; ++co) {
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < oh * ow; ++i) acc += go[co * oh * ow + i];
                    gb[co] += acc;
                }
            }
        };
        if (with_bias)
            detail::attach(out, "conv2d", {x, w, bias}, back);
        else
            detail::attach(out, "conv2d", {x, w}, back);
    }
    return out;
}

/// Batch normalization over the spatial extent of each channel. In training
/// mode the batch statistics feed the graph and, if update_stats, the running
/// buffers; eval mode normalizes with the stored running statistics.
inline Tensor batch_norm2d(const Tensor& x, const Tensor& scale, const Tensor& shift,
                           BatchNormState& state, bool training, bool update_stats = true) {
    if (x.rank() != 3) throw DimensionError("batch_norm2d: x must be [CxHxW], got " + shape_str(x.shape()));
    const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (state.channels() != c || scale.dim(0) != c || shift.dim(0) != c)
        throw DimensionError("batch_norm2d: channel mismatch, x has " + std::to_string(c) + ", state has " +
                             std::to_string(state.channels()));
    const std::int64_t m = h * w;
    const double eps = state.eps;

    std::vector<double> mu(static_cast<std::size_t>(c)), var(static_cast<std::size_t>(c));
    if (training) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            const double* xc = x.data().data() + ci * m;
            double s = 0.0;
            for (std::int64_t i = 0; i < m; ++i) s += xc[i];
            mu[ci] = s / static_cast<double>(m);
            double v = 0.0;
            for (std::int64_t i = 0; i < m; ++i) {
                const double d = xc[i] - mu[ci];
                v += d * d;
            }
            var[ci] = v / static_cast<double>(m);
        }
        if (update_stats) {
            for (std::int64_t ci = 0; ci < c; ++ci) {
                state.running_mean[ci] = (1.0 - state.momentum) * state.running_mean[ci] + state.momentum * mu[ci];
                state.running_var[ci] = (1.0 - state.momentum) * state.running_var[ci] + state.momentum * var[ci];
            }
        }
    } else {
        mu = state.running_mean;
        var = state.running_var;
    }

    Tensor out = Tensor::zeros(x.shape(), detail::grad_wanted({&x, &scale, &shift}));
    for (std::int64_t ci = 0; ci < c; ++ci) {
        const double inv = 1.0 / std::sqrt(var[ci] + eps);
        const double g0 = scale.data()[static_cast<std::size_t>(ci)];
        const double b0 = shift.data()[static_cast<std::size_t>(ci)];
        const double* xc = x.data().data() + ci * m;
        double* oc = out.data().data() + ci * m;
        for (std::int64_t i = 0; i < m; ++i) oc[i] = g0 * (xc[i] - mu[ci]) * inv + b0;
    }
    if (out.requires_grad()) {
        detail::attach(out, "batch_norm2d", {x, scale, shift},
                       [x, scale, shift, mu, var, c, m, eps, training](const detail::TensorImpl& o) {
                           const double* go = o.grad.data();
                           const double* xd = x.data().data();
                           for (std::int64_t ci = 0; ci < c; ++ci) {
                               const double inv = 1.0 / std::sqrt(var[ci] + eps);
                               const double g0 = scale.data()[static_cast<std::size_t>(ci)];
                               const double* xc = xd + ci * m;
                               const double* gc = go + ci * m;
                               double sum_g = 0.0, sum_gx = 0.0;
                               for (std::int64_t i = 0; i < m; ++i) {
                                   sum_g += gc[i];
                                   sum_gx += gc[i] * (xc[i] - mu[ci]) * inv;
                               }
                               if (scale.requires_grad()) {
                                   scale.impl()->ensure_grad();
                                   scale.impl()->grad[ci] += sum_gx;
                               }
                               if (shift.requires_grad()) {
                                   shift.impl()->ensure_grad();
                                   shift.impl()->grad[ci] += sum_g;
                               }
                               if (x.requires_grad()) {
                                   x.impl()->ensure_grad();
                                   double* gx = x.impl()->grad.data() + ci * m;
                                   if (training) {
                                       const double mf = static_cast<double>(m);
                                       for (std::int64_t i = 0; i < m; ++i) {
                                           const double xhat = (xc[i] - mu[ci]) * inv;
                                           gx[i] += g0 * inv * (gc[i] - sum_g / mf - xhat * sum_gx / mf);
                                       }
                                   } else {
                                       for (std::int64_t i = 0; i < m; ++i) gx[i] += g0 * inv * gc[i];
                                   }
                               }
                           }
                       });
    }
    return out;
}

/// Per-row normalization over the last axis with learned scale/shift.
inline Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift, double eps = 1e-5) {
    const std::int64_t d = x.shape().back();
    if (scale.dim(0) != d || shift.dim(0) != d)
        throw DimensionError("layer_norm: params sized " + std::to_string(scale.dim(0)) +
                             " but last axis is " + std::to_string(d));
    const std::int64_t rows = x.size() / d;
    Tensor out = Tensor::zeros(x.shape(), detail::grad_wanted({&x, &scale, &shift}));
    std::vector<double> mu(static_cast<std::size_t>(rows)), inv(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * d;
        double s = 0.0;
        for (std::int64_t i = 0; i < d; ++i) s += xr[i];
        const double m = s / static_cast<double>(d);
        double v = 0.0;
        for (std::int64_t i = 0; i < d; ++i) {
            const double dd = xr[i] - m;
            v += dd * dd;
        }
        mu[r] = m;
        inv[r] = 1.0 / std::sqrt(v / static_cast<double>(d) + eps);
        double* orow = out.data().data() + r * d;
        for (std::int64_t i = 0; i < d; ++i)
            orow[i] = scale.data()[static_cast<std::size_t>(i)] * (xr[i] - m) * inv[r] +
                      shift.data()[static_cast<std::size_t>(i)];
    }
    if (out.requires_grad()) {
        detail::attach(out, "layer_norm", {x, scale, shift},
                       [x, scale, shift, mu, inv, rows, d](const detail::TensorImpl& o) {
                           const double* go = o.grad.data();
                           const double* xd = x.data().data();
                           const double df = static_cast<double>(d);
                           for (std::int64_t r = 0; r < rows; ++r) {
                               const double* xr = xd + r * d;
                               const double* gr = go + r * d;
                               double sum_g = 0.0, sum_gx = 0.0;
                               for (std::int64_t i = 0; i < d; ++i) {
                                   const double xhat = (xr[i] - mu[r]) * inv[r];
                                   const double gg = gr[i] * scale.data()[static_cast<std::size_t>(i)];
                                   sum_g += gg;
                                   sum_gx += gg * xhat;
                               }
                               if (x.requires_grad()) {
                                   x.impl()->ensure_grad();
                                   double* gx = x.impl()->grad.data() + r * d;
                                   for (std::int64_t i = 0; i < d; ++i) {
                                       const double xhat = (xr[i] - mu[r]) * inv[r];
                                       const double gg = gr[i] * scale.data()[static_cast<std::size_t>(i)];
                                       gx[i] += inv[r] * (gg - sum_g / df - xhat * sum_gx / df);
                                   }
                               }
                               if (scale.requires_grad()) {
                                   scale.impl()->ensure_grad();
                                   double* gs = scale.impl()->grad.data();
                                   for (std::int64_t i = 0; i < d; ++i)
                                       gs[i] += gr[i] * (xr[i] - mu[r]) * inv[r];
                               }
                               if (shift.requires_grad()) {
                                   shift.impl()->ensure_grad();
                                   double* gb = shift.impl()->grad.data();
                                   for (std::int64_t i = 0; i < d; ++i) gb[i] += gr[i];
                               }
                           }
                       });
    }
    return out;
}

/// Max-subtracted softmax along `axis`. Slices along the axis sum to one.
inline Tensor softmax(const Tensor& x, int axis) {
    if (axis < 0 || axis >= x.rank())
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                             shape_str(x.shape()));
    const auto& sh = x.shape();
    const std::int64_t len = sh[static_cast<std::size_t>(axis)];
    std::int64_t inner = 1, outer = 1;
    for (int i = axis + 1; i < x.rank(); ++i) inner *= sh[static_cast<std::size_t>(i)];
    for (int i = 0; i < axis; ++i) outer *= sh[static_cast<std::size_t>(i)];

    Tensor out = Tensor::zeros(x.shape(), detail::grad_wanted({&x}));
    const double* xd = x.data().data();
    double* od = out.data().data();
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * len * inner + in;
            double mx = xd[base];
            for (std::int64_t l = 1; l < len; ++l) mx = std::max(mx, xd[base + l * inner]);
            double denom = 0.0;
            for (std::int64_t l = 0; l < len; ++l) {
                const double e = std::exp(xd[base + l * inner] - mx);
                od[base + l * inner] = e;
                denom += e;
            }
            for (std::int64_t l = 0; l < len; ++l) od[base + l * inner] /= denom;
        }
    if (out.requires_grad()) {
        detail::attach(out, "softmax", {x}, [x, len, inner, outer](const detail::TensorImpl& o) {
            x.impl()->ensure_grad();
            double* gx = x.impl()->grad.data();
            const double* y = o.data.data();
            const double* go = o.grad.data();
            for (std::int64_t ou = 0; ou < outer; ++ou)
                for (std::int64_t in = 0; in < inner; ++in) {
                    const std::int64_t base = ou * len * inner + in;
                    double dot = 0.0;
                    for (std::int64_t l = 0; l < len; ++l) dot += go[base + l * inner] * y[base + l * inner];
                    for (std::int64_t l = 0; l < len; ++l) {
                        const std::int64_t ix = base + l * inner;
                        gx[ix] += y[ix] * (go[ix] - dot);
                    }
                }
        });
    }
    return out;
}

inline Tensor leaky_relu(const Tensor& x, double slope) {
    Tensor out = Tensor::zeros(x.shape(), detail::grad_wanted({&x}));
    for (std::size_t i = 0; i < x.data().size(); ++i) {
        const double v = x.data()[i];
        out.data()[i] = v >= 0.0 ? v : slope * v;
    }
    if (out.requires_grad()) {
        detail::attach(out, "leaky_relu", {x}, [x, slope](const detail::TensorImpl& o) {
            x.impl()->ensure_grad();
            auto& g = x.impl()->grad;
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                g[i] += o.grad[i] * (x.data()[i] >= 0.0 ? 1.0 : slope);
        });
    }
    return out;
}

/// Exact (erf-based) GELU.
inline Tensor gelu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape(), detail::grad_wanted({&x}));
    constexpr double kInvSqrt2 = 0.7071067811865476;
    for (std::size_t i = 0; i < x.data().size(); ++i) {
        const double v = x.data()[i];
        out.data()[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    if (out.requires_grad()) {
        detail::attach(out, "gelu", {x}, [x](const detail::TensorImpl& o) {
            x.impl()->ensure_grad();
            auto& g = x.impl()->grad;
            constexpr double kInvSqrt2 = 0.7071067811865476;
            constexpr double kInvSqrt2Pi = 0.3989422804014327;
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                const double v = x.data()[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                g[i] += o.grad[i] * (cdf + v * pdf);
            }
        });
    }
    return out;
}

/// Inverted dropout: survivors scaled by 1/(1-rate); identity in eval mode.
/// The mask is drawn from `rng` at op construction and reused by backward.
inline Tensor dropout(const Tensor& x, double rate, bool training, RngStream& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<std::uint8_t>>(x.data().size());
    Tensor out = Tensor::zeros(x.shape(), detail::grad_wanted({&x}));
    for (std::size_t i = 0; i < x.data().size(); ++i) {
        const bool keep = rng.uniform() >= rate;
        (*mask)[i] = keep ? 1 : 0;
        out.data()[i] = keep ? x.data()[i] * keep_scale : 0.0;
    }
    if (out.requires_grad()) {
        detail::attach(out, "dropout", {x}, [x, mask, keep_scale](const detail::TensorImpl& o) {
            x.impl()->ensure_grad();
            auto& g = x.impl()->grad;
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                if ((*mask)[i]) g[i] += o.grad[i] * keep_scale;
        });
    }
    return out;
}

/// Row-wise 1-D linear interpolation [R x L] -> [R x Lout], endpoints aligned.
/// Lout == L is the identity; L == 1 broadcasts the single sample.
inline Tensor upsample_linear_rows(const Tensor& x, std::int64_t lout) {
    if (x.rank() != 2) throw DimensionError("upsample_linear_rows: rank-2 only");
    const std::int64_t r = x.dim(0), l = x.dim(1);
    if (lout < 1) throw ConfigError("upsample_linear_rows: target length must be >= 1");
    Tensor out = Tensor::zeros({r, lout}, detail::grad_wanted({&x}));
    // Precompute the source index pair and weight per output column.
    std::vector<std::int64_t> i0(static_cast<std::size_t>(lout));
    std::vector<double> w1(static_cast<std::size_t>(lout));
    for (std::int64_t j = 0; j < lout; ++j) {
        if (l == 1 || lout == 1) {
            i0[j] = 0;
            w1[j] = 0.0;
        } else {
            const double t = static_cast<double>(j) * static_cast<double>(l - 1) /
                             static_cast<double>(lout - 1);
            std::int64_t lo = static_cast<std::int64_t>(std::floor(t));
            if (lo >= l - 1) lo = l - 2;
            i0[j] = lo;
            w1[j] = t - static_cast<double>(lo);
        }
    }
    for (std::int64_t ri = 0; ri < r; ++ri) {
        const double* xr = x.data().data() + ri * l;
        double* orow = out.data().data() + ri * lout;
        for (std::int64_t j = 0; j < lout; ++j) {
            const std::int64_t lo = i0[j];
            const double w = w1[j];
            orow[j] = (l == 1) ? xr[0] : (1.0 - w) * xr[lo] + w * xr[lo + 1];
        }
    }
    if (out.requires_grad()) {
        detail::attach(out, "upsample_linear_rows", {x},
                       [x, i0, w1, r, l, lout](const detail::TensorImpl& o) {
                           x.impl()->ensure_grad();
                           double* gx = x.impl()->grad.data();
                           for (std::int64_t ri = 0; ri < r; ++ri) {
                               const double* gr = o.grad.data() + ri * lout;
                               double* gxr = gx + ri * l;
                               for (std::int64_t j = 0; j < lout; ++j) {
                                   if (l == 1) {
                                       gxr[0] += gr[j];
                                   } else {
                                       gxr[i0[j]] += gr[j] * (1.0 - w1[j]);
                                       gxr[i0[j] + 1] += gr[j] * w1[j];
                                   }
                               }
                           }
                       });
    }
    return out;
}

/// [H x W x C] -> [N' x D]: non-overlapping p x p blocks in row-major block
/// order, each flattened row-major over (p, p, C). D = p*p*C.
inline Tensor patchify(const Tensor& x, std::int64_t p) {
    if (x.rank() != 3) throw DimensionError("patchify: input must be [HxWxC]");
    const std::int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (p < 1 || h % p != 0 || w % p != 0)
        throw ConfigError("patchify: spatial dims " + std::to_string(h) + "x" + std::to_string(w) +
                          " not divisible by patch size " + std::to_string(p));
    const std::int64_t gh = h / p, gw = w / p;
    const std::int64_t n = gh * gw, d = p * p * c;
    Tensor out = Tensor::zeros({n, d}, detail::grad_wanted({&x}));
    for (std::int64_t by = 0; by < gh; ++by)
        for (std::int64_t bx = 0; bx < gw; ++bx) {
            const std::int64_t t = by * gw + bx;
            for (std::int64_t dy = 0; dy < p; ++dy)
                for (std::int64_t dx = 0; dx < p; ++dx)
                    for (std::int64_t ci = 0; ci < c; ++ci)
                        out.data()[t * d + (dy * p + dx) * c + ci] =
                            x.data()[((by * p + dy) * w + (bx * p + dx)) * c + ci];
        }
    if (out.requires_grad()) {
        detail::attach(out, "patchify", {x}, [x, p, h, w, c, gh, gw, d](const detail::TensorImpl& o) {
            x.impl()->ensure_grad();
            auto& g = x.impl()->grad;
            for (std::int64_t by = 0; by < gh; ++by)
                for (std::int64_t bx = 0; bx < gw; ++bx) {
                    const std::int64_t t = by * gw + bx;
                    for (std::int64_t dy = 0; dy < p; ++dy)
                        for (std::int64_t dx = 0; dx < p; ++dx)
                            for (std::int64_t ci = 0; ci < c; ++ci)
                                g[((by * p + dy) * w + (bx * p + dx)) * c + ci] +=
                                    o.grad[t * d + (dy * p + dx) * c + ci];
                }
        });
    }
    return out;
}

/// Inverse of patchify; exact round-trip.
inline Tensor unpatchify(const Tensor& tokens, std::int64_t h, std::int64_t w, std::int64_t c,
                         std::int64_t p) {
    if (tokens.rank() != 2) throw DimensionError("unpatchify: tokens must be [N'xD]");
    if (h % p != 0 || w % p != 0) throw ConfigError("unpatchify: dims not divisible by patch size");
    const std::int64_t gh = h / p, gw = w / p, d = p * p * c;
    if (tokens.dim(0) != gh * gw || tokens.dim(1) != d)
        throw DimensionError("unpatchify: token shape " + shape_str(tokens.shape()) + " does not match " +
                             std::to_string(gh * gw) + "x" + std::to_string(d));
    Tensor out = Tensor::zeros({h, w, c}, detail::grad_wanted({&tokens}));
    for (std::int64_t by = 0; by < gh; ++by)
        for (std::int64_t bx = 0; bx < gw; ++bx) {
            const std::int64_t t = by * gw + bx;
            for (std::int64_t dy = 0; dy < p; ++dy)
                for (std::int64_t dx = 0; dx < p; ++dx)
                    for (std::int64_t ci = 0; ci < c; ++ci)
                        out.data()[((by * p + dy) * w + (bx * p + dx)) * c + ci] =
                            tokens.data()[t * d + (dy * p + dx) * c + ci];
        }
    if (out.requires_grad()) {
        detail::attach(out, "unpatchify", {tokens},
                       [tokens, p, h, w, c, gh, gw, d](const detail::TensorImpl& o) {
                           tokens.impl()->ensure_grad();
                           auto& g = tokens.impl()->grad;
                           for (std::int64_t by = 0; by < gh; ++by)
                               for (std::int64_t bx = 0; bx < gw; ++bx) {
                                   const std::int64_t t = by * gw + bx;
                                   for (std::int64_t dy = 0; dy < p; ++dy)
                                       for (std::int64_t dx = 0; dx < p; ++dx)
                                           for (std::int64_t ci = 0; ci < c; ++ci)
                                               g[t * d + (dy * p + dx) * c + ci] +=
                                                   o.grad[((by * p + dy) * w + (bx * p + dx)) * c + ci];
                               }
                       });
    }
    return out;
}

}  // namespace unmix

#pragma once

#include <string>
#include <vector>

#include "unmix/classical.hpp"
#include "unmix/mixing.hpp"
#include "unmix/nn_ops.hpp"
#include "unmix/tensor.hpp"

namespace unmix {

/// Architecture hyperparameters. D = p*p*C is the token embedding width.
struct ModelConfig {
    std::int64_t B = 0;  // input bands
    std::int64_t H = 0;
    std::int64_t W = 0;
    std::int64_t R = 0;  // endmembers
    std::int64_t C = 0;  // encoder output bands
    std::int64_t p = 0;  // patch side
    std::int64_t h_n = 8;
    std::int64_t n_encoders = 2;
    std::int64_t mlp_ratio = 4;
    double dropout_rate = 0.2;
    double leaky_slope = 0.01;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    double ln_eps = 1e-5;

    std::int64_t embed_dim() const { return p * p * C; }
    std::int64_t patch_count() const { return (H / p) * (W / p); }  // N'
    std::int64_t token_count() const { return patch_count() + 1; }  // N

    void validate() const {
        if (B < 1 || H < 1 || W < 1 || R < 1 || C < 1 || p < 1)
            throw ConfigError("model: all extents must be >= 1");
        if (H % p != 0 || W % p != 0)
            throw ConfigError("model: image " + std::to_string(H) + "x" + std::to_string(W) +
                              " is not divisible by patch size " + std::to_string(p) +
                              " (refusing to crop)");
        const std::int64_t d = embed_dim();
        if (d % R != 0)
            throw ConfigError("model: embedding dim D=" + std::to_string(d) +
                              " is not divisible by R=" + std::to_string(R));
        if (d % h_n != 0)
            throw ConfigError("model: embedding dim D=" + std::to_string(d) +
                              " is not divisible by h_n=" + std::to_string(h_n));
        if (n_encoders < 1) throw ConfigError("model: n_encoders must be >= 1");
        if (mlp_ratio < 1) throw ConfigError("model: mlp_ratio must be >= 1");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ConfigError("model: dropout rate must be in [0,1)");
    }
};

struct ConvBnLayer {
    Tensor w;         // [Cout x Cin x 1 x 1]
    Tensor b;         // [Cout]
    Tensor bn_scale;  // [Cout]
    Tensor bn_shift;  // [Cout]
    BatchNormState bn;
};

struct TransformerBlock {
    Tensor ln1_scale, ln1_shift;        // pre-attention LN
    Tensor wq, wk, wv;                  // [D x D], applied as x.W^T
    Tensor wl;                          // [D x D], applied as x.W
    Tensor ln2_scale, ln2_shift;        // pre-MLP LN
    Tensor mlp_w1, mlp_b1;              // [4D x D], [4D]
    Tensor mlp_w2, mlp_b2;              // [D x 4D], [D]
};

struct ParamRef {
    std::string name;
    Tensor tensor;
    bool decay = true;  // BN/LN scale and shift are excluded from weight decay
};

struct ModelParams {
    ConvBnLayer enc1, enc2, enc3;
    Tensor cls_token;  // [1 x D]
    Tensor pos_token;  // [N x D]
    std::vector<TransformerBlock> blocks;
    Tensor head_w, head_b;  // [R x R x 3 x 3], [R]
    Tensor decoder;         // [B x R], nonnegative, the learned endmembers

    std::vector<ParamRef> parameters() {
        std::vector<ParamRef> out;
        auto conv = [&out](const std::string& prefix, ConvBnLayer& l) {
            out.push_back({prefix + ".weight", l.w, true});
            out.push_back({prefix + ".bias", l.b, true});
            out.push_back({prefix + ".bn_scale", l.bn_scale, false});
            out.push_back({prefix + ".bn_shift", l.bn_shift, false});
        };
        conv("encoder.layer1", enc1);
        conv("encoder.layer2", enc2);
        conv("encoder.layer3", enc3);
        out.push_back({"cls_token", cls_token, true});
        out.push_back({"pos_token", pos_token, true});
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            auto& blk = blocks[i];
            const std::string p = "block" + std::to_string(i);
            out.push_back({p + ".ln1_scale", blk.ln1_scale, false});
            out.push_back({p + ".ln1_shift", blk.ln1_shift, false});
            out.push_back({p + ".wq", blk.wq, true});
            out.push_back({p + ".wk", blk.wk, true});
            out.push_back({p + ".wv", blk.wv, true});
            out.push_back({p + ".wl", blk.wl, true});
            out.push_back({p + ".ln2_scale", blk.ln2_scale, false});
            out.push_back({p + ".ln2_shift", blk.ln2_shift, false});
            out.push_back({p + ".mlp_w1", blk.mlp_w1, true});
            out.push_back({p + ".mlp_b1", blk.mlp_b1, true});
            out.push_back({p + ".mlp_w2", blk.mlp_w2, true});
            out.push_back({p + ".mlp_b2", blk.mlp_b2, true});
        }
        out.push_back({"head.weight", head_w, true});
        out.push_back({"head.bias", head_b, true});
        out.push_back({"decoder", decoder, true});
        return out;
    }
};

namespace detail_net {

inline Tensor fan_in_uniform(Shape shape, std::int64_t fan_in, RngStream& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), -bound, bound, rng, true);
}

inline ConvBnLayer make_conv_bn(std::int64_t cin, std::int64_t cout, const ModelConfig& cfg,
                                RngStream& rng) {
    ConvBnLayer l{Tensor(), Tensor(), Tensor(), Tensor(), BatchNormState(cout, cfg.bn_momentum, cfg.bn_eps)};
    l.w = fan_in_uniform({cout, cin, 1, 1}, cin, rng);
    l.b = fan_in_uniform({cout}, cin, rng);
    l.bn_scale = Tensor::full({cout}, 1.0, true);
    l.bn_shift = Tensor::zeros({cout}, true);
    return l;
}

}  // namespace detail_net

/// Fresh parameters; the decoder is set from `e_init` (VCA endmembers),
/// clamped nonnegative. Draw order off `rng` is fixed for determinism.
inline ModelParams init_params(const ModelConfig& cfg, const Eigen::MatrixXd& e_init, RngStream& rng) {
    cfg.validate();
    if (e_init.rows() != cfg.B || e_init.cols() != cfg.R)
        throw DimensionError("init: decoder init must be B x R, got " + std::to_string(e_init.rows()) +
                             "x" + std::to_string(e_init.cols()));
    const std::int64_t d = cfg.embed_dim();
    const std::int64_t n = cfg.token_count();
    const std::int64_t hidden = cfg.mlp_ratio * d;

    ModelParams mp;
    mp.enc1 = detail_net::make_conv_bn(cfg.B, 128, cfg, rng);
    mp.enc2 = detail_net::make_conv_bn(128, 64, cfg, rng);
    mp.enc3 = detail_net::make_conv_bn(64, cfg.C, cfg, rng);
    mp.cls_token = Tensor::normal({1, d}, 0.0, 0.02, rng, true);
    mp.pos_token = Tensor::normal({n, d}, 0.0, 0.02, rng, true);
    for (std::int64_t i = 0; i < cfg.n_encoders; ++i) {
        TransformerBlock blk;
        blk.ln1_scale = Tensor::full({d}, 1.0, true);
        blk.ln1_shift = Tensor::zeros({d}, true);
        blk.wq = detail_net::fan_in_uniform({d, d}, d, rng);
        blk.wk = detail_net::fan_in_uniform({d, d}, d, rng);
        blk.wv = detail_net::fan_in_uniform({d, d}, d, rng);
        blk.wl = detail_net::fan_in_uniform({d, d}, d, rng);
        blk.ln2_scale = Tensor::full({d}, 1.0, true);
        blk.ln2_shift = Tensor::zeros({d}, true);
        blk.mlp_w1 = detail_net::fan_in_uniform({hidden, d}, d, rng);
        blk.mlp_b1 = detail_net::fan_in_uniform({hidden}, d, rng);
        blk.mlp_w2 = detail_net::fan_in_uniform({d, hidden}, hidden, rng);
        blk.mlp_b2 = detail_net::fan_in_uniform({d}, hidden, rng);
        mp.blocks.push_back(std::move(blk));
    }
    mp.head_w = detail_net::fan_in_uniform({cfg.R, cfg.R, 3, 3}, cfg.R * 9, rng);
    mp.head_b = detail_net::fan_in_uniform({cfg.R}, cfg.R * 9, rng);

    std::vector<double> dec(static_cast<std::size_t>(cfg.B * cfg.R));
    for (std::int64_t b = 0; b < cfg.B; ++b)
        for (std::int64_t r = 0; r < cfg.R; ++r)
            dec[static_cast<std::size_t>(b * cfg.R + r)] = std::max(0.0, e_init(b, r));
    mp.decoder = Tensor::from({cfg.B, cfg.R}, std::move(dec), true);
    return mp;
}

enum class RunMode {
    kTrain,   // batch-stat BN, running-stat updates, dropout active
    kEval,    // running-stat BN, no dropout, no state mutation
    kFrozen,  // batch-stat BN without updates, no dropout (gradient checking)
};

/// Per-head attention rows recorded during a forward pass, one entry per
/// (encoder block, head), each of length N.
struct ForwardTrace {
    std::vector<std::vector<double>> attention_rows;
};

/// Three 1x1 conv layers (B -> 128 -> 64 -> C) with BN, dropout on layer 1,
/// Leaky ReLU after layers 1 and 2, then channels-last transpose to [H x W x C].
inline Tensor encode(const Tensor& cube, ModelParams& mp, const ModelConfig& cfg, RunMode mode,
                     RngStream* dropout_rng = nullptr) {
    if (cube.rank() != 3 || cube.dim(0) != cfg.B)
        throw DimensionError("encode: input must be [" + std::to_string(cfg.B) + "xHxW], got " +
                             shape_str(cube.shape()));
    const bool training = mode == RunMode::kTrain;
    const bool frozen = mode == RunMode::kFrozen;

    Tensor x = conv2d(cube, mp.enc1.w, mp.enc1.b, 1, 0);
    x = batch_norm2d(x, mp.enc1.bn_scale, mp.enc1.bn_shift, mp.enc1.bn, training || frozen, training);
    if (training) {
        if (dropout_rng == nullptr) throw ContractError("encode: training mode needs a dropout stream");
        x = dropout(x, cfg.dropout_rate, true, *dropout_rng);
    }
    x = leaky_relu(x, cfg.leaky_slope);

    x = conv2d(x, mp.enc2.w, mp.enc2.b, 1, 0);
    x = batch_norm2d(x, mp.enc2.bn_scale, mp.enc2.bn_shift, mp.enc2.bn, training || frozen, training);
    x = leaky_relu(x, cfg.leaky_slope);

    x = conv2d(x, mp.enc3.w, mp.enc3.b, 1, 0);
    x = batch_norm2d(x, mp.enc3.bn_scale, mp.enc3.bn_shift, mp.enc3.bn, training || frozen, training);
    return chw_to_hwc(x);
}

/// X' = (X_cls || X_patch) + X_pos; row 0 is the class token row.
inline Tensor embed(const Tensor& x_patch, const Tensor& x_cls, const Tensor& x_pos) {
    return add(concat_rows(x_cls, x_patch), x_pos);
}

/// One transformer encoder with Multihead Self-Patch Attention. The query
/// comes from the normalized class token only; per head the 1 x N attention
/// row mixes all tokens into the class token, the residual adds the
/// un-normalized class token, and patch rows pass through as their
/// layer-normalized selves before the MLP stage.
inline Tensor mpa_block(const Tensor& x, TransformerBlock& blk, const ModelConfig& cfg,
                        ForwardTrace* trace = nullptr) {
    const std::int64_t n = x.dim(0);
    const std::int64_t d = x.dim(1);
    if (d % cfg.h_n != 0) throw ConfigError("mpa_block: D not divisible by head count");
    const std::int64_t dh = d / cfg.h_n;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor xn = layer_norm(x, blk.ln1_scale, blk.ln1_shift, cfg.ln_eps);
    Tensor xn_cls = slice_rows(xn, 0, 1);
    Tensor q = linear(xn_cls, blk.wq);  // [1 x D]
    Tensor k = linear(xn, blk.wk);      // [N x D]
    Tensor v = linear(xn, blk.wv);      // [N x D]

    std::vector<Tensor> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(cfg.h_n));
    for (std::int64_t hd = 0; hd < cfg.h_n; ++hd) {
        Tensor qh = slice_last(q, hd * dh, dh);                    // [1 x dh]
        Tensor kh = slice_last(k, hd * dh, dh);                    // [N x dh]
        Tensor vh = slice_last(v, hd * dh, dh);                    // [N x dh]
        Tensor logits = mul_scalar(matmul(qh, transpose(kh)), scale);  // [1 x N]
        Tensor attn = softmax(logits, 1);
        if (trace != nullptr) trace->attention_rows.push_back(attn.data());
        head_outputs.push_back(matmul(attn, vh));  // [1 x dh]
    }
    Tensor mpa = concat_cols(head_outputs);  // [1 x D]

    Tensor x_cls = slice_rows(x, 0, 1);
    Tensor y_cls = add(matmul(mpa, blk.wl), x_cls);

    Tensor xn_patch = slice_rows(xn, 1, n);
    Tensor x2 = concat_rows(y_cls, xn_patch);

    Tensor x2n = layer_norm(x2, blk.ln2_scale, blk.ln2_shift, cfg.ln_eps);
    Tensor hidden = gelu(linear(x2n, blk.mlp_w1, blk.mlp_b1));
    Tensor mlp_out = linear(hidden, blk.mlp_w2, blk.mlp_b2);
    return add(x2, mlp_out);
}

/// Class token -> abundances: reshape to R x (D/R), 1-D linear upscale of each
/// row to H*W, reshape to R x H x W, 3x3 conv (stride 1, padding 1), softmax
/// along R. Output satisfies ANC/ASC by construction.
inline Tensor abundance_head(const Tensor& cls_row, ModelParams& mp, const ModelConfig& cfg) {
    const std::int64_t d = cfg.embed_dim();
    if (cls_row.size() != d)
        throw DimensionError("abundance_head: class token must have D=" + std::to_string(d) +
                             " entries, got " + shape_str(cls_row.shape()));
    if (d % cfg.R != 0) throw ConfigError("abundance_head: D not divisible by R");
    Tensor rows = reshape(cls_row, {cfg.R, d / cfg.R});
    Tensor up = upsample_linear_rows(rows, cfg.H * cfg.W);
    Tensor maps = reshape(up, {cfg.R, cfg.H, cfg.W});
    maps = conv2d(maps, mp.head_w, mp.head_b, 1, 1);
    return softmax(maps, 0);
}

/// Linear reconstruction: per pixel y = E_hat * m (a 1x1 convolution, no bias).
inline Tensor decode(const Tensor& abundances, const Tensor& decoder_w) {
    if (abundances.rank() != 3) throw DimensionError("decode: abundances must be [RxHxW]");
    const std::int64_t r = abundances.dim(0), h = abundances.dim(1), w = abundances.dim(2);
    if (decoder_w.rank() != 2 || decoder_w.dim(1) != r)
        throw DimensionError("decode: decoder weights must be [BxR] with R=" + std::to_string(r));
    Tensor a = reshape(abundances, {r, h * w});
    Tensor y = matmul(decoder_w, a);
    return reshape(y, {decoder_w.dim(0), h, w});
}

struct ForwardResult {
    Tensor reconstruction;  // [B x H x W]
    Tensor abundances;      // [R x H x W]
    Tensor endmembers;      // [B x R], the decoder weights
};

inline ForwardResult forward(const Tensor& cube, ModelParams& mp, const ModelConfig& cfg, RunMode mode,
                             RngStream* dropout_rng = nullptr, ForwardTrace* trace = nullptr) {
    Tensor features = encode(cube, mp, cfg, mode, dropout_rng);
    Tensor x_patch = patchify(features, cfg.p);
    Tensor x = embed(x_patch, mp.cls_token, mp.pos_token);
    for (auto& blk : mp.blocks) x = mpa_block(x, blk, cfg, trace);
    Tensor cls = slice_rows(x, 0, 1);
    Tensor abundances = abundance_head(cls, mp, cfg);
    Tensor reconstruction = decode(abundances, mp.decoder);
    return ForwardResult{reconstruction, abundances, mp.decoder};
}

inline Tensor cube_to_tensor(const HsiCube& cube) {
    return Tensor::from({cube.bands, cube.height, cube.width}, cube.data);
}

inline ForwardResult forward(const HsiCube& cube, ModelParams& mp, const ModelConfig& cfg, RunMode mode,
                             RngStream* dropout_rng = nullptr, ForwardTrace* trace = nullptr) {
    if (cube.bands != cfg.B || cube.height != cfg.H || cube.width != cfg.W)
        throw DimensionError("forward: cube " + std::to_string(cube.bands) + "x" +
                             std::to_string(cube.height) + "x" + std::to_string(cube.width) +
                             " does not match configured " + std::to_string(cfg.B) + "x" +
                             std::to_string(cfg.H) + "x" + std::to_string(cfg.W));
    return forward(cube_to_tensor(cube), mp, cfg, mode, dropout_rng, trace);
}

inline AbundanceCube abundances_to_cube(const Tensor& m) {
    AbundanceCube a(m.dim(0), m.dim(1), m.dim(2));
    a.data = m.data();
    return a;
}

inline EndmemberMatrix decoder_to_endmembers(const Tensor& decoder_w) {
    EndmemberMatrix em;
    em.E.resize(decoder_w.dim(0), decoder_w.dim(1));
    for (std::int64_t b = 0; b < decoder_w.dim(0); ++b)
        for (std::int64_t r = 0; r < decoder_w.dim(1); ++r)
            em.E(b, r) = decoder_w.data()[static_cast<std::size_t>(b * decoder_w.dim(1) + r)];
    return em;
}

}  // namespace unmix

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "putf/geometry.hpp"
#include "putf/ops.hpp"
#include "putf/pointcloud.hpp"
#include "putf/rng.hpp"
#include "putf/tensor.hpp"

namespace putf {

// Channel-window layout of one shifted-channel attention block. With the
// standard choice w = C'/psi and d = w/2 there are M = 2*psi - 1 windows,
// each consecutive pair overlapping by w - d channels, and the windows tile
// [0, C') exactly: (M-1)*d + w == C'.
struct ScMsaConfig {
    std::size_t c_prime = 0;
    std::size_t w = 0;        // split width
    std::size_t d = 0;        // shift interval, d <= w (d < w for shifted mode)
    std::size_t m_heads = 0;

    static ScMsaConfig shifted(std::size_t c_prime, std::size_t psi) {
        if (psi < 2) throw ConfigError("sc-msa: psi must be >= 2");
        if (c_prime % psi != 0)
            throw ConfigError("sc-msa: channels " + std::to_string(c_prime) +
                              " not divisible by psi " + std::to_string(psi));
        ScMsaConfig c;
        c.c_prime = c_prime;
        c.w = c_prime / psi;
        if (c.w % 2 != 0)
            throw ConfigError("sc-msa: split width " + std::to_string(c.w) + " must be even");
        c.d = c.w / 2;
        c.m_heads = 2 * psi - 1;
        c.validate();
        return c;
    }

    // Disjoint windows (d == w): plain multi-head attention layout.
    static ScMsaConfig disjoint(std::size_t c_prime, std::size_t heads) {
        if (heads == 0 || c_prime % heads != 0)
            throw ConfigError("msa: heads must divide channels");
        ScMsaConfig c;
        c.c_prime = c_prime;
        c.w = c_prime / heads;
        c.d = c.w;
        c.m_heads = heads;
        c.validate();
        return c;
    }

    void validate() const {
        if (w == 0 || d == 0 || d > w)
            throw ConfigError("sc-msa: need 0 < d <= w, got d=" + std::to_string(d) +
                              " w=" + std::to_string(w));
        if ((m_heads - 1) * d + w != c_prime)
            throw ConfigError("sc-msa: windows do not tile channels: (" + std::to_string(m_heads) +
                              "-1)*" + std::to_string(d) + "+" + std::to_string(w) +
                              " != " + std::to_string(c_prime));
    }

    std::size_t overlap() const { return w - d; }
    std::size_t concat_width() const { return m_heads * w; }
};

struct ModelConfig {
    std::size_t encoders = 5;
    std::vector<std::size_t> channels = {32, 64, 128, 256, 256};
    std::size_t head_channels = 16;
    std::size_t k = 20;
    std::size_t psi = 4;
    std::size_t r = 4;
    bool scaled_attention = false;  // optional 1/sqrt(w) logit scaling, off by default
    double bn_eps = 1e-5;
    double bn_momentum = 0.9;
    double ln_eps = 1e-6;
    std::string precision = "f32";

    void validate() const {
        if (encoders == 0 || channels.size() != encoders)
            throw ConfigError("config: need one channel width per encoder");
        if (head_channels == 0 || k == 0 || r == 0) throw ConfigError("config: zero field");
        for (std::size_t l = 0; l < encoders; ++l) {
            if (l > 0 && channels[l] < channels[l - 1])
                throw ConfigError("config: channel widths must be non-decreasing");
            if (channels[l] % 2 != 0)
                throw ConfigError("config: channel width " + std::to_string(channels[l]) +
                                  " must be even");
            ScMsaConfig::shifted(channels[l], psi);
        }
        if (channels.back() % r != 0)
            throw ConfigError("config: last width " + std::to_string(channels.back()) +
                              " not divisible by ratio " + std::to_string(r));
    }

    // Input feature width of encoder l.
    std::size_t channel_in(std::size_t l) const { return l == 0 ? head_channels : channels[l - 1]; }
    ScMsaConfig scmsa(std::size_t l) const { return ScMsaConfig::shifted(channels[l], psi); }

    // Default width ladder for L encoders: double from 32, capped at 256.
    static ModelConfig with_encoders(std::size_t count) {
        ModelConfig cfg;
        cfg.encoders = count;
        cfg.channels.clear();
        std::size_t c = 32;
        for (std::size_t l = 0; l < count; ++l) {
            cfg.channels.push_back(c);
            c = std::min<std::size_t>(c * 2, 256);
        }
        return cfg;
    }

    // Small everything; used by the 64-bit gradient suites.
    static ModelConfig tiny() {
        ModelConfig cfg;
        cfg.encoders = 2;
        cfg.channels = {8, 16};
        cfg.head_channels = 4;
        cfg.k = 3;
        cfg.psi = 2;
        cfg.r = 2;
        cfg.precision = "f64";
        return cfg;
    }
};

template <typename T>
struct LinearParams {
    Tensor<T> w, b;
};

template <typename T>
struct NormParams {
    Tensor<T> gamma, beta;
};

template <typename T>
struct BatchNormParams {
    Tensor<T> gamma, beta;
    Tensor<T> running_mean, running_var;  // state, not trainable
};

template <typename T>
struct PosFusionParams {
    LinearParams<T> geo;   // [6, C'/2]
    BatchNormParams<T> geo_bn;
    LinearParams<T> feat;  // [2C, C'/2]
    BatchNormParams<T> feat_bn;
};

template <typename T>
struct AttentionParams {
    LinearParams<T> q, k, v;  // [C', C']
    LinearParams<T> out;      // [M*w, C']
};

template <typename T>
struct EncoderParams {
    PosFusionParams<T> posfus;
    NormParams<T> ln1;
    AttentionParams<T> attn;
    NormParams<T> ln2;
    LinearParams<T> mlp;  // [C', C']
};

// All trainable tensors plus batch-norm running state, with a stable
// enumeration order used by the optimizer, checkpoints and reports.
template <typename T>
struct ModelParams {
    LinearParams<T> head;  // [3, head_channels]
    BatchNormParams<T> head_bn;
    std::vector<EncoderParams<T>> encoders;
    LinearParams<T> tail;  // [C_L / r, 3]

    ModelParams() = default;

    explicit ModelParams(const ModelConfig& cfg) {
        cfg.validate();
        auto lin = [](std::size_t cin, std::size_t cout) {
            return LinearParams<T>{Tensor<T>(Shape{cin, cout}), Tensor<T>(Shape{cout})};
        };
        auto bn = [](std::size_t c) {
            BatchNormParams<T> p{Tensor<T>::full(Shape{c}, T(1)), Tensor<T>(Shape{c}),
                                 Tensor<T>(Shape{c}), Tensor<T>::full(Shape{c}, T(1))};
            return p;
        };
        auto ln = [](std::size_t c) {
            return NormParams<T>{Tensor<T>::full(Shape{c}, T(1)), Tensor<T>(Shape{c})};
        };

        head = lin(3, cfg.head_channels);
        head_bn = bn(cfg.head_channels);
        for (std::size_t l = 0; l < cfg.encoders; ++l) {
            const std::size_t cin = cfg.channel_in(l);
            const std::size_t cp = cfg.channels[l];
            const ScMsaConfig sc = cfg.scmsa(l);
            EncoderParams<T> e;
            e.posfus.geo = lin(6, cp / 2);
            e.posfus.geo_bn = bn(cp / 2);
            e.posfus.feat = lin(2 * cin, cp / 2);
            e.posfus.feat_bn = bn(cp / 2);
            e.ln1 = ln(cp);
            e.attn.q = lin(cp, cp);
            e.attn.k = lin(cp, cp);
            e.attn.v = lin(cp, cp);
            e.attn.out = lin(sc.concat_width(), cp);
            e.ln2 = ln(cp);
            e.mlp = lin(cp, cp);
            encoders.push_back(std::move(e));
        }
        tail = lin(cfg.channels.back() / cfg.r, 3);
    }

    // Visits every named tensor in a fixed order; `trainable` is false for
    // batch-norm running statistics.
    template <typename Fn>
    void visit(Fn&& fn) {
        auto vis_lin = [&](const std::string& p, LinearParams<T>& l) {
            fn(p + ".w", l.w, true);
            fn(p + ".b", l.b, true);
        };
        auto vis_bn = [&](const std::string& p, BatchNormParams<T>& b) {
            fn(p + ".gamma", b.gamma, true);
            fn(p + ".beta", b.beta, true);
            fn(p + ".running_mean", b.running_mean, false);
            fn(p + ".running_var", b.running_var, false);
        };
        auto vis_ln = [&](const std::string& p, NormParams<T>& n) {
            fn(p + ".gamma", n.gamma, true);
            fn(p + ".beta", n.beta, true);
        };
        vis_lin("head", head);
        vis_bn("head.bn", head_bn);
        for (std::size_t l = 0; l < encoders.size(); ++l) {
            const std::string e = "enc" + std::to_string(l);
            vis_lin(e + ".posfus.geo", encoders[l].posfus.geo);
            vis_bn(e + ".posfus.geo.bn", encoders[l].posfus.geo_bn);
            vis_lin(e + ".posfus.feat", encoders[l].posfus.feat);
            vis_bn(e + ".posfus.feat.bn", encoders[l].posfus.feat_bn);
            vis_ln(e + ".ln1", encoders[l].ln1);
            vis_lin(e + ".attn.q", encoders[l].attn.q);
            vis_lin(e + ".attn.k", encoders[l].attn.k);
            vis_lin(e + ".attn.v", encoders[l].attn.v);
            vis_lin(e + ".attn.out", encoders[l].attn.out);
            vis_ln(e + ".ln2", encoders[l].ln2);
            vis_lin(e + ".mlp", encoders[l].mlp);
        }
        vis_lin("tail", tail);
    }

    std::vector<std::pair<std::string, Tensor<T>*>> named_tensors() {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        visit([&](const std::string& name, Tensor<T>& t, bool) { out.emplace_back(name, &t); });
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>*>> trainable_tensors() {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        visit([&](const std::string& name, Tensor<T>& t, bool trainable) {
            if (trainable) out.emplace_back(name, &t);
        });
        return out;
    }

    ModelParams clone() const {
        ModelParams copy = *this;
        copy.visit([](const std::string&, Tensor<T>& t, bool) { t = t.clone(); });
        return copy;
    }
};

// Xavier-uniform weights, zero biases, unit gamma / zero beta, deterministic
// per seed (tensor enumeration order is fixed).
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams<T> params(cfg);
    Rng rng(seed);
    params.visit([&](const std::string& name, Tensor<T>& t, bool) {
        if (name.ends_with(".w")) {
            const double s = std::sqrt(6.0 / static_cast<double>(t.dim(0) + t.dim(1)));
            for (T& x : t.values_mut()) x = static_cast<T>(rng.uniform(-s, s));
        }
        // biases stay 0, gamma 1, beta 0, running stats (0, 1)
    });
    return params;
}

struct ParamCountBlock {
    std::string block;
    std::size_t count = 0;
};

struct ParamCount {
    std::size_t total = 0;
    std::vector<ParamCountBlock> blocks;
};

// Trainable scalar count per block; a pure function of the config.
inline ParamCount param_count(const ModelConfig& cfg) {
    ModelParams<float> params(cfg);
    ParamCount out;
    auto block_of = [](const std::string& name) {
        // head | enc<l>.posfus | enc<l>.ln1 | enc<l>.attn | enc<l>.ln2 | enc<l>.mlp | tail
        auto dot = name.find('.');
        const std::string top = name.substr(0, dot);
        if (top == "head" || top == "tail") return top;
        auto rest = name.substr(dot + 1);
        return top + "." + rest.substr(0, rest.find('.'));
    };
    params.visit([&](const std::string& name, Tensor<float>& t, bool trainable) {
        if (!trainable) return;
        out.total += t.numel();
        const std::string b = block_of(name);
        if (!out.blocks.empty() && out.blocks.back().block == b)
            out.blocks.back().count += t.numel();
        else
            out.blocks.push_back({b, t.numel()});
    });
    return out;
}

// Local geometric + feature context fusion: gather each point's k neighbors,
// form [dup(x); x_j - x] for coordinates and features, push each through its
// single-layer MLP (linear + BN + ReLU) to C'/2 channels, concatenate, and
// max-pool over the neighborhood.
//
// The concatenated linear is evaluated in factored form: with W split into
// row blocks W_dup / W_rel,
//   [dup(x); x_j - x] W + b = dup(x W_dup + b) + gather(x W_rel) - dup(x W_rel),
// which turns the N*k*2C contraction into an N*2C one plus gathers.
template <typename T>
Tensor<T> fused_context_branch(const Tensor<T>& x, const NeighborIndex& nbr,
                               const LinearParams<T>& lin, BatchNormParams<T>& bn, T bn_momentum,
                               T bn_eps, bool train) {
    const std::size_t cin = x.dim(1);
    if (lin.w.dim(0) != 2 * cin)
        throw ShapeError("positional fusion: weight rows " + std::to_string(lin.w.dim(0)) +
                         " != 2 x input channels " + std::to_string(cin));
    auto w_dup = ops::slice_rows(lin.w, 0, cin);
    auto w_rel = ops::slice_rows(lin.w, cin, cin);
    auto dup_part = ops::linear(x, w_dup, lin.b);  // x W_dup + b, per point
    auto rel_part = ops::matmul(x, w_rel);         // x W_rel, gathered minus centered
    auto rel = ops::sub(ops::gather_rows(rel_part, nbr.idx, nbr.k), ops::dup_rows(rel_part, nbr.k));
    auto pre = ops::add(rel, ops::dup_rows(dup_part, nbr.k));  // N x k x C'/2
    auto normed = ops::batch_norm(pre, bn.gamma, bn.beta, bn.running_mean, bn.running_var,
                                  bn_momentum, bn_eps, train);
    return ops::relu(normed);
}

template <typename T>
Tensor<T> positional_fusion(const Tensor<T>& pts, const Tensor<T>& feat, const NeighborIndex& nbr,
                            PosFusionParams<T>& pp, const ModelConfig& cfg, bool train) {
    if (pts.dim(0) != feat.dim(0))
        throw ShapeError("positional fusion: coordinate rows " + std::to_string(pts.dim(0)) +
                         " != feature rows " + std::to_string(feat.dim(0)));
    if (nbr.n != pts.dim(0)) throw ShapeError("positional fusion: neighbor table size mismatch");
    const T mom = static_cast<T>(cfg.bn_momentum);
    const T eps = static_cast<T>(cfg.bn_eps);
    auto geo = fused_context_branch(pts, nbr, pp.geo, pp.geo_bn, mom, eps, train);
    auto fea = fused_context_branch(feat, nbr, pp.feat, pp.feat_bn, mom, eps, train);
    return ops::max_over_axis(ops::concat_lastdim<T>({geo, fea}), 1);
}

// Shifted-channel multi-head self-attention. Q/K/V are full-width linear
// projections; window m covers channels [(m-1)d, (m-1)d + w); each head runs
// softmax(Q_m K_m^T) V_m; the concatenated heads pass through a final linear.
// No logit scaling unless the config asks for it.
template <typename T>
Tensor<T> sc_msa(const Tensor<T>& input, const AttentionParams<T>& ap, const ScMsaConfig& cfg,
                 bool scaled) {
    if (input.rank() != 2 || input.dim(1) != cfg.c_prime)
        throw ShapeError("sc-msa: input " + shape_str(input.shape()) + " does not match C' " +
                         std::to_string(cfg.c_prime));
    auto q = ops::linear(input, ap.q.w, ap.q.b);
    auto k = ops::linear(input, ap.k.w, ap.k.b);
    auto v = ops::linear(input, ap.v.w, ap.v.b);
    std::vector<Tensor<T>> heads;
    heads.reserve(cfg.m_heads);
    for (std::size_t m = 0; m < cfg.m_heads; ++m) {
        const std::size_t from = m * cfg.d;
        auto qm = ops::slice_lastdim(q, from, cfg.w);
        auto km = ops::slice_lastdim(k, from, cfg.w);
        auto vm = ops::slice_lastdim(v, from, cfg.w);
        auto logits = ops::matmul(qm, ops::transpose_last2(km));
        if (scaled) logits = ops::mul_scalar(logits, T(1) / static_cast<T>(std::sqrt(double(cfg.w))));
        heads.push_back(ops::matmul(ops::softmax_lastdim(logits), vm));
    }
    return ops::linear(ops::concat_lastdim(heads), ap.out.w, ap.out.b);
}

// One encoder: G = PosFus(P, F); G' = SC-MSA(LN(G)) + G; F = MLP(LN(G')) + G'.
template <typename T>
Tensor<T> transformer_encoder(const Tensor<T>& pts, const Tensor<T>& feat_prev,
                              const NeighborIndex& nbr, EncoderParams<T>& ep,
                              const ModelConfig& cfg, std::size_t l, bool train) {
    const ScMsaConfig sc = cfg.scmsa(l);
    const T ln_eps = static_cast<T>(cfg.ln_eps);
    auto g = positional_fusion(pts, feat_prev, nbr, ep.posfus, cfg, train);
    auto attn_in = ops::layer_norm(g, ep.ln1.gamma, ep.ln1.beta, ln_eps);
    auto g2 = ops::add(sc_msa(attn_in, ep.attn, sc, cfg.scaled_attention), g);
    auto mlp_in = ops::layer_norm(g2, ep.ln2.gamma, ep.ln2.beta, ln_eps);
    return ops::add(ops::relu(ops::linear(mlp_in, ep.mlp.w, ep.mlp.b)), g2);
}

// Full pipeline on an [N, 3] coordinate tensor with a precomputed neighbor
// table (built once per cloud and reused by every encoder).
template <typename T>
Tensor<T> forward(const Tensor<T>& pts, const NeighborIndex& nbr, const ModelConfig& cfg,
                  ModelParams<T>& params, bool train) {
    if (pts.rank() != 2 || pts.dim(1) != 3)
        throw ShapeError("forward: expected [N, 3] coordinates, got " + shape_str(pts.shape()));
    if (pts.dim(0) < cfg.k)
        throw ArgumentError("forward: cloud has " + std::to_string(pts.dim(0)) +
                            " points, fewer than k = " + std::to_string(cfg.k));
    auto f = ops::relu(ops::batch_norm(ops::linear(pts, params.head.w, params.head.b),
                                       params.head_bn.gamma, params.head_bn.beta,
                                       params.head_bn.running_mean, params.head_bn.running_var,
                                       static_cast<T>(cfg.bn_momentum), static_cast<T>(cfg.bn_eps),
                                       train));
    for (std::size_t l = 0; l < cfg.encoders; ++l)
        f = transformer_encoder(pts, f, nbr, params.encoders[l], cfg, l, train);
    return ops::linear(ops::shuffle(f, cfg.r), params.tail.w, params.tail.b);
}

// Convenience wrapper: computes the neighbor table and converts the cloud.
template <typename T>
PointCloud forward_cloud(const PointCloud& cloud, const ModelConfig& cfg, ModelParams<T>& params,
                         bool train = false) {
    if (cloud.size() < cfg.k)
        throw ArgumentError("forward: cloud has " + std::to_string(cloud.size()) +
                            " points, fewer than k = " + std::to_string(cfg.k));
    const NeighborIndex nbr = knn(cloud, cfg.k);
    Tensor<T> pts = cloud.to_tensor<T>();
    return PointCloud::from_tensor(forward(pts, nbr, cfg, params, train));
}

}  // namespace putf

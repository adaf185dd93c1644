#pragma once

// Parameters of the decision Transformer. Every tensor is a dense matrix
// (vectors are 1 x n) addressed by a stable name, which is what the
// optimizer, the gradient check and the model file iterate over.

#include <string>
#include <vector>

#include <Eigen/Core>

#include "busca/core.hpp"
#include "busca/random.hpp"

namespace busca {

struct ModelConfig {
    int d_model = 512;
    int n_layers = 4;
    int n_heads = 4;
    int ffn_dim = 1024;
    double dropout = 0.1;
    int feature_dim = 512;
    double label_smoothing = 0.1;
    int head_hidden = 0;  // 0 means d_model
    double init_std = 0.02;
    double layer_norm_eps = 1e-5;

    int head_dim() const { return head_hidden > 0 ? head_hidden : d_model; }
};

inline void validate(const ModelConfig& c) {
    if (c.d_model <= 0 || c.n_layers <= 0 || c.n_heads <= 0 || c.ffn_dim <= 0 || c.feature_dim <= 0) {
        throw InvalidInput("ModelConfig: sizes must be positive");
    }
    if (c.d_model % c.n_heads != 0) throw InvalidInput("ModelConfig: d_model must be divisible by n_heads");
    if (c.dropout < 0.0 || c.dropout >= 1.0) throw InvalidInput("ModelConfig: dropout must be in [0, 1)");
    if (c.label_smoothing < 0.0 || c.label_smoothing >= 1.0) {
        throw InvalidInput("ModelConfig: label_smoothing must be in [0, 1)");
    }
}

template <class Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

template <class Real>
struct EncoderLayer {
    Matrix<Real> ln1_g, ln1_b;
    Matrix<Real> wq, bq, wk, bk, wv, bv, wo, bo;
    Matrix<Real> ln2_g, ln2_b;
    Matrix<Real> w1, b1, w2, b2;
};

template <class Real>
struct DecisionModel {
    ModelConfig config;
    Matrix<Real> input_w, input_b;  // appearance (F) -> d_model
    std::vector<EncoderLayer<Real>> layers;
    Matrix<Real> final_g, final_b;
    Matrix<Real> head_w1, head_b1, head_w2, head_b2;  // shared scoring MLP
    Matrix<Real> miss_token, halluc_token, sep_token;  // learned appearance, 1 x F

    template <class Fn>
    void visit(Fn&& fn) {
        visit_impl(*this, fn);
    }
    template <class Fn>
    void visit(Fn&& fn) const {
        visit_impl(*this, fn);
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        visit([&](const std::string&, const Matrix<Real>& m) { n += static_cast<std::size_t>(m.size()); });
        return n;
    }

    /// Same shapes, all zeros.
    DecisionModel zeros_like() const {
        DecisionModel out = *this;
        out.visit([](const std::string&, Matrix<Real>& m) { m.setZero(); });
        return out;
    }

    template <class Other>
    DecisionModel<Other> cast() const {
        DecisionModel<Other> out;
        out.config = config;
        out.input_w = input_w.template cast<Other>();
        out.input_b = input_b.template cast<Other>();
        out.layers.resize(layers.size());
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& a = layers[l];
            auto& b = out.layers[l];
            b.ln1_g = a.ln1_g.template cast<Other>();
            b.ln1_b = a.ln1_b.template cast<Other>();
            b.wq = a.wq.template cast<Other>();
            b.bq = a.bq.template cast<Other>();
            b.wk = a.wk.template cast<Other>();
            b.bk = a.bk.template cast<Other>();
            b.wv = a.wv.template cast<Other>();
            b.bv = a.bv.template cast<Other>();
            b.wo = a.wo.template cast<Other>();
            b.bo = a.bo.template cast<Other>();
            b.ln2_g = a.ln2_g.template cast<Other>();
            b.ln2_b = a.ln2_b.template cast<Other>();
            b.w1 = a.w1.template cast<Other>();
            b.b1 = a.b1.template cast<Other>();
            b.w2 = a.w2.template cast<Other>();
            b.b2 = a.b2.template cast<Other>();
        }
        out.final_g = final_g.template cast<Other>();
        out.final_b = final_b.template cast<Other>();
        out.head_w1 = head_w1.template cast<Other>();
        out.head_b1 = head_b1.template cast<Other>();
        out.head_w2 = head_w2.template cast<Other>();
        out.head_b2 = head_b2.template cast<Other>();
        out.miss_token = miss_token.template cast<Other>();
        out.halluc_token = halluc_token.template cast<Other>();
        out.sep_token = sep_token.template cast<Other>();
        return out;
    }

private:
    template <class Self, class Fn>
    static void visit_impl(Self& s, Fn& fn) {
        fn("input.w", s.input_w);
        fn("input.b", s.input_b);
        for (std::size_t l = 0; l < s.layers.size(); ++l) {
            auto& L = s.layers[l];
            const std::string p = "layers." + std::to_string(l) + ".";
            fn(p + "ln1.g", L.ln1_g);
            fn(p + "ln1.b", L.ln1_b);
            fn(p + "attn.wq", L.wq);
            fn(p + "attn.bq", L.bq);
            fn(p + "attn.wk", L.wk);
            fn(p + "attn.bk", L.bk);
            fn(p + "attn.wv", L.wv);
            fn(p + "attn.bv", L.bv);
            fn(p + "attn.wo", L.wo);
            fn(p + "attn.bo", L.bo);
            fn(p + "ln2.g", L.ln2_g);
            fn(p + "ln2.b", L.ln2_b);
            fn(p + "ffn.w1", L.w1);
            fn(p + "ffn.b1", L.b1);
            fn(p + "ffn.w2", L.w2);
            fn(p + "ffn.b2", L.b2);
        }
        fn("final_ln.g", s.final_g);
        fn("final_ln.b", s.final_b);
        fn("head.w1", s.head_w1);
        fn("head.b1", s.head_b1);
        fn("head.w2", s.head_w2);
        fn("head.b2", s.head_b2);
        fn("tokens.miss", s.miss_token);
        fn("tokens.halluc", s.halluc_token);
        fn("tokens.sep", s.sep_token);
    }
};

/// Allocates every tensor with the shapes implied by `cfg`; values are zero.
template <class Real>
DecisionModel<Real> allocate_model(const ModelConfig& cfg) {
    validate(cfg);
    const int d = cfg.d_model, f = cfg.feature_dim, ff = cfg.ffn_dim, hh = cfg.head_dim();
    auto z = [](int r, int c) { return Matrix<Real>::Zero(r, c); };
    DecisionModel<Real> m;
    m.config = cfg;
    m.input_w = z(f, d);
    m.input_b = z(1, d);
    m.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& L : m.layers) {
        L.ln1_g = z(1, d);
        L.ln1_b = z(1, d);
        L.wq = z(d, d);
        L.bq = z(1, d);
        L.wk = z(d, d);
        L.bk = z(1, d);
        L.wv = z(d, d);
        L.bv = z(1, d);
        L.wo = z(d, d);
        L.bo = z(1, d);
        L.ln2_g = z(1, d);
        L.ln2_b = z(1, d);
        L.w1 = z(d, ff);
        L.b1 = z(1, ff);
        L.w2 = z(ff, d);
        L.b2 = z(1, d);
    }
    m.final_g = z(1, d);
    m.final_b = z(1, d);
    m.head_w1 = z(d, hh);
    m.head_b1 = z(1, hh);
    m.head_w2 = z(hh, 1);
    m.head_b2 = z(1, 1);
    m.miss_token = z(1, f);
    m.halluc_token = z(1, f);
    m.sep_token = z(1, f);
    return m;
}

/// Gaussian(0, init_std) weights and learned tokens, zero biases, unit layer-norm gains.
template <class Real>
DecisionModel<Real> init_model(const ModelConfig& cfg, std::uint64_t seed) {
    DecisionModel<Real> m = allocate_model<Real>(cfg);
    Rng rng(derive_seed(seed, 0x494e4954));
    m.visit([&](const std::string& name, Matrix<Real>& t) {
        const bool gain = name.ends_with(".g");
        const bool bias = name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2") ||
                          name.ends_with(".bq") || name.ends_with(".bk") || name.ends_with(".bv") ||
                          name.ends_with(".bo");
        if (gain) {
            t.setOnes();
        } else if (bias) {
            t.setZero();
        } else {
            for (Eigen::Index j = 0; j < t.cols(); ++j) {
                for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, j) = static_cast<Real>(rng.normal() * cfg.init_std);
            }
        }
    });
    return m;
}

}  // namespace busca

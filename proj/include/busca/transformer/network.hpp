#pragma once

// Forward and backward passes of the decision Transformer.
//
// tokens -> appearance projection (+ spatiotemporal encoding)
//        -> L pre-norm encoder blocks (multi-head self-attention, GELU feed-forward)
//        -> final layer norm -> shared MLP head on proposal tokens -> softmax

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "busca/random.hpp"
#include "busca/transformer/model.hpp"
#include "busca/transformer/tokens.hpp"

namespace busca {

enum class DecisionOutcome { UpdateWithCandidate, Pause };

struct Decision {
    std::vector<double> logits;
    std::vector<double> probabilities;  // one per scoreable proposal
    std::vector<ProposalKind> kinds;
    int argmax = -1;
    ProposalKind argmax_kind = ProposalKind::LearnedMiss;
    DecisionOutcome outcome = DecisionOutcome::Pause;
};

template <class Real>
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

namespace detail {

template <class Real>
Real gelu(Real x) {
    return Real(0.5) * x * (Real(1) + std::erf(x * Real(std::numbers::sqrt2 / 2)));
}

template <class Real>
Real gelu_grad(Real x) {
    const Real cdf = Real(0.5) * (Real(1) + std::erf(x * Real(std::numbers::sqrt2 / 2)));
    const Real pdf = std::exp(Real(-0.5) * x * x) * Real(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    return cdf + x * pdf;
}

template <class Real>
struct NormCache {
    Matrix<Real> xhat;
    Vector<Real> rstd;
};

template <class Real>
Matrix<Real> layer_norm(const Matrix<Real>& x, const Matrix<Real>& g, const Matrix<Real>& b, Real eps,
                        NormCache<Real>& c) {
    const Eigen::Index rows = x.rows(), d = x.cols();
    c.xhat.resize(rows, d);
    c.rstd.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Real mu = x.row(r).mean();
        const auto centered = (x.row(r).array() - mu).eval();
        const Real var = centered.square().mean();
        c.rstd(r) = Real(1) / std::sqrt(var + eps);
        c.xhat.row(r) = centered * c.rstd(r);
    }
    Matrix<Real> y = (c.xhat.array().rowwise() * g.row(0).array()).matrix();
    y.rowwise() += b.row(0);
    return y;
}

template <class Real>
Matrix<Real> layer_norm_backward(const Matrix<Real>& dy, const Matrix<Real>& g, const NormCache<Real>& c,
                                 Matrix<Real>& dg, Matrix<Real>& db) {
    dg += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    db += dy.colwise().sum();
    const Matrix<Real> dxhat = (dy.array().rowwise() * g.row(0).array()).matrix();
    Matrix<Real> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const Real m1 = dxhat.row(r).mean();
        const Real m2 = (dxhat.row(r).array() * c.xhat.row(r).array()).mean();
        dx.row(r) = c.rstd(r) * (dxhat.row(r).array() - m1 - c.xhat.row(r).array() * m2);
    }
    return dx;
}

template <class Real>
Matrix<Real> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    Matrix<Real> m(rows, cols);
    const Real keep = Real(1.0 / (1.0 - p));
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.bernoulli(p) ? Real(0) : keep;
    }
    return m;
}

template <class Real>
struct LayerCache {
    NormCache<Real> ln1, ln2;
    Matrix<Real> x_in, y1, q, k, v, ctx, attn_mask, y2, u, g, ffn_mask;
    std::vector<Matrix<Real>> probs;  // per head, T x T
};

}  // namespace detail

/// One forward pass with the activations kept for backpropagation.
template <class Real>
class DecisionPass {
public:
    DecisionPass(const DecisionModel<Real>& model, const TokenSequence& seq, Rng* dropout_rng = nullptr)
        : model_(model), seq_(seq) {
        run(dropout_rng);
    }

    const Vector<Real>& logits() const { return logits_; }

    /// Accumulates parameter gradients of a scalar whose gradient w.r.t. the logits is `dlogits`.
    void backward(const Vector<Real>& dlogits, DecisionModel<Real>& grad) const;

private:
    void run(Rng* rng);

    const DecisionModel<Real>& model_;
    const TokenSequence& seq_;
    Matrix<Real> input_;  // T x F after substituting learned tokens
    std::vector<detail::LayerCache<Real>> layers_;
    detail::NormCache<Real> final_norm_;
    Matrix<Real> zs_, hu_, hg_;
    Vector<Real> logits_;
};

template <class Real>
void DecisionPass<Real>::run(Rng* rng) {
    const ModelConfig& cfg = model_.config;
    const int t = seq_.size();
    const int d = cfg.d_model;
    if (t == 0) throw InvalidInput("forward: empty token sequence");
    if (seq_.appearance.rows() != t || seq_.appearance.cols() != cfg.feature_dim) {
        throw DimensionError("forward: appearance matrix is " + std::to_string(seq_.appearance.rows()) + "x" +
                             std::to_string(seq_.appearance.cols()) + ", expected " + std::to_string(t) + "x" +
                             std::to_string(cfg.feature_dim));
    }
    const bool has_ste = seq_.encoding.size() > 0;
    if (has_ste && (seq_.encoding.rows() != t || seq_.encoding.cols() != d)) {
        throw DimensionError("forward: encoding width does not match d_model");
    }
    if (seq_.choices() == 0) throw InvalidInput("forward: no scoreable proposals");

    input_ = seq_.appearance.template cast<Real>();
    for (int i = 0; i < t; ++i) {
        switch (seq_.roles[static_cast<std::size_t>(i)]) {
            case TokenRole::Miss: input_.row(i) = model_.miss_token; break;
            case TokenRole::Halluc: input_.row(i) = model_.halluc_token; break;
            case TokenRole::Sep: input_.row(i) = model_.sep_token; break;
            default: break;
        }
    }

    Matrix<Real> x = input_ * model_.input_w;
    x.rowwise() += model_.input_b.row(0);
    if (has_ste) x += seq_.encoding.template cast<Real>();

    const bool training = rng != nullptr && cfg.dropout > 0.0;
    const int heads = cfg.n_heads;
    const int dk = d / heads;
    const Real scale = Real(1) / std::sqrt(static_cast<Real>(dk));
    const Real eps = static_cast<Real>(cfg.layer_norm_eps);

    layers_.assign(model_.layers.size(), {});
    for (std::size_t l = 0; l < model_.layers.size(); ++l) {
        const auto& L = model_.layers[l];
        auto& c = layers_[l];
        c.x_in = x;
        c.y1 = detail::layer_norm(x, L.ln1_g, L.ln1_b, eps, c.ln1);
        c.q = c.y1 * L.wq;
        c.q.rowwise() += L.bq.row(0);
        c.k = c.y1 * L.wk;
        c.k.rowwise() += L.bk.row(0);
        c.v = c.y1 * L.wv;
        c.v.rowwise() += L.bv.row(0);
        c.ctx.resize(t, d);
        c.probs.resize(static_cast<std::size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            Matrix<Real> s = c.q.middleCols(h * dk, dk) * c.k.middleCols(h * dk, dk).transpose() * scale;
            for (int r = 0; r < t; ++r) {
                const Real mx = s.row(r).maxCoeff();
                s.row(r) = (s.row(r).array() - mx).exp();
                s.row(r) /= s.row(r).sum();
            }
            c.ctx.middleCols(h * dk, dk).noalias() = s * c.v.middleCols(h * dk, dk);
            c.probs[static_cast<std::size_t>(h)] = std::move(s);
        }
        Matrix<Real> o = c.ctx * L.wo;
        o.rowwise() += L.bo.row(0);
        if (training) {
            c.attn_mask = detail::dropout_mask<Real>(t, d, cfg.dropout, *rng);
            o = o.cwiseProduct(c.attn_mask);
        }
        x += o;

        c.y2 = detail::layer_norm(x, L.ln2_g, L.ln2_b, eps, c.ln2);
        c.u = c.y2 * L.w1;
        c.u.rowwise() += L.b1.row(0);
        c.g = c.u.unaryExpr([](Real v) { return detail::gelu(v); });
        Matrix<Real> f = c.g * L.w2;
        f.rowwise() += L.b2.row(0);
        if (training) {
            c.ffn_mask = detail::dropout_mask<Real>(t, d, cfg.dropout, *rng);
            f = f.cwiseProduct(c.ffn_mask);
        }
        x += f;
    }

    const Matrix<Real> z = detail::layer_norm(x, model_.final_g, model_.final_b, eps, final_norm_);
    const int j = seq_.choices();
    zs_.resize(j, d);
    for (int i = 0; i < j; ++i) zs_.row(i) = z.row(seq_.scoreable[static_cast<std::size_t>(i)]);
    hu_ = zs_ * model_.head_w1;
    hu_.rowwise() += model_.head_b1.row(0);
    hg_ = hu_.unaryExpr([](Real v) { return detail::gelu(v); });
    logits_ = hg_ * model_.head_w2;
    logits_.array() += model_.head_b2(0, 0);
    if (!logits_.allFinite()) throw NumericError("forward: non-finite activations in decision logits");
}

template <class Real>
void DecisionPass<Real>::backward(const Vector<Real>& dlogits, DecisionModel<Real>& grad) const {
    const ModelConfig& cfg = model_.config;
    const int t = seq_.size();
    const int d = cfg.d_model;
    const int heads = cfg.n_heads;
    const int dk = d / heads;
    const Real scale = Real(1) / std::sqrt(static_cast<Real>(dk));

    grad.head_b2(0, 0) += dlogits.sum();
    grad.head_w2.noalias() += hg_.transpose() * dlogits;
    Matrix<Real> dh = dlogits * model_.head_w2.transpose();
    dh = dh.cwiseProduct(hu_.unaryExpr([](Real v) { return detail::gelu_grad(v); }));
    grad.head_w1.noalias() += zs_.transpose() * dh;
    grad.head_b1 += dh.colwise().sum();
    const Matrix<Real> dzs = dh * model_.head_w1.transpose();

    Matrix<Real> dz = Matrix<Real>::Zero(t, d);
    for (int i = 0; i < seq_.choices(); ++i) dz.row(seq_.scoreable[static_cast<std::size_t>(i)]) += dzs.row(i);
    Matrix<Real> dx = detail::layer_norm_backward(dz, model_.final_g, final_norm_, grad.final_g, grad.final_b);

    for (std::size_t li = model_.layers.size(); li-- > 0;) {
        const auto& L = model_.layers[li];
        auto& G = grad.layers[li];
        const auto& c = layers_[li];

        // feed-forward branch
        Matrix<Real> df = c.ffn_mask.size() ? Matrix<Real>(dx.cwiseProduct(c.ffn_mask)) : dx;
        G.b2 += df.colwise().sum();
        G.w2.noalias() += c.g.transpose() * df;
        Matrix<Real> du = df * L.w2.transpose();
        du = du.cwiseProduct(c.u.unaryExpr([](Real v) { return detail::gelu_grad(v); }));
        G.w1.noalias() += c.y2.transpose() * du;
        G.b1 += du.colwise().sum();
        const Matrix<Real> dy2 = du * L.w1.transpose();
        dx += detail::layer_norm_backward(dy2, L.ln2_g, c.ln2, G.ln2_g, G.ln2_b);

        // attention branch
        Matrix<Real> dout = c.attn_mask.size() ? Matrix<Real>(dx.cwiseProduct(c.attn_mask)) : dx;
        G.bo += dout.colwise().sum();
        G.wo.noalias() += c.ctx.transpose() * dout;
        const Matrix<Real> dctx = dout * L.wo.transpose();
        Matrix<Real> dq(t, d), dk_(t, d), dv(t, d);
        for (int h = 0; h < heads; ++h) {
            const auto& p = c.probs[static_cast<std::size_t>(h)];
            const auto dctx_h = dctx.middleCols(h * dk, dk);
            Matrix<Real> dp = dctx_h * c.v.middleCols(h * dk, dk).transpose();
            dv.middleCols(h * dk, dk).noalias() = p.transpose() * dctx_h;
            const Vector<Real> rowdot = (dp.array() * p.array()).rowwise().sum();
            Matrix<Real> ds = (p.array() * (dp.array().colwise() - rowdot.array())).matrix() * scale;
            dq.middleCols(h * dk, dk).noalias() = ds * c.k.middleCols(h * dk, dk);
            dk_.middleCols(h * dk, dk).noalias() = ds.transpose() * c.q.middleCols(h * dk, dk);
        }
        G.wq.noalias() += c.y1.transpose() * dq;
        G.bq += dq.colwise().sum();
        G.wk.noalias() += c.y1.transpose() * dk_;
        G.bk += dk_.colwise().sum();
        G.wv.noalias() += c.y1.transpose() * dv;
        G.bv += dv.colwise().sum();
        Matrix<Real> dy1 = dq * L.wq.transpose();
        dy1.noalias() += dk_ * L.wk.transpose();
        dy1.noalias() += dv * L.wv.transpose();
        dx += detail::layer_norm_backward(dy1, L.ln1_g, c.ln1, G.ln1_g, G.ln1_b);
    }

    grad.input_b += dx.colwise().sum();
    grad.input_w.noalias() += input_.transpose() * dx;
    const Matrix<Real> da = dx * model_.input_w.transpose();
    for (int i = 0; i < t; ++i) {
        switch (seq_.roles[static_cast<std::size_t>(i)]) {
            case TokenRole::Miss: grad.miss_token += da.row(i); break;
            case TokenRole::Halluc: grad.halluc_token += da.row(i); break;
            case TokenRole::Sep: grad.sep_token += da.row(i); break;
            default: break;
        }
    }
}

/// Label-smoothed cross-entropy: the target gets 1 - eps, every other choice eps / (J - 1).
template <class Real>
Real smoothed_cross_entropy(const Vector<Real>& logits, int target, double eps, Vector<Real>* dlogits = nullptr) {
    const Eigen::Index j = logits.size();
    if (j < 2) throw InvalidInput("loss: at least two choices are required");
    if (target < 0 || target >= j) throw InvalidInput("loss: target index out of range");
    const Real mx = logits.maxCoeff();
    const Real lse = mx + std::log((logits.array() - mx).exp().sum());
    const Vector<Real> logp = logits.array() - lse;
    Vector<Real> q = Vector<Real>::Constant(j, static_cast<Real>(eps / static_cast<double>(j - 1)));
    q(target) = static_cast<Real>(1.0 - eps);
    const Real loss = -(q.array() * logp.array()).sum();
    if (dlogits) *dlogits = logp.array().exp().matrix() - q;
    return loss;
}

/// Inference: dropout off, read-only on the model.
template <class Real>
Decision forward(const TokenSequence& seq, const DecisionModel<Real>& model) {
    const DecisionPass<Real> pass(model, seq);
    const Vector<Real>& z = pass.logits();
    Decision out;
    out.kinds = seq.scoreable_kinds;
    out.logits.resize(static_cast<std::size_t>(z.size()));
    out.probabilities.resize(static_cast<std::size_t>(z.size()));
    const double mx = static_cast<double>(z.maxCoeff());
    double sum = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        out.logits[static_cast<std::size_t>(i)] = static_cast<double>(z(i));
        out.probabilities[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(z(i)) - mx);
        sum += out.probabilities[static_cast<std::size_t>(i)];
    }
    for (double& p : out.probabilities) p /= sum;
    out.argmax = 0;
    for (std::size_t i = 1; i < out.probabilities.size(); ++i) {
        if (out.logits[i] > out.logits[static_cast<std::size_t>(out.argmax)]) out.argmax = static_cast<int>(i);
    }
    out.argmax_kind = out.kinds[static_cast<std::size_t>(out.argmax)];
    out.outcome = out.argmax_kind == ProposalKind::Candidate ? DecisionOutcome::UpdateWithCandidate
                                                              : DecisionOutcome::Pause;
    return out;
}

/// Loss of one labelled sequence; adds its parameter gradient to `grad`.
template <class Real>
Real loss_and_gradient(const DecisionModel<Real>& model, const TokenSequence& seq, int target,
                       DecisionModel<Real>& grad, Rng* dropout_rng = nullptr) {
    const DecisionPass<Real> pass(model, seq, dropout_rng);
    Vector<Real> dlogits;
    const Real loss = smoothed_cross_entropy(pass.logits(), target, model.config.label_smoothing, &dlogits);
    pass.backward(dlogits, grad);
    return loss;
}

template <class Real>
Real loss_only(const DecisionModel<Real>& model, const TokenSequence& seq, int target) {
    const DecisionPass<Real> pass(model, seq);
    return smoothed_cross_entropy(pass.logits(), target, model.config.label_smoothing);
}

}  // namespace busca

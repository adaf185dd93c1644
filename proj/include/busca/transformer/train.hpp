#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <vector>

#include "busca/random.hpp"
#include "busca/transformer/network.hpp"

namespace busca {

struct TrainConfig {
    int epochs = 25;
    int batch_size = 256;
    double learning_rate = 2e-5;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int lr_drop_epoch = 20;  // epochs at or after this index use lr * lr_drop_factor
    double lr_drop_factor = 0.1;
    std::uint64_t seed = 0;
};

struct LabeledSequence {
    TokenSequence tokens;
    int target = 0;  // index into tokens.scoreable
};

template <class Real>
struct TrainResult {
    DecisionModel<Real> model;
    std::vector<double> epoch_loss;  // mean training loss per epoch
};

/// AdamW with decoupled weight decay.
template <class Real>
class AdamW {
public:
    AdamW(const DecisionModel<Real>& like, const TrainConfig& cfg)
        : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {}

    void step(DecisionModel<Real>& model, const DecisionModel<Real>& grad, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        std::vector<Matrix<Real>*> ms, vs;
        const std::vector<const Matrix<Real>*> gs = collect(grad);
        m_.visit([&](const std::string&, Matrix<Real>& x) { ms.push_back(&x); });
        v_.visit([&](const std::string&, Matrix<Real>& x) { vs.push_back(&x); });
        std::size_t i = 0;
        const Real b1 = static_cast<Real>(cfg_.beta1), b2 = static_cast<Real>(cfg_.beta2);
        const Real step = static_cast<Real>(lr / bc1);
        const Real decay = static_cast<Real>(lr * cfg_.weight_decay);
        const Real inv_bc2 = static_cast<Real>(1.0 / bc2);
        const Real eps = static_cast<Real>(cfg_.adam_eps);
        model.visit([&](const std::string&, Matrix<Real>& p) {
            const Matrix<Real>& g = *gs[i];
            Matrix<Real>& m = *ms[i];
            Matrix<Real>& v = *vs[i];
            m = b1 * m + (Real(1) - b1) * g;
            v = b2 * v + (Real(1) - b2) * g.cwiseProduct(g);
            p.array() -= step * m.array() / ((v.array() * inv_bc2).sqrt() + eps) + decay * p.array();
            ++i;
        });
    }

private:
    static std::vector<const Matrix<Real>*> collect(const DecisionModel<Real>& m) {
        std::vector<const Matrix<Real>*> out;
        m.visit([&](const std::string&, const Matrix<Real>& x) { out.push_back(&x); });
        return out;
    }

    TrainConfig cfg_;
    DecisionModel<Real> m_, v_;
    int t_ = 0;
};

template <class Real>
double accuracy(const DecisionModel<Real>& model, const std::vector<LabeledSequence>& data) {
    if (data.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& s : data) hits += forward(s.tokens, model).argmax == s.target;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// Mini-batch training from `initial`. Deterministic given cfg.seed: batch
/// order and dropout masks derive from (seed, epoch, sample).
template <class Real>
TrainResult<Real> train(const std::vector<LabeledSequence>& data, DecisionModel<Real> initial, const TrainConfig& cfg,
                        const std::function<void(int, double)>& on_epoch = {}) {
    if (data.empty()) throw InvalidInput("train: empty dataset");
    if (cfg.batch_size <= 0 || cfg.epochs < 0) throw InvalidInput("train: invalid batch size or epoch count");
    TrainResult<Real> result{std::move(initial), {}};
    DecisionModel<Real>& model = result.model;
    AdamW<Real> opt(model, cfg);
    DecisionModel<Real> grad = model.zeros_like();

    std::vector<std::size_t> order(data.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(cfg.seed, 0x53485546, epoch));
        shuffle_rng.shuffle(order);
        const double lr = cfg.learning_rate * (epoch >= cfg.lr_drop_epoch ? cfg.lr_drop_factor : 1.0);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            grad.visit([](const std::string&, Matrix<Real>& g) { g.setZero(); });
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const auto& sample = data[order[k]];
                Rng dropout_rng(derive_seed(cfg.seed, 0x44524f50, epoch, order[k]));
                batch_loss += static_cast<double>(
                    loss_and_gradient(model, sample.tokens, sample.target, grad, &dropout_rng));
            }
            if (!std::isfinite(batch_loss)) {
                std::ostringstream msg;
                msg << "train: loss diverged at epoch " << epoch << ", batch starting at " << start
                    << " (lr=" << lr << ")";
                throw NumericError(msg.str());
            }
            const Real inv = Real(1) / static_cast<Real>(end - start);
            grad.visit([&](const std::string&, Matrix<Real>& g) { g *= inv; });
            opt.step(model, grad, lr);
            epoch_loss += batch_loss;
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(data.size()));
        if (on_epoch) on_epoch(epoch, result.epoch_loss.back());
    }
    return result;
}

}  // namespace busca

#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "busca/proposals.hpp"
#include "busca/ste.hpp"
#include "busca/transformer/model.hpp"

namespace busca {

enum class TokenRole { TrackObs, Candidate, Contextual, Miss, Halluc, Sep };

inline TokenRole role_of(ProposalKind k) {
    switch (k) {
        case ProposalKind::Candidate: return TokenRole::Candidate;
        case ProposalKind::Contextual: return TokenRole::Contextual;
        case ProposalKind::LearnedMiss: return TokenRole::Miss;
        case ProposalKind::LearnedHalluc: return TokenRole::Halluc;
        case ProposalKind::Sep: return TokenRole::Sep;
    }
    return TokenRole::Sep;
}

inline bool is_learned(TokenRole r) { return r == TokenRole::Miss || r == TokenRole::Halluc || r == TokenRole::Sep; }

/// Model input for one track: window observations (oldest first) followed by proposals.
struct TokenSequence {
    std::vector<TokenRole> roles;
    Eigen::MatrixXf appearance;  // T x F; rows of learned tokens are ignored
    Eigen::MatrixXf encoding;    // T x d_model spatiotemporal encoding, empty when disabled
    std::vector<int> scoreable;  // token indices that receive a logit, in proposal order
    std::vector<ProposalKind> scoreable_kinds;

    int size() const { return static_cast<int>(roles.size()); }
    int choices() const { return static_cast<int>(scoreable.size()); }
};

/// Builds the token sequence. Every token is encoded relative to `anchor`,
/// the track's last known observation.
inline TokenSequence assemble(std::span<const Observation> window, std::span<const Proposal> proposals,
                              const Anchor& anchor, const ModelConfig& model, const SteConfig& ste_cfg,
                              bool use_ste = true) {
    if (window.empty()) throw InvalidInput("assemble: empty track window");
    if (use_ste && ste_cfg.d_model != model.d_model) {
        throw DimensionError("assemble: encoding width " + std::to_string(ste_cfg.d_model) +
                             " does not match d_model " + std::to_string(model.d_model));
    }
    const int n = static_cast<int>(window.size() + proposals.size());
    const int f = model.feature_dim;
    TokenSequence seq;
    seq.roles.reserve(static_cast<std::size_t>(n));
    seq.appearance = Eigen::MatrixXf::Zero(n, f);
    if (use_ste) seq.encoding = Eigen::MatrixXf::Zero(n, model.d_model);

    std::vector<double> buf(static_cast<std::size_t>(model.d_model));
    auto put_appearance = [&](int row, const FeatureVector& a) {
        if (a.size() != static_cast<std::size_t>(f)) {
            throw DimensionError("assemble: token " + std::to_string(row) + " has appearance of length " +
                                 std::to_string(a.size()) + ", expected " + std::to_string(f));
        }
        for (int i = 0; i < f; ++i) seq.appearance(row, i) = a[static_cast<std::size_t>(i)];
    };
    auto put_encoding = [&](int row, const InterplayTriple& e) {
        if (!use_ste) return;
        embed_project(e, model.d_model, buf);
        for (int i = 0; i < model.d_model; ++i) seq.encoding(row, i) = static_cast<float>(buf[static_cast<std::size_t>(i)]);
    };

    int row = 0;
    for (const auto& obs : window) {
        seq.roles.push_back(TokenRole::TrackObs);
        put_appearance(row, obs.appearance);
        put_encoding(row, interplay_map(obs.bbox, obs.t, anchor, ste_cfg));
        ++row;
    }
    for (const auto& p : proposals) {
        const TokenRole role = role_of(p.kind);
        seq.roles.push_back(role);
        if (!is_learned(role)) put_appearance(row, p.embedding);
        put_encoding(row, p.saturated ? saturated_triple(ste_cfg) : interplay_map(p.bbox, p.t, anchor, ste_cfg));
        if (is_scoreable(p.kind)) {
            seq.scoreable.push_back(row);
            seq.scoreable_kinds.push_back(p.kind);
        }
        ++row;
    }
    return seq;
}

}  // namespace busca

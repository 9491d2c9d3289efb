#pragma once

#include <optional>
#include <string>
#include <vector>

#include "proxyrec/config.hpp"
#include "proxyrec/errors.hpp"
#include "proxyrec/optim.hpp"
#include "proxyrec/seq_encoder.hpp"
#include "proxyrec/tensor.hpp"

// Candidate scoring. Scores are logits, comparable within one user-step
// only; the positive candidate sits at index 0 of every candidate set.

namespace proxyrec {

// Inner-product scoring of candidates against the last latent vector.
// bce variant: plain dot products. ntxent variant: cosine similarity over
// L2-normalized vectors, divided by the temperature.
template <class Real>
Tensor<Real> score_inner_product(const Tensor<Real>& latent_last, const Tensor<Real>& candidates,
                                 ScorerKind variant, double temperature = 0.1) {
    if (latent_last.rows() != 1) throw ShapeError("score_inner_product: latent must be 1 x d");
    if (latent_last.cols() != candidates.cols())
        throw ShapeError("score_inner_product: dimension mismatch");
    if (variant == ScorerKind::ip_bce)
        return matmul(candidates, transpose(latent_last));
    if (variant != ScorerKind::ip_ntxent)
        throw ContractError("score_inner_product: not an inner-product variant");
    if (temperature <= 0.0) throw ConfigError("score_inner_product: temperature must be positive");
    auto cos = matmul(l2_normalize_rows(candidates), transpose(l2_normalize_rows(latent_last)));
    return scale(cos, static_cast<Real>(1.0 / temperature));
}

// Cross-attention scorer: candidates attend over the latent sequence, a
// multiplicative residual re-weights them, and a linear head emits one
// logit per candidate.
template <class Real>
class CrossAttentionScorer {
  public:
    CrossAttentionScorer(const ModelConfig& cfg, ParameterStore<Real>& store, Rng& rng) {
        const int d = cfg.d;
        const int dh = d / cfg.heads;
        for (int h = 0; h < cfg.heads; ++h) {
            const std::string hp = "scorer.head" + std::to_string(h) + ".";
            w_q_.push_back(store.add(hp + "W_q", glorot_init<Real>(d, dh, rng), false));
            w_k_.push_back(store.add(hp + "W_k", glorot_init<Real>(d, dh, rng), false));
            w_v_.push_back(store.add(hp + "W_v", glorot_init<Real>(d, dh, rng), false));
        }
        w_score_ = store.add("scorer.W_score", glorot_init<Real>(d, 1, rng), false);
        b_score_ = store.add("scorer.b_score", Tensor<Real>::zeros(1, 1, true), true);
    }

    // candidates: n x d, latents: L x d. Returns n x 1 logits.
    Tensor<Real> score(const Tensor<Real>& candidates, const Tensor<Real>& latents,
                       const std::vector<bool>* latent_valid = nullptr) const {
        if (latents.rows() == 0) throw ContractError("cross-attention: empty latent sequence");
        if (candidates.cols() != latents.cols())
            throw ShapeError("cross-attention: dimension mismatch");
        std::optional<Tensor<Real>> mask;
        if (latent_valid != nullptr) mask = key_padding_mask<Real>(*latent_valid);
        auto attended = multi_head_attention(candidates, latents, latents, w_q_, w_k_, w_v_,
                                             mask ? &*mask : nullptr);
        auto reweighted = mul(candidates, attended);  // multiplicative residual
        return add(matmul(reweighted, w_score_), b_score_);
    }

  private:
    std::vector<Tensor<Real>> w_q_, w_k_, w_v_;
    Tensor<Real> w_score_, b_score_;
};

// Softmax cross-entropy with the positive at column 0, averaged over the
// batch of users (rows). Optional temperature divides the logits first.
template <class Real>
Tensor<Real> lip_loss(const Tensor<Real>& score_rows,
                      std::optional<double> temperature = std::nullopt) {
    if (score_rows.cols() < 2) throw ContractError("lip_loss: need at least 2 candidates");
    auto logits = score_rows;
    if (temperature) {
        if (*temperature <= 0.0) throw ConfigError("lip_loss: temperature must be positive");
        logits = scale(logits, static_cast<Real>(1.0 / *temperature));
    }
    return mean_all(cross_entropy_rows(logits, std::vector<int>(score_rows.rows(), 0)));
}

// Mean binary cross-entropy on logits, stabilized in logit space:
// softplus(y) - label * y.
template <class Real>
Tensor<Real> bce_loss(const Tensor<Real>& scores, const std::vector<Real>& labels) {
    if (static_cast<int>(labels.size()) != scores.size())
        throw ShapeError("bce_loss: one label per score required");
    for (Real y : labels)
        if (y != Real(0) && y != Real(1)) throw ContractError("bce_loss: labels must be 0 or 1");
    auto label_t = Tensor<Real>::from(scores.rows(), scores.cols(), labels);
    return mean_all(sub(softplus(scores), mul(scores, label_t)));
}

}  // namespace proxyrec

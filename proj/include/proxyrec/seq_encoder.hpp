#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "proxyrec/config.hpp"
#include "proxyrec/errors.hpp"
#include "proxyrec/optim.hpp"
#include "proxyrec/tensor.hpp"

// Stacked self-attention blocks over item vectors, without positional
// embeddings. Block structure: pre-norm on the block input, multi-head
// attention (per-head projections, concatenated, no output projection),
// then a point-wise feed-forward net with an additive residual around the
// PWFF only.

namespace proxyrec {

inline constexpr double kMaskedLogit = -1e30;

// Deterministic per-call dropout masks: one child rng per dropout site,
// derived from (seed, call counter).
class DropoutStream {
  public:
    explicit DropoutStream(std::uint64_t seed) : seed_(seed) {}
    Rng next() { return Rng(Rng::mix(seed_, counter_++)); }

  private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

// Training-time stochastic state; eval passes nullptr.
struct TrainMode {
    double dropout_p = 0.0;
    DropoutStream* stream = nullptr;
};

template <class Real>
inline Tensor<Real> maybe_dropout(const Tensor<Real>& x, const TrainMode* mode) {
    if (mode == nullptr || mode->dropout_p == 0.0) return x;
    Rng rng = mode->stream->next();
    return dropout(x, mode->dropout_p, rng);
}

// Scaled dot-product attention. `mask` is an optional constant of masked-key
// logit offsets, either 1 x L_K or L_Q x L_K.
template <class Real>
Tensor<Real> attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                       const Tensor<Real>* mask = nullptr) {
    if (q.cols() != k.cols()) throw ShapeError("attention: d_Q != d_K");
    if (k.rows() != v.rows()) throw ShapeError("attention: K and V row counts differ");
    auto logits = scale(matmul(q, transpose(k)), Real(1) / static_cast<Real>(std::sqrt(q.cols())));
    if (mask != nullptr) logits = add(logits, *mask);
    return matmul(softmax_rows(logits), v);
}

template <class Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& q, const Tensor<Real>& k,
                                  const Tensor<Real>& v, const std::vector<Tensor<Real>>& w_q,
                                  const std::vector<Tensor<Real>>& w_k,
                                  const std::vector<Tensor<Real>>& w_v,
                                  const Tensor<Real>* mask = nullptr) {
    std::vector<Tensor<Real>> heads;
    heads.reserve(w_q.size());
    for (std::size_t h = 0; h < w_q.size(); ++h)
        heads.push_back(attention(matmul(q, w_q[h]), matmul(k, w_k[h]), matmul(v, w_v[h]), mask));
    return heads.size() == 1 ? heads[0] : concat_cols(heads);
}

template <class Real>
Tensor<Real> pwff(const Tensor<Real>& x, const Tensor<Real>& w1, const Tensor<Real>& b1,
                  const Tensor<Real>& w2, const Tensor<Real>& b2, Activation act, Real slope) {
    auto hidden = add(matmul(x, w1), b1);
    switch (act) {
        case Activation::leaky_relu: hidden = leaky_relu(hidden, slope); break;
        case Activation::sigmoid: hidden = sigmoid(hidden); break;
        default: break;
    }
    return add(matmul(hidden, w2), b2);
}

// Constant mask of key offsets built from a validity vector.
template <class Real>
Tensor<Real> key_padding_mask(const std::vector<bool>& valid) {
    std::vector<Real> m(valid.size());
    for (std::size_t i = 0; i < valid.size(); ++i)
        m[i] = valid[i] ? Real(0) : static_cast<Real>(kMaskedLogit);
    return Tensor<Real>::from(1, static_cast<int>(valid.size()), std::move(m));
}

// Strictly-upper-triangular causal mask (query t sees keys <= t).
template <class Real>
Tensor<Real> causal_mask(int len) {
    std::vector<Real> m(static_cast<std::size_t>(len) * len, Real(0));
    for (int i = 0; i < len; ++i)
        for (int j = i + 1; j < len; ++j)
            m[static_cast<std::size_t>(i) * len + j] = static_cast<Real>(kMaskedLogit);
    return Tensor<Real>::from(len, len, std::move(m));
}

template <class Real>
struct AttentionBlockParams {
    std::vector<Tensor<Real>> w_q, w_k, w_v;  // per head, d x d/H
    Tensor<Real> w1, b1, w2, b2;              // PWFF
    Tensor<Real> norm_gain, norm_bias;        // layer_norm kind only
};

template <class Real>
class SequenceEncoder {
  public:
    SequenceEncoder(const ModelConfig& cfg, ParameterStore<Real>& store, Rng& rng) : cfg_(cfg) {
        const int d = cfg.d;
        const int dh = d / cfg.heads;
        blocks_.resize(cfg.blocks);
        for (int b = 0; b < cfg.blocks; ++b) {
            auto& blk = blocks_[b];
            const std::string p = "seq.block" + std::to_string(b) + ".";
            for (int h = 0; h < cfg.heads; ++h) {
                const std::string hp = p + "head" + std::to_string(h) + ".";
                blk.w_q.push_back(store.add(hp + "W_q", glorot_init<Real>(d, dh, rng), false));
                blk.w_k.push_back(store.add(hp + "W_k", glorot_init<Real>(d, dh, rng), false));
                blk.w_v.push_back(store.add(hp + "W_v", glorot_init<Real>(d, dh, rng), false));
            }
            blk.w1 = store.add(p + "pwff.W1", glorot_init<Real>(d, d, rng), false);
            blk.b1 = store.add(p + "pwff.b1", Tensor<Real>::zeros(1, d, true), true);
            blk.w2 = store.add(p + "pwff.W2", glorot_init<Real>(d, d, rng), false);
            blk.b2 = store.add(p + "pwff.b2", Tensor<Real>::zeros(1, d, true), true);
            if (cfg.norm == NormKind::layer_norm) {
                blk.norm_gain = store.add(p + "norm.gain", Tensor<Real>::full(1, d, Real(1), true),
                                          true);
                blk.norm_bias = store.add(p + "norm.bias", Tensor<Real>::zeros(1, d, true), true);
            }
        }
    }

    // `valid` marks real rows; padded rows receive zero attention weight from
    // every query. Output row t is the latent sequence vector for position t.
    Tensor<Real> encode(const Tensor<Real>& items, const std::vector<bool>* valid = nullptr,
                        const TrainMode* mode = nullptr) const {
        if (items.rows() == 0) throw ContractError("encode_sequence: empty sequence");
        if (valid != nullptr && static_cast<int>(valid->size()) != items.rows())
            throw ShapeError("encode_sequence: mask length mismatch");

        std::optional<Tensor<Real>> mask;
        if (cfg_.causal) {
            mask = causal_mask<Real>(items.rows());
            if (valid != nullptr) mask = add(*mask, key_padding_mask<Real>(*valid));
        } else if (valid != nullptr) {
            mask = key_padding_mask<Real>(*valid);
        }
        const Tensor<Real>* mask_ptr = mask ? &*mask : nullptr;

        auto v = items;
        const Real slope = static_cast<Real>(cfg_.leaky_slope);
        for (const auto& blk : blocks_) {
            Tensor<Real> x;
            if (cfg_.norm == NormKind::layer_norm)
                x = add(mul(layer_norm_rows(v), blk.norm_gain), blk.norm_bias);
            else
                x = l2_normalize_rows(v);
            auto attended =
                maybe_dropout(multi_head_attention(x, x, x, blk.w_q, blk.w_k, blk.w_v, mask_ptr),
                              mode);
            v = add(maybe_dropout(pwff(attended, blk.w1, blk.b1, blk.w2, blk.b2, cfg_.activation,
                                       slope),
                                  mode),
                    attended);
        }
        return v;
    }

    const std::vector<AttentionBlockParams<Real>>& blocks() const { return blocks_; }

  private:
    ModelConfig cfg_;
    std::vector<AttentionBlockParams<Real>> blocks_;
};

}  // namespace proxyrec

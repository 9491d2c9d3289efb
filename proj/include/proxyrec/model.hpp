#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "proxyrec/config.hpp"
#include "proxyrec/data.hpp"
#include "proxyrec/item_encoder.hpp"
#include "proxyrec/scorer.hpp"
#include "proxyrec/seq_encoder.hpp"

namespace proxyrec {

// One event as the model consumes it. attr_item lets the trainer's
// item-replace regularization swap in another item's id and attributes while
// keeping the original timestamp context.
struct ModelEvent {
    int item = 0;
    int attr_item = 0;
    std::int64_t ts = 0;
};

inline ModelEvent to_model_event(const Event& ev) { return ModelEvent{ev.item, ev.item, ev.ts}; }

inline std::vector<ModelEvent> to_model_events(const std::vector<Event>& evs) {
    std::vector<ModelEvent> out;
    out.reserve(evs.size());
    for (const auto& ev : evs) out.push_back(to_model_event(ev));
    return out;
}

template <class Real>
EncoderInputs<Real> encoder_inputs(const InteractionDataset& ds,
                                   const std::vector<ModelEvent>& events) {
    const int n = static_cast<int>(events.size());
    if (n == 0) throw ContractError("encoder_inputs: empty event list");
    std::vector<Real> attrs(static_cast<std::size_t>(n) * ds.attr_dim);
    std::vector<Real> ctxs(static_cast<std::size_t>(n) * kContextDim);
    std::vector<int> ids(n);
    for (int i = 0; i < n; ++i) {
        ids[i] = events[i].item;
        const auto& row = ds.attributes.at(events[i].attr_item);
        for (int j = 0; j < ds.attr_dim; ++j)
            attrs[static_cast<std::size_t>(i) * ds.attr_dim + j] = static_cast<Real>(row[j]);
        const auto ctx = ds.context_of(events[i].ts);
        for (int j = 0; j < kContextDim; ++j)
            ctxs[static_cast<std::size_t>(i) * kContextDim + j] = static_cast<Real>(ctx[j]);
    }
    return EncoderInputs<Real>{std::move(ids),
                               Tensor<Real>::from(n, ds.attr_dim, std::move(attrs)),
                               Tensor<Real>::from(n, kContextDim, std::move(ctxs))};
}

// Candidate items all share the target step's context.
template <class Real>
EncoderInputs<Real> candidate_inputs(const InteractionDataset& ds, const std::vector<int>& ids,
                                     std::int64_t target_ts) {
    std::vector<ModelEvent> events;
    events.reserve(ids.size());
    for (int id : ids) events.push_back(ModelEvent{id, id, target_ts});
    return encoder_inputs<Real>(ds, events);
}

// Full recommendation model: item encoder -> self-attention blocks ->
// candidate scorer, with every trainable tensor registered in one store.
template <class Real>
class Model {
  public:
    Model(const ModelConfig& cfg, int item_count, int attr_dim,
          const std::vector<std::int64_t>& train_freq, std::uint64_t init_seed)
        : cfg_(cfg), item_count_(item_count), attr_dim_(attr_dim) {
        cfg_.validate();
        Rng rng(init_seed);
        encoder_.emplace(make_encoder(cfg_, item_count, attr_dim, train_freq, params_, rng));
        seq_.emplace(cfg_, params_, rng);
        if (cfg_.scorer == ScorerKind::ca || cfg_.scorer == ScorerKind::ca_contrastive)
            ca_.emplace(cfg_, params_, rng);
    }

    const ModelConfig& config() const { return cfg_; }
    int item_count() const { return item_count_; }
    int attr_dim() const { return attr_dim_; }
    ParameterStore<Real>& params() { return params_; }
    const ParameterStore<Real>& params() const { return params_; }
    ItemEncoder<Real>& encoder() { return *encoder_; }
    const ItemEncoder<Real>& encoder() const { return *encoder_; }

    std::int64_t parameter_count() const { return params_.scalar_count(); }

    static std::int64_t closed_form_count(const ModelConfig& cfg, int item_count, int attr_dim) {
        const std::int64_t d = cfg.d;
        std::int64_t n = encoder_closed_form_count(cfg, item_count, attr_dim);
        std::int64_t per_block = 3 * d * d + 2 * d * d + 2 * d;  // heads + PWFF
        if (cfg.norm == NormKind::layer_norm) per_block += 2 * d;
        n += cfg.blocks * per_block;
        if (cfg.scorer == ScorerKind::ca || cfg.scorer == ScorerKind::ca_contrastive)
            n += 3 * d * d + d + 1;
        return n;
    }

    // Scores the candidate set against one user's input sequence. Returns
    // (n_candidates x 1) logits; candidates carry the positive at row 0.
    Tensor<Real> score_user(const EncoderInputs<Real>& input_events,
                            const EncoderInputs<Real>& candidates,
                            const TrainMode* mode = nullptr) const {
        auto item_vectors = encode_items(*encoder_, input_events);
        auto latents = seq_->encode(item_vectors, nullptr, mode);
        auto cand_vectors = encode_items(*encoder_, candidates);
        switch (cfg_.scorer) {
            case ScorerKind::ip_bce:
            case ScorerKind::ip_ntxent:
                return score_inner_product(row(latents, latents.rows() - 1), cand_vectors,
                                           cfg_.scorer, cfg_.temperature);
            default:
                return ca_->score(cand_vectors, latents);
        }
    }

    // Batch training loss from per-user score columns (positive first).
    Tensor<Real> batch_loss(const std::vector<Tensor<Real>>& score_cols) const {
        if (score_cols.empty()) throw ContractError("batch_loss: empty batch");
        std::vector<Tensor<Real>> rows;
        rows.reserve(score_cols.size());
        for (const auto& col : score_cols) rows.push_back(transpose(col));
        auto matrix = rows.size() == 1 ? rows[0] : concat_rows(rows);
        switch (cfg_.scorer) {
            case ScorerKind::ip_ntxent:
                return lip_loss(matrix);  // temperature already applied in the cosine scores
            case ScorerKind::ca_contrastive:
                return lip_loss(matrix, cfg_.temperature);
            default: {
                std::vector<Real> labels(static_cast<std::size_t>(matrix.rows()) * matrix.cols(),
                                         Real(0));
                for (int i = 0; i < matrix.rows(); ++i)
                    labels[static_cast<std::size_t>(i) * matrix.cols()] = Real(1);
                return bce_loss(matrix, labels);
            }
        }
    }

  private:
    ModelConfig cfg_;
    int item_count_;
    int attr_dim_;
    ParameterStore<Real> params_;
    std::optional<ItemEncoder<Real>> encoder_;
    std::optional<SequenceEncoder<Real>> seq_;
    std::optional<CrossAttentionScorer<Real>> ca_;
};

}  // namespace proxyrec

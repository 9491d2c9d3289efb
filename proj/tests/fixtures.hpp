#pragma once

#include "proxyrec/config.hpp"
#include "proxyrec/data.hpp"

namespace testutil {

inline proxyrec::InteractionDataset tiny_dataset(int users = 20, int items = 30,
                                                 std::uint64_t seed = 1) {
    proxyrec::SynthConfig cfg;
    cfg.user_count = users;
    cfg.item_count = items;
    cfg.cluster_count = std::min(5, items);
    cfg.attr_dim = 6;
    cfg.zipf_exponent = 0.8;
    cfg.min_interactions = 6;
    cfg.max_interactions = 12;
    return proxyrec::generate_synthetic(cfg, seed);
}

inline proxyrec::ModelConfig tiny_model_cfg() {
    proxyrec::ModelConfig cfg;
    cfg.encoder = proxyrec::EncoderKind::pir;
    cfg.d = 8;
    cfg.n_proxy = 4;
    cfg.freq_items = 6;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.scorer = proxyrec::ScorerKind::ca_contrastive;
    cfg.temperature = 0.1;
    return cfg;
}

inline proxyrec::TrainConfig tiny_train_cfg() {
    proxyrec::TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.max_len = 12;
    cfg.n_negatives = 8;
    cfg.p_cut = 0.0;
    cfg.p_item_replace = 0.0;
    cfg.dropout = 0.0;
    cfg.weight_decay = 0.0;
    cfg.lr = 3e-3;
    cfg.eval_every = 2;
    cfg.patience = 10;
    cfg.seed = 42;
    return cfg;
}

}  // namespace testutil

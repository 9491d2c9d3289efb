#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "proxyrec/config.hpp"
#include "proxyrec/data.hpp"
#include "proxyrec/errors.hpp"
#include "proxyrec/optim.hpp"
#include "proxyrec/tensor.hpp"

// Item encoding layer: turns (item id, attribute vector, context vector)
// triples into d-dimensional item vectors. Three interchangeable encoders:
//
//   FullTableEncoder    per-item embedding row + shallow attribute/context net
//   UnknownTokenEncoder full table with the least-frequent items collapsed
//                       onto one shared row
//   PirEncoder          softmax-weighted sum of shared proxy embeddings,
//                       weights computed from content, plus learnable logit
//                       biases for the top-K frequent items

namespace proxyrec {

// One batch of items to encode. Attribute/context rows are constants
// aligned with `ids`.
template <class Real>
struct EncoderInputs {
    std::vector<int> ids;
    Tensor<Real> attributes;  // n x d_A
    Tensor<Real> contexts;    // n x kContextDim
};

template <class Real>
inline Tensor<Real> apply_activation(const Tensor<Real>& x, Activation act, Real slope) {
    switch (act) {
        case Activation::leaky_relu: return leaky_relu(x, slope);
        case Activation::sigmoid: return sigmoid(x);
        default: return x;
    }
}

// Items ranked most-frequent first; ties broken by ascending id.
inline std::vector<int> items_by_frequency_desc(const std::vector<std::int64_t>& freq) {
    std::vector<int> order(freq.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return freq[a] != freq[b] ? freq[a] > freq[b] : a < b;
    });
    return order;
}

// Items ranked least-frequent first; ties broken by ascending id.
inline std::vector<int> items_by_frequency_asc(const std::vector<std::int64_t>& freq) {
    std::vector<int> order(freq.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return freq[a] != freq[b] ? freq[a] < freq[b] : a < b;
    });
    return order;
}

template <class Real>
class FullTableEncoder {
  public:
    FullTableEncoder(const ModelConfig& cfg, int item_count, int attr_dim,
                     ParameterStore<Real>& store, Rng& rng)
        : cfg_(cfg), item_count_(item_count) {
        const int d_ie = cfg.resolved_d_ie();
        const int d_ac = cfg.resolved_d_ac();
        table_ = store.add("encoder.IE", glorot_init<Real>(item_count, d_ie, rng), false);
        w_ac_ = store.add("encoder.W_ac", glorot_init<Real>(attr_dim + kContextDim, d_ac, rng), false);
        b_ac_ = store.add("encoder.b_ac", Tensor<Real>::zeros(1, d_ac, true), true);
        w_item_ = store.add("encoder.W_item", glorot_init<Real>(d_ie + d_ac, cfg.d, rng), false);
        b_item_ = store.add("encoder.b_item", Tensor<Real>::zeros(1, cfg.d, true), true);
    }

    Tensor<Real> encode(const EncoderInputs<Real>& in) const {
        for (int id : in.ids)
            if (id < 0 || id >= item_count_)
                throw DataError("FullTableEncoder: unknown item id " + std::to_string(id));
        auto rows = gather_rows(table_, in.ids);
        auto z = content_vector(in);
        const Real slope = static_cast<Real>(cfg_.leaky_slope);
        return apply_activation(add(matmul(concat_cols<Real>({rows, z}), w_item_), b_item_),
                                cfg_.activation, slope);
    }

    static std::int64_t closed_form_count(const ModelConfig& cfg, int item_count, int attr_dim) {
        const std::int64_t d_ie = cfg.resolved_d_ie();
        const std::int64_t d_ac = cfg.resolved_d_ac();
        return static_cast<std::int64_t>(item_count) * d_ie +
               (attr_dim + kContextDim) * d_ac + d_ac + (d_ie + d_ac) * cfg.d + cfg.d;
    }

    const Tensor<Real>& table() const { return table_; }

  protected:
    Tensor<Real> content_vector(const EncoderInputs<Real>& in) const {
        const Real slope = static_cast<Real>(cfg_.leaky_slope);
        return apply_activation(
            add(matmul(concat_cols<Real>({in.attributes, in.contexts}), w_ac_), b_ac_),
            cfg_.activation, slope);
    }

    ModelConfig cfg_;
    int item_count_;
    Tensor<Real> table_, w_ac_, b_ac_, w_item_, b_item_;
};

// Full-table variant with the floor(ratio * |I|) least-frequent items mapped
// onto one shared "unknown" row. The table physically shrinks to
// (live + 1) rows.
template <class Real>
class UnknownTokenEncoder {
  public:
    UnknownTokenEncoder(const ModelConfig& cfg, int item_count, int attr_dim,
                        const std::vector<std::int64_t>& train_freq, ParameterStore<Real>& store,
                        Rng& rng)
        : cfg_(cfg), item_count_(item_count) {
        if (static_cast<int>(train_freq.size()) != item_count)
            throw ContractError("UnknownTokenEncoder: frequency table size mismatch");
        const int replaced = static_cast<int>(cfg.unknown_ratio * item_count);
        const auto order = items_by_frequency_asc(train_freq);
        row_of_.assign(item_count, -1);
        for (int k = 0; k < replaced; ++k) row_of_[order[k]] = -2;  // mark replaced
        int next = 0;
        for (int i = 0; i < item_count; ++i)
            if (row_of_[i] == -1) row_of_[i] = next++;
        live_count_ = next;
        for (int i = 0; i < item_count; ++i)
            if (row_of_[i] == -2) row_of_[i] = live_count_;  // shared unknown row

        const int d_ie = cfg.resolved_d_ie();
        const int d_ac = cfg.resolved_d_ac();
        table_ = store.add("encoder.IE", glorot_init<Real>(live_count_ + 1, d_ie, rng), false);
        w_ac_ = store.add("encoder.W_ac", glorot_init<Real>(attr_dim + kContextDim, d_ac, rng), false);
        b_ac_ = store.add("encoder.b_ac", Tensor<Real>::zeros(1, d_ac, true), true);
        w_item_ = store.add("encoder.W_item", glorot_init<Real>(d_ie + d_ac, cfg.d, rng), false);
        b_item_ = store.add("encoder.b_item", Tensor<Real>::zeros(1, cfg.d, true), true);
    }

    Tensor<Real> encode(const EncoderInputs<Real>& in) const {
        std::vector<int> rows_idx(in.ids.size());
        for (std::size_t i = 0; i < in.ids.size(); ++i) {
            const int id = in.ids[i];
            if (id < 0 || id >= item_count_)
                throw DataError("UnknownTokenEncoder: unknown item id " + std::to_string(id));
            rows_idx[i] = row_of_[id];
        }
        auto rows = gather_rows(table_, rows_idx);
        const Real slope = static_cast<Real>(cfg_.leaky_slope);
        auto z = apply_activation(
            add(matmul(concat_cols<Real>({in.attributes, in.contexts}), w_ac_), b_ac_),
            cfg_.activation, slope);
        return apply_activation(add(matmul(concat_cols<Real>({rows, z}), w_item_), b_item_),
                                cfg_.activation, slope);
    }

    bool is_replaced(int item) const { return row_of_[item] == live_count_; }
    int live_count() const { return live_count_; }

    static std::int64_t closed_form_count(const ModelConfig& cfg, int item_count, int attr_dim) {
        const int replaced = static_cast<int>(cfg.unknown_ratio * item_count);
        const std::int64_t d_ie = cfg.resolved_d_ie();
        const std::int64_t d_ac = cfg.resolved_d_ac();
        return static_cast<std::int64_t>(item_count - replaced + 1) * d_ie +
               (attr_dim + kContextDim) * d_ac + d_ac + (d_ie + d_ac) * cfg.d + cfg.d;
    }

  private:
    ModelConfig cfg_;
    int item_count_;
    int live_count_ = 0;
    std::vector<int> row_of_;
    Tensor<Real> table_, w_ac_, b_ac_, w_item_, b_item_;
};

template <class Real>
class PirEncoder {
  public:
    PirEncoder(const ModelConfig& cfg, int item_count, int attr_dim,
               const std::vector<std::int64_t>& train_freq, ParameterStore<Real>& store, Rng& rng)
        : cfg_(cfg) {
        if (cfg.freq_items > item_count)
            throw ConfigError("PirEncoder: freq_items (K) exceeds catalog size");
        const int d_phi = cfg.resolved_d_phi();
        const int d_proxy = cfg.resolved_d_proxy();
        const int d_ap = cfg.resolved_d_a_prime();
        const int d_ac = cfg.resolved_d_ac();

        proxies_ = store.add("encoder.P", glorot_init<Real>(cfg.n_proxy, d_proxy, rng), false);
        if (cfg.freq_items > 0) {
            // zero-initialized so early proxy weights are untouched by the bias
            freq_bias_ =
                store.add("encoder.b_freq", Tensor<Real>::zeros(cfg.freq_items, cfg.n_proxy, true),
                          true);
            const auto order = items_by_frequency_desc(train_freq);
            for (int k = 0; k < cfg.freq_items; ++k) bias_row_[order[k]] = k;
        }
        w_phi1_ = store.add("encoder.W_phi1",
                            glorot_init<Real>(attr_dim + kContextDim, d_phi, rng), false);
        b_phi1_ = store.add("encoder.b_phi1", Tensor<Real>::zeros(1, d_phi, true), true);
        w_phi2_ = store.add("encoder.W_phi2", glorot_init<Real>(d_phi, cfg.n_proxy, rng), false);
        b_phi2_ = store.add("encoder.b_phi2", Tensor<Real>::zeros(1, cfg.n_proxy, true), true);
        w_a_ = store.add("encoder.W_a", glorot_init<Real>(attr_dim, d_ap, rng), false);
        b_a_ = store.add("encoder.b_a", Tensor<Real>::zeros(1, d_ap, true), true);
        w_ac_ = store.add("encoder.W_ac", glorot_init<Real>(d_ap + kContextDim, d_ac, rng), false);
        b_ac_ = store.add("encoder.b_ac", Tensor<Real>::zeros(1, d_ac, true), true);
        w_item_ = store.add("encoder.W_item", glorot_init<Real>(d_proxy + d_ac, cfg.d, rng), false);
        b_item_ = store.add("encoder.b_item", Tensor<Real>::zeros(1, cfg.d, true), true);
    }

    // Softmax-normalized proxy weights; bias rows added for items that own a
    // bias slot, skipped for everything else (including cold ids beyond the
    // catalog).
    Tensor<Real> proxy_weights(const EncoderInputs<Real>& in) const {
        return softmax_rows(proxy_logits(in));
    }

    // Convex combination of proxy rows: one point inside the proxy simplex
    // per item.
    Tensor<Real> pir_vectors(const EncoderInputs<Real>& in) const {
        return matmul(proxy_weights(in), proxies_);
    }

    Tensor<Real> encode(const EncoderInputs<Real>& in) const {
        const Real slope = static_cast<Real>(cfg_.leaky_slope);
        auto pir = pir_vectors(in);
        auto f_prime = apply_activation(add(matmul(in.attributes, w_a_), b_a_), cfg_.activation,
                                        slope);
        auto z = apply_activation(
            add(matmul(concat_cols<Real>({f_prime, in.contexts}), w_ac_), b_ac_), cfg_.activation,
            slope);
        return apply_activation(add(matmul(concat_cols<Real>({pir, z}), w_item_), b_item_),
                                cfg_.activation, slope);
    }

    static std::int64_t closed_form_count(const ModelConfig& cfg, int /*item_count*/,
                                          int attr_dim) {
        const std::int64_t d_phi = cfg.resolved_d_phi();
        const std::int64_t d_proxy = cfg.resolved_d_proxy();
        const std::int64_t d_ap = cfg.resolved_d_a_prime();
        const std::int64_t d_ac = cfg.resolved_d_ac();
        return static_cast<std::int64_t>(cfg.n_proxy) * d_proxy +
               static_cast<std::int64_t>(cfg.freq_items) * cfg.n_proxy +
               (attr_dim + kContextDim) * d_phi + d_phi + d_phi * cfg.n_proxy + cfg.n_proxy +
               static_cast<std::int64_t>(attr_dim) * d_ap + d_ap +
               (d_ap + kContextDim) * d_ac + d_ac + (d_proxy + d_ac) * cfg.d + cfg.d;
    }

    const Tensor<Real>& proxies() const { return proxies_; }
    Tensor<Real>& freq_bias() { return freq_bias_; }
    bool has_bias_row(int item) const { return bias_row_.count(item) > 0; }
    int bias_row_of(int item) const {
        auto it = bias_row_.find(item);
        return it == bias_row_.end() ? -1 : it->second;
    }

  private:
    Tensor<Real> proxy_logits(const EncoderInputs<Real>& in) const {
        const Real slope = static_cast<Real>(cfg_.leaky_slope);
        auto hidden = leaky_relu(
            add(matmul(concat_cols<Real>({in.attributes, in.contexts}), w_phi1_), b_phi1_), slope);
        auto logits = add(matmul(hidden, w_phi2_), b_phi2_);  // identity second activation
        if (!freq_bias_.defined()) return logits;
        std::vector<int> rows_idx(in.ids.size(), -1);
        bool any = false;
        for (std::size_t i = 0; i < in.ids.size(); ++i) {
            const auto it = bias_row_.find(in.ids[i]);
            if (it != bias_row_.end()) {
                rows_idx[i] = it->second;
                any = true;
            }
        }
        if (!any) return logits;
        return add(logits, gather_rows(freq_bias_, rows_idx));
    }

    ModelConfig cfg_;
    std::unordered_map<int, int> bias_row_;
    Tensor<Real> proxies_, freq_bias_;
    Tensor<Real> w_phi1_, b_phi1_, w_phi2_, b_phi2_;
    Tensor<Real> w_a_, b_a_, w_ac_, b_ac_, w_item_, b_item_;
};

template <class Real>
using ItemEncoder = std::variant<FullTableEncoder<Real>, UnknownTokenEncoder<Real>, PirEncoder<Real>>;

template <class Real>
inline ItemEncoder<Real> make_encoder(const ModelConfig& cfg, int item_count, int attr_dim,
                                      const std::vector<std::int64_t>& train_freq,
                                      ParameterStore<Real>& store, Rng& rng) {
    switch (cfg.encoder) {
        case EncoderKind::full_table:
            return FullTableEncoder<Real>(cfg, item_count, attr_dim, store, rng);
        case EncoderKind::unknown_token:
            return UnknownTokenEncoder<Real>(cfg, item_count, attr_dim, train_freq, store, rng);
        default:
            return PirEncoder<Real>(cfg, item_count, attr_dim, train_freq, store, rng);
    }
}

template <class Real>
inline Tensor<Real> encode_items(const ItemEncoder<Real>& enc, const EncoderInputs<Real>& in) {
    return std::visit([&](const auto& e) { return e.encode(in); }, enc);
}

inline std::int64_t encoder_closed_form_count(const ModelConfig& cfg, int item_count,
                                              int attr_dim) {
    switch (cfg.encoder) {
        case EncoderKind::full_table:
            return FullTableEncoder<double>::closed_form_count(cfg, item_count, attr_dim);
        case EncoderKind::unknown_token:
            return UnknownTokenEncoder<double>::closed_form_count(cfg, item_count, attr_dim);
        default:
            return PirEncoder<double>::closed_form_count(cfg, item_count, attr_dim);
    }
}

}  // namespace proxyrec

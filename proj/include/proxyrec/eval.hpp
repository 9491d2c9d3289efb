#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <unordered_set>
#include <vector>

#include "proxyrec/data.hpp"
#include "proxyrec/model.hpp"
#include "proxyrec/pca.hpp"

// Leave-one-out evaluation: each user's positive is ranked against frozen
// sampled negatives; HR@K and NDCG@K (single relevant item), catalog-coverage
// diversity, per-frequency-group breakdown, and the attribute-memorization
// probe.

namespace proxyrec {

enum class Split { valid, test, train_target };

// hr = [rank <= k]; ndcg = 1/log2(rank+1) if rank <= k else 0.
inline std::pair<double, double> rank_metrics(int rank, int k) {
    if (rank < 1) throw ContractError("rank_metrics: rank is 1-based");
    if (k < 1) throw ContractError("rank_metrics: k must be positive");
    if (rank > k) return {0.0, 0.0};
    return {1.0, 1.0 / std::log2(static_cast<double>(rank) + 1.0)};
}

// Catalog coverage of the recommended lists.
inline double diversity(const std::vector<std::vector<int>>& top_k_lists, int item_count) {
    if (top_k_lists.empty()) throw ContractError("diversity: empty input");
    std::unordered_set<int> seen;
    for (const auto& list : top_k_lists) seen.insert(list.begin(), list.end());
    return static_cast<double>(seen.size()) / item_count;
}

struct FrequencyGroups {
    std::vector<int> group_of;          // item -> group, 0 = most frequent
    std::vector<std::int64_t> masses;   // per-group occurrence mass
    std::vector<int> sizes;             // per-group item count
};

// Descending-frequency sweep into n_groups of (near) equal occurrence mass.
// Overshoot per group is bounded by one item's frequency.
inline FrequencyGroups frequency_groups(const std::vector<std::int64_t>& freq, int n_groups = 10) {
    const int n_items = static_cast<int>(freq.size());
    if (n_items < n_groups) throw DataError("frequency_groups: fewer items than groups");
    if (n_groups < 1) throw ContractError("frequency_groups: need at least one group");
    const auto order = items_by_frequency_desc(freq);
    std::int64_t remaining = std::accumulate(freq.begin(), freq.end(), std::int64_t{0});

    FrequencyGroups out;
    out.group_of.assign(n_items, -1);
    out.masses.assign(n_groups, 0);
    out.sizes.assign(n_groups, 0);
    int next = 0;
    for (int g = 0; g < n_groups; ++g) {
        const double target = static_cast<double>(remaining) / (n_groups - g);
        const bool last = g == n_groups - 1;
        while (next < n_items - (n_groups - g - 1)) {
            if (!last && out.sizes[g] > 0 && static_cast<double>(out.masses[g]) >= target) break;
            const int item = order[next++];
            out.group_of[item] = g;
            out.masses[g] += freq[item];
            ++out.sizes[g];
        }
        remaining -= out.masses[g];
    }
    return out;
}

struct GroupRecord {
    int item_count = 0;
    std::int64_t occurrence_mass = 0;
    int test_count = 0;  // users whose target item falls in this group
    double hr = 0.0;
    double ndcg = 0.0;
};

struct EvalReport {
    std::vector<int> ks;
    std::vector<double> hr;    // parallel to ks
    std::vector<double> ndcg;  // parallel to ks
    double diversity = 0.0;
    std::vector<GroupRecord> per_group;
    std::int64_t param_count = 0;
    double runtime_seconds = 0.0;
    std::uint64_t seed = 0;
    int users = 0;

    double hr_at(int k) const { return metric_at(hr, k); }
    double ndcg_at(int k) const { return metric_at(ndcg, k); }

  private:
    double metric_at(const std::vector<double>& v, int k) const {
        for (std::size_t i = 0; i < ks.size(); ++i)
            if (ks[i] == k) return v[i];
        throw ContractError("EvalReport: metric for requested k not present");
    }
};

struct EvalOptions {
    std::vector<int> ks = {5, 10};
    int n_negatives = 100;
    std::uint64_t seed = 123;
    int max_len = 30;
    int n_groups = 10;
    int top_list_size = 10;  // list length for the diversity union
};

// Scores one user's candidate list; index 0 is the positive.
using ScoreFn = std::function<std::vector<double>(
    int user, const std::vector<ModelEvent>& input, const std::vector<int>& candidate_ids,
    std::int64_t target_ts)>;

// Core ranking harness, decoupled from the model so metric paths can be
// exercised with synthetic scorers. Negatives are frozen per (seed, user).
// Ties rank the positive pessimistically (after equal-scored negatives).
inline EvalReport evaluate_with(const InteractionDataset& ds, Split split, const EvalOptions& opt,
                                const ScoreFn& score_fn) {
    const auto t0 = std::chrono::steady_clock::now();
    EvalReport report;
    report.ks = opt.ks;
    report.hr.assign(opt.ks.size(), 0.0);
    report.ndcg.assign(opt.ks.size(), 0.0);
    report.seed = opt.seed;
    report.users = ds.user_count;

    FrequencyGroups groups;
    const bool with_groups = ds.item_count >= opt.n_groups;
    if (with_groups) {
        groups = frequency_groups(ds.train_frequency(), opt.n_groups);
        report.per_group.assign(opt.n_groups, GroupRecord{});
        for (int g = 0; g < opt.n_groups; ++g) {
            report.per_group[g].item_count = groups.sizes[g];
            report.per_group[g].occurrence_mass = groups.masses[g];
        }
    }

    std::vector<std::vector<int>> top_lists;
    top_lists.reserve(ds.user_count);
    for (int u = 0; u < ds.user_count; ++u) {
        const auto& seq = ds.sequences[u];
        int target_idx;
        switch (split) {
            case Split::test: target_idx = ds.test_index(u); break;
            case Split::valid: target_idx = ds.valid_index(u); break;
            default: target_idx = static_cast<int>(seq.size()) - 3; break;
        }
        const Event target = seq[target_idx];
        std::vector<ModelEvent> input;
        const int start = std::max(0, target_idx - opt.max_len);
        for (int t = start; t < target_idx; ++t) input.push_back(to_model_event(seq[t]));

        const auto owned = ds.positive_items(u);
        if (ds.item_count - static_cast<int>(owned.size()) < opt.n_negatives)
            throw DataError("evaluate: candidate pool smaller than the negative sample size");
        Rng neg_rng(Rng::mix(opt.seed, static_cast<std::uint64_t>(u)));
        auto candidates = sample_negatives(ds.item_count, owned, opt.n_negatives, neg_rng);
        candidates.insert(candidates.begin(), target.item);

        const auto scores = score_fn(u, input, candidates, target.ts);
        if (scores.size() != candidates.size())
            throw ContractError("evaluate: scorer returned wrong candidate count");

        int rank = 1;
        for (std::size_t j = 1; j < scores.size(); ++j)
            if (scores[j] >= scores[0]) ++rank;

        for (std::size_t i = 0; i < opt.ks.size(); ++i) {
            const auto [h, n] = rank_metrics(rank, opt.ks[i]);
            report.hr[i] += h;
            report.ndcg[i] += n;
        }
        if (with_groups) {
            auto& rec = report.per_group[groups.group_of[target.item]];
            ++rec.test_count;
            const auto [h, n] = rank_metrics(rank, 10);
            rec.hr += h;
            rec.ndcg += n;
        }

        // top list for diversity: score desc, candidate order breaks ties
        std::vector<int> idx(candidates.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int b) { return scores[a] > scores[b]; });
        std::vector<int> top;
        for (int j = 0; j < std::min<int>(opt.top_list_size, static_cast<int>(idx.size())); ++j)
            top.push_back(candidates[idx[j]]);
        top_lists.push_back(std::move(top));
    }

    for (std::size_t i = 0; i < opt.ks.size(); ++i) {
        report.hr[i] /= ds.user_count;
        report.ndcg[i] /= ds.user_count;
    }
    for (auto& rec : report.per_group)
        if (rec.test_count > 0) {
            rec.hr /= rec.test_count;
            rec.ndcg /= rec.test_count;
        }
    report.diversity = diversity(top_lists, ds.item_count);
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

template <class Real>
ScoreFn model_score_fn(const Model<Real>& model, const InteractionDataset& ds) {
    return [&model, &ds](int /*user*/, const std::vector<ModelEvent>& input,
                         const std::vector<int>& candidate_ids, std::int64_t target_ts) {
        auto in = encoder_inputs<Real>(ds, input);
        auto cands = candidate_inputs<Real>(ds, candidate_ids, target_ts);
        auto scores = model.score_user(in, cands);
        std::vector<double> out(scores.values().size());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<double>(scores.values()[i]);
        return out;
    };
}

template <class Real>
EvalReport evaluate(const Model<Real>& model, const InteractionDataset& ds, Split split,
                    const EvalOptions& opt) {
    auto report = evaluate_with(ds, split, opt, model_score_fn(model, ds));
    report.param_count = model.parameter_count();
    return report;
}

// Seed-averaged evaluation ("run 5 times each with different random seeds").
template <class Real>
EvalReport evaluate_averaged(const Model<Real>& model, const InteractionDataset& ds, Split split,
                             EvalOptions opt, int n_seeds) {
    if (n_seeds < 1) throw ConfigError("evaluate_averaged: n_seeds must be positive");
    EvalReport mean;
    for (int s = 0; s < n_seeds; ++s) {
        EvalOptions o = opt;
        o.seed = Rng::mix(opt.seed, static_cast<std::uint64_t>(s));
        auto r = evaluate(model, ds, split, o);
        if (s == 0) {
            mean = r;
            mean.seed = opt.seed;
            continue;
        }
        for (std::size_t i = 0; i < mean.ks.size(); ++i) {
            mean.hr[i] += r.hr[i];
            mean.ndcg[i] += r.ndcg[i];
        }
        mean.diversity += r.diversity;
        mean.runtime_seconds += r.runtime_seconds;
        for (std::size_t g = 0; g < mean.per_group.size(); ++g) {
            mean.per_group[g].hr += r.per_group[g].hr;
            mean.per_group[g].ndcg += r.per_group[g].ndcg;
        }
    }
    for (std::size_t i = 0; i < mean.ks.size(); ++i) {
        mean.hr[i] /= n_seeds;
        mean.ndcg[i] /= n_seeds;
    }
    mean.diversity /= n_seeds;
    for (auto& g : mean.per_group) {
        g.hr /= n_seeds;
        g.ndcg /= n_seeds;
    }
    return mean;
}

// Trains a 2-layer classifier attributes -> item id and reports top-1
// training accuracy: high accuracy means attributes distinguish items.
inline double memorization_probe(const std::vector<std::vector<double>>& attributes,
                                 int hidden_dim, int epochs, std::uint64_t seed = 0xACC) {
    const int n = static_cast<int>(attributes.size());
    if (n < 2) throw ContractError("memorization_probe: need at least 2 items");
    const int d = static_cast<int>(attributes[0].size());
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(n) * d);
    for (const auto& row : attributes) {
        if (static_cast<int>(row.size()) != d)
            throw ShapeError("memorization_probe: ragged attributes");
        flat.insert(flat.end(), row.begin(), row.end());
    }
    auto x = Tensor<double>::from(n, d, flat);
    std::vector<int> targets(n);
    std::iota(targets.begin(), targets.end(), 0);

    Rng rng(seed);
    ParameterStore<double> store;
    auto w1 = store.add("probe.W1", glorot_init<double>(d, hidden_dim, rng), false);
    auto b1 = store.add("probe.b1", Tensor<double>::zeros(1, hidden_dim, true), true);
    auto w2 = store.add("probe.W2", glorot_init<double>(hidden_dim, n, rng), false);
    auto b2 = store.add("probe.b2", Tensor<double>::zeros(1, n, true), true);
    AdamW<double> opt(AdamWConfig{0.02, 0.9, 0.999, 1e-8, 0.0});

    auto logits_fn = [&] {
        return add(matmul(leaky_relu(add(matmul(x, w1), b1), 0.01), w2), b2);
    };
    for (int e = 0; e < epochs; ++e) {
        backward(mean_all(cross_entropy_rows(logits_fn(), targets)));
        opt.step(store);
    }
    auto logits = logits_fn();
    int correct = 0;
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int j = 1; j < n; ++j)
            if (logits.value_at(i, j) > logits.value_at(i, best)) best = j;
        if (best == i) ++correct;
    }
    return static_cast<double>(correct) / n;
}

}  // namespace proxyrec

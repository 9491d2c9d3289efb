#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "proxyrec/eval.hpp"
#include "proxyrec/trainer.hpp"

// Desk-scale analysis harnesses: the infrequent-item removal sweep (baseline
// collapses removed items onto an unknown token, PIR only loses bias slots)
// and the catalog-growth sweep (truncate the catalog to r * |I| items and
// compare parameter counts).

namespace proxyrec {

// Keep only the first `keep_items` item ids; drop the interactions that
// touch removed items and re-apply the minimum-length rule. Item ids stay
// dense because the kept set is a prefix of the id space.
inline InteractionDataset truncate_catalog(const InteractionDataset& ds, int keep_items) {
    if (keep_items <= 0 || keep_items > ds.item_count)
        throw ConfigError("truncate_catalog: keep_items out of range");
    if (keep_items == ds.item_count) return ds;
    InteractionDataset out;
    out.item_count = keep_items;
    out.attribute_kind = ds.attribute_kind;
    out.attr_dim = ds.attr_dim;
    out.attributes.assign(ds.attributes.begin(), ds.attributes.begin() + keep_items);
    out.item_tokens.assign(ds.item_tokens.begin(), ds.item_tokens.begin() + keep_items);
    for (int u = 0; u < ds.user_count; ++u) {
        std::vector<Event> seq;
        for (const auto& ev : ds.sequences[u])
            if (ev.item < keep_items) seq.push_back(ev);
        if (seq.size() <= 3) continue;  // same exclusion rule as preprocessing
        out.sequences.push_back(std::move(seq));
        out.user_tokens.push_back(ds.user_tokens[u]);
    }
    out.user_count = static_cast<int>(out.sequences.size());
    if (out.user_count == 0) throw DataError("truncate_catalog: no users remain");
    out.refresh_year_range();
    return out;
}

struct TrainedRun {
    std::int64_t param_count = 0;
    EvalReport report;
    FitResult fit;
};

// Builds a model from the config, fits it, and evaluates the test split.
template <class Real>
TrainedRun train_and_evaluate(const ModelConfig& mcfg, const TrainConfig& tcfg,
                              const EvalConfig& ecfg, const InteractionDataset& ds,
                              std::uint64_t config_hash = 0) {
    Model<Real> model(mcfg, ds.item_count, ds.attr_dim, ds.train_frequency(),
                      Rng::mix(tcfg.seed, 0x111));
    Trainer<Real> trainer(model, ds, tcfg);
    TrainedRun run;
    run.fit = trainer.fit(ecfg, config_hash);
    EvalOptions opt;
    opt.ks = ecfg.ks;
    opt.n_negatives = ecfg.n_negatives;
    opt.seed = ecfg.seed;
    opt.max_len = tcfg.max_len;
    run.report = evaluate(model, ds, ecfg.split == "valid" ? Split::valid : Split::test, opt);
    run.param_count = model.parameter_count();
    return run;
}

struct RemovalRow {
    double ratio = 0.0;
    std::int64_t param_count = 0;
    double ndcg10 = 0.0;
    double diversity = 0.0;
};

// Removal sweep. Baseline encoders wrap the table with the unknown token at
// ratio > 0; the PIR encoder is unaffected except that bias slots shrink to
// the surviving item count.
template <class Real>
std::vector<RemovalRow> removal_experiment(const InteractionDataset& ds,
                                           const std::vector<double>& ratios,
                                           const ModelConfig& base_model, const TrainConfig& tcfg,
                                           const EvalConfig& ecfg) {
    std::vector<RemovalRow> table;
    for (double ratio : ratios) {
        if (ratio < 0.0 || ratio > 1.0) throw ConfigError("removal ratio outside [0, 1]");
        ModelConfig mcfg = base_model;
        if (mcfg.encoder == EncoderKind::pir) {
            const int removed = static_cast<int>(ratio * ds.item_count);
            mcfg.freq_items = std::min(mcfg.freq_items, ds.item_count - removed);
        } else {
            mcfg.encoder = ratio == 0.0 ? EncoderKind::full_table : EncoderKind::unknown_token;
            mcfg.unknown_ratio = ratio;
        }
        auto run = train_and_evaluate<Real>(mcfg, tcfg, ecfg, ds);
        table.push_back(RemovalRow{ratio, run.param_count, run.report.ndcg_at(10),
                                   run.report.diversity});
    }
    return table;
}

struct GrowthRow {
    double r = 0.0;  // kept fraction of the catalog
    int items = 0;
    int users = 0;
    std::int64_t baseline_params = 0;
    std::int64_t pir_params = 0;
    double baseline_ndcg10 = 0.0;
    double pir_ndcg10 = 0.0;
};

// Catalog growth sweep over r in {1/4, 2/4, 3/4, 1}: the full-table baseline
// grows with the catalog while the proxy bank stays fixed.
template <class Real>
std::vector<GrowthRow> growth_experiment(const InteractionDataset& ds,
                                         const ModelConfig& base_model, const TrainConfig& tcfg,
                                         const EvalConfig& ecfg) {
    std::vector<GrowthRow> table;
    for (int step = 1; step <= 4; ++step) {
        const double r = step / 4.0;
        const int keep = std::max(1, static_cast<int>(r * ds.item_count));
        const auto part = truncate_catalog(ds, keep);

        GrowthRow row;
        row.r = r;
        row.items = part.item_count;
        row.users = part.user_count;

        ModelConfig baseline = base_model;
        baseline.encoder = EncoderKind::full_table;
        auto base_run = train_and_evaluate<Real>(baseline, tcfg, ecfg, part);
        row.baseline_params = base_run.param_count;
        row.baseline_ndcg10 = base_run.report.ndcg_at(10);

        ModelConfig pir = base_model;
        pir.encoder = EncoderKind::pir;
        if (pir.freq_items > part.item_count)
            throw ConfigError("growth_experiment: freq_items exceeds the smallest partition");
        auto pir_run = train_and_evaluate<Real>(pir, tcfg, ecfg, part);
        row.pir_params = pir_run.param_count;
        row.pir_ndcg10 = pir_run.report.ndcg_at(10);

        table.push_back(row);
    }
    return table;
}

}  // namespace proxyrec

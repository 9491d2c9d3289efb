#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "proxyrec/config.hpp"
#include "proxyrec/data.hpp"
#include "proxyrec/experiments.hpp"
#include "proxyrec/trainer.hpp"

// Subcommand implementations behind the `proxyrec` executable. Every output
// file embeds the config hash and seed, so any artifact can be traced back
// to the experiment that produced it.

namespace proxyrec::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitProvenance = 4;

namespace fs = std::filesystem;

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Prepared dataset artifact
// ---------------------------------------------------------------------------

inline fs::path prepared_dir(const ExperimentConfig& cfg) {
    return fs::path(cfg.output_dir) / "prepared";
}

inline InteractionDataset build_dataset(const ExperimentConfig& cfg) {
    if (cfg.data.kind == "synthetic") {
        SynthConfig scfg;
        scfg.user_count = cfg.data.synth_users;
        scfg.item_count = cfg.data.synth_items;
        scfg.cluster_count = cfg.data.synth_clusters;
        scfg.attr_dim = cfg.data.synth_attr_dim;
        scfg.zipf_exponent = cfg.data.synth_zipf;
        scfg.attr_noise = cfg.data.synth_noise;
        scfg.min_interactions = cfg.data.synth_min_len;
        scfg.max_interactions = cfg.data.synth_max_len;
        scfg.prefs_min = cfg.data.synth_prefs_min;
        scfg.prefs_max = cfg.data.synth_prefs_max;
        return generate_synthetic(scfg, cfg.data.seed);
    }
    auto ds = load_interactions_file(cfg.data.interactions);
    load_attributes_file(cfg.data.attributes, ds,
                         cfg.data.attribute_kind == "dense"
                             ? AttributeKind::dense
                             : AttributeKind::categorical_multihot);
    ds.validate();
    return ds;
}

inline void write_prepared(const InteractionDataset& ds, const ExperimentConfig& cfg) {
    const auto dir = prepared_dir(cfg);
    fs::create_directories(dir);
    const std::string provenance =
        "# config_hash=" + hash_hex(cfg.config_hash()) + " seed=" + std::to_string(cfg.data.seed);

    {
        std::ofstream out(dir / "interactions.tsv");
        if (!out) throw IoError("cannot write " + (dir / "interactions.tsv").string());
        out << provenance << '\n';
        for (int u = 0; u < ds.user_count; ++u)
            for (const auto& ev : ds.sequences[u])
                out << ds.user_tokens[u] << '\t' << ds.item_tokens[ev.item] << '\t' << ev.ts
                    << '\n';
    }
    {
        std::ofstream out(dir / "attributes.tsv");
        if (!out) throw IoError("cannot write " + (dir / "attributes.tsv").string());
        out << provenance << '\n';
        for (int i = 0; i < ds.item_count; ++i) {
            out << ds.item_tokens[i] << '\t';
            for (int j = 0; j < ds.attr_dim; ++j)
                out << (j ? "," : "") << fmt17(ds.attributes[i][j]);
            out << '\n';
        }
    }
    {
        // dataset statistics: users, items, interactions, density,
        // unique attribute vectors, duplicates per unique attribute
        std::unordered_set<std::string> unique;
        for (const auto& row : ds.attributes) {
            std::string key;
            for (double v : row) key += fmt17(v) + ",";
            unique.insert(key);
        }
        const auto interactions = ds.interaction_count();
        const double density = static_cast<double>(interactions) /
                               (static_cast<double>(ds.user_count) * ds.item_count);
        std::ofstream out(dir / "stats.txt");
        if (!out) throw IoError("cannot write " + (dir / "stats.txt").string());
        out << "config_hash = " << hash_hex(cfg.config_hash()) << '\n'
            << "seed = " << cfg.data.seed << '\n'
            << "users = " << ds.user_count << '\n'
            << "items = " << ds.item_count << '\n'
            << "interactions = " << interactions << '\n'
            << "density = " << fmt17(density) << '\n'
            << "attr_dim = " << ds.attr_dim << '\n'
            << "unique_attributes = " << unique.size() << '\n'
            << "duplicates = " << fmt17(static_cast<double>(ds.item_count) / unique.size())
            << '\n';
    }
    {
        std::ofstream out(dir / "frequency.tsv");
        if (!out) throw IoError("cannot write " + (dir / "frequency.tsv").string());
        out << provenance << '\n';
        const auto freq = ds.train_frequency();
        for (int i = 0; i < ds.item_count; ++i)
            out << ds.item_tokens[i] << '\t' << freq[i] << '\n';
    }
}

inline InteractionDataset load_prepared(const ExperimentConfig& cfg) {
    const auto dir = prepared_dir(cfg);
    if (!fs::exists(dir / "interactions.tsv"))
        throw IoError("prepared dataset not found under " + dir.string() + "; run prepare first");
    auto ds = load_interactions_file((dir / "interactions.tsv").string());
    load_attributes_file((dir / "attributes.tsv").string(), ds, AttributeKind::dense);
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline int run_prepare(const ExperimentConfig& cfg, std::ostream& log) {
    const auto ds = build_dataset(cfg);
    write_prepared(ds, cfg);
    log << "prepared " << ds.user_count << " users, " << ds.item_count << " items, "
        << ds.interaction_count() << " interactions -> " << prepared_dir(cfg).string() << '\n';
    return kExitOk;
}

namespace detail {

template <class Real>
int run_train_impl(const ExperimentConfig& cfg, std::ostream& log) {
    const auto ds = load_prepared(cfg);
    Model<Real> model(cfg.model, ds.item_count, ds.attr_dim, ds.train_frequency(),
                      Rng::mix(cfg.train.seed, 0x111));
    Trainer<Real> trainer(model, ds, cfg.train);
    const auto hash = cfg.config_hash();

    FitResult fit;
    try {
        fit = trainer.fit(cfg.eval, hash);
    } catch (const NumericError& e) {
        const auto diag_path = fs::path(cfg.output_dir) / "diagnostics.txt";
        fs::create_directories(cfg.output_dir);
        std::ofstream diag(diag_path);
        diag << e.what() << '\n';
        log << "numeric abort; diagnostics written to " << diag_path.string() << '\n';
        return kExitNumeric;
    }

    fs::create_directories(cfg.output_dir);
    fit.best.save((fs::path(cfg.output_dir) / "checkpoint.bin").string());
    {
        std::ofstream out(fs::path(cfg.output_dir) / "history.tsv");
        if (!out) throw IoError("cannot write history.tsv");
        out << "# config_hash=" << hash_hex(hash) << " seed=" << cfg.train.seed << '\n';
        out << "# epoch\ttrain_loss\tvalid_ndcg10\tvalid_hr10\timproved\n";
        std::size_t ei = 0;
        for (const auto& rec : fit.epochs) {
            out << rec.epoch << '\t' << fmt17(rec.train_loss);
            if (ei < fit.evals.size() && fit.evals[ei].epoch == rec.epoch) {
                const auto& ev = fit.evals[ei++];
                out << '\t' << fmt17(ev.ndcg10) << '\t' << fmt17(ev.hr10) << '\t'
                    << (ev.improved ? 1 : 0);
            } else {
                out << "\t-\t-\t-";
            }
            out << '\n';
        }
    }
    log << "best valid NDCG@10 " << fit.best_ndcg10 << " at epoch " << fit.best_epoch
        << "; checkpoint and history written to " << cfg.output_dir << '\n';
    return kExitOk;
}

inline nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["users"] = report.users;
    j["seed"] = report.seed;
    for (std::size_t i = 0; i < report.ks.size(); ++i) {
        j["hr"][std::to_string(report.ks[i])] = report.hr[i];
        j["ndcg"][std::to_string(report.ks[i])] = report.ndcg[i];
    }
    j["diversity"] = report.diversity;
    j["param_count"] = report.param_count;
    j["runtime_seconds"] = report.runtime_seconds;
    j["per_group"] = nlohmann::json::array();
    for (const auto& g : report.per_group)
        j["per_group"].push_back({{"items", g.item_count},
                                  {"occurrence_mass", g.occurrence_mass},
                                  {"test_count", g.test_count},
                                  {"hr10", g.hr},
                                  {"ndcg10", g.ndcg}});
    return j;
}

template <class Real>
int run_eval_impl(const ExperimentConfig& cfg, std::ostream& log) {
    const auto ds = load_prepared(cfg);
    const auto hash = cfg.config_hash();
    const auto ck_path = (fs::path(cfg.output_dir) / "checkpoint.bin").string();
    const auto ck = Checkpoint::load(ck_path);
    if (ck.config_hash != hash) {
        log << "config hash mismatch: checkpoint " << hash_hex(ck.config_hash) << " vs config "
            << hash_hex(hash) << '\n';
        return kExitProvenance;
    }
    Model<Real> model(cfg.model, ds.item_count, ds.attr_dim, ds.train_frequency(),
                      Rng::mix(cfg.train.seed, 0x111));
    ck.restore(model, static_cast<AdamW<Real>*>(nullptr));

    EvalOptions opt;
    opt.ks = cfg.eval.ks;
    opt.n_negatives = cfg.eval.n_negatives;
    opt.seed = cfg.eval.seed;
    opt.max_len = cfg.train.max_len;
    const auto split = cfg.eval.split == "valid" ? Split::valid : Split::test;
    const auto report = evaluate_averaged(model, ds, split, opt, cfg.eval.n_seeds);

    auto j = detail::report_to_json(report);
    j["config_hash"] = hash_hex(hash);
    j["split"] = cfg.eval.split;
    j["eval_seeds"] = cfg.eval.n_seeds;
    const auto path = fs::path(cfg.output_dir) / "eval_report.json";
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    log << j.dump(2) << '\n';
    return kExitOk;
}

template <class Real>
int run_analyze_impl(const ExperimentConfig& cfg, std::ostream& log) {
    const auto ds = load_prepared(cfg);
    const auto hash = cfg.config_hash();
    const auto dir = fs::path(cfg.output_dir) / "analysis";
    fs::create_directories(dir);
    const std::string provenance =
        "# config_hash=" + hash_hex(hash) + " seed=" + std::to_string(cfg.train.seed);

    {
        const auto groups = frequency_groups(ds.train_frequency(), 10);
        std::ofstream out(dir / "groups.tsv");
        out << provenance << "\n# group\titems\toccurrence_mass\n";
        for (std::size_t g = 0; g < groups.masses.size(); ++g)
            out << g << '\t' << groups.sizes[g] << '\t' << groups.masses[g] << '\n';
        log << "frequency groups written\n";
    }
    if (cfg.analyze.memorization_epochs > 0) {
        const double acc = memorization_probe(ds.attributes, cfg.analyze.memorization_hidden,
                                              cfg.analyze.memorization_epochs,
                                              Rng::mix(cfg.train.seed, 0xACC));
        std::ofstream out(dir / "memorization.txt");
        out << "config_hash = " << hash_hex(hash) << "\naccuracy = " << fmt17(acc) << '\n';
        log << "memorization accuracy " << acc << '\n';
    }
    if (!cfg.analyze.removal_ratios.empty()) {
        const auto table =
            removal_experiment<Real>(ds, cfg.analyze.removal_ratios, cfg.model, cfg.train,
                                     cfg.eval);
        std::ofstream out(dir / "removal.tsv");
        out << provenance << "\n# ratio\tparam_count\tndcg10\tdiversity\n";
        for (const auto& row : table)
            out << fmt17(row.ratio) << '\t' << row.param_count << '\t' << fmt17(row.ndcg10)
                << '\t' << fmt17(row.diversity) << '\n';
        log << "removal sweep written (" << table.size() << " ratios)\n";
    }
    if (cfg.analyze.growth) {
        const auto table = growth_experiment<Real>(ds, cfg.model, cfg.train, cfg.eval);
        std::ofstream out(dir / "growth.tsv");
        out << provenance
            << "\n# r\titems\tusers\tbaseline_params\tbaseline_ndcg10\tpir_params\tpir_ndcg10\n";
        for (const auto& row : table)
            out << fmt17(row.r) << '\t' << row.items << '\t' << row.users << '\t'
                << row.baseline_params << '\t' << fmt17(row.baseline_ndcg10) << '\t'
                << row.pir_params << '\t' << fmt17(row.pir_ndcg10) << '\n';
        log << "growth sweep written\n";
    }
    return kExitOk;
}

template <class Real>
int run_export_impl(const ExperimentConfig& cfg, std::ostream& log) {
    if (cfg.model.encoder != EncoderKind::pir) {
        log << "proxy exports require the pir encoder; configured encoder is "
            << to_string(cfg.model.encoder) << '\n';
        return kExitInput;
    }
    const auto ds = load_prepared(cfg);
    const auto hash = cfg.config_hash();
    const auto ck = Checkpoint::load((fs::path(cfg.output_dir) / "checkpoint.bin").string());
    if (ck.config_hash != hash) {
        log << "config hash mismatch\n";
        return kExitProvenance;
    }
    Model<Real> model(cfg.model, ds.item_count, ds.attr_dim, ds.train_frequency(),
                      Rng::mix(cfg.train.seed, 0x111));
    ck.restore(model, static_cast<AdamW<Real>*>(nullptr));
    auto& pir = std::get<PirEncoder<Real>>(model.encoder());

    // per-item context: the item's most recent occurrence in any train
    // prefix; items never seen in training fall back to epoch zero
    std::vector<std::int64_t> last_ts(ds.item_count, 0);
    for (int u = 0; u < ds.user_count; ++u) {
        const auto prefix = ds.train_prefix(u);
        for (const auto& ev : prefix)
            last_ts[ev.item] = std::max(last_ts[ev.item], ev.ts);
    }
    std::vector<ModelEvent> events;
    for (int i = 0; i < ds.item_count; ++i) events.push_back(ModelEvent{i, i, last_ts[i]});
    const auto inputs = encoder_inputs<Real>(ds, events);
    const auto weights = pir.proxy_weights(inputs);
    const auto vectors = pir.pir_vectors(inputs);
    const auto item_vectors = pir.encode(inputs);

    const auto dir = fs::path(cfg.output_dir) / "exports";
    fs::create_directories(dir);
    const std::string provenance =
        "# config_hash=" + hash_hex(hash) + " seed=" + std::to_string(cfg.train.seed);
    {
        std::ofstream out(dir / "proxy_weights.tsv");
        out << provenance << '\n';
        for (int i = 0; i < ds.item_count; ++i) {
            out << ds.item_tokens[i] << '\t';
            for (int j = 0; j < weights.cols(); ++j)
                out << (j ? "," : "") << fmt17(static_cast<double>(weights.value_at(i, j)));
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "pir_vectors.tsv");
        out << provenance << '\n';
        for (int i = 0; i < ds.item_count; ++i) {
            out << ds.item_tokens[i] << '\t';
            for (int j = 0; j < vectors.cols(); ++j)
                out << (j ? "," : "") << fmt17(static_cast<double>(vectors.value_at(i, j)));
            out << '\n';
        }
    }
    {
        std::vector<std::vector<double>> rows(ds.item_count,
                                              std::vector<double>(item_vectors.cols()));
        for (int i = 0; i < ds.item_count; ++i)
            for (int j = 0; j < item_vectors.cols(); ++j)
                rows[i][j] = static_cast<double>(item_vectors.value_at(i, j));
        const auto pca = pca_project(rows);
        std::ofstream out(dir / "pca.tsv");
        out << provenance << '\n';
        if (pca.degenerate) out << "# warning: zero-variance input\n";
        for (int i = 0; i < ds.item_count; ++i)
            out << ds.item_tokens[i] << '\t' << fmt17(pca.coords[i][0]) << '\t'
                << fmt17(pca.coords[i][1]) << '\n';
    }
    log << "exports written to " << dir.string() << '\n';
    return kExitOk;
}

}  // namespace detail

template <int (*F32)(const ExperimentConfig&, std::ostream&),
          int (*F64)(const ExperimentConfig&, std::ostream&)>
inline int dispatch_precision(const ExperimentConfig& cfg, std::ostream& log) {
    return cfg.model.precision == Precision::f32 ? F32(cfg, log) : F64(cfg, log);
}

inline int run_train(const ExperimentConfig& cfg, std::ostream& log) {
    return dispatch_precision<detail::run_train_impl<float>, detail::run_train_impl<double>>(cfg,
                                                                                             log);
}
inline int run_eval(const ExperimentConfig& cfg, std::ostream& log) {
    return dispatch_precision<detail::run_eval_impl<float>, detail::run_eval_impl<double>>(cfg,
                                                                                           log);
}
inline int run_analyze(const ExperimentConfig& cfg, std::ostream& log) {
    return dispatch_precision<detail::run_analyze_impl<float>, detail::run_analyze_impl<double>>(
        cfg, log);
}
inline int run_export(const ExperimentConfig& cfg, std::ostream& log) {
    return dispatch_precision<detail::run_export_impl<float>, detail::run_export_impl<double>>(
        cfg, log);
}

// Dispatches a parsed command line. Exit codes: 0 ok, 2 input error,
// 3 numeric abort, 4 provenance mismatch.
inline int run_command(const std::string& subcommand, const std::string& config_path,
                       const std::vector<std::string>& overrides, std::ostream& log,
                       std::ostream& err) {
    try {
        const auto cfg = parse_config_file(config_path, overrides);
        if (subcommand == "prepare") return run_prepare(cfg, log);
        if (subcommand == "train") return run_train(cfg, log);
        if (subcommand == "eval") return run_eval(cfg, log);
        if (subcommand == "analyze") return run_analyze(cfg, log);
        if (subcommand == "export") return run_export(cfg, log);
        err << "unknown subcommand: " << subcommand << '\n';
        return kExitInput;
    } catch (const NumericError& e) {
        err << "numeric abort: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    }
}

}  // namespace proxyrec::cli

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "proxyrec/errors.hpp"

namespace proxyrec {

enum class EncoderKind { full_table, unknown_token, pir };
enum class ScorerKind { ip_bce, ip_ntxent, ca, ca_contrastive };
enum class NormKind { layer_norm, l2_norm };
enum class Activation { leaky_relu, sigmoid, identity };
enum class Precision { f32, f64 };

inline const char* to_string(EncoderKind k) {
    switch (k) {
        case EncoderKind::full_table: return "full_table";
        case EncoderKind::unknown_token: return "unknown";
        default: return "pir";
    }
}
inline const char* to_string(ScorerKind k) {
    switch (k) {
        case ScorerKind::ip_bce: return "ip_bce";
        case ScorerKind::ip_ntxent: return "ip_ntxent";
        case ScorerKind::ca: return "ca";
        default: return "ca_contrastive";
    }
}
inline const char* to_string(NormKind k) {
    return k == NormKind::layer_norm ? "layer_norm" : "l2_norm";
}
inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::sigmoid: return "sigmoid";
        default: return "identity";
    }
}
inline const char* to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

struct DataConfig {
    std::string kind = "synthetic";  // synthetic | files
    std::string interactions;
    std::string attributes;
    std::string attribute_kind = "dense";  // dense | multihot
    std::uint64_t seed = 1;
    // synthetic corpus knobs
    int synth_users = 300;
    int synth_items = 200;
    int synth_clusters = 20;
    int synth_attr_dim = 16;
    double synth_zipf = 1.2;
    double synth_noise = 0.15;
    int synth_min_len = 8;
    int synth_max_len = 16;
    int synth_prefs_min = 1;
    int synth_prefs_max = 3;
};

struct ModelConfig {
    Precision precision = Precision::f64;
    EncoderKind encoder = EncoderKind::pir;
    double unknown_ratio = 0.0;  // unknown-token wrapper removal ratio
    int d = 32;
    int d_ie = 0;       // 0 -> d
    int d_ac = 0;       // 0 -> d
    int d_a_prime = 0;  // 0 -> d
    int d_phi = 0;      // 0 -> d
    int n_proxy = 16;
    int d_proxy = 0;  // 0 -> d
    int freq_items = 20;  // K, bias slots for the most frequent items
    int blocks = 2;       // B
    int heads = 2;        // H
    NormKind norm = NormKind::layer_norm;
    Activation activation = Activation::leaky_relu;  // sigma^A / sigma^AC / sigma^item
    double leaky_slope = 0.01;
    ScorerKind scorer = ScorerKind::ca_contrastive;
    double temperature = 0.1;
    bool causal = false;

    int resolved_d_ie() const { return d_ie > 0 ? d_ie : d; }
    int resolved_d_ac() const { return d_ac > 0 ? d_ac : d; }
    int resolved_d_a_prime() const { return d_a_prime > 0 ? d_a_prime : d; }
    int resolved_d_phi() const { return d_phi > 0 ? d_phi : d; }
    int resolved_d_proxy() const { return d_proxy > 0 ? d_proxy : d; }

    void validate() const {
        if (d <= 0) throw ConfigError("model.d must be positive");
        if (heads <= 0 || d % heads != 0)
            throw ConfigError("model.heads must be positive and divide model.d");
        if (blocks < 0) throw ConfigError("model.blocks must be >= 0");
        if (encoder == EncoderKind::pir && n_proxy <= 0)
            throw ConfigError("model.n_proxy must be positive for the pir encoder");
        if (freq_items < 0) throw ConfigError("model.freq_items must be >= 0");
        if (unknown_ratio < 0.0 || unknown_ratio > 1.0)
            throw ConfigError("model.unknown_ratio must lie in [0, 1]");
        if ((scorer == ScorerKind::ip_ntxent || scorer == ScorerKind::ca_contrastive) &&
            temperature <= 0.0)
            throw ConfigError("model.temperature must be positive");
        if (leaky_slope < 0.0) throw ConfigError("model.leaky_slope must be >= 0");
    }
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32;
    int max_len = 30;
    int n_negatives = 16;
    double p_cut = 0.5;
    double p_item_replace = 0.0;
    double dropout = 0.0;
    double weight_decay = 0.0;
    double lr = 1e-3;
    int eval_every = 5;
    int patience = 10;
    std::uint64_t seed = 42;

    void validate() const {
        if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
        if (batch_size <= 0) throw ConfigError("train.batch_size must be positive");
        if (max_len <= 0) throw ConfigError("train.max_len must be positive");
        if (n_negatives <= 0) throw ConfigError("train.n_negatives must be positive");
        if (p_cut < 0.0 || p_cut > 1.0) throw ConfigError("train.p_cut must lie in [0, 1]");
        if (p_item_replace < 0.0 || p_item_replace > 1.0)
            throw ConfigError("train.p_item_replace must lie in [0, 1]");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("train.dropout must lie in [0, 1)");
        if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
        if (lr < 0.0) throw ConfigError("train.lr must be >= 0");
        if (eval_every <= 0) throw ConfigError("train.eval_every must be positive");
        if (patience < 0) throw ConfigError("train.patience must be >= 0");
    }
};

struct EvalConfig {
    std::vector<int> ks = {5, 10};
    int n_negatives = 100;
    int n_seeds = 1;
    std::string split = "test";  // test | valid
    std::uint64_t seed = 123;
};

struct AnalyzeConfig {
    std::vector<double> removal_ratios = {0.0, 0.25, 0.5, 0.75, 0.9};
    bool growth = true;
    int memorization_hidden = 32;
    int memorization_epochs = 300;
};

struct ExperimentConfig {
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;
    AnalyzeConfig analyze;
    std::string output_dir = "out";

    void validate() const {
        model.validate();
        train.validate();
        if (data.kind != "synthetic" && data.kind != "files")
            throw ConfigError("data.kind must be 'synthetic' or 'files'");
        if (data.attribute_kind != "dense" && data.attribute_kind != "multihot")
            throw ConfigError("data.attribute_kind must be 'dense' or 'multihot'");
        if (eval.split != "test" && eval.split != "valid")
            throw ConfigError("eval.split must be 'test' or 'valid'");
        if (eval.n_negatives <= 0) throw ConfigError("eval.n_negatives must be positive");
        if (eval.n_seeds <= 0) throw ConfigError("eval.n_seeds must be positive");
        for (int k : eval.ks)
            if (k <= 0) throw ConfigError("eval.ks entries must be positive");
        for (double r : analyze.removal_ratios)
            if (r < 0.0 || r > 1.0) throw ConfigError("analyze.removal_ratios must lie in [0, 1]");
    }

    // Canonical text of the sections that determine model/data compatibility.
    // The hash of this text is stamped into every artifact.
    std::string canonical_identity() const;
    std::uint64_t config_hash() const;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline std::string ExperimentConfig::canonical_identity() const {
    std::ostringstream os;
    os << "data.kind=" << data.kind << '\n'
       << "data.interactions=" << data.interactions << '\n'
       << "data.attributes=" << data.attributes << '\n'
       << "data.attribute_kind=" << data.attribute_kind << '\n'
       << "data.seed=" << data.seed << '\n'
       << "data.synth_users=" << data.synth_users << '\n'
       << "data.synth_items=" << data.synth_items << '\n'
       << "data.synth_clusters=" << data.synth_clusters << '\n'
       << "data.synth_attr_dim=" << data.synth_attr_dim << '\n'
       << "data.synth_zipf=" << detail::fmt_double(data.synth_zipf) << '\n'
       << "data.synth_noise=" << detail::fmt_double(data.synth_noise) << '\n'
       << "data.synth_min_len=" << data.synth_min_len << '\n'
       << "data.synth_max_len=" << data.synth_max_len << '\n'
       << "data.synth_prefs_min=" << data.synth_prefs_min << '\n'
       << "data.synth_prefs_max=" << data.synth_prefs_max << '\n'
       << "model.precision=" << to_string(model.precision) << '\n'
       << "model.encoder=" << to_string(model.encoder) << '\n'
       << "model.unknown_ratio=" << detail::fmt_double(model.unknown_ratio) << '\n'
       << "model.d=" << model.d << '\n'
       << "model.d_ie=" << model.resolved_d_ie() << '\n'
       << "model.d_ac=" << model.resolved_d_ac() << '\n'
       << "model.d_a_prime=" << model.resolved_d_a_prime() << '\n'
       << "model.d_phi=" << model.resolved_d_phi() << '\n'
       << "model.n_proxy=" << model.n_proxy << '\n'
       << "model.d_proxy=" << model.resolved_d_proxy() << '\n'
       << "model.freq_items=" << model.freq_items << '\n'
       << "model.blocks=" << model.blocks << '\n'
       << "model.heads=" << model.heads << '\n'
       << "model.norm=" << to_string(model.norm) << '\n'
       << "model.activation=" << to_string(model.activation) << '\n'
       << "model.leaky_slope=" << detail::fmt_double(model.leaky_slope) << '\n'
       << "model.scorer=" << to_string(model.scorer) << '\n'
       << "model.temperature=" << detail::fmt_double(model.temperature) << '\n'
       << "model.causal=" << (model.causal ? "true" : "false") << '\n';
    return os.str();
}

inline std::uint64_t ExperimentConfig::config_hash() const {
    return detail::fnv1a64(canonical_identity());
}

// ---------------------------------------------------------------------------
// Line-oriented `key = value` config files with [sections].
// ---------------------------------------------------------------------------

namespace detail {

struct Kv {
    std::string section, key, value;
    int line;
};

inline std::vector<Kv> parse_kv_lines(std::istream& in) {
    std::vector<Kv> out;
    std::string section;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ParseError("config line " + std::to_string(lineno) + ": unterminated section");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
        Kv kv;
        kv.section = section;
        kv.key = trim(t.substr(0, eq));
        kv.value = trim(t.substr(eq + 1));
        kv.line = lineno;
        if (kv.key.empty())
            throw ParseError("config line " + std::to_string(lineno) + ": empty key");
        out.push_back(std::move(kv));
    }
    return out;
}

inline int to_int(const Kv& kv) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(kv.value, &pos);
        if (pos != kv.value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(kv.line) + ": '" + kv.value +
                          "' is not an integer");
    }
}

inline double to_double(const Kv& kv) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(kv.value, &pos);
        if (pos != kv.value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(kv.line) + ": '" + kv.value +
                          "' is not a number");
    }
}

inline std::uint64_t to_u64(const Kv& kv) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(kv.value, &pos);
        if (pos != kv.value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(kv.line) + ": '" + kv.value +
                          "' is not an unsigned integer");
    }
}

inline bool to_bool(const Kv& kv) {
    if (kv.value == "true" || kv.value == "1") return true;
    if (kv.value == "false" || kv.value == "0") return false;
    throw ConfigError("config line " + std::to_string(kv.line) + ": '" + kv.value +
                      "' is not a boolean");
}

template <class T, class Conv>
inline std::vector<T> to_list(const Kv& kv, Conv conv) {
    std::vector<T> out;
    std::string item;
    std::istringstream ss(kv.value);
    while (std::getline(ss, item, ',')) {
        Kv sub{kv.section, kv.key, trim(item), kv.line};
        out.push_back(conv(sub));
    }
    if (out.empty())
        throw ConfigError("config line " + std::to_string(kv.line) + ": empty list");
    return out;
}

inline void apply_kv(ExperimentConfig& cfg, const Kv& kv) {
    const std::string id = kv.section + "." + kv.key;
    auto bad_enum = [&](const char* allowed) {
        throw ConfigError("config line " + std::to_string(kv.line) + ": " + id + " must be one of " +
                          allowed);
    };
    if (id == "data.kind") cfg.data.kind = kv.value;
    else if (id == "data.interactions") cfg.data.interactions = kv.value;
    else if (id == "data.attributes") cfg.data.attributes = kv.value;
    else if (id == "data.attribute_kind") cfg.data.attribute_kind = kv.value;
    else if (id == "data.seed") cfg.data.seed = to_u64(kv);
    else if (id == "data.synth_users") cfg.data.synth_users = to_int(kv);
    else if (id == "data.synth_items") cfg.data.synth_items = to_int(kv);
    else if (id == "data.synth_clusters") cfg.data.synth_clusters = to_int(kv);
    else if (id == "data.synth_attr_dim") cfg.data.synth_attr_dim = to_int(kv);
    else if (id == "data.synth_zipf") cfg.data.synth_zipf = to_double(kv);
    else if (id == "data.synth_noise") cfg.data.synth_noise = to_double(kv);
    else if (id == "data.synth_min_len") cfg.data.synth_min_len = to_int(kv);
    else if (id == "data.synth_max_len") cfg.data.synth_max_len = to_int(kv);
    else if (id == "data.synth_prefs_min") cfg.data.synth_prefs_min = to_int(kv);
    else if (id == "data.synth_prefs_max") cfg.data.synth_prefs_max = to_int(kv);
    else if (id == "model.precision") {
        if (kv.value == "f32") cfg.model.precision = Precision::f32;
        else if (kv.value == "f64") cfg.model.precision = Precision::f64;
        else bad_enum("f32|f64");
    } else if (id == "model.encoder") {
        if (kv.value == "full_table") cfg.model.encoder = EncoderKind::full_table;
        else if (kv.value == "unknown") cfg.model.encoder = EncoderKind::unknown_token;
        else if (kv.value == "pir") cfg.model.encoder = EncoderKind::pir;
        else bad_enum("full_table|unknown|pir");
    } else if (id == "model.unknown_ratio") cfg.model.unknown_ratio = to_double(kv);
    else if (id == "model.d") cfg.model.d = to_int(kv);
    else if (id == "model.d_ie") cfg.model.d_ie = to_int(kv);
    else if (id == "model.d_ac") cfg.model.d_ac = to_int(kv);
    else if (id == "model.d_a_prime") cfg.model.d_a_prime = to_int(kv);
    else if (id == "model.d_phi") cfg.model.d_phi = to_int(kv);
    else if (id == "model.n_proxy") cfg.model.n_proxy = to_int(kv);
    else if (id == "model.d_proxy") cfg.model.d_proxy = to_int(kv);
    else if (id == "model.freq_items") cfg.model.freq_items = to_int(kv);
    else if (id == "model.blocks") cfg.model.blocks = to_int(kv);
    else if (id == "model.heads") cfg.model.heads = to_int(kv);
    else if (id == "model.norm") {
        if (kv.value == "layer_norm") cfg.model.norm = NormKind::layer_norm;
        else if (kv.value == "l2_norm") cfg.model.norm = NormKind::l2_norm;
        else bad_enum("layer_norm|l2_norm");
    } else if (id == "model.activation") {
        if (kv.value == "leaky_relu") cfg.model.activation = Activation::leaky_relu;
        else if (kv.value == "sigmoid") cfg.model.activation = Activation::sigmoid;
        else if (kv.value == "identity") cfg.model.activation = Activation::identity;
        else bad_enum("leaky_relu|sigmoid|identity");
    } else if (id == "model.leaky_slope") cfg.model.leaky_slope = to_double(kv);
    else if (id == "model.scorer") {
        if (kv.value == "ip_bce") cfg.model.scorer = ScorerKind::ip_bce;
        else if (kv.value == "ip_ntxent") cfg.model.scorer = ScorerKind::ip_ntxent;
        else if (kv.value == "ca") cfg.model.scorer = ScorerKind::ca;
        else if (kv.value == "ca_contrastive") cfg.model.scorer = ScorerKind::ca_contrastive;
        else bad_enum("ip_bce|ip_ntxent|ca|ca_contrastive");
    } else if (id == "model.temperature") cfg.model.temperature = to_double(kv);
    else if (id == "model.causal") cfg.model.causal = to_bool(kv);
    else if (id == "train.epochs") cfg.train.epochs = to_int(kv);
    else if (id == "train.batch_size") cfg.train.batch_size = to_int(kv);
    else if (id == "train.max_len") cfg.train.max_len = to_int(kv);
    else if (id == "train.n_negatives") cfg.train.n_negatives = to_int(kv);
    else if (id == "train.p_cut") cfg.train.p_cut = to_double(kv);
    else if (id == "train.p_item_replace") cfg.train.p_item_replace = to_double(kv);
    else if (id == "train.dropout") cfg.train.dropout = to_double(kv);
    else if (id == "train.weight_decay") cfg.train.weight_decay = to_double(kv);
    else if (id == "train.lr") cfg.train.lr = to_double(kv);
    else if (id == "train.eval_every") cfg.train.eval_every = to_int(kv);
    else if (id == "train.patience") cfg.train.patience = to_int(kv);
    else if (id == "train.seed") cfg.train.seed = to_u64(kv);
    else if (id == "eval.ks") cfg.eval.ks = to_list<int>(kv, to_int);
    else if (id == "eval.n_negatives") cfg.eval.n_negatives = to_int(kv);
    else if (id == "eval.n_seeds") cfg.eval.n_seeds = to_int(kv);
    else if (id == "eval.split") cfg.eval.split = kv.value;
    else if (id == "eval.seed") cfg.eval.seed = to_u64(kv);
    else if (id == "analyze.removal_ratios")
        cfg.analyze.removal_ratios = to_list<double>(kv, to_double);
    else if (id == "analyze.growth") cfg.analyze.growth = to_bool(kv);
    else if (id == "analyze.memorization_hidden") cfg.analyze.memorization_hidden = to_int(kv);
    else if (id == "analyze.memorization_epochs") cfg.analyze.memorization_epochs = to_int(kv);
    else if (id == "output.dir") cfg.output_dir = kv.value;
    else
        throw ConfigError("config line " + std::to_string(kv.line) + ": unknown key '" + id + "'");
}

}  // namespace detail

// `overrides` entries are `section.key=value` and win over file contents.
inline ExperimentConfig parse_config(std::istream& in,
                                     const std::vector<std::string>& overrides = {}) {
    ExperimentConfig cfg;
    for (const auto& kv : detail::parse_kv_lines(in)) detail::apply_kv(cfg, kv);
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        const auto dot = ov.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            throw ConfigError("override must look like section.key=value: " + ov);
        detail::Kv kv{detail::trim(ov.substr(0, dot)),
                      detail::trim(ov.substr(dot + 1, eq - dot - 1)),
                      detail::trim(ov.substr(eq + 1)), 0};
        detail::apply_kv(cfg, kv);
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path,
                                          const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    return parse_config(in, overrides);
}

}  // namespace proxyrec

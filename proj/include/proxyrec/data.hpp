#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "proxyrec/errors.hpp"
#include "proxyrec/rng.hpp"

namespace proxyrec {

inline constexpr int kContextDim = 6;

enum class AttributeKind { dense, categorical_multihot };

struct Event {
    int item = 0;
    std::int64_t ts = 0;
};

// Proleptic Gregorian calendar fields of a UTC unix timestamp.
struct CivilTime {
    int year, month, day;  // month 1..12, day 1..31
    int weekday;           // 0 = Sunday .. 6 = Saturday
    int hour, minute;
};

inline CivilTime civil_from_unix(std::int64_t ts) {
    std::int64_t days = ts / 86400;
    std::int64_t rem = ts % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    CivilTime ct{};
    ct.hour = static_cast<int>(rem / 3600);
    ct.minute = static_cast<int>((rem % 3600) / 60);
    ct.weekday = static_cast<int>(((days % 7) + 11) % 7);  // 1970-01-01 is a Thursday
    // days-to-civil (Howard Hinnant's algorithm)
    days += 719468;
    const std::int64_t era = (days >= 0 ? days : days - 146096) / 146097;
    const std::int64_t doe = days - era * 146097;
    const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = yoe + era * 400;
    const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const std::int64_t mp = (5 * doy + 2) / 153;
    ct.day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    ct.month = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
    ct.year = static_cast<int>(y + (ct.month <= 2 ? 1 : 0));
    return ct;
}

// Per-user chronological interactions plus per-item attribute vectors.
// Contexts are derived from timestamps on demand (6 normalized date fields).
struct InteractionDataset {
    int user_count = 0;
    int item_count = 0;
    std::vector<std::vector<Event>> sequences;       // user -> events, ts nondecreasing
    std::vector<std::vector<double>> attributes;     // item -> d_A vector
    AttributeKind attribute_kind = AttributeKind::dense;
    int attr_dim = 0;
    int min_year = 1970;
    int max_year = 1970;
    std::vector<std::string> user_tokens;  // original tokens, index = dense id
    std::vector<std::string> item_tokens;

    // [year_norm, month/12, day/31, weekday/7, hour/24, minute/60]
    std::array<double, kContextDim> context_of(std::int64_t ts) const {
        const CivilTime ct = civil_from_unix(ts);
        return {static_cast<double>(ct.year - min_year) / (max_year - min_year + 1),
                ct.month / 12.0,
                ct.day / 31.0,
                ct.weekday / 7.0,
                ct.hour / 24.0,
                ct.minute / 60.0};
    }

    void refresh_year_range() {
        bool first = true;
        for (const auto& seq : sequences)
            for (const auto& ev : seq) {
                const int y = civil_from_unix(ev.ts).year;
                if (first) {
                    min_year = max_year = y;
                    first = false;
                } else {
                    min_year = std::min(min_year, y);
                    max_year = std::max(max_year, y);
                }
            }
    }

    // Leave-one-out split: last event is test, second-to-last is valid.
    int test_index(int user) const { return static_cast<int>(sequences[user].size()) - 1; }
    int valid_index(int user) const { return static_cast<int>(sequences[user].size()) - 2; }

    std::vector<Event> train_prefix(int user) const {
        const auto& s = sequences[user];
        return std::vector<Event>(s.begin(), s.end() - 2);
    }

    std::unordered_set<int> positive_items(int user) const {
        std::unordered_set<int> out;
        for (const auto& ev : sequences[user]) out.insert(ev.item);
        return out;
    }

    // Per-item occurrence counts over the train prefixes only.
    std::vector<std::int64_t> train_frequency() const {
        std::vector<std::int64_t> freq(item_count, 0);
        for (int u = 0; u < user_count; ++u) {
            const auto& s = sequences[u];
            for (std::size_t t = 0; t + 2 < s.size(); ++t) ++freq[s[t].item];
        }
        return freq;
    }

    std::int64_t interaction_count() const {
        std::int64_t n = 0;
        for (const auto& s : sequences) n += static_cast<std::int64_t>(s.size());
        return n;
    }

    void validate() const {
        for (int u = 0; u < user_count; ++u) {
            const auto& s = sequences[u];
            if (s.size() < 4) throw DataError("user sequence shorter than 4 after preprocessing");
            for (std::size_t t = 0; t < s.size(); ++t) {
                if (s[t].item < 0 || s[t].item >= item_count)
                    throw DataError("item id out of range");
                if (t > 0 && s[t].ts < s[t - 1].ts)
                    throw DataError("timestamps not nondecreasing");
            }
        }
        if (static_cast<int>(attributes.size()) != item_count)
            throw DataError("attribute row count does not match item count");
        for (const auto& a : attributes)
            if (static_cast<int>(a.size()) != attr_dim)
                throw DataError("attribute dimension mismatch");
    }
};

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

}  // namespace detail

// TSV rows `user<TAB>item<TAB>timestamp`. Users and items are densely
// re-indexed from 0 in first-seen order over the retained rows; per-user
// sequences are sorted by timestamp (stable, so file order breaks ties);
// users with three or fewer interactions are dropped.
inline InteractionDataset load_interactions(std::istream& in, const std::string& source = "<stream>") {
    struct RawRow {
        std::string item;
        std::int64_t ts;
        std::int64_t file_order;
    };
    std::map<std::string, std::vector<RawRow>> by_user;  // keyed by token (stable iteration not needed)
    std::vector<std::string> user_order;
    std::string line;
    int lineno = 0;
    std::int64_t order = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto fields = detail::split_tabs(line);
        if (fields.size() != 3)
            throw ParseError(source + " line " + std::to_string(lineno) +
                             ": expected user<TAB>item<TAB>timestamp");
        std::int64_t ts;
        try {
            std::size_t pos = 0;
            ts = std::stoll(fields[2], &pos);
            if (pos != fields[2].size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw ParseError(source + " line " + std::to_string(lineno) + ": bad timestamp '" +
                             fields[2] + "'");
        }
        if (fields[0].empty() || fields[1].empty())
            throw ParseError(source + " line " + std::to_string(lineno) + ": empty user or item");
        auto it = by_user.find(fields[0]);
        if (it == by_user.end()) {
            user_order.push_back(fields[0]);
            it = by_user.emplace(fields[0], std::vector<RawRow>{}).first;
        }
        it->second.push_back(RawRow{fields[1], ts, order++});
    }

    InteractionDataset ds;
    std::unordered_map<std::string, int> item_ids;
    for (const auto& token : user_order) {
        auto& rows = by_user[token];
        if (rows.size() <= 3) continue;  // users with three or fewer interactions are excluded
        std::sort(rows.begin(), rows.end(), [](const RawRow& a, const RawRow& b) {
            return a.ts != b.ts ? a.ts < b.ts : a.file_order < b.file_order;
        });
        std::vector<Event> seq;
        seq.reserve(rows.size());
        for (const auto& r : rows) {
            auto [it, inserted] = item_ids.emplace(r.item, static_cast<int>(ds.item_tokens.size()));
            if (inserted) ds.item_tokens.push_back(r.item);
            seq.push_back(Event{it->second, r.ts});
        }
        ds.user_tokens.push_back(token);
        ds.sequences.push_back(std::move(seq));
    }
    ds.user_count = static_cast<int>(ds.sequences.size());
    ds.item_count = static_cast<int>(ds.item_tokens.size());
    if (ds.user_count == 0) throw DataError(source + ": no users remain after preprocessing");
    ds.refresh_year_range();
    return ds;
}

inline InteractionDataset load_interactions_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open interactions file: " + path);
    return load_interactions(in, path);
}

// Attribute TSV: `item<TAB>v1,v2,...` (dense) or `item<TAB>tag;tag;...`
// (multihot, vocabulary in first-seen order). Every catalog item must have a
// row.
inline void load_attributes(std::istream& in, InteractionDataset& ds, AttributeKind kind,
                            const std::string& source = "<stream>") {
    std::unordered_map<std::string, int> item_ids;
    for (int i = 0; i < ds.item_count; ++i) item_ids[ds.item_tokens[i]] = i;

    std::vector<std::string> raw(ds.item_count);
    std::vector<bool> seen(ds.item_count, false);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto fields = detail::split_tabs(line);
        if (fields.size() != 2)
            throw ParseError(source + " line " + std::to_string(lineno) +
                             ": expected item<TAB>values");
        const auto it = item_ids.find(fields[0]);
        if (it == item_ids.end()) continue;  // attribute rows for unseen items are ignored
        raw[it->second] = fields[1];
        seen[it->second] = true;
    }
    for (int i = 0; i < ds.item_count; ++i)
        if (!seen[i]) throw DataError(source + ": no attribute row for item '" + ds.item_tokens[i] + "'");

    ds.attribute_kind = kind;
    ds.attributes.assign(ds.item_count, {});
    if (kind == AttributeKind::dense) {
        int dim = -1;
        for (int i = 0; i < ds.item_count; ++i) {
            std::vector<double> v;
            std::string cell;
            std::istringstream ss(raw[i]);
            while (std::getline(ss, cell, ',')) {
                try {
                    v.push_back(std::stod(cell));
                } catch (const std::exception&) {
                    throw ParseError(source + ": bad attribute value '" + cell + "' for item '" +
                                     ds.item_tokens[i] + "'");
                }
            }
            if (dim == -1) dim = static_cast<int>(v.size());
            if (static_cast<int>(v.size()) != dim || v.empty())
                throw DataError(source + ": inconsistent attribute dimension for item '" +
                                ds.item_tokens[i] + "'");
            ds.attributes[i] = std::move(v);
        }
        ds.attr_dim = dim;
    } else {
        std::unordered_map<std::string, int> vocab;
        std::vector<std::vector<int>> tags(ds.item_count);
        for (int i = 0; i < ds.item_count; ++i) {
            std::string tag;
            std::istringstream ss(raw[i]);
            while (std::getline(ss, tag, ';')) {
                if (tag.empty()) continue;
                auto [it, inserted] = vocab.emplace(tag, static_cast<int>(vocab.size()));
                tags[i].push_back(it->second);
            }
        }
        ds.attr_dim = static_cast<int>(vocab.size());
        if (ds.attr_dim == 0) throw DataError(source + ": empty tag vocabulary");
        for (int i = 0; i < ds.item_count; ++i) {
            ds.attributes[i].assign(ds.attr_dim, 0.0);
            for (int t : tags[i]) ds.attributes[i][t] = 1.0;
        }
    }
}

inline void load_attributes_file(const std::string& path, InteractionDataset& ds,
                                 AttributeKind kind) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open attributes file: " + path);
    load_attributes(in, ds, kind, path);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

// n distinct items uniformly without replacement from the catalog minus the
// exclusion set.
inline std::vector<int> sample_negatives(int item_count, const std::unordered_set<int>& excluded,
                                         int n, Rng& rng) {
    const std::int64_t pool = static_cast<std::int64_t>(item_count) -
                              static_cast<std::int64_t>(excluded.size());
    if (pool < n) throw DataError("negative sampling pool too small");
    std::vector<int> out;
    out.reserve(n);
    if (n * 2 >= pool) {
        // dense pool: materialize complement and draw a partial Fisher-Yates
        std::vector<int> candidates;
        candidates.reserve(pool);
        for (int i = 0; i < item_count; ++i)
            if (!excluded.count(i)) candidates.push_back(i);
        for (int k = 0; k < n; ++k) {
            const auto j = k + rng.uniform_int(static_cast<std::int64_t>(candidates.size()) - k);
            std::swap(candidates[k], candidates[j]);
            out.push_back(candidates[k]);
        }
    } else {
        std::unordered_set<int> chosen;
        while (static_cast<int>(out.size()) < n) {
            const int c = static_cast<int>(rng.uniform_int(item_count));
            if (excluded.count(c) || chosen.count(c)) continue;
            chosen.insert(c);
            out.push_back(c);
        }
    }
    return out;
}

inline std::vector<int> sample_negatives(const InteractionDataset& ds, int user, int n, Rng& rng) {
    return sample_negatives(ds.item_count, ds.positive_items(user), n, rng);
}

// With probability p_cut, keep a uniform-length prefix of at least 2 events.
// The last kept event becomes the prediction target.
template <class EventT>
inline std::vector<EventT> random_sequence_cut(const std::vector<EventT>& seq, Rng& rng,
                                               double p_cut) {
    if (seq.size() < 2) throw ContractError("random_sequence_cut: sequence shorter than 2");
    if (p_cut > 0.0 && rng.uniform() < p_cut) {
        const auto len = 2 + rng.uniform_int(static_cast<std::int64_t>(seq.size()) - 1);
        return std::vector<EventT>(seq.begin(), seq.begin() + len);
    }
    return seq;
}

// ---------------------------------------------------------------------------
// Synthetic long-tail corpus
// ---------------------------------------------------------------------------

struct SynthConfig {
    int user_count = 300;
    int item_count = 200;
    int cluster_count = 20;
    int attr_dim = 16;
    double zipf_exponent = 1.2;
    double attr_noise = 0.15;
    int min_interactions = 8;
    int max_interactions = 16;
    int prefs_min = 1;  // preferred clusters per user
    int prefs_max = 3;
};

// Cluster-structured interactions with Zipf item popularity. Attributes are
// cluster centroids plus noise, so content predicts the latent preference
// structure. Timestamps increase within each user.
inline InteractionDataset generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
    if (cfg.item_count < cfg.cluster_count)
        throw ConfigError("generate_synthetic: item_count < cluster_count");
    if (cfg.cluster_count <= 0 || cfg.user_count <= 0 || cfg.attr_dim <= 0)
        throw ConfigError("generate_synthetic: counts must be positive");
    if (cfg.min_interactions < 4 || cfg.max_interactions < cfg.min_interactions)
        throw ConfigError("generate_synthetic: need at least 4 interactions per user");
    if (cfg.prefs_min < 1 || cfg.prefs_max < cfg.prefs_min ||
        cfg.prefs_max > cfg.cluster_count)
        throw ConfigError("generate_synthetic: bad preferred-cluster range");

    Rng rng(seed);
    InteractionDataset ds;
    ds.attr_dim = cfg.attr_dim;
    ds.attribute_kind = AttributeKind::dense;
    ds.item_count = cfg.item_count;
    ds.user_count = cfg.user_count;

    // cluster centroids, well separated on the unit sphere
    std::vector<std::vector<double>> centroids(cfg.cluster_count,
                                               std::vector<double>(cfg.attr_dim));
    for (auto& c : centroids) {
        double norm = 0;
        for (auto& x : c) {
            x = rng.gaussian();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (auto& x : c) x = x / norm * 2.0;
    }

    // item -> cluster round-robin over a popularity-shuffled item order, so
    // every cluster spans the whole frequency range
    std::vector<int> item_cluster(cfg.item_count);
    std::vector<int> order(cfg.item_count);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (int k = 0; k < cfg.item_count; ++k) item_cluster[order[k]] = k % cfg.cluster_count;

    ds.attributes.assign(cfg.item_count, {});
    ds.item_tokens.resize(cfg.item_count);
    for (int i = 0; i < cfg.item_count; ++i) {
        ds.item_tokens[i] = "item" + std::to_string(i);
        auto v = centroids[item_cluster[i]];
        for (auto& x : v) x += cfg.attr_noise * rng.gaussian();
        ds.attributes[i] = std::move(v);
    }

    // Zipf popularity over item rank (item id = rank)
    std::vector<double> weight(cfg.item_count);
    for (int i = 0; i < cfg.item_count; ++i)
        weight[i] = std::pow(static_cast<double>(i + 1), -cfg.zipf_exponent);

    // per-cluster cumulative weights for popularity-within-cluster draws
    std::vector<std::vector<int>> cluster_items(cfg.cluster_count);
    for (int i = 0; i < cfg.item_count; ++i) cluster_items[item_cluster[i]].push_back(i);
    std::vector<std::vector<double>> cluster_cum(cfg.cluster_count);
    for (int c = 0; c < cfg.cluster_count; ++c) {
        double acc = 0;
        for (int i : cluster_items[c]) cluster_cum[c].push_back(acc += weight[i]);
    }

    ds.user_tokens.resize(cfg.user_count);
    ds.sequences.assign(cfg.user_count, {});
    for (int u = 0; u < cfg.user_count; ++u) {
        ds.user_tokens[u] = "user" + std::to_string(u);
        const int n_prefs =
            cfg.prefs_min + static_cast<int>(rng.uniform_int(cfg.prefs_max - cfg.prefs_min + 1));
        std::vector<int> prefs;
        while (static_cast<int>(prefs.size()) < n_prefs) {
            const int c = static_cast<int>(rng.uniform_int(cfg.cluster_count));
            if (std::find(prefs.begin(), prefs.end(), c) == prefs.end()) prefs.push_back(c);
        }
        const int len = cfg.min_interactions +
                        static_cast<int>(rng.uniform_int(cfg.max_interactions -
                                                         cfg.min_interactions + 1));
        std::int64_t ts = 1500000000LL + static_cast<std::int64_t>(rng.uniform_int(1000000));
        auto& seq = ds.sequences[u];
        for (int t = 0; t < len; ++t) {
            const int c = prefs[rng.uniform_int(static_cast<std::int64_t>(prefs.size()))];
            const auto& cum = cluster_cum[c];
            const double x = rng.uniform() * cum.back();
            const auto it = std::lower_bound(cum.begin(), cum.end(), x);
            const int item = cluster_items[c][it - cum.begin()];
            seq.push_back(Event{item, ts});
            ts += 3600 + rng.uniform_int(86400 * 3);
        }
    }
    ds.refresh_year_range();
    ds.validate();
    return ds;
}

inline InteractionDataset generate_synthetic(const SynthConfig& cfg) {
    return generate_synthetic(cfg, 1);
}

}  // namespace proxyrec

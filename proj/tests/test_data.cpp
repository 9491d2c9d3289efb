#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <ctime>
#include <sstream>
#include <unordered_set>

#include "proxyrec/data.hpp"

using namespace proxyrec;

TEST_CASE("users with three or fewer interactions are excluded", "[data]") {
    std::istringstream small(
        "alice\ta\t100\n"
        "alice\tb\t200\n"
        "alice\tc\t300\n");
    CHECK_THROWS_AS(load_interactions(small), DataError);  // empty result

    std::istringstream mixed(
        "alice\ta\t100\n"
        "alice\tb\t200\n"
        "alice\tc\t300\n"
        "bob\ta\t100\n"
        "bob\tb\t150\n"
        "bob\tc\t250\n"
        "bob\td\t350\n");
    auto ds = load_interactions(mixed);
    CHECK(ds.user_count == 1);
    CHECK(ds.user_tokens[0] == "bob");
    CHECK(ds.sequences[0].size() == 4);
}

TEST_CASE("boundary: exactly four interactions retained", "[data]") {
    std::istringstream in(
        "u\ta\t1\nu\tb\t2\nu\tc\t3\nu\td\t4\n");
    auto ds = load_interactions(in);
    CHECK(ds.user_count == 1);
    CHECK(ds.item_count == 4);
}

TEST_CASE("shuffled timestamps emerge sorted", "[data]") {
    std::istringstream in(
        "u\ta\t500\nu\tb\t100\nu\tc\t900\nu\td\t300\n");
    auto ds = load_interactions(in);
    const auto& s = ds.sequences[0];
    for (std::size_t t = 1; t < s.size(); ++t) CHECK(s[t].ts >= s[t - 1].ts);
    CHECK(s[0].ts == 100);
    CHECK(s[3].ts == 900);
}

TEST_CASE("malformed rows carry line numbers", "[data]") {
    std::istringstream in("u\ta\t1\nu\tb\n");
    try {
        load_interactions(in, "f.tsv");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("re-indexing is a bijection", "[data]") {
    std::istringstream in(
        "u\tz9\t1\nu\tx7\t2\nu\tz9\t3\nu\tq1\t4\nu\tx7\t5\n");
    auto ds = load_interactions(in);
    CHECK(ds.item_count == 3);
    std::unordered_set<std::string> tokens(ds.item_tokens.begin(), ds.item_tokens.end());
    CHECK(tokens.size() == static_cast<std::size_t>(ds.item_count));
    // first-seen order
    CHECK(ds.item_tokens[0] == "z9");
    CHECK(ds.item_tokens[1] == "x7");
    CHECK(ds.item_tokens[2] == "q1");
}

TEST_CASE("context featurization at epoch zero", "[data]") {
    InteractionDataset ds;
    ds.min_year = 1970;
    ds.max_year = 1970;
    const auto c = ds.context_of(0);
    CHECK(c[0] == 0.0);
    CHECK(c[1] == Catch::Approx(1.0 / 12.0));
    CHECK(c[2] == Catch::Approx(1.0 / 31.0));
    CHECK(c[3] == Catch::Approx(4.0 / 7.0));  // Thursday, Sunday = 0
    CHECK(c[4] == 0.0);
    CHECK(c[5] == 0.0);
}

TEST_CASE("calendar matches gmtime oracle", "[data]") {
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        const std::int64_t ts = rng.uniform_int(4102444800LL);  // 1970..2099
        const auto ct = civil_from_unix(ts);
        std::time_t t = static_cast<std::time_t>(ts);
        std::tm tm{};
        gmtime_r(&t, &tm);
        CHECK(ct.year == tm.tm_year + 1900);
        CHECK(ct.month == tm.tm_mon + 1);
        CHECK(ct.day == tm.tm_mday);
        CHECK(ct.weekday == tm.tm_wday);
        CHECK(ct.hour == tm.tm_hour);
        CHECK(ct.minute == tm.tm_min);
    }
}

TEST_CASE("context components lie in [0,1] and same-minute vectors agree", "[data]") {
    InteractionDataset ds;
    ds.min_year = 1970;
    ds.max_year = 2099;
    Rng rng(17);
    for (int i = 0; i < 10000; ++i) {
        const std::int64_t ts = rng.uniform_int(4102444800LL);
        const auto c = ds.context_of(ts);
        for (double x : c) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
        }
    }
    const std::int64_t minute_start = 1234567890 - 1234567890 % 60;
    const auto a = ds.context_of(minute_start);
    const auto b = ds.context_of(minute_start + 42);  // same minute
    CHECK(a == b);
}

TEST_CASE("negative sampling honors exclusions", "[data]") {
    Rng rng(3);
    const std::unordered_set<int> owned{0, 1, 2};
    auto neg = sample_negatives(5, owned, 2, rng);
    REQUIRE(neg.size() == 2);
    std::unordered_set<int> got(neg.begin(), neg.end());
    CHECK(got.size() == 2);
    for (int c : neg) CHECK((c == 3 || c == 4));

    Rng r2(3);
    CHECK_THROWS_AS(sample_negatives(5, owned, 3, r2), DataError);
}

TEST_CASE("negative sampling is uniform and seed-deterministic", "[data]") {
    const std::unordered_set<int> owned{0, 1};
    const int catalog = 10, n = 3, trials = 100000;
    Rng rng(99);
    std::vector<std::int64_t> counts(catalog, 0);
    for (int t = 0; t < trials; ++t)
        for (int c : sample_negatives(catalog, owned, n, rng)) ++counts[c];
    const double p = static_cast<double>(n) / (catalog - 2);
    const double mean = trials * p;
    const double sigma = std::sqrt(trials * p * (1 - p));
    for (int i = 2; i < catalog; ++i)
        CHECK(std::abs(counts[i] - mean) < 3 * sigma);
    CHECK(counts[0] == 0);
    CHECK(counts[1] == 0);

    Rng a(123), b(123);
    CHECK(sample_negatives(catalog, owned, n, a) == sample_negatives(catalog, owned, n, b));
}

TEST_CASE("random sequence cut", "[data]") {
    const std::vector<int> seq{10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
    Rng rng(1);
    CHECK(random_sequence_cut(seq, rng, 0.0) == seq);

    const std::vector<int> two{5, 6};
    Rng r2(1);
    CHECK(random_sequence_cut(two, r2, 1.0) == two);

    // p=1, |S|=10: lengths uniform over [2,10]
    Rng r3(13);
    std::vector<std::int64_t> counts(11, 0);
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) ++counts[random_sequence_cut(seq, r3, 1.0).size()];
    const double p = 1.0 / 9.0;
    const double mean = trials * p;
    const double sigma = std::sqrt(trials * p * (1 - p));
    for (int len = 2; len <= 10; ++len)
        CHECK(std::abs(counts[len] - mean) < 3 * sigma);
}

TEST_CASE("synthetic generator determinism and structure", "[data]") {
    SynthConfig cfg;
    cfg.user_count = 50;
    cfg.item_count = 60;
    cfg.cluster_count = 6;
    auto a = generate_synthetic(cfg, 11);
    auto b = generate_synthetic(cfg, 11);
    REQUIRE(a.user_count == b.user_count);
    for (int u = 0; u < a.user_count; ++u) {
        REQUIRE(a.sequences[u].size() == b.sequences[u].size());
        for (std::size_t t = 0; t < a.sequences[u].size(); ++t) {
            CHECK(a.sequences[u][t].item == b.sequences[u][t].item);
            CHECK(a.sequences[u][t].ts == b.sequences[u][t].ts);
        }
    }
    CHECK(a.attributes == b.attributes);
    a.validate();

    SynthConfig bad = cfg;
    bad.item_count = 3;
    CHECK_THROWS_AS(generate_synthetic(bad, 1), ConfigError);
}

TEST_CASE("zipf 1.2 concentrates mass in the head", "[data]") {
    SynthConfig cfg;
    cfg.user_count = 1500;
    cfg.item_count = 10000;
    cfg.cluster_count = 20;
    cfg.attr_dim = 8;
    cfg.zipf_exponent = 1.2;
    auto ds = generate_synthetic(cfg, 2024);
    std::vector<std::int64_t> freq(ds.item_count, 0);
    std::int64_t total = 0;
    for (const auto& s : ds.sequences)
        for (const auto& ev : s) {
            ++freq[ev.item];
            ++total;
        }
    std::sort(freq.begin(), freq.end(), std::greater<>());
    std::int64_t head = 0;
    for (int i = 0; i < ds.item_count / 100; ++i) head += freq[i];
    CHECK(static_cast<double>(head) / total > 0.20);
}

TEST_CASE("zipf 0 draws uniformly within a cluster", "[data]") {
    SynthConfig cfg;
    cfg.user_count = 400;
    cfg.item_count = 50;
    cfg.cluster_count = 1;
    cfg.prefs_min = 1;
    cfg.prefs_max = 1;
    cfg.zipf_exponent = 0.0;
    cfg.min_interactions = 16;
    cfg.max_interactions = 24;
    auto ds = generate_synthetic(cfg, 5);
    std::vector<std::int64_t> freq(ds.item_count, 0);
    std::int64_t total = 0;
    for (const auto& s : ds.sequences)
        for (const auto& ev : s) {
            ++freq[ev.item];
            ++total;
        }
    const double p = 1.0 / ds.item_count;
    const double mean = total * p;
    const double sigma = std::sqrt(total * p * (1 - p));
    for (auto f : freq) CHECK(std::abs(f - mean) < 4 * sigma);
}

TEST_CASE("split reproduces train prefix and frozen holdouts", "[data]") {
    SynthConfig cfg;
    cfg.user_count = 20;
    cfg.item_count = 40;
    cfg.cluster_count = 4;
    auto ds = generate_synthetic(cfg, 3);
    for (int u = 0; u < ds.user_count; ++u) {
        const auto& s = ds.sequences[u];
        const auto prefix = ds.train_prefix(u);
        REQUIRE(prefix.size() == s.size() - 2);
        for (std::size_t t = 0; t < prefix.size(); ++t) CHECK(prefix[t].item == s[t].item);
        CHECK(ds.valid_index(u) == static_cast<int>(s.size()) - 2);
        CHECK(ds.test_index(u) == static_cast<int>(s.size()) - 1);
        CHECK(prefix.size() >= 2);
    }
}

TEST_CASE("negatives never intersect the user's positives", "[data]") {
    SynthConfig cfg;
    cfg.user_count = 30;
    cfg.item_count = 50;
    cfg.cluster_count = 5;
    auto ds = generate_synthetic(cfg, 9);
    Rng rng(77);
    for (int u = 0; u < ds.user_count; ++u) {
        const auto owned = ds.positive_items(u);
        for (int rep = 0; rep < 5; ++rep)
            for (int c : sample_negatives(ds, u, 20, rng)) CHECK_FALSE(owned.count(c));
    }
}

TEST_CASE("train frequency counts only prefix occurrences", "[data]") {
    std::istringstream in(
        "u\ta\t1\nu\tb\t2\nu\ta\t3\nu\tc\t4\nu\td\t5\n");
    auto ds = load_interactions(in);
    // sequence a b a c d -> train prefix a b a (c = valid, d = test)
    auto freq = ds.train_frequency();
    CHECK(freq[0] == 2);  // a
    CHECK(freq[1] == 1);  // b
    CHECK(freq[2] == 0);  // c
    CHECK(freq[3] == 0);  // d
}

TEST_CASE("multihot attributes", "[data]") {
    std::istringstream inter("u\ta\t1\nu\tb\t2\nu\tc\t3\nu\ta\t4\n");
    auto ds = load_interactions(inter);
    std::istringstream attrs(
        "a\tred;round\n"
        "b\tblue\n"
        "c\tred;heavy\n");
    load_attributes(attrs, ds, AttributeKind::categorical_multihot);
    CHECK(ds.attr_dim == 4);  // red, round, blue, heavy
    CHECK(ds.attributes[0] == std::vector<double>{1, 1, 0, 0});
    CHECK(ds.attributes[1] == std::vector<double>{0, 0, 1, 0});
    CHECK(ds.attributes[2] == std::vector<double>{1, 0, 0, 1});

    std::istringstream missing("a\tred\nb\tblue\n");
    InteractionDataset ds2 = ds;
    CHECK_THROWS_AS(load_attributes(missing, ds2, AttributeKind::categorical_multihot), DataError);
}

TEST_CASE("dense attributes", "[data]") {
    std::istringstream inter("u\ta\t1\nu\tb\t2\nu\ta\t3\nu\tb\t4\n");
    auto ds = load_interactions(inter);
    std::istringstream attrs("a\t0.5,1.5\nb\t-1,2\n");
    load_attributes(attrs, ds, AttributeKind::dense);
    CHECK(ds.attr_dim == 2);
    CHECK(ds.attributes[0] == std::vector<double>{0.5, 1.5});
    CHECK(ds.attributes[1] == std::vector<double>{-1, 2});
}

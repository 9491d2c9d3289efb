#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "helpers.hpp"
#include "proxyrec/item_encoder.hpp"
#include "proxyrec/pca.hpp"

using namespace proxyrec;
using T = Tensor<double>;

namespace {

EncoderInputs<double> make_inputs(const std::vector<int>& ids,
                                  const std::vector<std::vector<double>>& attrs,
                                  const std::vector<std::array<double, kContextDim>>& ctxs) {
    const int n = static_cast<int>(ids.size());
    std::vector<double> av, cv;
    for (const auto& a : attrs) av.insert(av.end(), a.begin(), a.end());
    for (const auto& c : ctxs) cv.insert(cv.end(), c.begin(), c.end());
    return EncoderInputs<double>{ids, T::from(n, static_cast<int>(attrs[0].size()), av),
                                 T::from(n, kContextDim, cv)};
}

EncoderInputs<double> random_inputs(const std::vector<int>& ids, int attr_dim, Rng& rng) {
    std::vector<std::vector<double>> attrs;
    std::vector<std::array<double, kContextDim>> ctxs;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::vector<double> a(attr_dim);
        for (auto& x : a) x = rng.uniform(-1, 1);
        attrs.push_back(a);
        std::array<double, kContextDim> c{};
        for (auto& x : c) x = rng.uniform(0, 1);
        ctxs.push_back(c);
    }
    return make_inputs(ids, attrs, ctxs);
}

struct PirFixture {
    ModelConfig cfg;
    ParameterStore<double> store;
    std::vector<std::int64_t> freq;
    std::unique_ptr<PirEncoder<double>> enc;

    PirFixture(int item_count, int attr_dim, int n_proxy, int d, int K, std::uint64_t seed) {
        cfg.encoder = EncoderKind::pir;
        cfg.d = d;
        cfg.n_proxy = n_proxy;
        cfg.freq_items = K;
        freq.assign(item_count, 1);
        for (int i = 0; i < item_count; ++i) freq[i] = item_count - i;  // item 0 most frequent
        Rng rng(seed);
        enc = std::make_unique<PirEncoder<double>>(cfg, item_count, attr_dim, freq, store, rng);
    }

    void zero_weight_net() {
        for (const char* name : {"encoder.W_phi1", "encoder.b_phi1", "encoder.W_phi2",
                                 "encoder.b_phi2"}) {
            auto& v = store.by_name(name).tensor.values();
            std::fill(v.begin(), v.end(), 0.0);
        }
    }
};

}  // namespace

TEST_CASE("zero weight net gives uniform proxy weights", "[encoder]") {
    PirFixture fx(10, 5, 4, 8, 0, 1);
    fx.zero_weight_net();
    Rng rng(2);
    auto in = random_inputs({0, 3, 7}, 5, rng);
    auto w = fx.enc->proxy_weights(in);
    for (double x : w.values()) CHECK(x == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("hand-set logits produce the softmax of [1,2]", "[encoder]") {
    PirFixture fx(5, 3, 2, 4, 0, 3);
    fx.zero_weight_net();
    auto& b2 = fx.store.by_name("encoder.b_phi2").tensor.values();
    b2[0] = 1.0;
    b2[1] = 2.0;
    Rng rng(4);
    auto in = random_inputs({1}, 3, rng);
    auto w = fx.enc->proxy_weights(in);
    CHECK(w.values()[0] == Catch::Approx(0.26894).margin(1e-5));
    CHECK(w.values()[1] == Catch::Approx(0.73106).margin(1e-5));
}

TEST_CASE("a +50 bias row dominates the proxy weights", "[encoder]") {
    PirFixture fx(20, 6, 8, 8, 5, 7);
    auto& bias = fx.store.by_name("encoder.b_freq").tensor.values();
    // item 0 is the most frequent -> bias row 0
    bias[0 * 8 + 0] = 50.0;
    Rng rng(8);
    auto in = random_inputs({0}, 6, rng);
    auto w = fx.enc->proxy_weights(in);
    CHECK(w.values()[0] > 1.0 - 1e-3);
}

TEST_CASE("simplex property over 1000 random items", "[encoder]") {
    PirFixture fx(50, 8, 6, 8, 10, 9);
    Rng rng(10);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<int> ids(100);
        for (auto& id : ids) id = static_cast<int>(rng.uniform_int(50));
        auto in = random_inputs(ids, 8, rng);
        auto w = fx.enc->proxy_weights(in);
        for (int i = 0; i < w.rows(); ++i) {
            double sum = 0;
            for (int j = 0; j < w.cols(); ++j) {
                const double x = w.value_at(i, j);
                CHECK(x > 0.0);
                sum += x;
            }
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("proxy weights invariant to constant logit shifts", "[encoder]") {
    PirFixture fx(10, 5, 6, 8, 0, 11);
    Rng rng(12);
    auto in = random_inputs({2, 5}, 5, rng);
    auto w0 = fx.enc->proxy_weights(in);
    auto& b2 = fx.store.by_name("encoder.b_phi2").tensor.values();
    for (auto& x : b2) x += 37.5;  // shift every logit
    auto w1 = fx.enc->proxy_weights(in);
    for (std::size_t i = 0; i < w0.values().size(); ++i)
        CHECK(std::abs(w0.values()[i] - w1.values()[i]) < 1e-9);
}

TEST_CASE("pir vector is the weighted sum of proxy rows", "[encoder]") {
    PirFixture fx(12, 4, 4, 8, 0, 13);
    Rng rng(14);
    auto in = random_inputs({1, 4, 9}, 4, rng);
    auto w = fx.enc->proxy_weights(in);
    auto v = fx.enc->pir_vectors(in);
    const auto& p = fx.enc->proxies().values();
    const int d_proxy = fx.enc->proxies().cols();
    for (int i = 0; i < v.rows(); ++i)
        for (int j = 0; j < d_proxy; ++j) {
            double acc = 0;  // independent summation loop
            for (int r = 0; r < 4; ++r) acc += w.value_at(i, r) * p[r * d_proxy + j];
            CHECK(v.value_at(i, j) == Catch::Approx(acc).margin(1e-14));
        }
}

TEST_CASE("one-hot weights select a proxy row; uniform weights give the column mean",
          "[encoder]") {
    PirFixture fx(20, 5, 6, 8, 3, 15);
    auto& bias = fx.store.by_name("encoder.b_freq").tensor.values();
    bias[1 * 6 + 4] = 1e4;  // item ranked second -> proxy row 4
    Rng rng(16);
    auto in = random_inputs({1}, 5, rng);
    auto v = fx.enc->pir_vectors(in);
    const auto& p = fx.enc->proxies().values();
    double num = 0, den = 0;
    for (int j = 0; j < 8; ++j) {
        num += std::pow(v.values()[j] - p[4 * 8 + j], 2);
        den += std::pow(p[4 * 8 + j], 2);
    }
    CHECK(std::sqrt(num / den) < 1e-3);

    PirFixture fu(20, 5, 6, 8, 0, 17);
    fu.zero_weight_net();
    auto in2 = random_inputs({3}, 5, rng);
    auto v2 = fu.enc->pir_vectors(in2);
    const auto& p2 = fu.enc->proxies().values();
    for (int j = 0; j < 8; ++j) {
        double mean = 0;
        for (int r = 0; r < 6; ++r) mean += p2[r * 8 + j];
        mean /= 6;
        CHECK(v2.values()[j] == Catch::Approx(mean).margin(1e-12));
    }
}

TEST_CASE("content-only determinism with K=0 and cold-start totality", "[encoder]") {
    PirFixture fx(15, 5, 4, 8, 0, 19);
    std::vector<std::vector<double>> attrs = {{1, 2, 3, 4, 5}, {1, 2, 3, 4, 5}};
    std::vector<std::array<double, kContextDim>> ctxs = {{0.1, 0.2, 0.3, 0.4, 0.5, 0.6},
                                                         {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}};
    auto in = make_inputs({3, 11}, attrs, ctxs);
    auto v = fx.enc->encode(in);
    for (int j = 0; j < 8; ++j)
        CHECK(v.value_at(0, j) == Catch::Approx(v.value_at(1, j)).margin(1e-14));

    // ids far beyond the catalog and the bias table are fine under PIR
    PirFixture fb(15, 5, 4, 8, 5, 20);
    auto cold = make_inputs({1000000}, {attrs[0]}, {ctxs[0]});
    auto vc = fb.enc->encode(cold);
    for (double x : vc.values()) CHECK(std::isfinite(x));
}

TEST_CASE("baseline encoder shape contract and unknown id error", "[encoder]") {
    for (int d : {8, 16, 32}) {
        ModelConfig cfg;
        cfg.encoder = EncoderKind::full_table;
        cfg.d = d;
        ParameterStore<double> store;
        Rng rng(21);
        FullTableEncoder<double> enc(cfg, 9, 4, store, rng);
        Rng rin(22);
        auto in = random_inputs({0, 8}, 4, rin);
        auto v = enc.encode(in);
        CHECK(v.rows() == 2);
        CHECK(v.cols() == d);
        auto bad = random_inputs({9}, 4, rin);
        CHECK_THROWS_AS(enc.encode(bad), DataError);
    }
}

TEST_CASE("unknown-token wrapper collapses the least-frequent items", "[encoder]") {
    ModelConfig cfg;
    cfg.encoder = EncoderKind::unknown_token;
    cfg.d = 8;
    cfg.unknown_ratio = 0.5;
    std::vector<std::int64_t> freq = {5, 1, 1, 4, 2, 9};  // items 1,2 tie; then 4
    ParameterStore<double> store;
    Rng rng(23);
    UnknownTokenEncoder<double> enc(cfg, 6, 3, freq, store, rng);
    // floor(0.5*6)=3 least frequent: 1, 2 (ties ascending), 4
    CHECK(enc.is_replaced(1));
    CHECK(enc.is_replaced(2));
    CHECK(enc.is_replaced(4));
    CHECK_FALSE(enc.is_replaced(0));
    CHECK_FALSE(enc.is_replaced(3));
    CHECK_FALSE(enc.is_replaced(5));
    CHECK(enc.live_count() == 3);

    // two replaced items with identical content encode identically
    std::vector<std::vector<double>> attrs = {{1, 0, 2}, {1, 0, 2}};
    std::vector<std::array<double, kContextDim>> ctxs(2, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
    auto v = enc.encode(make_inputs({1, 4}, attrs, ctxs));
    for (int j = 0; j < 8; ++j)
        CHECK(v.value_at(0, j) == Catch::Approx(v.value_at(1, j)).margin(1e-14));
}

TEST_CASE("parameter counts match the closed forms", "[encoder]") {
    // IE block of the full table: |I| * d_IE
    {
        ModelConfig cfg;
        cfg.encoder = EncoderKind::full_table;
        cfg.d = 64;
        ParameterStore<double> store;
        Rng rng(31);
        FullTableEncoder<double> enc(cfg, 1000, 10, store, rng);
        const auto counted = store.scalar_count();
        CHECK(counted == FullTableEncoder<double>::closed_form_count(cfg, 1000, 10));
        CHECK(store.by_name("encoder.IE").tensor.size() == 64000);
    }
    // proxy bank: n_proxy*d_proxy + K*n_proxy = 32*64 + 100*32 = 5248
    {
        ModelConfig cfg;
        cfg.encoder = EncoderKind::pir;
        cfg.d = 64;
        cfg.n_proxy = 32;
        cfg.freq_items = 100;
        ParameterStore<double> store;
        std::vector<std::int64_t> freq(200, 1);
        Rng rng(32);
        PirEncoder<double> enc(cfg, 200, 10, freq, store, rng);
        CHECK(store.scalar_count() == PirEncoder<double>::closed_form_count(cfg, 200, 10));
        const auto bank = store.by_name("encoder.P").tensor.size() +
                          store.by_name("encoder.b_freq").tensor.size();
        CHECK(bank == 5248);
        // bias table starts at exactly zero
        for (double x : store.by_name("encoder.b_freq").tensor.values()) CHECK(x == 0.0);
    }
    // unknown wrapper shrinks with the ratio
    {
        ModelConfig cfg;
        cfg.encoder = EncoderKind::unknown_token;
        cfg.d = 16;
        std::vector<std::int64_t> freq(100);
        for (int i = 0; i < 100; ++i) freq[i] = 100 - i;
        std::int64_t prev = -1;
        for (double ratio : {0.0, 0.25, 0.5, 0.9}) {
            cfg.unknown_ratio = ratio;
            ParameterStore<double> store;
            Rng rng(33);
            UnknownTokenEncoder<double> enc(cfg, 100, 10, freq, store, rng);
            const auto counted = store.scalar_count();
            CHECK(counted == UnknownTokenEncoder<double>::closed_form_count(cfg, 100, 10));
            if (prev >= 0) CHECK(counted < prev);
            prev = counted;
        }
    }
}

TEST_CASE("proposition: bias priority", "[encoder]") {
    Rng trial_rng(1234);
    for (int trial = 0; trial < 25; ++trial) {
        const int n_proxy = 4 + static_cast<int>(trial_rng.uniform_int(8));
        const int d = 8;
        PirFixture fx(30, 6, n_proxy, d, 10, 100 + trial);
        auto& bias = fx.store.by_name("encoder.b_freq").tensor.values();
        const int r1 = static_cast<int>(trial_rng.uniform_int(n_proxy));
        int r2 = static_cast<int>(trial_rng.uniform_int(n_proxy));
        if (r2 == r1) r2 = (r1 + 1) % n_proxy;
        bias[0 * n_proxy + r1] = 50.0;  // most frequent item -> bias row 0
        bias[1 * n_proxy + r2] = 50.0;  // second -> bias row 1
        // identical content for both items
        std::vector<double> attr(6);
        for (auto& x : attr) x = trial_rng.uniform(-1, 1);
        std::array<double, kContextDim> ctx{};
        for (auto& x : ctx) x = trial_rng.uniform(0, 1);
        auto in = make_inputs({0, 1}, {attr, attr}, {ctx, ctx});
        auto v = fx.enc->pir_vectors(in);
        const auto& p = fx.enc->proxies().values();
        const int dp = fx.enc->proxies().cols();
        auto rel_dist = [&](int row, int proxy) {
            double num = 0, den = 0;
            for (int j = 0; j < dp; ++j) {
                num += std::pow(v.value_at(row, j) - p[proxy * dp + j], 2);
                den += std::pow(p[proxy * dp + j], 2);
            }
            return std::sqrt(num / den);
        };
        CHECK(rel_dist(0, r1) < 1e-3);
        CHECK(rel_dist(1, r2) < 1e-3);
    }
}

TEST_CASE("proposition: content locality", "[encoder]") {
    Rng rng(555);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 4 + static_cast<int>(rng.uniform_int(10));
        const int d = 3 + static_cast<int>(rng.uniform_int(10));
        std::vector<std::vector<double>> p_rows(n, std::vector<double>(d));
        std::vector<double> p_flat;
        for (auto& r : p_rows) {
            for (auto& x : r) x = rng.uniform(-1, 1);
            p_flat.insert(p_flat.end(), r.begin(), r.end());
        }
        const double g = rng.uniform(0.2, 1.5);
        const double eps_max = std::log(2.0 - std::exp(-g));
        const double eps = eps_max * rng.uniform(0.05, 0.95);
        const double delta = -std::log(2.0 - std::exp(eps));

        // independent oracle: solve e^(g+eps) + e^(g-x) = 2 e^g for x by bisection
        double lo = 0.0, hi = 60.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double val = std::exp(g + eps) + std::exp(g - mid) - 2.0 * std::exp(g);
            (val > 0 ? lo : hi) = mid;
        }
        CHECK(std::abs(delta - 0.5 * (lo + hi)) < 1e-9);

        std::vector<double> f1(n);
        f1[0] = f1[1] = g;
        for (int i = 2; i < n; ++i) f1[i] = rng.uniform(-1, 1);
        std::vector<double> f2(f1);
        f2[0] += eps;
        f2[1] -= delta;

        double z1 = 0, z2 = 0;
        for (int i = 0; i < n; ++i) {
            z1 += std::exp(f1[i]);
            z2 += std::exp(f2[i]);
        }
        CHECK(z2 == Catch::Approx(z1).epsilon(1e-12));

        auto p_mat = T::from(n, d, p_flat);
        auto v1 = matmul(softmax_rows(T::row(f1)), p_mat);
        auto v2 = matmul(softmax_rows(T::row(f2)), p_mat);
        double dist = 0;
        for (int j = 0; j < d; ++j)
            dist += std::pow(v1.values()[j] - v2.values()[j], 2);
        dist = std::sqrt(dist);

        const double bound = std::sqrt(2.0) * spectral_norm(p_rows) / z1 * std::exp(g) *
                             std::sqrt(std::exp(2 * eps) - 2 * std::exp(eps) + 1);
        CHECK(dist <= bound * (1 + 1e-12) + 1e-15);
    }
}

TEST_CASE("gradient forms as a unit of proxy rows", "[encoder]") {
    PirFixture fx(10, 5, 4, 6, 0, 777);
    Rng rng(778);
    auto in = random_inputs({3}, 5, rng);
    const int d_proxy = fx.enc->proxies().cols();
    std::vector<double> probe(d_proxy);
    for (auto& x : probe) x = rng.uniform(-1, 1);
    auto probe_t = T::from(1, d_proxy, probe);

    auto w_phi2 = fx.store.by_name("encoder.W_phi2").tensor;
    fx.store.zero_grads();
    backward(sum_all(mul(fx.enc->pir_vectors(in), probe_t)));
    const auto analytic = w_phi2.grad();

    // oracle: finite differences of the weights, combined with fixed P rows
    const auto& p = fx.enc->proxies().values();
    std::vector<double> p_dot_probe(4, 0.0);
    for (int r = 0; r < 4; ++r)
        for (int j = 0; j < d_proxy; ++j) p_dot_probe[r] += p[r * d_proxy + j] * probe[j];

    auto& theta = w_phi2.values();
    const double h = 1e-6;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double orig = theta[j];
        theta[j] = orig + h;
        const auto wp = fx.enc->proxy_weights(in).values();
        theta[j] = orig - h;
        const auto wm = fx.enc->proxy_weights(in).values();
        theta[j] = orig;
        double numeric = 0;
        for (int r = 0; r < 4; ++r) numeric += (wp[r] - wm[r]) / (2 * h) * p_dot_probe[r];
        const double scale = std::max(std::abs(numeric), std::abs(analytic[j]));
        if (scale < 1e-7) continue;
        CHECK(std::abs(numeric - analytic[j]) / scale < 1e-4);
    }
}

TEST_CASE("pir gradients through the full encoder pass finite differences", "[encoder]") {
    PirFixture fx(12, 4, 4, 8, 6, 999);
    Rng rng(1000);
    auto in = random_inputs({0, 5, 11, 5}, 4, rng);
    std::vector<double> wv(4 * 8);
    for (auto& x : wv) x = rng.uniform(-1, 1);
    auto w = T::from(4, 8, wv);

    std::vector<T> params;
    for (auto& p : fx.store) params.push_back(p.tensor);
    auto check = testutil::check_gradients(
        params, [&] { return sum_all(mul(fx.enc->encode(in), w)); });
    CHECK(check.checked > 100);
    CHECK(check.max_rel_err < 1e-4);
}

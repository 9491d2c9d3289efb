#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "proxyrec/config.hpp"
#include "proxyrec/data.hpp"
#include "proxyrec/eval.hpp"
#include "proxyrec/model.hpp"
#include "proxyrec/optim.hpp"

namespace proxyrec {

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

// Versioned container of every named parameter plus optimizer state.
// Values are stored as float64 regardless of the training precision, so a
// float64 round trip is bit-identical.
struct Checkpoint {
    static constexpr char kMagic[9] = "PRCKPT01";

    std::uint64_t config_hash = 0;
    int epoch = 0;
    bool has_optimizer = false;
    std::int64_t opt_step = 0;
    std::vector<std::string> names;
    std::vector<std::pair<int, int>> shapes;
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> first_moments;
    std::vector<std::vector<double>> second_moments;

    template <class Real>
    static Checkpoint capture(const Model<Real>& model, AdamW<Real>* opt,
                              std::uint64_t config_hash, int epoch) {
        Checkpoint ck;
        ck.config_hash = config_hash;
        ck.epoch = epoch;
        const auto& params = model.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& p = params[i];
            ck.names.push_back(p.name);
            ck.shapes.emplace_back(p.tensor.rows(), p.tensor.cols());
            std::vector<double> v(p.tensor.values().size());
            for (std::size_t j = 0; j < v.size(); ++j)
                v[j] = static_cast<double>(p.tensor.values()[j]);
            ck.values.push_back(std::move(v));
        }
        if (opt != nullptr && !opt->first_moments().empty()) {
            ck.has_optimizer = true;
            ck.opt_step = opt->step_count();
            ck.first_moments = opt->first_moments();
            ck.second_moments = opt->second_moments();
        }
        return ck;
    }

    template <class Real>
    void restore(Model<Real>& model, AdamW<Real>* opt) const {
        auto& params = model.params();
        if (params.size() != names.size())
            throw DataError("checkpoint: parameter count mismatch");
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            if (p.name != names[i]) throw DataError("checkpoint: parameter name mismatch");
            if (p.tensor.rows() != shapes[i].first || p.tensor.cols() != shapes[i].second)
                throw DataError("checkpoint: parameter shape mismatch for " + p.name);
            for (std::size_t j = 0; j < values[i].size(); ++j)
                p.tensor.values()[j] = static_cast<Real>(values[i][j]);
            p.tensor.zero_grad();
        }
        if (opt != nullptr && has_optimizer) {
            opt->set_step(opt_step);
            opt->first_moments() = first_moments;
            opt->second_moments() = second_moments;
        }
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write checkpoint: " + path);
        out.write(kMagic, 8);
        write_u64(out, config_hash);
        write_i32(out, epoch);
        out.put(has_optimizer ? 1 : 0);
        write_u64(out, static_cast<std::uint64_t>(opt_step));
        write_i32(out, static_cast<int>(names.size()));
        for (std::size_t i = 0; i < names.size(); ++i) {
            write_i32(out, static_cast<int>(names[i].size()));
            out.write(names[i].data(), static_cast<std::streamsize>(names[i].size()));
            write_i32(out, shapes[i].first);
            write_i32(out, shapes[i].second);
            write_doubles(out, values[i]);
        }
        if (has_optimizer)
            for (std::size_t i = 0; i < names.size(); ++i) {
                write_doubles(out, first_moments[i]);
                write_doubles(out, second_moments[i]);
            }
        if (!out) throw IoError("short write to checkpoint: " + path);
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open checkpoint: " + path);
        char magic[8];
        in.read(magic, 8);
        if (!in || std::string(magic, 8) != kMagic)
            throw DataError("not a checkpoint file: " + path);
        Checkpoint ck;
        ck.config_hash = read_u64(in);
        ck.epoch = read_i32(in);
        ck.has_optimizer = in.get() == 1;
        ck.opt_step = static_cast<std::int64_t>(read_u64(in));
        const int n = read_i32(in);
        if (n < 0) throw DataError("corrupt checkpoint: " + path);
        for (int i = 0; i < n; ++i) {
            const int len = read_i32(in);
            std::string name(static_cast<std::size_t>(len), '\0');
            in.read(name.data(), len);
            ck.names.push_back(std::move(name));
            const int rows = read_i32(in);
            const int cols = read_i32(in);
            ck.shapes.emplace_back(rows, cols);
            ck.values.push_back(read_doubles(in, static_cast<std::size_t>(rows) * cols));
        }
        if (ck.has_optimizer)
            for (int i = 0; i < n; ++i) {
                const std::size_t sz = ck.values[i].size();
                ck.first_moments.push_back(read_doubles(in, sz));
                ck.second_moments.push_back(read_doubles(in, sz));
            }
        if (!in) throw DataError("truncated checkpoint: " + path);
        return ck;
    }

  private:
    static void write_u64(std::ostream& out, std::uint64_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    static void write_i32(std::ostream& out, int v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    static void write_doubles(std::ostream& out, const std::vector<double>& v) {
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    static std::uint64_t read_u64(std::istream& in) {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        return v;
    }
    static int read_i32(std::istream& in) {
        int v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        return v;
    }
    static std::vector<double> read_doubles(std::istream& in, std::size_t n) {
        std::vector<double> v(n);
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        return v;
    }
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainingExample {
    std::vector<ModelEvent> input;  // truncated to the max_len most recent events
    ModelEvent target;
    std::vector<int> negatives;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
};

struct EvalRecord {
    int epoch = 0;
    double ndcg10 = 0.0;
    double hr10 = 0.0;
    bool improved = false;
};

struct FitResult {
    Checkpoint best;
    int best_epoch = 0;
    double best_ndcg10 = 0.0;
    std::vector<EpochRecord> epochs;
    std::vector<EvalRecord> evals;  // one record per completed evaluation
};

// Last-item-prediction training: per epoch each user's train prefix is
// randomly cut, the last kept event becomes the positive, fresh negatives
// are sampled, and the batch loss is pushed through the full pipeline.
template <class Real>
class Trainer {
  public:
    Trainer(Model<Real>& model, const InteractionDataset& ds, const TrainConfig& cfg)
        : model_(model),
          ds_(ds),
          cfg_(cfg),
          opt_(AdamWConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}),
          dropout_(Rng::mix(cfg.seed, 0xD80u)) {
        cfg.validate();
        if (cfg.p_item_replace > 0.0 && ds.item_count < 3)
            throw ConfigError("item replacement needs at least 3 items");
    }

    AdamW<Real>& optimizer() { return opt_; }

    TrainingExample build_example(int user, Rng& rng) const {
        const auto prefix = ds_.train_prefix(user);
        const auto cut = random_sequence_cut(prefix, rng, cfg_.p_cut);
        TrainingExample ex;
        ex.target = to_model_event(cut.back());
        const int input_len = static_cast<int>(cut.size()) - 1;
        const int start = std::max(0, input_len - cfg_.max_len);
        for (int t = start; t < input_len; ++t) ex.input.push_back(to_model_event(cut[t]));

        if (cfg_.p_item_replace > 0.0) {
            // replacement id/attributes are the substitute item's, the context
            // keeps the original timestamp; held-out items are never injected
            const int valid_item = ds_.sequences[user][ds_.valid_index(user)].item;
            const int test_item = ds_.sequences[user][ds_.test_index(user)].item;
            for (auto& ev : ex.input) {
                if (rng.uniform() >= cfg_.p_item_replace) continue;
                int substitute;
                do {
                    substitute = static_cast<int>(rng.uniform_int(ds_.item_count));
                } while (substitute == valid_item || substitute == test_item);
                ev.item = substitute;
                ev.attr_item = substitute;
            }
        }
        ex.negatives = sample_negatives(ds_, user, cfg_.n_negatives, rng);
        return ex;
    }

    // Mean training loss over users. Deterministic in (seed, epoch).
    double train_epoch(int epoch) {
        Rng rng(Rng::mix(cfg_.seed, static_cast<std::uint64_t>(epoch)));
        std::vector<int> users(ds_.user_count);
        std::iota(users.begin(), users.end(), 0);
        rng.shuffle(users);

        TrainMode mode{cfg_.dropout, &dropout_};
        double loss_sum = 0.0;
        try {
            for (int b = 0; b < ds_.user_count; b += cfg_.batch_size) {
                const int batch_end = std::min(ds_.user_count, b + cfg_.batch_size);
                std::vector<Tensor<Real>> score_cols;
                score_cols.reserve(batch_end - b);
                for (int i = b; i < batch_end; ++i) {
                    const auto ex = build_example(users[i], rng);
                    auto in = encoder_inputs<Real>(ds_, ex.input);
                    std::vector<int> cand_ids = {ex.target.item};
                    cand_ids.insert(cand_ids.end(), ex.negatives.begin(), ex.negatives.end());
                    auto cands = candidate_inputs<Real>(ds_, cand_ids, ex.target.ts);
                    score_cols.push_back(model_.score_user(in, cands, &mode));
                }
                auto loss = model_.batch_loss(score_cols);
                loss_sum += loss.item() * (batch_end - b);
                backward(loss);
                model_.params().ensure_grads();
                opt_.step(model_.params());
            }
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + "\n" + diagnostics());
        }
        return loss_sum / ds_.user_count;
    }

    // Trains for up to cfg.epochs, evaluating NDCG@10 on the validation split
    // every eval_every epochs; keeps the best checkpoint and stops after
    // `patience` non-improving evaluations.
    FitResult fit(const EvalConfig& eval_cfg, std::uint64_t config_hash) {
        FitResult result;
        std::optional<Checkpoint> best;
        int non_improving = 0;
        for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
            const double loss = train_epoch(epoch);
            result.epochs.push_back(EpochRecord{epoch, loss});
            if (epoch % cfg_.eval_every != 0) continue;

            EvalOptions opt;
            opt.ks = {10};
            opt.n_negatives = eval_cfg.n_negatives;
            opt.seed = eval_cfg.seed;
            opt.max_len = cfg_.max_len;
            const auto report = evaluate(model_, ds_, Split::valid, opt);
            EvalRecord rec{epoch, report.ndcg_at(10), report.hr_at(10), false};
            if (!best || rec.ndcg10 > result.best_ndcg10) {
                rec.improved = true;
                best = Checkpoint::capture(model_, &opt_, config_hash, epoch);
                result.best_epoch = epoch;
                result.best_ndcg10 = rec.ndcg10;
                non_improving = 0;
            } else {
                ++non_improving;
            }
            result.evals.push_back(rec);
            if (non_improving > cfg_.patience) break;
        }
        if (!best) best = Checkpoint::capture(model_, &opt_, config_hash, cfg_.epochs);
        best->restore(model_, &opt_);
        result.best = std::move(*best);
        return result;
    }

  private:
    std::string diagnostics() const {
        std::ostringstream os;
        os << "parameter diagnostics (name value_norm grad_norm):\n";
        for (const auto& p : model_.params()) {
            double vn = 0, gn = 0;
            for (Real x : p.tensor.values()) vn += static_cast<double>(x) * x;
            if (p.tensor.has_grad())
                for (Real g : p.tensor.grad()) gn += static_cast<double>(g) * g;
            os << "  " << p.name << ' ' << std::sqrt(vn) << ' ' << std::sqrt(gn) << '\n';
        }
        return os.str();
    }

    Model<Real>& model_;
    const InteractionDataset& ds_;
    TrainConfig cfg_;
    AdamW<Real> opt_;
    DropoutStream dropout_;
};

}  // namespace proxyrec

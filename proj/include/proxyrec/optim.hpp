#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "proxyrec/errors.hpp"
#include "proxyrec/rng.hpp"
#include "proxyrec/tensor.hpp"

namespace proxyrec {

template <class Real>
struct Parameter {
    Tensor<Real> tensor;
    std::string name;
    bool decay_exempt = false;  // biases and normalization gains
};

// Named trainable parameters of one model. Names are unique.
template <class Real>
class ParameterStore {
  public:
    Tensor<Real> add(const std::string& name, Tensor<Real> t, bool decay_exempt) {
        if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
        index_[name] = static_cast<int>(params_.size());
        params_.push_back(Parameter<Real>{t, name, decay_exempt});
        return t;
    }

    std::size_t size() const { return params_.size(); }
    Parameter<Real>& operator[](std::size_t i) { return params_[i]; }
    const Parameter<Real>& operator[](std::size_t i) const { return params_[i]; }

    Parameter<Real>& by_name(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("unknown parameter: " + name);
        return params_[it->second];
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    std::int64_t scalar_count() const {
        std::int64_t n = 0;
        for (const auto& p : params_) n += p.tensor.size();
        return n;
    }

    void zero_grads() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    // Allocate zero gradients for parameters a batch did not reach, so the
    // optimizer's populated-grads precondition holds.
    void ensure_grads() {
        for (auto& p : params_) p.tensor.node()->ensure_grad();
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

  private:
    std::vector<Parameter<Real>> params_;
    std::unordered_map<std::string, int> index_;
};

// Glorot-uniform weight init: +-sqrt(6/(fan_in+fan_out)).
template <class Real>
Tensor<Real> glorot_init(int rows, int cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / (rows + cols));
    std::vector<Real> v(static_cast<std::size_t>(rows) * cols);
    for (auto& x : v) x = static_cast<Real>(rng.uniform(-limit, limit));
    return Tensor<Real>::from(rows, cols, std::move(v), true);
}

struct AdamWConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

// AdamW: moment updates with bias correction, decay decoupled from the
// gradient path. Elements whose gradient is exactly zero keep their moments
// and value untouched (decay still applies to non-exempt parameters), so
// parameters a batch never reached stay put.
template <class Real>
class AdamW {
  public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {
        if (cfg.weight_decay < 0.0) throw ConfigError("AdamW: weight_decay must be >= 0");
        if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
            throw ConfigError("AdamW: betas must lie in [0, 1)");
    }

    std::int64_t step_count() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }

    void step(ParameterStore<Real>& params) {
        if (first_moment_.empty()) {
            first_moment_.resize(params.size());
            second_moment_.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) {
                first_moment_[i].assign(params[i].tensor.size(), 0.0);
                second_moment_[i].assign(params[i].tensor.size(), 0.0);
            }
        }
        if (first_moment_.size() != params.size())
            throw ContractError("AdamW: parameter set changed between steps");
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            if (!p.tensor.has_grad())
                throw ContractError("AdamW: missing gradient for parameter " + p.name);
            auto& theta = p.tensor.values();
            auto& g = p.tensor.grad();
            auto& m = first_moment_[i];
            auto& v = second_moment_[i];
            const bool decay = !p.decay_exempt && cfg_.weight_decay > 0.0;
            for (std::size_t j = 0; j < theta.size(); ++j) {
                if (decay)
                    theta[j] -= static_cast<Real>(cfg_.learning_rate * cfg_.weight_decay *
                                                  static_cast<double>(theta[j]));
                const double gj = static_cast<double>(g[j]);
                if (gj == 0.0) continue;
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                theta[j] -= static_cast<Real>(cfg_.learning_rate * mhat /
                                              (std::sqrt(vhat) + cfg_.epsilon));
            }
        }
        params.zero_grads();
    }

    // Serialization access for checkpoints.
    std::vector<std::vector<double>>& first_moments() { return first_moment_; }
    std::vector<std::vector<double>>& second_moments() { return second_moment_; }
    void set_step(std::int64_t s) { step_ = s; }

  private:
    AdamWConfig cfg_;
    std::int64_t step_ = 0;
    std::vector<std::vector<double>> first_moment_;
    std::vector<std::vector<double>> second_moment_;
};

}  // namespace proxyrec

#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "flextsf/tensor.hpp"

namespace flextsf {

// Named leaf tensors in a fixed insertion order (checkpoint layout depends
// on it).
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor t);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t count() const { return items_.size(); }
    std::size_t scalar_count() const;

    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
    const std::vector<std::pair<std::string, Tensor>>& items() const {
        return items_;
    }

    void zero_grad();

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    bool decoupled = false;  // true = AdamW, weight decay applied to weights
};

// Adam with bias correction. A parameter whose gradient contains a
// non-finite entry keeps its old value for that step and bumps the
// skipped-update counter.
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg) : cfg_(cfg) {}

    AdamConfig& config() { return cfg_; }
    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

    // updates every named parameter; `only` (if non-empty) restricts the
    // update to names in the set
    void step(ParamStore& params,
              const std::vector<std::string>& only = {});

private:
    struct Moments {
        std::vector<double> m, v;
        std::uint64_t t = 0;
    };
    AdamConfig cfg_;
    std::unordered_map<std::string, Moments> moments_;
};

}  // namespace flextsf

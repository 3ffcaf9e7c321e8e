#include "flextsf/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flextsf/diag.hpp"

namespace flextsf {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
    if (index_.count(name))
        throw std::logic_error("ParamStore: duplicate parameter '" + name + "'");
    t.set_name(name);
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end())
        throw std::logic_error("ParamStore: unknown parameter '" + name + "'");
    return items_[it->second].second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
        throw std::logic_error("ParamStore: unknown parameter '" + name + "'");
    return items_[it->second].second;
}

bool ParamStore::contains(const std::string& name) const {
    return index_.count(name) != 0;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [name, t] : items_) t.zero_grad();
}

void AdamOptimizer::step(ParamStore& params,
                         const std::vector<std::string>& only) {
    for (auto& [name, p] : params.items()) {
        if (!only.empty() &&
            std::find(only.begin(), only.end(), name) == only.end())
            continue;
        if (!p.has_grad()) continue;

        const auto& g = p.grad();
        bool finite = true;
        for (double x : g)
            if (!std::isfinite(x)) {
                finite = false;
                break;
            }
        if (!finite) {
            diag::counters().skipped_adam_updates += 1;
            continue;
        }

        auto& mom = moments_[name];
        if (mom.m.size() != g.size()) {
            mom.m.assign(g.size(), 0.0);
            mom.v.assign(g.size(), 0.0);
            mom.t = 0;
        }
        mom.t += 1;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(mom.t));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(mom.t));

        auto& w = p.mutable_values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            double gi = g[i];
            if (cfg_.weight_decay != 0.0 && !cfg_.decoupled)
                gi += cfg_.weight_decay * w[i];
            mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * gi;
            mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = mom.m[i] / bc1;
            const double vhat = mom.v[i] / bc2;
            if (cfg_.weight_decay != 0.0 && cfg_.decoupled)
                w[i] -= cfg_.lr * cfg_.weight_decay * w[i];
            w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace flextsf

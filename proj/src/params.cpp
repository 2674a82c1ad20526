#include "flowfuse/params.hpp"

#include <cmath>

namespace flowfuse {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
    check_contract(!has(name), "parameter '" + name + "' already registered");
    entries_.emplace_back(name, std::move(value));
    return entries_.back().second;
}

Tensor& ParamStore::at(const std::string& name) {
    for (auto& [n, v] : entries_)
        if (n == name) return v;
    throw ContractViolation("unknown parameter '" + name + "'");
}

const Tensor& ParamStore::at(const std::string& name) const {
    for (const auto& [n, v] : entries_)
        if (n == name) return v;
    throw ContractViolation("unknown parameter '" + name + "'");
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& [n, v] : entries_)
        if (n == name) return true;
    return false;
}

int64_t ParamStore::total_values() const {
    int64_t n = 0;
    for (const auto& [name, v] : entries_) n += v.numel();
    return n;
}

void GradAccumulator::add(const std::string& name, const Tensor& g) {
    for (auto& [n, v] : entries_) {
        if (n == name) {
            check_contract(v.same_shape(g), "gradient shape changed for '" + name + "'");
            for (size_t i = 0; i < v.data.size(); ++i) v.data[i] += g.data[i];
            return;
        }
    }
    entries_.emplace_back(name, g);
}

void GradAccumulator::scale(double s) {
    for (auto& [n, v] : entries_)
        for (double& x : v.data) x *= s;
}

const Tensor* GradAccumulator::find(const std::string& name) const {
    for (const auto& [n, v] : entries_)
        if (n == name) return &v;
    return nullptr;
}

Adam::Moments& Adam::state_for(const std::string& name, const std::vector<int>& shape) {
    for (auto& [n, s] : state_)
        if (n == name) return s;
    state_.emplace_back(name, Moments{Tensor(shape, 0.0), Tensor(shape, 0.0)});
    return state_.back().second;
}

void Adam::step(ParamStore& params, const GradAccumulator& grads,
                const std::function<double(const std::string&)>& lr_of) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, value] : params.entries()) {
        const Tensor* g = grads.find(name);
        if (!g) continue;
        check_contract(g->same_shape(value), "gradient shape mismatch for '" + name + "'");
        g->require_finite("gradient of '" + name + "'");
        Moments& mom = state_for(name, value.shape);
        const double lr = lr_of(name);
        for (size_t i = 0; i < value.data.size(); ++i) {
            const double gi = g->data[i];
            mom.m.data[i] = beta1_ * mom.m.data[i] + (1.0 - beta1_) * gi;
            mom.v.data[i] = beta2_ * mom.v.data[i] + (1.0 - beta2_) * gi * gi;
            const double mhat = mom.m.data[i] / bc1;
            const double vhat = mom.v.data[i] / bc2;
            value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace flowfuse

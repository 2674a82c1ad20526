#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "flowfuse/tensor.hpp"

namespace flowfuse {

// Named parameter tensors with deterministic (insertion) order. Iteration
// order defines the serialization and update order, so it must not depend
// on hashing.
class ParamStore {
  public:
    Tensor& add(const std::string& name, Tensor value);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
    size_t size() const { return entries_.size(); }
    int64_t total_values() const;

  private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

// Per-name gradient sums, accumulated sample by sample.
class GradAccumulator {
  public:
    void add(const std::string& name, const Tensor& g);
    void scale(double s);
    void clear() { entries_.clear(); }
    const Tensor* find(const std::string& name) const;
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

// Adam with bias correction. Parameters absent from the gradient map are
// left untouched (their moments do not decay).
class Adam {
  public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // lr_of maps a parameter name to its learning rate (groups share a store).
    void step(ParamStore& params, const GradAccumulator& grads,
              const std::function<double(const std::string&)>& lr_of);

  private:
    struct Moments {
        Tensor m, v;
    };
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<std::pair<std::string, Moments>> state_;

    Moments& state_for(const std::string& name, const std::vector<int>& shape);
};

}  // namespace flowfuse

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mapsam/rng.hpp"
#include "mapsam/tensor.hpp"

namespace mapsam {

/// Named parameter registry with deterministic iteration order
/// (registration order). Trainability is the tensor's requires_grad flag.
class ParamStore {
 public:
  TensorPtr add(const std::string& name, TensorPtr t) {
    if (index_.count(name))
      throw ShapeError("ParamStore: duplicate parameter '" + name + "'");
    index_[name] = names_.size();
    names_.push_back(name);
    tensors_.push_back(std::move(t));
    return tensors_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const TensorPtr& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw ShapeError("ParamStore: unknown parameter '" + name + "'");
    return tensors_[it->second];
  }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t count() const { return names_.size(); }
  const TensorPtr& at(std::size_t i) const { return tensors_[i]; }
  const std::string& name_at(std::size_t i) const { return names_[i]; }

  void zero_grads() {
    for (auto& t : tensors_) t->zero_grad();
  }

  // (trainable, total) element counts
  std::pair<std::int64_t, std::int64_t> parameter_counts() const {
    std::int64_t trainable = 0, total = 0;
    for (const auto& t : tensors_) {
      total += t->size();
      if (t->requires_grad) trainable += t->size();
    }
    return {trainable, total};
  }

  std::vector<std::string> trainable_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < tensors_.size(); ++i)
      if (tensors_[i]->requires_grad) out.push_back(names_[i]);
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<TensorPtr> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Gaussian init with explicit sigma.
inline TensorPtr init_normal(std::vector<int> shape, double sigma, Rng& rng,
                             bool requires_grad = true) {
  auto t = Tensor::create(std::move(shape), requires_grad);
  for (auto& v : t->data) v = sigma * rng.normal();
  return t;
}

}  // namespace mapsam

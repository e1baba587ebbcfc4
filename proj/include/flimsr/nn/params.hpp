#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flimsr::nn {

struct Slice {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  std::vector<std::size_t> shape;
};

/// Flat array of values with named slices. Learnable parameters carry a
/// parallel gradient array; running statistics use a store without gradients.
template <class T>
class ParamStore {
 public:
  /// Registers a slice and returns its offset into the flat array.
  std::size_t add(std::string name, std::vector<std::size_t> shape, T fill = T(0)) {
    std::size_t size = 1;
    for (auto d : shape) size *= d;
    const std::size_t offset = values_.size();
    slices_.push_back({std::move(name), offset, size, std::move(shape)});
    values_.resize(offset + size, fill);
    grads_.resize(offset + size, T(0));
    return offset;
  }

  std::size_t size() const { return values_.size(); }
  const std::vector<Slice>& slices() const { return slices_; }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::span<T> grads() { return grads_; }
  std::span<const T> grads() const { return grads_; }

  T* value(std::size_t offset) { return values_.data() + offset; }
  const T* value(std::size_t offset) const { return values_.data() + offset; }
  T* grad(std::size_t offset) { return grads_.data() + offset; }

  void zero_grad() { std::fill(grads_.begin(), grads_.end(), T(0)); }

  const Slice& find(const std::string& name) const {
    for (const auto& s : slices_) {
      if (s.name == name) return s;
    }
    throw std::out_of_range("no parameter slice named " + name);
  }

  template <class U>
  void copy_values_from(const ParamStore<U>& other) {
    if (other.size() != size()) throw std::invalid_argument("parameter store size mismatch");
    auto src = other.values();
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] = static_cast<T>(src[i]);
  }

 private:
  std::vector<Slice> slices_;
  std::vector<T> values_;
  std::vector<T> grads_;
};

}  // namespace flimsr::nn

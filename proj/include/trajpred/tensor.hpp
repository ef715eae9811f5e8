#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace trajpred {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;
using ParamId = std::size_t;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// How init_params treats a tensor.
enum class ParamKind { kWeight, kBias, kLstmBias, kNormGain, kNormBias };

/// Gradient accumulators mirroring the shapes of a ParamStore.
template <typename Scalar>
class GradientBuffer {
 public:
  GradientBuffer() = default;

  ParamId add_slot(Index rows, Index cols) {
    slots_.push_back(Matrix<Scalar>::Zero(rows, cols));
    return slots_.size() - 1;
  }

  Matrix<Scalar>& operator[](ParamId id) { return slots_[id]; }
  const Matrix<Scalar>& operator[](ParamId id) const { return slots_[id]; }
  std::size_t size() const { return slots_.size(); }

  void zero() {
    for (auto& s : slots_) s.setZero();
  }

  GradientBuffer& operator+=(const GradientBuffer& other) {
    if (other.slots_.size() != slots_.size()) {
      throw ShapeError("gradient buffers have different layouts");
    }
    for (std::size_t i = 0; i < slots_.size(); ++i) slots_[i] += other.slots_[i];
    return *this;
  }

  GradientBuffer& operator*=(Scalar factor) {
    for (auto& s : slots_) s *= factor;
    return *this;
  }

 private:
  std::vector<Matrix<Scalar>> slots_;
};

/// Named dense parameters with one gradient accumulator per tensor.
/// Insertion order is stable and defines iteration, initialization and
/// serialization order.
template <typename Scalar>
class ParamStore {
 public:
  ParamId add(std::string name, Index rows, Index cols, ParamKind kind) {
    if (index_.count(name) != 0) {
      throw std::invalid_argument("duplicate parameter name: " + name);
    }
    const ParamId id = values_.size();
    index_.emplace(name, id);
    names_.push_back(std::move(name));
    kinds_.push_back(kind);
    values_.push_back(Matrix<Scalar>::Zero(rows, cols));
    grads_.add_slot(rows, cols);
    return id;
  }

  bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

  ParamId id(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
    return it->second;
  }

  std::size_t size() const { return values_.size(); }

  Index total_size() const {
    Index n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  const std::string& name(ParamId id) const { return names_[id]; }
  ParamKind kind(ParamId id) const { return kinds_[id]; }

  Matrix<Scalar>& value(ParamId id) { return values_[id]; }
  const Matrix<Scalar>& value(ParamId id) const { return values_[id]; }
  Matrix<Scalar>& value(std::string_view name) { return values_[id(name)]; }
  const Matrix<Scalar>& value(std::string_view name) const { return values_[id(name)]; }

  GradientBuffer<Scalar>& grads() { return grads_; }
  const GradientBuffer<Scalar>& grads() const { return grads_; }
  void zero_grads() { grads_.zero(); }

  /// A fresh zeroed buffer with this store's layout, for thread-local
  /// accumulation.
  GradientBuffer<Scalar> make_gradient_buffer() const {
    GradientBuffer<Scalar> buffer;
    for (const auto& v : values_) buffer.add_slot(v.rows(), v.cols());
    return buffer;
  }

  void set_zero() {
    for (auto& v : values_) v.setZero();
  }

 private:
  std::vector<std::string> names_;
  std::vector<ParamKind> kinds_;
  std::vector<Matrix<Scalar>> values_;
  GradientBuffer<Scalar> grads_;
  std::map<std::string, ParamId, std::less<>> index_;
};

}  // namespace trajpred

#pragma once

#include "trajpred/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>

namespace trajpred {

/// Scalar loss of the store's parameters. When `grads` is non-null the
/// callee also accumulates the reverse-mode gradient into it.
template <typename Scalar>
using LossFunction = std::function<Scalar(ParamStore<Scalar>&, GradientBuffer<Scalar>*)>;

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::string worst_parameter;
  Index worst_index = 0;
};

struct GradientCheckOptions {
  double epsilon = 1e-5;
  // Coordinates compared per run; every coordinate when the store is smaller.
  std::size_t max_coordinates = 400;
  std::uint64_t seed = 0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Compares reverse-mode gradients to central differences and returns the
/// worst relative error |a - n| / max(1e-8, |a| + |n|).
template <typename Scalar>
GradientCheckResult check_gradients(const LossFunction<Scalar>& loss, ParamStore<Scalar>& store,
                                    const GradientCheckOptions& options = {}) {
  GradientBuffer<Scalar> analytic = store.make_gradient_buffer();
  loss(store, &analytic);

  // Coordinates are spread over tensors so small ones (biases, gains) are
  // never skipped.
  std::vector<std::pair<ParamId, Index>> coords;
  const auto total = static_cast<std::size_t>(store.total_size());
  std::mt19937_64 rng(options.seed);
  if (total <= options.max_coordinates) {
    for (ParamId id = 0; id < store.size(); ++id) {
      for (Index i = 0; i < store.value(id).size(); ++i) coords.emplace_back(id, i);
    }
  } else {
    const std::size_t per_tensor =
        std::max<std::size_t>(1, (options.max_coordinates + store.size() - 1) / store.size());
    for (ParamId id = 0; id < store.size(); ++id) {
      std::vector<Index> idx(store.value(id).size());
      std::iota(idx.begin(), idx.end(), Index{0});
      std::shuffle(idx.begin(), idx.end(), rng);
      const std::size_t take = std::min(per_tensor, idx.size());
      for (std::size_t j = 0; j < take; ++j) coords.emplace_back(id, idx[j]);
    }
  }

  GradientCheckResult result;
  for (const auto& [id, i] : coords) {
    const Scalar a = analytic[id](i);
    if (!std::isfinite(static_cast<double>(a))) {
      throw NumericError("non-finite gradient for " + store.name(id));
    }
    Scalar& p = store.value(id)(i);
    const Scalar saved = p;
    p = saved + Scalar(options.epsilon);
    const Scalar up = loss(store, nullptr);
    p = saved - Scalar(options.epsilon);
    const Scalar down = loss(store, nullptr);
    p = saved;
    const double numeric = static_cast<double>(up - down) / (2.0 * options.epsilon);
    const double err = relative_error(static_cast<double>(a), numeric);
    if (err > result.max_relative_error || result.coordinates_checked == 0) {
      result.max_relative_error = std::max(result.max_relative_error, err);
      result.worst_parameter = store.name(id);
      result.worst_index = i;
    }
    ++result.coordinates_checked;
  }
  return result;
}

}  // namespace trajpred

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sqt {

using Index = Eigen::Index;

/// Dense row-major matrix; every tensor in the library is rank <= 2.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Boolean mask over a matrix (true = live entry).
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Boolean mask over rows (true = live row).
using RowMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string shape_string(Index rows, Index cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

template <typename Derived>
std::string shape_string(const Eigen::DenseBase<Derived>& m) {
  return shape_string(m.rows(), m.cols());
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, std::string_view what) {
  if (!all_finite(m)) {
    throw NumericError("non-finite values in " + std::string(what));
  }
}

/// A named trainable matrix. Gradients accumulate into `grad` across every
/// use of the parameter inside a graph.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter(std::string n, Matrix<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }
  Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Owns parameters with stable addresses; iteration follows insertion order.
template <typename Scalar>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Parameter<Scalar>& add(const std::string& name, Matrix<Scalar> value) {
    if (by_name_.count(name) != 0) {
      throw std::invalid_argument("duplicate parameter name: " + name);
    }
    params_.push_back(std::make_unique<Parameter<Scalar>>(name, std::move(value)));
    by_name_[name] = params_.back().get();
    return *params_.back();
  }

  Parameter<Scalar>* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  Parameter<Scalar>& at(const std::string& name) const {
    auto* p = find(name);
    if (p == nullptr) throw std::out_of_range("unknown parameter: " + name);
    return *p;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<Scalar>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<Scalar>& operator[](std::size_t i) const { return *params_[i]; }

  Index total_elements() const {
    Index n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<std::unique_ptr<Parameter<Scalar>>> params_;
  std::unordered_map<std::string, Parameter<Scalar>*> by_name_;
};

}  // namespace sqt

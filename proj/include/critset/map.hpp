// Interface for continuously differentiable maps on the closed unit cube and
// a couple of small combinators used by tests and by the perturbation bound.
#pragma once

#include <memory>
#include <utility>

#include "linalg.hpp"

namespace critset {

class C1Map {
 public:
  virtual ~C1Map() = default;

  virtual int dim_in() const = 0;
  virtual int dim_out() const = 0;

  virtual Vec value(const Vec& x) const = 0;
  virtual Mat jacobian(const Vec& x) const = 0;

  // Default does two dispatches; subclasses that share work may override.
  virtual std::pair<Vec, Mat> value_and_jacobian(const Vec& x) const {
    return {value(x), jacobian(x)};
  }
};

// f + g with matching dimensions.
class MapSum final : public C1Map {
 public:
  MapSum(std::shared_ptr<const C1Map> f, std::shared_ptr<const C1Map> g)
      : f_(std::move(f)), g_(std::move(g)) {
    require(f_->dim_in() == g_->dim_in() && f_->dim_out() == g_->dim_out(),
            "MapSum: dimension mismatch");
  }

  int dim_in() const override { return f_->dim_in(); }
  int dim_out() const override { return f_->dim_out(); }

  Vec value(const Vec& x) const override {
    Vec a = f_->value(x);
    const Vec b = g_->value(x);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
  }

  Mat jacobian(const Vec& x) const override {
    Mat a = f_->jacobian(x);
    const Mat b = g_->jacobian(x);
    for (std::size_t i = 0; i < a.a.size(); ++i) a.a[i] += b.a[i];
    return a;
  }

 private:
  std::shared_ptr<const C1Map> f_;
  std::shared_ptr<const C1Map> g_;
};

// x -> A x + b.
class LinearMap final : public C1Map {
 public:
  LinearMap(Mat a, Vec b) : a_(std::move(a)), b_(std::move(b)) {
    require(static_cast<int>(b_.size()) == a_.rows, "LinearMap: shape mismatch");
  }

  int dim_in() const override { return a_.cols; }
  int dim_out() const override { return a_.rows; }

  Vec value(const Vec& x) const override {
    Vec y = matvec(a_, x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b_[i];
    return y;
  }

  Mat jacobian(const Vec&) const override { return a_; }

 private:
  Mat a_;
  Vec b_;
};

}  // namespace critset

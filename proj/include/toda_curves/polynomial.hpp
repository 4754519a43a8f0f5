#pragma once

// Sparse real polynomials over indexed variables, and Poisson tensors whose
// entries are such polynomials. Differentiation is exact.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace toda_curves {

class Polynomial {
 public:
  /// Sorted variable indices; a repeated index is a power.
  using Monomial = std::vector<std::size_t>;

  Polynomial() = default;

  static Polynomial term(double coef, Monomial vars) {
    Polynomial p;
    std::sort(vars.begin(), vars.end());
    if (coef != 0.0) p.terms_[std::move(vars)] = coef;
    return p;
  }

  static Polynomial constant(double c) { return term(c, {}); }

  const std::map<Monomial, double>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  int degree() const {
    int d = -1;
    for (const auto& [m, c] : terms_) d = std::max(d, static_cast<int>(m.size()));
    return d;
  }

  Polynomial& operator+=(const Polynomial& o) {
    for (const auto& [m, c] : o.terms_) {
      auto it = terms_.find(m);
      if (it == terms_.end()) {
        terms_.emplace(m, c);
      } else if ((it->second += c) == 0.0) {
        terms_.erase(it);
      }
    }
    return *this;
  }

  Polynomial& operator*=(double s) {
    if (s == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto& [m, c] : terms_) c *= s;
    return *this;
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator*(double s, Polynomial p) { return p *= s; }
  friend Polynomial operator-(const Polynomial& p) { return -1.0 * p; }

  double evaluate(std::span<const double> z) const {
    double sum = 0.0;
    for (const auto& [m, c] : terms_) {
      double t = c;
      for (auto v : m) t *= z[v];
      sum += t;
    }
    return sum;
  }

  Polynomial derivative(std::size_t var) const {
    Polynomial d;
    for (const auto& [m, c] : terms_) {
      const auto hits = std::count(m.begin(), m.end(), var);
      if (hits == 0) continue;
      Monomial rest = m;
      rest.erase(std::find(rest.begin(), rest.end(), var));
      d += term(c * static_cast<double>(hits), std::move(rest));
    }
    return d;
  }

  /// Adds the gradient at z into grad (length >= number of variables).
  void add_gradient(std::span<const double> z, std::span<double> grad) const {
    for (const auto& [m, c] : terms_) {
      for (std::size_t pos = 0; pos < m.size(); ++pos) {
        if (pos > 0 && m[pos] == m[pos - 1]) continue;
        // d/dz_v of z_v^p * rest = p z_v^(p-1) * rest: drop exactly one factor.
        double t = c * static_cast<double>(std::count(m.begin(), m.end(), m[pos]));
        bool skipped = false;
        for (auto v : m) {
          if (!skipped && v == m[pos]) {
            skipped = true;
            continue;
          }
          t *= z[v];
        }
        grad[m[pos]] += t;
      }
    }
  }

  bool operator==(const Polynomial&) const = default;

 private:
  std::map<Monomial, double> terms_;
};

/// A bivector field {z_i, z_j} = P_ij(z) with polynomial entries.
class PoissonStructure {
 public:
  PoissonStructure() = default;
  explicit PoissonStructure(std::size_t dim) : dim_(dim), entries_(dim * dim) {}

  std::size_t dim() const { return dim_; }

  const Polynomial& at(std::size_t i, std::size_t j) const { return entries_[i * dim_ + j]; }

  /// Adds p to entry (i, j) and −p to (j, i).
  void add_antisymmetric(std::size_t i, std::size_t j, const Polynomial& p) {
    entries_[i * dim_ + j] += p;
    entries_[j * dim_ + i] += -p;
  }

  Eigen::MatrixXd evaluate(std::span<const double> z) const {
    Eigen::MatrixXd m(dim_, dim_);
    for (std::size_t i = 0; i < dim_; ++i)
      for (std::size_t j = 0; j < dim_; ++j) m(i, j) = at(i, j).evaluate(z);
    return m;
  }

  PoissonStructure& operator+=(const PoissonStructure& o) {
    check_dim(o);
    for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i] += o.entries_[i];
    return *this;
  }

  PoissonStructure& operator*=(double s) {
    for (auto& e : entries_) e *= s;
    return *this;
  }

  friend PoissonStructure operator+(PoissonStructure a, const PoissonStructure& b) { return a += b; }
  friend PoissonStructure operator*(double s, PoissonStructure p) { return p *= s; }

 private:
  void check_dim(const PoissonStructure& o) const {
    if (o.dim_ != dim_) throw std::invalid_argument("PoissonStructure: dimension mismatch");
  }

  std::size_t dim_ = 0;
  std::vector<Polynomial> entries_;
};

/// max |{f,{g,h}} + {g,{h,f}} + {h,{f,g}}| over coordinate triples at z.
/// With trials == 0 every triple is checked; otherwise `trials` triples are
/// drawn with a generator seeded by `seed`.
inline double jacobi_residual(const PoissonStructure& P, std::span<const double> z,
                              std::size_t trials = 0, std::uint64_t seed = 0) {
  const std::size_t d = P.dim();
  if (z.size() != d) throw std::invalid_argument("jacobi_residual: state has wrong dimension");
  const Eigen::MatrixXd val = P.evaluate(z);

  // grads[i*d + j] = ∇P_ij(z)
  std::vector<std::vector<double>> grads(d * d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) P.at(i, j).add_gradient(z, grads[i * d + j]);

  auto contract = [&](std::size_t i, std::size_t j, std::size_t k) {
    const auto& gjk = grads[j * d + k];
    double s = 0.0;
    for (std::size_t l = 0; l < d; ++l) s += val(i, l) * gjk[l];
    return s;
  };
  auto cyclic = [&](std::size_t i, std::size_t j, std::size_t k) {
    return std::abs(contract(i, j, k) + contract(j, k, i) + contract(k, i, j));
  };

  double worst = 0.0;
  if (trials == 0) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j)
        for (std::size_t k = j + 1; k < d; ++k) worst = std::max(worst, cyclic(i, j, k));
  } else {
    std::mt19937_64 rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
      worst = std::max(worst, cyclic(rng() % d, rng() % d, rng() % d));
    }
  }
  return worst;
}

}  // namespace toda_curves

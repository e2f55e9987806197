#pragma once

// Dense primal-dual interior-point solver for small conic programs
//
//   minimize c^T x  subject to  (G_i x + h_i) in K_i
//
// with K_i a nonnegative ray, a second-order cone or the exponential cone.
// Nonnegative and second-order blocks use Nesterov-Todd scaling and
// Mehrotra predictor-corrector steps. An exponential block becomes the
// smooth convex constraint x - y log(z / y) <= 0 with a nonnegative slack,
// its curvature entering through the Lagrangian Hessian. Iterates may start
// infeasible; a phase I problem with a shared cone shift is solved only to
// tell infeasible problems from numerical failures.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfres/error.hpp"

namespace cfres::conic {

using Index = Eigen::Index;

/// a^T x + constant, stored sparsely. Repeated indices are summed.
struct AffineRow {
  std::vector<Index> index;
  std::vector<double> coef;
  double constant = 0.0;

  AffineRow() = default;
  explicit AffineRow(double c) : constant(c) {}

  AffineRow& add(Index i, double a) {
    if (a != 0.0) {
      index.push_back(i);
      coef.push_back(a);
    }
    return *this;
  }

  bool is_constant() const { return index.empty(); }

  double eval(const Eigen::VectorXd& x) const {
    double v = constant;
    for (std::size_t j = 0; j < index.size(); ++j) v += coef[j] * x(index[j]);
    return v;
  }
};

enum class ConeKind { Nonnegative, SecondOrder, Exponential };

/// Row conventions:
///   Nonnegative   (r)           r >= 0
///   SecondOrder   (t, y_1..y_m) ||y|| <= t
///   Exponential   (x, y, z)     y exp(x / y) <= z, y > 0
struct ConeBlock {
  ConeKind kind = ConeKind::Nonnegative;
  std::vector<AffineRow> rows;
  std::string label;
};

struct Problem {
  Index num_vars = 0;
  Eigen::VectorXd c;
  std::vector<ConeBlock> blocks;

  Problem() = default;
  explicit Problem(Index n) : num_vars(n), c(Eigen::VectorXd::Zero(n)) {}

  void add_nonnegative(AffineRow r, std::string label = {}) {
    blocks.push_back({ConeKind::Nonnegative, {std::move(r)}, std::move(label)});
  }

  void add_second_order(AffineRow t, std::vector<AffineRow> y, std::string label = {}) {
    ConeBlock b{ConeKind::SecondOrder, {}, std::move(label)};
    b.rows.reserve(y.size() + 1);
    b.rows.push_back(std::move(t));
    for (auto& r : y) b.rows.push_back(std::move(r));
    blocks.push_back(std::move(b));
  }

  void add_exponential(AffineRow x, AffineRow y, AffineRow z, std::string label = {}) {
    blocks.push_back({ConeKind::Exponential, {std::move(x), std::move(y), std::move(z)},
                      std::move(label)});
  }

  double objective(const Eigen::VectorXd& x) const { return c.dot(x); }

  /// Distance-like violation of one block: 0 inside the cone.
  static double violation(const ConeBlock& b, const Eigen::VectorXd& x) {
    switch (b.kind) {
      case ConeKind::Nonnegative:
        return std::max(0.0, -b.rows[0].eval(x));
      case ConeKind::SecondOrder: {
        double sq = 0.0;
        for (std::size_t r = 1; r < b.rows.size(); ++r) {
          const double v = b.rows[r].eval(x);
          sq += v * v;
        }
        return std::max(0.0, std::sqrt(sq) - b.rows[0].eval(x));
      }
      case ConeKind::Exponential: {
        const double xv = b.rows[0].eval(x);
        const double yv = b.rows[1].eval(x);
        const double zv = b.rows[2].eval(x);
        if (yv <= 0.0 || zv <= 0.0) {
          return std::max({0.0, -yv, -zv}) + (xv > 0.0 ? xv : 0.0);
        }
        return std::max(0.0, xv - yv * std::log(zv / yv));
      }
    }
    return 0.0;
  }

  double max_violation(const Eigen::VectorXd& x) const {
    double v = 0.0;
    for (const auto& b : blocks) v = std::max(v, violation(b, x));
    return v;
  }

  /// Label of the most violated block, empty if none is violated.
  std::string worst_block(const Eigen::VectorXd& x) const {
    double v = 0.0;
    std::string name;
    for (const auto& b : blocks) {
      const double bv = violation(b, x);
      if (bv > v) {
        v = bv;
        name = b.label;
      }
    }
    return name;
  }
};

enum class Status { Optimal, Infeasible, MaxIterations, NumericalError };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::MaxIterations: return "max_iterations";
    case Status::NumericalError: return "numerical_error";
  }
  return "unknown";
}

struct Settings {
  double gap_tol = 1e-8;       // absolute complementarity s^T z
  double rel_gap_tol = 1e-8;   // relative to |c^T x|
  double feas_tol = 1e-9;      // residuals, relative to 1 + data norms
  int max_iterations = 100;
  double step_fraction = 0.99;
  double phase1_radius = 1e3;  // search ball for phase I, relative to 1 + ||x0||_inf
  bool verbose = false;        // per-iteration log on stderr
};

struct Result {
  Status status = Status::NumericalError;
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double gap = std::numeric_limits<double>::quiet_NaN();
  double dual_residual = std::numeric_limits<double>::quiet_NaN();
  double max_violation = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  int phase1_iterations = 0;
  std::string message;
};

namespace detail {

struct SparseVec {
  std::vector<Index> index;
  std::vector<double> coef;
};

/// Dense scratch for summing sparse vectors with a compact index list.
class Accumulator {
 public:
  explicit Accumulator(Index n) : value_(static_cast<std::size_t>(n), 0.0), seen_(static_cast<std::size_t>(n), 0) {}

  void add(const AffineRow& r, double w) {
    for (std::size_t j = 0; j < r.index.size(); ++j) add(r.index[j], w * r.coef[j]);
  }
  void add(Index i, double v) {
    const auto u = static_cast<std::size_t>(i);
    if (!seen_[u]) {
      seen_[u] = 1;
      touched_.push_back(i);
    }
    value_[u] += v;
  }

  void flush(SparseVec& out) {
    out.index.clear();
    out.coef.clear();
    for (Index i : touched_) {
      const auto u = static_cast<std::size_t>(i);
      out.index.push_back(i);
      out.coef.push_back(value_[u]);
      value_[u] = 0.0;
      seen_[u] = 0;
    }
    touched_.clear();
  }

 private:
  std::vector<double> value_;
  std::vector<char> seen_;
  std::vector<Index> touched_;
};

template <class A, class B>
void add_outer(Eigen::MatrixXd& H, const A& a, const B& b, double w) {
  if (w == 0.0) return;
  for (std::size_t i = 0; i < a.index.size(); ++i) {
    const double ai = w * a.coef[i];
    for (std::size_t j = 0; j < b.index.size(); ++j) H(a.index[i], b.index[j]) += ai * b.coef[j];
  }
}

template <class A, class B>
void add_outer_sym(Eigen::MatrixXd& H, const A& a, const B& b, double w) {
  add_outer(H, a, b, w);
  add_outer(H, b, a, w);
}

template <class A>
double sparse_dot(const A& a, const Eigen::VectorXd& x) {
  double v = 0.0;
  for (std::size_t j = 0; j < a.index.size(); ++j) v += a.coef[j] * x(a.index[j]);
  return v;
}

/// Nesterov-Todd scaling of one second-order block: W = eta H(w), with
/// H(w) the hyperbolic rotation taking e to w (w^T J w = 1). W z = W^{-1} s.
struct SocScaling {
  double eta = 1.0;
  Eigen::VectorXd w;

  /// out = H(sign * J-flip of w) v scaled by eta^power, power = +1 or -1.
  void apply(const Eigen::VectorXd& v, Eigen::VectorXd& out, bool inverse) const {
    const Index d = v.size();
    const double w0 = w(0);
    const double sgn = inverse ? -1.0 : 1.0;
    const auto w1 = w.tail(d - 1);
    const auto v1 = v.tail(d - 1);
    const double w1v1 = w1.dot(v1);
    out.resize(d);
    out(0) = w0 * v(0) + sgn * w1v1;
    out.tail(d - 1) = v1 + (sgn * v(0) + w1v1 / (1.0 + w0)) * w1;
    out *= inverse ? 1.0 / eta : eta;
  }
};

inline double soc_det(const Eigen::VectorXd& u) {
  return u(0) * u(0) - u.tail(u.size() - 1).squaredNorm();
}

inline bool soc_scaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z, SocScaling& out) {
  const double ds = soc_det(s);
  const double dz = soc_det(z);
  if (!(ds > 0.0) || !(dz > 0.0) || !(s(0) > 0.0) || !(z(0) > 0.0)) return false;
  const Eigen::VectorXd sb = s / std::sqrt(ds);
  Eigen::VectorXd zb = z / std::sqrt(dz);
  const double gamma = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
  zb.tail(zb.size() - 1) *= -1.0;
  out.w = (sb + zb) / (2.0 * gamma);
  out.eta = std::pow(ds / dz, 0.25);
  return true;
}

/// Jordan product u o v.
inline void soc_product(const Eigen::VectorXd& u, const Eigen::VectorXd& v, Eigen::VectorXd& out) {
  const Index d = u.size();
  out.resize(d);
  out(0) = u.dot(v);
  out.tail(d - 1) = u(0) * v.tail(d - 1) + v(0) * u.tail(d - 1);
}

/// Solves l o d = r for d.
inline void soc_divide(const Eigen::VectorXd& l, const Eigen::VectorXd& r, Eigen::VectorXd& out) {
  const Index d = l.size();
  const auto l1 = l.tail(d - 1);
  const double d0 = (l(0) * r(0) - l1.dot(r.tail(d - 1))) / soc_det(l);
  out.resize(d);
  out(0) = d0;
  out.tail(d - 1) = (r.tail(d - 1) - d0 * l1) / l(0);
}

/// Largest alpha with u + alpha du still in the cone (infinity if unbounded).
inline double soc_max_step(const Eigen::VectorXd& u, const Eigen::VectorXd& du) {
  const Index d = u.size();
  const double a = du(0) * du(0) - du.tail(d - 1).squaredNorm();
  const double b = u(0) * du(0) - u.tail(d - 1).dot(du.tail(d - 1));
  const double c = std::max(soc_det(u), 0.0);
  const double disc = b * b - a * c;
  if (disc < 0.0) return std::numeric_limits<double>::infinity();
  const double den = -b + std::sqrt(disc);
  return den > 0.0 ? c / den : std::numeric_limits<double>::infinity();
}

/// One slack block of the primal-dual iteration. Linear blocks carry their
/// affine rows; an exponential block is the scalar slack of -f(x) >= 0 with
///   f = x - y log(z / y)      (domain y > 0, z > 0).
struct Slot {
  enum Kind { Nonneg, Soc, Exp } kind = Nonneg;
  const ConeBlock* block = nullptr;
  Index offset = 0;
  Index dim = 1;
};

class Engine {
 public:
  Engine(const Problem& p, const Settings& s) : p_(p), s_(s), acc_(p.num_vars) {
    Index off = 0;
    for (const auto& b : p.blocks) {
      Slot sl;
      sl.block = &b;
      sl.offset = off;
      switch (b.kind) {
        case ConeKind::Nonnegative:
          sl.kind = Slot::Nonneg;
          sl.dim = 1;
          ++degree_;
          break;
        case ConeKind::SecondOrder:
          sl.kind = Slot::Soc;
          sl.dim = static_cast<Index>(b.rows.size());
          ++degree_;
          break;
        case ConeKind::Exponential:
          sl.kind = Slot::Exp;
          sl.dim = 1;
          ++degree_;
          has_exp_ = true;
          break;
      }
      off += sl.dim;
      slots_.push_back(sl);
    }
    m_ = off;
    scalings_.resize(slots_.size());
    h_norm_ = 0.0;
    for (const auto& b : p.blocks) {
      for (const auto& r : b.rows) h_norm_ = std::max(h_norm_, std::abs(r.constant));
    }
  }

  /// True when every exponential block's y and z rows are positive at x.
  bool in_domain(const Eigen::VectorXd& x) const {
    for (const auto& sl : slots_) {
      if (sl.kind != Slot::Exp) continue;
      if (!(sl.block->rows[1].eval(x) > 0.0) || !(sl.block->rows[2].eval(x) > 0.0)) return false;
    }
    return true;
  }

  Result run(Eigen::VectorXd x) {
    const Index n = p_.num_vars;
    Result res;
    res.x = x;
    if (!in_domain(x)) {
      res.status = Status::NumericalError;
      res.message = "start point outside the exponential cone domain";
      return res;
    }
    if (m_ == 0) {
      res.status = Status::NumericalError;
      res.message = "problem has no constraints";
      return res;
    }

    // Slack from the constraint values, pushed into the cone interior.
    Eigen::VectorXd v(m_), s(m_), z(m_);
    values(x, v);
    s = v;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      const auto& sl = slots_[i];
      auto sb = s.segment(sl.offset, sl.dim);
      double shift = sl.kind == Slot::Soc ? sb.tail(sl.dim - 1).norm() - sb(0) : -sb(0);
      if (shift >= -1e-8) sb(0) += 1.0 + std::max(shift, 0.0);
      z.segment(sl.offset, sl.dim).setZero();
      z(sl.offset) = 1.0;
    }

    const double c_norm = p_.c.lpNorm<Eigen::Infinity>();
    const double md = static_cast<double>(degree_);
    Eigen::VectorXd r_x(n), r_p(m_), lam(m_), dx(n), ds(m_), dz(m_), dx_a(n), ds_a(m_), dz_a(m_);
    Eigen::VectorXd rc(m_), d(m_), x_new(n), tmp, tmp2, tmp3;
    Eigen::MatrixXd K(n, n);

    for (int it = 0;; ++it) {
      gradients(x);
      // r_x = c - J^T z, r_p = s - v(x).
      r_x = p_.c;
      for (Index i = 0; i < m_; ++i) scatter(r_x, grads_[static_cast<std::size_t>(i)], -z(i));
      r_p = s - v;
      const double gap = s.dot(z);
      const double obj = p_.c.dot(x);
      const double pres = r_p.lpNorm<Eigen::Infinity>();
      const double dres = r_x.lpNorm<Eigen::Infinity>();
      res.x = x;
      res.objective = obj;
      res.gap = gap;
      res.dual_residual = dres;
      res.iterations = it;
      if (s_.verbose) {
        std::fprintf(stderr, "  ipm %3d  obj % .9e  gap %.2e  pres %.2e  dres %.2e\n", it, obj, gap,
                     pres, dres);
      }
      if (pres <= s_.feas_tol * (1.0 + h_norm_) && dres <= s_.feas_tol * (1.0 + c_norm) &&
          gap <= std::max(s_.gap_tol, s_.rel_gap_tol * std::abs(obj))) {
        res.status = Status::Optimal;
        return res;
      }
      if (it >= s_.max_iterations) {
        res.status = Status::MaxIterations;
        res.message = "iteration limit";
        return res;
      }

      // Scalings and lambda = W z.
      for (std::size_t i = 0; i < slots_.size(); ++i) {
        const auto& sl = slots_[i];
        if (sl.kind == Slot::Soc) {
          if (!soc_scaling(s.segment(sl.offset, sl.dim), z.segment(sl.offset, sl.dim), scalings_[i])) {
            res.status = Status::NumericalError;
            res.message = "iterate left the cone interior";
            return res;
          }
          scalings_[i].apply(z.segment(sl.offset, sl.dim), tmp, false);
          lam.segment(sl.offset, sl.dim) = tmp;
        } else {
          lam(sl.offset) = std::sqrt(s(sl.offset) * z(sl.offset));
        }
      }
      const double mu = gap / md;

      assemble(x, z, s, K);
      if (!factor(K)) {
        res.status = Status::NumericalError;
        res.message = "Newton system could not be factored";
        return res;
      }

      // Affine scaling direction: rc = -lambda o lambda, d = -lambda.
      d = -lam;
      direction(r_x, r_p, d, s, z, dx_a, ds_a, dz_a);
      const double a_aff = std::min(1.0, std::min(max_step(s, ds_a), max_step(z, dz_a)));
      const double sigma = std::clamp(std::pow(1.0 - a_aff, 3.0), 0.0, 1.0);

      // Combined direction with the second-order correction.
      for (std::size_t i = 0; i < slots_.size(); ++i) {
        const auto& sl = slots_[i];
        const Index o = sl.offset;
        if (sl.kind == Slot::Soc) {
          const Eigen::VectorXd l = lam.segment(o, sl.dim);
          const auto& W = scalings_[i];
          W.apply(ds_a.segment(o, sl.dim), tmp, true);   // W^{-1} ds
          W.apply(dz_a.segment(o, sl.dim), tmp2, false); // W dz
          soc_product(tmp, tmp2, tmp3);
          Eigen::VectorXd ll;
          soc_product(l, l, ll);
          Eigen::VectorXd r = -ll - tmp3;
          r(0) += sigma * mu;
          soc_divide(l, r, tmp);
          d.segment(o, sl.dim) = tmp;
        } else {
          const double w = std::sqrt(s(o) / z(o));
          const double r = -lam(o) * lam(o) + sigma * mu - (ds_a(o) / w) * (dz_a(o) * w);
          d(o) = r / lam(o);
        }
      }
      direction(r_x, r_p, d, s, z, dx, ds, dz);

      double alpha = std::min(1.0, s_.step_fraction * std::min(max_step(s, ds), max_step(z, dz)));
      bool ok = false;
      for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
        x_new = x + alpha * dx;
        if (!has_exp_ || in_domain(x_new)) {
          ok = true;
          break;
        }
      }
      if (!ok || !(alpha > 0.0)) {
        res.status = Status::NumericalError;
        res.message = "step length collapsed";
        return res;
      }
      x = x_new;
      s += alpha * ds;
      z += alpha * dz;
      values(x, v);
    }
  }

 private:
  /// v(x): row values for linear blocks, -f(x) for exponential blocks.
  void values(const Eigen::VectorXd& x, Eigen::VectorXd& v) const {
    for (const auto& sl : slots_) {
      const auto& rows = sl.block->rows;
      if (sl.kind == Slot::Exp) {
        const double xv = rows[0].eval(x);
        const double yv = rows[1].eval(x);
        const double zv = rows[2].eval(x);
        v(sl.offset) = -(xv - yv * std::log(zv / yv));
      } else {
        for (Index r = 0; r < sl.dim; ++r) v(sl.offset + r) = rows[static_cast<std::size_t>(r)].eval(x);
      }
    }
  }

  /// Gradients of v(x), one sparse vector per slack entry.
  void gradients(const Eigen::VectorXd& x) {
    grads_.resize(static_cast<std::size_t>(m_));
    for (const auto& sl : slots_) {
      const auto& rows = sl.block->rows;
      if (sl.kind == Slot::Exp) {
        const double yv = rows[1].eval(x);
        const double zv = rows[2].eval(x);
        acc_.add(rows[0], -1.0);
        acc_.add(rows[1], -(1.0 - std::log(zv / yv)));
        acc_.add(rows[2], yv / zv);
        acc_.flush(grads_[static_cast<std::size_t>(sl.offset)]);
      } else if (!linear_ready_) {
        for (Index r = 0; r < sl.dim; ++r) {
          acc_.add(rows[static_cast<std::size_t>(r)], 1.0);
          acc_.flush(grads_[static_cast<std::size_t>(sl.offset + r)]);
        }
      }
    }
    linear_ready_ = true;
  }

  static void scatter(Eigen::VectorXd& out, const SparseVec& g, double w) {
    for (std::size_t j = 0; j < g.index.size(); ++j) out(g.index[j]) += w * g.coef[j];
  }

  static double gather(const SparseVec& g, const Eigen::VectorXd& x) { return sparse_dot(g, x); }

  /// K = sum z_j hess f_j + J^T W^{-2} J.
  void assemble(const Eigen::VectorXd& x, const Eigen::VectorXd& z, const Eigen::VectorXd& s,
                Eigen::MatrixXd& K) {
    K.setZero();
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      const auto& sl = slots_[i];
      const Index o = sl.offset;
      const auto& g0 = grads_[static_cast<std::size_t>(o)];
      switch (sl.kind) {
        case Slot::Nonneg:
          add_outer(K, g0, g0, z(o) / s(o));
          break;
        case Slot::Exp: {
          add_outer(K, g0, g0, z(o) / s(o));
          const auto& rows = sl.block->rows;
          const double yv = rows[1].eval(x);
          const double zv = rows[2].eval(x);
          const double w = z(o);
          add_outer(K, rows[1], rows[1], w / yv);
          add_outer_sym(K, rows[1], rows[2], -w / zv);
          add_outer(K, rows[2], rows[2], w * yv / (zv * zv));
          break;
        }
        case Slot::Soc: {
          // W^{-2} = (2 q q^T - J) / eta^2 with q = J w.
          const auto& W = scalings_[i];
          const double k = 1.0 / (W.eta * W.eta);
          for (std::size_t j = 0; j < g0.index.size(); ++j) acc_.add(g0.index[j], W.w(0) * g0.coef[j]);
          for (Index r = 1; r < sl.dim; ++r) {
            const auto& gr = grads_[static_cast<std::size_t>(o + r)];
            const double wr = -W.w(r);
            for (std::size_t j = 0; j < gr.index.size(); ++j) acc_.add(gr.index[j], wr * gr.coef[j]);
            add_outer(K, gr, gr, k);
          }
          acc_.flush(scratch_);
          add_outer(K, scratch_, scratch_, 2.0 * k);
          add_outer(K, g0, g0, -k);
          break;
        }
      }
    }
  }

  bool factor(Eigen::MatrixXd& K) {
    llt_.compute(K);
    if (llt_.info() == Eigen::Success) return true;
    const double scale = std::max(K.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    for (double reg = 1e-13; reg <= 1e-5; reg *= 100.0) {
      Eigen::MatrixXd Kr = K;
      Kr.diagonal().array() += reg * scale;
      llt_.compute(Kr);
      if (llt_.info() == Eigen::Success) return true;
    }
    return false;
  }

  /// u -> W^{-1} u (inverse) or W u, block by block.
  void scale(const Eigen::VectorXd& u, Eigen::VectorXd& out, const Eigen::VectorXd& s,
             const Eigen::VectorXd& z, bool inverse) const {
    out.resize(m_);
    Eigen::VectorXd tmp;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      const auto& sl = slots_[i];
      const Index o = sl.offset;
      if (sl.kind == Slot::Soc) {
        scalings_[i].apply(u.segment(o, sl.dim), tmp, inverse);
        out.segment(o, sl.dim) = tmp;
      } else {
        const double w = std::sqrt(s(o) / z(o));
        out(o) = inverse ? u(o) / w : u(o) * w;
      }
    }
  }

  /// Solves the scaled Newton system for a given d = lambda \ r_c:
  ///   (H + J^T W^{-2} J) dx = -r_x + J^T W^{-1} (W^{-1} r_p + d)
  ///   ds = J dx - r_p,  dz = W^{-1} (d - W^{-1} ds).
  void direction(const Eigen::VectorXd& r_x, const Eigen::VectorXd& r_p, const Eigen::VectorXd& d,
                 const Eigen::VectorXd& s, const Eigen::VectorXd& z, Eigen::VectorXd& dx,
                 Eigen::VectorXd& ds, Eigen::VectorXd& dz) {
    Eigen::VectorXd u, t;
    scale(r_p, u, s, z, true);
    u += d;
    scale(u, t, s, z, true);
    Eigen::VectorXd rhs = -r_x;
    for (Index i = 0; i < m_; ++i) scatter(rhs, grads_[static_cast<std::size_t>(i)], t(i));
    dx = llt_.solve(rhs);
    ds.resize(m_);
    for (Index i = 0; i < m_; ++i) ds(i) = gather(grads_[static_cast<std::size_t>(i)], dx);
    ds -= r_p;
    scale(ds, u, s, z, true);
    u = d - u;
    scale(u, dz, s, z, true);
  }

  double max_step(const Eigen::VectorXd& u, const Eigen::VectorXd& du) const {
    double a = std::numeric_limits<double>::infinity();
    for (const auto& sl : slots_) {
      const Index o = sl.offset;
      if (sl.kind == Slot::Soc) {
        a = std::min(a, soc_max_step(u.segment(o, sl.dim), du.segment(o, sl.dim)));
      } else if (du(o) < 0.0) {
        a = std::min(a, -u(o) / du(o));
      }
    }
    return a;
  }

  const Problem& p_;
  Settings s_;
  std::vector<Slot> slots_;
  std::vector<SocScaling> scalings_;
  std::vector<SparseVec> grads_;
  Index m_ = 0;
  int degree_ = 0;
  bool has_exp_ = false;
  bool linear_ready_ = false;
  double h_norm_ = 0.0;
  Accumulator acc_;
  SparseVec scratch_;
  Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt_;
};

/// Smallest shift sigma that puts block b (shifted by sigma * e) on the cone
/// boundary, with e = 1, (1, 0..0), (-1, 1, 1) for the three kinds.
inline double required_shift(const ConeBlock& b, const Eigen::VectorXd& x) {
  switch (b.kind) {
    case ConeKind::Nonnegative:
      return -b.rows[0].eval(x);
    case ConeKind::SecondOrder: {
      double sq = 0.0;
      for (std::size_t r = 1; r < b.rows.size(); ++r) {
        const double v = b.rows[r].eval(x);
        sq += v * v;
      }
      return std::sqrt(sq) - b.rows[0].eval(x);
    }
    case ConeKind::Exponential: {
      const double xv = b.rows[0].eval(x);
      const double yv = b.rows[1].eval(x);
      const double zv = b.rows[2].eval(x);
      auto inside = [&](double s) {
        const double y = yv + s;
        const double z = zv + s;
        return y > 0.0 && z > 0.0 && (xv - s) - y * std::log(z / y) < 0.0;
      };
      double lo = std::max(-yv, -zv);
      double hi = std::max(lo, 0.0) + 1.0;
      while (!inside(hi)) {
        hi = 2.0 * hi + 1.0;
        if (hi > 1e300) return hi;
      }
      for (int i = 0; i < 200 && hi - lo > 1e-12 * (1.0 + std::abs(hi)); ++i) {
        const double mid = 0.5 * (lo + hi);
        (inside(mid) ? hi : lo) = mid;
      }
      return hi;
    }
  }
  return 0.0;
}

/// Phase I: minimize s subject to every block shifted by s * e lying in its
/// cone, with s appended as the last variable. The ball ||x - x0|| <= radius
/// keeps the centring problems bounded when the feasible set is not.
inline Problem phase_one_problem(const Problem& p, const Eigen::VectorXd& x0, double radius) {
  const Index n = p.num_vars;
  Problem q(n + 1);
  q.c(n) = 1.0;
  std::vector<AffineRow> offset(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) offset[static_cast<std::size_t>(i)] = AffineRow(-x0(i)).add(i, 1.0);
  q.add_second_order(AffineRow(radius), std::move(offset), "phase I ball");
  for (const auto& b : p.blocks) {
    ConeBlock nb = b;
    switch (b.kind) {
      case ConeKind::Nonnegative:
        nb.rows[0].add(n, 1.0);
        break;
      case ConeKind::SecondOrder:
        nb.rows[0].add(n, 1.0);
        break;
      case ConeKind::Exponential:
        nb.rows[0].add(n, -1.0);
        nb.rows[1].add(n, 1.0);
        nb.rows[2].add(n, 1.0);
        break;
    }
    q.blocks.push_back(std::move(nb));
  }
  return q;
}

}  // namespace detail

/// True when every block is strictly inside its cone at x.
inline bool strictly_feasible(const Problem& p, const Eigen::VectorXd& x) {
  for (const auto& b : p.blocks) {
    if (detail::required_shift(b, x) >= 0.0) return false;
  }
  return true;
}

/// Solves the problem from x0 (zero if absent). x0 need not be feasible but
/// must lie inside the domain of the exponential blocks, otherwise the run
/// starts from the phase I solution.
inline Result solve(const Problem& p, const Settings& settings = {},
                    const Eigen::VectorXd* x0 = nullptr) {
  if (p.c.size() != p.num_vars) throw InvalidArgument("conic: objective size mismatch");
  for (const auto& b : p.blocks) {
    const std::size_t need = b.kind == ConeKind::Nonnegative ? 1 : (b.kind == ConeKind::Exponential ? 3 : 2);
    if (b.kind == ConeKind::SecondOrder ? b.rows.size() < need : b.rows.size() != need) {
      throw InvalidArgument("conic: malformed block '" + b.label + "'");
    }
    for (const auto& r : b.rows) {
      for (Index i : r.index) {
        if (i < 0 || i >= p.num_vars) throw InvalidArgument("conic: variable index out of range in '" + b.label + "'");
      }
    }
  }

  Eigen::VectorXd x = x0 ? *x0 : Eigen::VectorXd::Zero(p.num_vars);
  if (x.size() != p.num_vars) throw InvalidArgument("conic: start point size mismatch");

  auto finish = [&](Result r, int phase1) {
    r.phase1_iterations = phase1;
    r.max_violation = p.max_violation(r.x);
    return r;
  };

  detail::Engine main(p, settings);
  Result first;
  if (main.in_domain(x)) {
    first = main.run(x);
    if (first.status == Status::Optimal) return finish(first, 0);
  }

  // Phase I: minimize the common shift s that puts every block in its cone.
  const Index n = p.num_vars;
  const double radius = settings.phase1_radius * (1.0 + x.lpNorm<Eigen::Infinity>());
  const Problem q = detail::phase_one_problem(p, x, radius);
  double sigma = 0.0;
  for (const auto& b : p.blocks) sigma = std::max(sigma, detail::required_shift(b, x));
  Eigen::VectorXd xs(n + 1);
  xs << x, sigma + 1.0 + 0.5 * std::abs(sigma);
  detail::Engine e1(q, settings);
  const Result r1 = e1.run(xs);
  const int phase1 = r1.iterations;
  const Eigen::VectorXd head = r1.x.size() == n + 1 ? Eigen::VectorXd(r1.x.head(n)) : x;
  if (r1.status != Status::Optimal) {
    Result out = first.x.size() == n ? first : Result{};
    if (out.x.size() != n) out.x = head;
    out.status = first.x.size() == n ? first.status : r1.status;
    out.message = "phase I: " + r1.message + (first.message.empty() ? "" : "; " + first.message);
    return finish(out, phase1);
  }
  if (!strictly_feasible(p, head)) {
    Result out;
    out.x = head;
    out.status = Status::Infeasible;
    out.message = "no strictly feasible point near the start (min shift " + std::to_string(r1.x(n)) +
                  ", worst '" + p.worst_block(head) + "')";
    return finish(out, phase1);
  }
  if (first.x.size() == n && first.status != Status::Optimal && !main.in_domain(head)) {
    return finish(first, phase1);
  }
  Result r = main.run(head);
  if (r.status != Status::Optimal && !first.message.empty()) r.message += " (first attempt: " + first.message + ")";
  return finish(r, phase1);
}

}  // namespace cfres::conic

#pragma once

// Projection of an anchor point onto a polyhedron {w : G w <= r}:
//
//   min ||w - w_hat||^2  s.t.  g_i^T w <= r_i
//
// solved in the dual (one variable per cut) by Hildreth's cyclic coordinate
// ascent, w = w_hat - G^T lambda. When the sweeps have not converged after a
// fixed budget, a dual active-set method finishes the solve exactly.
//
// Also provides an enumeration oracle for tiny instances and the block
// coordinate scheme that optimizes over a sampled subset of coordinates.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "advcorr/cuts.hpp"
#include "advcorr/errors.hpp"
#include "advcorr/nn.hpp"

namespace advcorr {

enum class QPStatus { optimal, max_iter, infeasible_detected };

inline const char* to_string(QPStatus s) {
  switch (s) {
    case QPStatus::optimal:
      return "optimal";
    case QPStatus::max_iter:
      return "max_iter";
    case QPStatus::infeasible_detected:
      return "infeasible_detected";
  }
  return "?";
}

struct QPOptions {
  double tol = 1e-8;         ///< feasibility / complementarity tolerance
  int max_sweeps = 5000;     ///< full passes over the dual coordinates
  double dual_bound = 1e8;   ///< ||lambda||_inf above this is reported as infeasible
  bool active_set = true;    ///< finish with the dual active-set method
  int active_set_after = 20; ///< Hildreth sweeps tried before switching
};

struct QPInstance {
  ParamVector anchor;
  const CutPool* cuts = nullptr;
  /// Coordinates that may move; absent means all.
  std::optional<std::vector<bool>> free_mask;
  /// Values of the non-free coordinates; defaults to the anchor.
  std::optional<Vector> fixed_values;
  /// Starting duals (shorter vectors are padded with zeros for new cuts).
  Vector warm_start_duals;
};

struct QPSolution {
  ParamVector w;
  Vector duals;
  double max_violation = 0.0;
  int iterations_used = 0;  ///< Hildreth sweeps
  int active_set_steps = 0;
  QPStatus status = QPStatus::optimal;

  /// ||w - anchor||^2.
  double objective(const ParamVector& anchor) const { return (w.values - anchor.values).squaredNorm(); }
};

namespace detail {

struct DenseGramView {
  const Matrix* q;
  Index size() const { return q->rows(); }
  const double* row(Index i) const { return q->col(i).data(); }
  double diag(Index i) const { return (*q)(i, i); }
};

struct PoolGramView {
  const GramMatrix* g;
  Index size() const { return g->size(); }
  const double* row(Index i) const { return g->row(i); }
  double diag(Index i) const { return (*g)(i, i); }
};

struct DualOutcome {
  Vector lambda;
  int sweeps = 0;
  int active_set_steps = 0;
  QPStatus status = QPStatus::max_iter;
};

template <class G>
Vector gram_times(const G& Q, const Vector& lambda) {
  const Index m = Q.size();
  Vector s = Vector::Zero(m);
  for (Index i = 0; i < m; ++i)
    if (lambda(i) != 0.0) s += lambda(i) * Eigen::Map<const Vector>(Q.row(i), m);
  return s;
}

/// viol = c - Q lambda = G w - r.
inline bool kkt_satisfied(const Vector& lambda, const Vector& viol, const Vector& scale, double tol) {
  for (Index i = 0; i < viol.size(); ++i) {
    if (viol(i) > tol) return false;
    if (lambda(i) * std::abs(viol(i)) > tol * scale(i)) return false;
  }
  return true;
}

/// Lower Cholesky factor of Q restricted to an ordered active set. Rows can
/// be appended and any row removed (Givens rotations restore the shape).
class ActiveCholesky {
 public:
  Index size() const { return n_; }

  /// L^{-1} b.
  Vector forward(const Vector& b) const {
    if (n_ == 0) return Vector();
    return L_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>().solve(b);
  }

  /// (L L^T)^{-1} b.
  Vector solve(const Vector& b) const {
    if (n_ == 0) return Vector();
    const auto T = L_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>();
    return T.transpose().solve(T.solve(b));
  }

  void append(const Vector& row, double diag) {
    if (n_ == L_.rows()) {
      const Index cap = std::max<Index>(16, 2 * n_);
      Matrix grown = Matrix::Zero(cap, cap);
      grown.topLeftCorner(n_, n_) = L_.topLeftCorner(n_, n_);
      L_.swap(grown);
    }
    if (n_ > 0) L_.row(n_).head(n_) = row.transpose();
    L_(n_, n_) = diag;
    ++n_;
  }

  void remove(Index k) {
    for (Index i = k; i + 1 < n_; ++i) L_.row(i).head(i + 2) = L_.row(i + 1).head(i + 2);
    for (Index j = k; j + 1 < n_; ++j) {
      const double a = L_(j, j), b = L_(j, j + 1);
      const double r = std::hypot(a, b);
      if (r == 0.0) continue;
      const double cs = a / r, sn = b / r;
      for (Index i = j; i + 1 < n_; ++i) {
        const double x = L_(i, j), y = L_(i, j + 1);
        L_(i, j) = cs * x + sn * y;
        L_(i, j + 1) = -sn * x + cs * y;
      }
      L_(j, j + 1) = 0.0;
    }
    L_.row(n_ - 1).head(n_).setZero();
    L_.col(n_ - 1).head(n_).setZero();
    --n_;
  }

 private:
  Matrix L_;
  Index n_ = 0;
};

/// Dual active-set method (Goldfarb-Idnani with identity Hessian) run from
/// the unconstrained point. The most violated cut enters; active cuts whose
/// multipliers would turn negative leave. Returns the final status; lambda
/// and s = Q lambda are overwritten.
template <class G>
QPStatus dual_active_set(const G& Q, const Vector& c, const Vector& scale, double tol, double zero_norm,
                         Vector& lambda, Vector& s, int& steps) {
  const Index m = Q.size();
  lambda = Vector::Zero(m);
  Vector v = c;
  std::vector<Index> active;
  std::vector<char> in_active(static_cast<std::size_t>(m), 0);
  ActiveCholesky chol;
  const long long max_steps = 20LL * m + 100;
  long long taken = 0;

  auto gather = [&](Index p) {
    Vector q(static_cast<Index>(active.size()));
    const double* row = Q.row(p);
    for (std::size_t a = 0; a < active.size(); ++a) q(static_cast<Index>(a)) = row[active[a]];
    return q;
  };

  for (int refresh = 0; refresh < 4; ++refresh) {
    while (true) {
      Index p = -1;
      double vp = tol;
      for (Index i = 0; i < m; ++i)
        if (!in_active[static_cast<std::size_t>(i)] && Q.diag(i) > zero_norm && v(i) > vp) {
          vp = v(i);
          p = i;
        }
      if (p < 0) break;

      while (true) {
        if (++taken > max_steps) {
          steps = static_cast<int>(std::min<long long>(taken, std::numeric_limits<int>::max()));
          s = c - v;
          return QPStatus::max_iter;
        }
        const Vector qap = gather(p);
        const Vector r = chol.solve(qap);
        Vector u = Eigen::Map<const Vector>(Q.row(p), m);
        for (std::size_t a = 0; a < active.size(); ++a)
          u -= r(static_cast<Index>(a)) * Eigen::Map<const Vector>(Q.row(active[a]), m);
        const double up = u(p);

        double t1 = std::numeric_limits<double>::infinity();
        Index block = -1;
        for (std::size_t a = 0; a < active.size(); ++a) {
          const double ra = r(static_cast<Index>(a));
          if (ra > 0.0) {
            const double t = lambda(active[a]) / ra;
            if (t < t1) {
              t1 = t;
              block = static_cast<Index>(a);
            }
          }
        }
        const bool independent = up > 1e-12 * Q.diag(p);
        const double t2 = independent ? v(p) / up : std::numeric_limits<double>::infinity();
        if (block < 0 && !independent) {
          steps = static_cast<int>(taken);
          s = c - v;
          return QPStatus::infeasible_detected;
        }
        const double t = std::min(t1, t2);
        for (std::size_t a = 0; a < active.size(); ++a) lambda(active[a]) -= t * r(static_cast<Index>(a));
        lambda(p) += t;
        v -= t * u;

        if (t2 <= t1) {
          const Vector l = chol.forward(qap);
          const double d2 = Q.diag(p) - (l.size() > 0 ? l.squaredNorm() : 0.0);
          chol.append(l, std::sqrt(std::max(d2, up)));
          active.push_back(p);
          in_active[static_cast<std::size_t>(p)] = 1;
          break;
        }
        const Index k = active[static_cast<std::size_t>(block)];
        lambda(k) = 0.0;
        in_active[static_cast<std::size_t>(k)] = 0;
        active.erase(active.begin() + block);
        chol.remove(block);
      }
    }
    for (Index i : active) lambda(i) = std::max(0.0, lambda(i));
    s = gram_times(Q, lambda);
    v = c - s;
    if (kkt_satisfied(lambda, v, scale, tol)) {
      steps = static_cast<int>(taken);
      return QPStatus::optimal;
    }
  }
  steps = static_cast<int>(taken);
  return QPStatus::max_iter;
}

/// Hildreth coordinate ascent on max_{lambda >= 0} c^T lambda - 1/2 lambda^T Q lambda.
template <class G>
DualOutcome solve_dual(const G& Q, const Vector& c, const Vector& scale, Vector lambda, const QPOptions& opt) {
  const Index m = Q.size();
  DualOutcome out;
  if (lambda.size() != m) throw ShapeError("dual warm start has wrong length");
  lambda = lambda.cwiseMax(0.0);

  double max_diag = 0.0;
  for (Index i = 0; i < m; ++i) max_diag = std::max(max_diag, Q.diag(i));
  const double zero_norm = 1e-14 * std::max(max_diag, 1e-300);
  for (Index i = 0; i < m; ++i)
    if (Q.diag(i) <= zero_norm) {
      lambda(i) = 0.0;
      // 0 <= r_i with r_i < 0: no point satisfies this cut.
      if (c(i) > opt.tol) {
        out.lambda = lambda;
        out.status = QPStatus::infeasible_detected;
        return out;
      }
    }

  Vector s = gram_times(Q, lambda);
  if (kkt_satisfied(lambda, c - s, scale, opt.tol)) {
    out.lambda = std::move(lambda);
    out.status = QPStatus::optimal;
    return out;
  }
  const int hildreth_sweeps = opt.active_set ? std::min(opt.max_sweeps, opt.active_set_after) : opt.max_sweeps;
  for (int sweep = 1; sweep <= hildreth_sweeps; ++sweep) {
    for (Index i = 0; i < m; ++i) {
      const double qii = Q.diag(i);
      if (qii <= zero_norm) continue;
      const double updated = std::max(0.0, lambda(i) + (c(i) - s(i)) / qii);
      const double d = updated - lambda(i);
      if (d != 0.0) {
        lambda(i) = updated;
        s += d * Eigen::Map<const Vector>(Q.row(i), m);
      }
    }
    out.sweeps = sweep;
    if (kkt_satisfied(lambda, c - s, scale, opt.tol)) {
      out.status = QPStatus::optimal;
      break;
    }
    if (lambda.maxCoeff() > opt.dual_bound) {
      out.status = QPStatus::infeasible_detected;
      break;
    }
  }
  if (opt.active_set && out.status == QPStatus::max_iter) {
    Vector lam, s2;
    int steps = 0;
    const QPStatus st = dual_active_set(Q, c, scale, opt.tol, zero_norm, lam, s2, steps);
    if (st != QPStatus::max_iter) {
      lambda = std::move(lam);
      out.status = st;
    }
    out.active_set_steps = steps;
  }
  out.lambda = std::move(lambda);
  return out;
}

inline Vector padded_duals(const Vector& warm, Index m) {
  Vector l = Vector::Zero(m);
  const Index n = std::min(warm.size(), m);
  if (n > 0) l.head(n) = warm.head(n).cwiseMax(0.0);
  return l;
}

inline double max_violation(const CutPool& pool, const Vector& w) {
  if (pool.empty()) return 0.0;
  return std::max(0.0, pool.residuals(w).maxCoeff());
}

}  // namespace detail

/// Projection of inst.anchor onto the cuts (optionally with some coordinates
/// held fixed).
inline QPSolution project(const QPInstance& inst, const QPOptions& opt) {
  if (!(opt.tol > 0.0)) throw ConfigError("QP tolerance must be > 0");
  if (opt.max_sweeps < 1) throw ConfigError("QP max_sweeps must be >= 1");
  if (inst.cuts == nullptr) throw DomainError("QP instance has no cut pool");
  const CutPool& pool = *inst.cuts;
  const ParamLayout& layout = pool.layout();
  if (inst.anchor.size() != layout.size()) throw ShapeError("QP anchor does not match cut layout");
  if (inst.warm_start_duals.size() > 0 && inst.warm_start_duals.minCoeff() < 0.0)
    throw DomainError("warm-start duals must be nonnegative");

  const auto m = static_cast<Index>(pool.size());
  const Vector& anchor = inst.anchor.values;
  QPSolution sol;
  if (m == 0) {
    sol.w = inst.anchor;
    sol.status = QPStatus::optimal;
    return sol;
  }
  const Vector rhs = pool.rhs();
  const Vector scale = (1.0 + rhs.array().abs()).matrix();
  Vector lambda0 = detail::padded_duals(inst.warm_start_duals, m);

  if (!inst.free_mask) {
    const Vector c = pool.residuals(anchor);
    auto dual = detail::solve_dual(detail::PoolGramView{&pool.gram()}, c, scale, std::move(lambda0), opt);
    Vector w = anchor;
    for (Index i = 0; i < m; ++i)
      if (dual.lambda(i) != 0.0) pool[static_cast<std::size_t>(i)].normal.axpy(-dual.lambda(i), w, layout);
    sol.w = ParamVector(std::move(w), layout);
    sol.duals = std::move(dual.lambda);
    sol.iterations_used = dual.sweeps;
    sol.active_set_steps = dual.active_set_steps;
    sol.status = dual.status;
  } else {
    const auto& mask = *inst.free_mask;
    if (static_cast<Index>(mask.size()) != layout.size()) throw ShapeError("free mask length mismatch");
    std::vector<Index> free_idx, fixed_idx;
    for (Index j = 0; j < layout.size(); ++j) (mask[static_cast<std::size_t>(j)] ? free_idx : fixed_idx).push_back(j);
    if (free_idx.empty()) throw DomainError("free mask selects no coordinates");
    const Vector fixed = inst.fixed_values ? *inst.fixed_values : anchor;
    if (fixed.size() != layout.size()) throw ShapeError("fixed values length mismatch");

    const auto nf = static_cast<Index>(free_idx.size());
    Matrix gf(nf, m);  // column i = free part of g_i
    Vector rr(m);
    for (Index i = 0; i < m; ++i) {
      const Vector g = pool[static_cast<std::size_t>(i)].normal.to_dense(layout);
      double fixed_part = 0.0;
      for (Index j : fixed_idx) fixed_part += g(j) * fixed(j);
      for (Index k = 0; k < nf; ++k) gf(k, i) = g(free_idx[static_cast<std::size_t>(k)]);
      rr(i) = rhs(i) - fixed_part;
    }
    Vector anchor_f(nf);
    for (Index k = 0; k < nf; ++k) anchor_f(k) = anchor(free_idx[static_cast<std::size_t>(k)]);
    const Matrix q = gf.transpose() * gf;
    const Vector c = gf.transpose() * anchor_f - rr;
    auto dual = detail::solve_dual(detail::DenseGramView{&q}, c, scale, std::move(lambda0), opt);
    const Vector wf = anchor_f - gf * dual.lambda;
    Vector w = fixed;
    for (Index k = 0; k < nf; ++k) w(free_idx[static_cast<std::size_t>(k)]) = wf(k);
    sol.w = ParamVector(std::move(w), layout);
    sol.duals = std::move(dual.lambda);
    sol.iterations_used = dual.sweeps;
    sol.active_set_steps = dual.active_set_steps;
    sol.status = dual.status;
  }
  sol.max_violation = detail::max_violation(pool, sol.w.values);
  if (sol.status == QPStatus::optimal && sol.max_violation > opt.tol) sol.status = QPStatus::max_iter;
  return sol;
}

inline QPSolution project(const QPInstance& inst, double tol, int max_sweeps) {
  QPOptions opt;
  opt.tol = tol;
  opt.max_sweeps = max_sweeps;
  return project(inst, opt);
}

// ---------------------------------------------------------------------------
// Enumeration oracle

struct BruteForceResult {
  bool feasible = false;
  Vector w;
  Vector duals;
};

/// Tries every subset of cuts as the active set, solves the equality
/// projection in closed form and keeps the best KKT-consistent point.
inline BruteForceResult brute_force_project(const Vector& anchor, const std::vector<Vector>& normals,
                                            const Vector& rhs) {
  const std::size_t m = normals.size();
  if (m > 12) throw DomainError("brute_force_project enumerates at most 12 cuts");
  if (static_cast<std::size_t>(rhs.size()) != m) throw ShapeError("rhs length mismatch");
  for (const auto& g : normals)
    if (g.size() != anchor.size()) throw ShapeError("cut normal length mismatch");

  BruteForceResult best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    std::vector<std::size_t> S;
    for (std::size_t i = 0; i < m; ++i)
      if (mask & (1u << i)) S.push_back(i);
    const auto k = static_cast<Index>(S.size());
    Vector lam_s = Vector::Zero(k);
    Vector w = anchor;
    if (k > 0) {
      Matrix gs(k, anchor.size());
      Vector cs(k);
      for (Index a = 0; a < k; ++a) {
        gs.row(a) = normals[S[static_cast<std::size_t>(a)]].transpose();
        cs(a) = normals[S[static_cast<std::size_t>(a)]].dot(anchor) - rhs(static_cast<Index>(S[static_cast<std::size_t>(a)]));
      }
      const Matrix gram = gs * gs.transpose();
      Eigen::FullPivLU<Matrix> lu(gram);
      if (lu.rank() < k) continue;
      lam_s = lu.solve(cs);
      if (lam_s.minCoeff() < -1e-10 * (1.0 + lam_s.cwiseAbs().maxCoeff())) continue;
      w = anchor - gs.transpose() * lam_s;
    }
    bool feasible = true;
    for (std::size_t i = 0; i < m && feasible; ++i)
      feasible = normals[i].dot(w) - rhs(static_cast<Index>(i)) <= 1e-9 * (1.0 + std::abs(rhs(static_cast<Index>(i))));
    if (!feasible) continue;
    const double obj = (w - anchor).squaredNorm();
    if (obj < best_obj) {
      best_obj = obj;
      best.feasible = true;
      best.w = w;
      best.duals = Vector::Zero(static_cast<Index>(m));
      for (Index a = 0; a < k; ++a) best.duals(static_cast<Index>(S[static_cast<std::size_t>(a)])) = std::max(0.0, lam_s(a));
    }
  }
  return best;
}

inline BruteForceResult brute_force_project(const ParamVector& anchor, const CutPool& pool) {
  std::vector<Vector> normals;
  for (const auto& c : pool.cuts()) normals.push_back(c.normal.to_dense(pool.layout()));
  return brute_force_project(anchor.values, normals, pool.rhs());
}

// ---------------------------------------------------------------------------
// Block coordinate projection

struct BlockOptions {
  double fix_ratio = 0.8;  ///< p: fraction of sampled coordinates held fixed
  int sweeps = 1;          ///< T
  std::uint64_t seed = 0;
  /// Coordinates that are never fixed (biases for networks). Empty = none.
  std::vector<bool> always_free;
};

namespace detail {

inline std::vector<Index> sample_without_replacement(std::vector<Index> from, std::size_t k, std::mt19937_64& rng) {
  k = std::min(k, from.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, from.size() - 1);
    std::swap(from[i], from[pick(rng)]);
  }
  from.resize(k);
  std::sort(from.begin(), from.end());
  return from;
}

inline std::vector<Index> set_minus(const std::vector<Index>& a, const std::vector<Index>& b) {
  std::vector<Index> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::vector<Index> set_union(const std::vector<Index>& a, const std::vector<Index>& b) {
  std::vector<Index> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::size_t floor_at_least_one(double v) { return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(v))); }

}  // namespace detail

/// Alternating approximation of the projection: optimize over a sampled
/// subset of coordinates with the rest fixed at the previous iterate, then keep
/// half of the optimized subset and resample the other half from the
/// coordinates that were fixed. Sampling is done separately inside each layer's
/// weight block (or over all coordinates for a flat layout).
inline QPSolution run_block_coordinate(const ParamVector& anchor, const CutPool& pool, const BlockOptions& bopt,
                                       const QPOptions& qopt = {}) {
  if (!(bopt.fix_ratio > 0.0 && bopt.fix_ratio < 1.0)) throw ConfigError("block fix ratio p must lie in (0,1)");
  if (bopt.sweeps < 1) throw ConfigError("block sweeps T must be >= 1");
  const ParamLayout& layout = pool.layout();
  const Index J = layout.size();
  if (anchor.size() != J) throw ShapeError("block coordinate anchor does not match cut layout");
  std::vector<bool> always = bopt.always_free;
  if (always.empty()) always.assign(static_cast<std::size_t>(J), false);
  if (static_cast<Index>(always.size()) != J) throw ShapeError("always_free mask length mismatch");

  // Sampling groups: per-layer weight blocks, or everything for flat layouts.
  std::vector<std::vector<Index>> groups;
  auto add_group = [&](Index begin, Index end) {
    std::vector<Index> g;
    for (Index j = begin; j < end; ++j)
      if (!always[static_cast<std::size_t>(j)]) g.push_back(j);
    if (!g.empty()) groups.push_back(std::move(g));
  };
  if (layout.blocks().empty()) {
    add_group(0, J);
  } else {
    std::vector<bool> covered(static_cast<std::size_t>(J), false);
    for (const auto& b : layout.blocks()) {
      add_group(b.weight_start, b.weight_start + b.rows * b.cols);
      for (Index j = b.weight_start; j < b.weight_start + b.rows * b.cols; ++j) covered[static_cast<std::size_t>(j)] = true;
    }
    // Coordinates outside weight blocks (biases) that are not always free.
    std::vector<Index> rest;
    for (Index j = 0; j < J; ++j)
      if (!covered[static_cast<std::size_t>(j)] && !always[static_cast<std::size_t>(j)]) rest.push_back(j);
    if (!rest.empty()) groups.push_back(std::move(rest));
  }
  std::vector<Index> always_idx;
  for (Index j = 0; j < J; ++j)
    if (always[static_cast<std::size_t>(j)]) always_idx.push_back(j);

  const double free_frac = 1.0 - bopt.fix_ratio;
  std::mt19937_64 rng(bopt.seed);
  const std::size_t G = groups.size();
  std::vector<std::vector<Index>> jv(G), j0(G);
  for (std::size_t g = 0; g < G; ++g)
    jv[g] = detail::sample_without_replacement(groups[g], detail::floor_at_least_one(free_frac * groups[g].size()), rng);

  auto mask_of = [&](const std::vector<std::vector<Index>>& extra) {
    std::vector<bool> mask(static_cast<std::size_t>(J), false);
    for (Index j : always_idx) mask[static_cast<std::size_t>(j)] = true;
    for (std::size_t g = 0; g < G; ++g) {
      for (Index j : jv[g]) mask[static_cast<std::size_t>(j)] = true;
      for (Index j : j0[g]) mask[static_cast<std::size_t>(j)] = true;
      if (!extra.empty())
        for (Index j : extra[g]) mask[static_cast<std::size_t>(j)] = true;
    }
    return mask;
  };

  QPSolution result;
  result.w = anchor;
  result.status = QPStatus::optimal;
  Vector duals;
  for (int k = 1; k <= bopt.sweeps; ++k) {
    QPInstance inst{anchor, &pool, mask_of({}), result.w.values, duals};
    QPSolution sol = project(inst, qopt);
    if (sol.status == QPStatus::infeasible_detected) {
      // Enlarge once: add as many fixed coordinates as are currently sampled.
      std::vector<std::vector<Index>> extra(G);
      for (std::size_t g = 0; g < G; ++g) {
        const auto current = detail::set_union(jv[g], j0[g]);
        extra[g] = detail::sample_without_replacement(detail::set_minus(groups[g], current), current.size(), rng);
      }
      inst.free_mask = mask_of(extra);
      inst.warm_start_duals = Vector();
      const int used = sol.iterations_used;
      sol = project(inst, qopt);
      sol.iterations_used += used;
      if (sol.status == QPStatus::infeasible_detected) {
        result.iterations_used += sol.iterations_used;
        result.status = QPStatus::infeasible_detected;
        result.duals = sol.duals;
        result.max_violation = detail::max_violation(pool, result.w.values);
        return result;
      }
    }
    result.iterations_used += sol.iterations_used;
    result.w = std::move(sol.w);
    result.duals = sol.duals;
    result.status = sol.status;
    duals = sol.duals;
    for (std::size_t g = 0; g < G; ++g) {
      const auto selected = detail::set_union(jv[g], j0[g]);
      const auto rest = detail::set_minus(groups[g], selected);
      const std::size_t half = detail::floor_at_least_one(free_frac * groups[g].size() / 2.0);
      j0[g] = detail::sample_without_replacement(selected, half, rng);
      jv[g] = detail::sample_without_replacement(rest, half, rng);
    }
  }
  result.max_violation = detail::max_violation(pool, result.w.values);
  return result;
}

}  // namespace advcorr

#pragma once

// Linear cuts g^T w <= r in parameter space: adversary-correction cuts from
// first-order expansions of logit differences, loss cuts from the expansion of
// the training loss, and the pool that accumulates them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "advcorr/errors.hpp"
#include "advcorr/nn.hpp"
#include "advcorr/violation.hpp"

namespace advcorr {

enum class CutKind { adversary = 0, loss = 1 };

inline const char* to_string(CutKind k) { return k == CutKind::adversary ? "adversary" : "loss"; }

/// Where a cut came from. adv_index and competing_label are -1 for loss cuts.
struct CutOrigin {
  int iterate = 0;
  int adv_index = -1;
  int competing_label = -1;
};

/// Cut normal g, held either as a dense J-vector or, for cuts built from a
/// single backpropagation, as one rank-one factor per layer
/// (dW_l = delta_l * input_l^T, db_l = delta_l). The factored form needs a
/// layered ParamLayout and uses a few hundred doubles instead of J.
class CutNormal {
 public:
  CutNormal() = default;

  static CutNormal dense(Vector g) {
    CutNormal n;
    n.dense_ = std::move(g);
    n.is_dense_ = true;
    return n;
  }

  static CutNormal factored(std::vector<LayerFactor> f) {
    CutNormal n;
    n.factors_ = std::move(f);
    n.is_dense_ = false;
    return n;
  }

  bool is_dense() const { return is_dense_; }
  const Vector& dense_values() const { return dense_; }
  const std::vector<LayerFactor>& factors() const { return factors_; }

  /// g^T w.
  double dot(const Vector& w, const ParamLayout& layout) const {
    if (is_dense_) return dense_.dot(w);
    double s = 0.0;
    for (std::size_t l = 0; l < factors_.size(); ++l) {
      const auto& b = layout.blocks()[l];
      const auto& f = factors_[l];
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
          w.data() + b.weight_start, b.rows, b.cols);
      s += f.delta.dot(W * f.input) + f.delta.dot(w.segment(b.bias_start, b.rows));
    }
    return s;
  }

  /// w += a * g.
  void axpy(double a, Vector& w, const ParamLayout& layout) const {
    if (is_dense_) {
      w += a * dense_;
      return;
    }
    for (std::size_t l = 0; l < factors_.size(); ++l) {
      const auto& b = layout.blocks()[l];
      const auto& f = factors_[l];
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
          w.data() + b.weight_start, b.rows, b.cols);
      W.noalias() += (a * f.delta) * f.input.transpose();
      w.segment(b.bias_start, b.rows) += a * f.delta;
    }
  }

  Vector to_dense(const ParamLayout& layout) const {
    if (is_dense_) return dense_;
    return flatten(layout, factors_).values;
  }

  /// g^T h.
  double inner(const CutNormal& other, const ParamLayout& layout) const {
    if (is_dense_ && other.is_dense_) return dense_.dot(other.dense_);
    if (is_dense_) return other.dot(dense_, layout);
    if (other.is_dense_) return dot(other.dense_, layout);
    double s = 0.0;
    for (std::size_t l = 0; l < factors_.size(); ++l) {
      const double uu = factors_[l].delta.dot(other.factors_[l].delta);
      if (uu != 0.0) s += uu * (factors_[l].input.dot(other.factors_[l].input) + 1.0);
    }
    return s;
  }

  bool all_finite() const {
    if (is_dense_) return dense_.allFinite();
    return std::all_of(factors_.begin(), factors_.end(),
                       [](const auto& f) { return f.delta.allFinite() && f.input.allFinite(); });
  }

 private:
  Vector dense_;
  std::vector<LayerFactor> factors_;
  bool is_dense_ = true;
};

/// One inequality g^T w <= rhs.
struct Cut {
  CutNormal normal;
  double rhs = 0.0;
  CutKind kind = CutKind::adversary;
  CutOrigin origin;

  /// g^T w - rhs; positive means violated.
  double residual(const Vector& w, const ParamLayout& layout) const { return normal.dot(w, layout) - rhs; }
};

/// Symmetric Gram matrix G G^T stored as full rows so row i doubles as column i.
class GramMatrix {
 public:
  Index size() const { return static_cast<Index>(rows_.size()); }
  const double* row(Index i) const { return rows_[static_cast<std::size_t>(i)].data(); }
  double operator()(Index i, Index j) const { return rows_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]; }

 private:
  friend class CutPool;
  std::vector<std::vector<double>> rows_;
};

/// Append-only collection of cuts with the margin threshold delta and the
/// l1-robustness radius epsilon_bar used to build them. The Gram matrix of the
/// normals is extended lazily; the pool is not safe for concurrent mutation.
class CutPool {
 public:
  static constexpr std::size_t kDefaultMaxCuts = 20000;

  CutPool() = default;
  explicit CutPool(ParamLayout layout, double delta = 1e-5, double epsilon_bar = 0.0,
                   std::size_t max_cuts = kDefaultMaxCuts)
      : layout_(std::move(layout)), delta_(delta), epsilon_bar_(epsilon_bar), max_cuts_(max_cuts) {
    if (!(delta_ > 0.0)) throw ConfigError("cut margin delta must be > 0");
    if (!(epsilon_bar_ >= 0.0)) throw ConfigError("epsilon_bar must be >= 0");
  }

  const ParamLayout& layout() const { return layout_; }
  double delta() const { return delta_; }
  double epsilon_bar() const { return epsilon_bar_; }
  std::size_t max_cuts() const { return max_cuts_; }
  std::size_t size() const { return cuts_.size(); }
  bool empty() const { return cuts_.empty(); }
  const std::vector<Cut>& cuts() const { return cuts_; }
  const Cut& operator[](std::size_t i) const { return cuts_[i]; }

  std::size_t count(CutKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(cuts_.begin(), cuts_.end(), [kind](const Cut& c) { return c.kind == kind; }));
  }

  void append(Cut cut) {
    check_cut(cut);
    if (cuts_.size() + 1 > max_cuts_)
      throw ConfigError("cut pool limit max_cuts=" + std::to_string(max_cuts_) + " exceeded");
    cuts_.push_back(std::move(cut));
  }

  void append(std::vector<Cut> cuts) {
    if (cuts_.size() + cuts.size() > max_cuts_)
      throw ConfigError("cut pool limit max_cuts=" + std::to_string(max_cuts_) + " exceeded (would hold " +
                        std::to_string(cuts_.size() + cuts.size()) + ")");
    for (auto& c : cuts) check_cut(c);
    for (auto& c : cuts) cuts_.push_back(std::move(c));
  }

  Vector rhs() const {
    Vector r(static_cast<Index>(cuts_.size()));
    for (std::size_t i = 0; i < cuts_.size(); ++i) r(static_cast<Index>(i)) = cuts_[i].rhs;
    return r;
  }

  /// Residuals g_i^T w - r_i for every cut.
  Vector residuals(const Vector& w) const {
    Vector r(static_cast<Index>(cuts_.size()));
    for (std::size_t i = 0; i < cuts_.size(); ++i) r(static_cast<Index>(i)) = cuts_[i].residual(w, layout_);
    return r;
  }

  /// Gram matrix of all cut normals, extended to cover cuts appended since
  /// the last call.
  const GramMatrix& gram() const {
    extend_gram();
    return gram_;
  }

 private:
  void check_cut(const Cut& c) const {
    if (!c.normal.all_finite() || !std::isfinite(c.rhs)) throw NumericalError("cut has non-finite coefficients");
    if (c.normal.is_dense()) {
      if (c.normal.dense_values().size() != layout_.size()) throw ShapeError("cut normal length mismatch");
    } else if (c.normal.factors().size() != layout_.blocks().size()) {
      throw ShapeError("factored cut does not match the layer layout");
    }
  }

  void extend_gram() const {
    const std::size_t old_m = gram_.rows_.size();
    const std::size_t m = cuts_.size();
    if (old_m == m) return;
    const Index nl = static_cast<Index>(layout_.blocks().size());

    // Factored-factored products via matrix products, one per layer:
    // <g_a, g_b> = sum_l (u_a . u_b) (v_a . v_b + 1).
    std::vector<std::size_t> fac_all, fac_new;
    for (std::size_t i = 0; i < m; ++i)
      if (!cuts_[i].normal.is_dense()) {
        fac_all.push_back(i);
        if (i >= old_m) fac_new.push_back(i);
      }
    Matrix block;  // fac_new x fac_all
    if (!fac_new.empty()) {
      block = Matrix::Zero(static_cast<Index>(fac_new.size()), static_cast<Index>(fac_all.size()));
      for (Index l = 0; l < nl; ++l) {
        const auto& b = layout_.blocks()[static_cast<std::size_t>(l)];
        auto stack = [&](const std::vector<std::size_t>& idx, bool delta) {
          Matrix S(delta ? b.rows : b.cols, static_cast<Index>(idx.size()));
          for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto& f = cuts_[idx[k]].normal.factors()[static_cast<std::size_t>(l)];
            S.col(static_cast<Index>(k)) = delta ? f.delta : f.input;
          }
          return S;
        };
        const Matrix Un = stack(fac_new, true), Ua = stack(fac_all, true);
        const Matrix Vn = stack(fac_new, false), Va = stack(fac_all, false);
        Matrix vv = Vn.transpose() * Va;
        vv.array() += 1.0;
        block.array() += (Un.transpose() * Ua).array() * vv.array();
      }
    }
    std::vector<Index> fac_pos(m, -1);
    for (std::size_t k = 0; k < fac_all.size(); ++k) fac_pos[fac_all[k]] = static_cast<Index>(k);
    std::vector<Index> new_pos(m, -1);
    for (std::size_t k = 0; k < fac_new.size(); ++k) new_pos[fac_new[k]] = static_cast<Index>(k);

    for (auto& row : gram_.rows_) row.resize(m);
    gram_.rows_.resize(m);
    for (std::size_t j = old_m; j < m; ++j) {
      auto& rj = gram_.rows_[j];
      rj.resize(m);
      for (std::size_t i = 0; i <= j; ++i) {
        double v;
        if (new_pos[j] >= 0 && fac_pos[i] >= 0)
          v = block(new_pos[j], fac_pos[i]);
        else
          v = cuts_[j].normal.inner(cuts_[i].normal, layout_);
        rj[i] = v;
        gram_.rows_[i][j] = v;
      }
    }
  }

  ParamLayout layout_;
  double delta_ = 1e-5;
  double epsilon_bar_ = 0.0;
  std::size_t max_cuts_ = kDefaultMaxCuts;
  std::vector<Cut> cuts_;
  mutable GramMatrix gram_;
};

/// eps_bar * max_m |d_m|: the largest value of (x - x~)^T d over the l1 ball
/// of radius eps_bar, attained at a vertex +-eps_bar e_m.
inline double l1_ball_max(const Vector& d, double epsilon_bar) {
  if (epsilon_bar == 0.0 || d.size() == 0) return 0.0;
  return epsilon_bar * d.cwiseAbs().maxCoeff();
}

/// For every adversarial point and every competing label i != y, the cut
///   f_i - f_y + (w - w_k)^T (grad_w f_i - grad_w f_y) + delta
///     + eps_bar * max_m |grad_x f_i - grad_x f_y|_m  <= 0
/// linearized at the parameters of net_at_wk.
inline std::vector<Cut> make_adversary_cuts(const Network& net_at_wk, const std::vector<AdversarialExample>& adv,
                                            double delta, double epsilon_bar, int iterate = 0) {
  if (!(delta > 0.0)) throw ConfigError("cut margin delta must be > 0");
  if (!(epsilon_bar >= 0.0)) throw ConfigError("epsilon_bar must be >= 0");
  const ParamLayout layout = net_at_wk.layout();
  const Vector wk = net_at_wk.to_params().values;
  const int C = static_cast<int>(net_at_wk.num_classes());
  std::vector<Cut> out;
  out.reserve(adv.size() * static_cast<std::size_t>(C - 1));
  for (std::size_t n = 0; n < adv.size(); ++n) {
    const auto& a = adv[n];
    check_label(net_at_wk, a.y);
    const ForwardTrace t = trace_forward(net_at_wk, a.x_tilde);
    for (int i = 0; i < C; ++i) {
      if (i == a.y) continue;
      Vector seed = Vector::Zero(C);
      seed(i) = 1.0;
      seed(a.y) = -1.0;
      auto factors = backprop(net_at_wk, t, seed);
      const double robust = l1_ball_max(backprop_input(net_at_wk, factors), epsilon_bar);
      Cut cut;
      cut.normal = CutNormal::factored(std::move(factors));
      const double gw = cut.normal.dot(wk, layout);
      cut.rhs = gw - (t.logits()(i) - t.logits()(a.y)) - delta - robust;
      cut.kind = CutKind::adversary;
      cut.origin = {iterate, static_cast<int>(n), i};
      out.push_back(std::move(cut));
    }
  }
  return out;
}

/// l(w_k) - loss_ref + (w - w_k)^T grad l(w_k) <= 0 with a full-batch gradient.
inline Cut make_loss_cut(const Network& net_at_wk, double loss_ref, const LabeledDataset& train, int iterate = 0) {
  auto [lk, grad] = loss_and_grad(net_at_wk, train);
  const Vector wk = net_at_wk.to_params().values;
  Cut cut;
  cut.rhs = grad.values.dot(wk) - (lk - loss_ref);
  cut.normal = CutNormal::dense(std::move(grad.values));
  cut.kind = CutKind::loss;
  cut.origin = {iterate, -1, -1};
  return cut;
}

/// loss_ref + xi: the loss level the loss cuts are allowed to reach.
inline double relax_loss_reference(double loss_ref, double xi) {
  if (!(xi >= 0.0) || !std::isfinite(xi)) throw ConfigError("loss relaxation xi must be >= 0");
  return loss_ref + xi;
}

// ---------------------------------------------------------------------------
// Diagnostic dump: little-endian float64 values
//   count, J, then per cut: g[0..J), rhs, kind, iterate, adv_index, competing_label

namespace detail {
inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  unsigned char buf[8];
  for (int k = 0; k < 8; ++k) buf[k] = static_cast<unsigned char>(bits >> (8 * k));
  os.write(reinterpret_cast<const char*>(buf), 8);
}
inline double get_f64(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw DataError("cut dump truncated");
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(buf[k]) << (8 * k);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}
}  // namespace detail

inline void dump_cuts(const CutPool& pool, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  detail::put_f64(os, static_cast<double>(pool.size()));
  detail::put_f64(os, static_cast<double>(pool.layout().size()));
  for (const auto& c : pool.cuts()) {
    const Vector g = c.normal.to_dense(pool.layout());
    for (Index j = 0; j < g.size(); ++j) detail::put_f64(os, g(j));
    detail::put_f64(os, c.rhs);
    detail::put_f64(os, static_cast<double>(c.kind));
    detail::put_f64(os, c.origin.iterate);
    detail::put_f64(os, c.origin.adv_index);
    detail::put_f64(os, c.origin.competing_label);
  }
  if (!os) throw DataError("failed writing " + path);
}

/// Reads a dump back as dense cuts over a flat layout.
inline CutPool read_cut_dump(const std::string& path, double delta = 1e-5, double epsilon_bar = 0.0) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  const auto count = static_cast<std::size_t>(detail::get_f64(is));
  const auto J = static_cast<Index>(detail::get_f64(is));
  CutPool pool(ParamLayout::flat(J), delta, epsilon_bar, std::max(count, std::size_t{1}));
  for (std::size_t k = 0; k < count; ++k) {
    Vector g(J);
    for (Index j = 0; j < J; ++j) g(j) = detail::get_f64(is);
    Cut c;
    c.normal = CutNormal::dense(std::move(g));
    c.rhs = detail::get_f64(is);
    c.kind = static_cast<CutKind>(static_cast<int>(detail::get_f64(is)));
    c.origin.iterate = static_cast<int>(detail::get_f64(is));
    c.origin.adv_index = static_cast<int>(detail::get_f64(is));
    c.origin.competing_label = static_cast<int>(detail::get_f64(is));
    pool.append(std::move(c));
  }
  return pool;
}

}  // namespace advcorr

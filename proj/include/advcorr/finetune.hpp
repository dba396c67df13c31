#pragma once

// Cutting-plane adversary correction: repeatedly project the pre-trained
// parameters onto the accumulated linearizations of the adversary-correction
// and loss constraints, expand a pool of candidates along each projection
// direction, and select the final model by a weighted sum of min-max scaled
// training loss and adversarial violation.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "advcorr/cuts.hpp"
#include "advcorr/errors.hpp"
#include "advcorr/nn.hpp"
#include "advcorr/qp.hpp"
#include "advcorr/violation.hpp"

namespace advcorr {

struct CandidateOrigin {
  int iterate = 0;     // 0 = pre-trained parameters
  double alpha = 0.0;  // blend weight of the iterate
};

struct Candidate {
  ParamVector w;
  double loss = 0.0;
  double violation = 0.0;
  CandidateOrigin origin;
};

struct BlockConfig {
  double p = 0.8;
  int T = 1;
};

struct FinetuneConfig {
  int max_iterations = 20;
  double omega = 0.2;
  double delta = 1e-5;
  double epsilon_bar = 0.0;
  double xi = 0.0;
  std::vector<double> alpha_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::optional<BlockConfig> block;
  std::uint64_t seed = 0;
  std::optional<double> target_violation;
  QPOptions qp;
  std::size_t max_cuts = CutPool::kDefaultMaxCuts;

  void validate() const {
    if (max_iterations < 1) throw ConfigError("finetune max_iterations must be >= 1");
    if (!(omega >= 0.0 && omega < 1.0)) throw ConfigError("finetune omega must lie in [0,1)");
    if (!(delta > 0.0)) throw ConfigError("finetune delta must be > 0");
    if (!(epsilon_bar >= 0.0)) throw ConfigError("finetune epsilon_bar must be >= 0");
    if (!(xi >= 0.0)) throw ConfigError("finetune xi must be >= 0");
    if (alpha_grid.empty()) throw ConfigError("finetune alpha_grid must not be empty");
    bool has_one = false;
    for (double a : alpha_grid) {
      if (!(a > 0.0 && a <= 1.0)) throw ConfigError("alpha_grid entries must lie in (0,1]");
      has_one = has_one || a == 1.0;
    }
    if (!has_one) throw ConfigError("alpha_grid must contain 1.0");
    if (block) {
      if (!(block->p > 0.0 && block->p < 1.0)) throw ConfigError("block p must lie in (0,1)");
      if (block->T < 1) throw ConfigError("block T must be >= 1");
    }
    if (target_violation && !(*target_violation >= 0.0)) throw ConfigError("target_violation must be >= 0");
    if (!(qp.tol > 0.0) || qp.max_sweeps < 1) throw ConfigError("invalid QP options");
  }
};

struct IterationRecord {
  int k = 0;
  QPStatus qp_status = QPStatus::optimal;
  std::size_t pool_size = 0;
  double best_violation = 0.0;
  double loss_iterate = 0.0;
  double violation_iterate = 0.0;
  double wall_time_s = 0.0;
  std::size_t cut_count = 0;
  int qp_sweeps = 0;
  int qp_active_set_steps = 0;
  double qp_max_violation = 0.0;
};

struct History {
  std::vector<IterationRecord> records;
  bool stopped_early = false;
  std::string stop_reason;
};

struct FinetuneResult {
  Network net;
  Candidate selected;
  std::size_t selected_index = 0;
  History history;
  std::vector<Candidate> pool;
  CutPool cuts;
  double loss_ref = 0.0;
};

// ---------------------------------------------------------------------------
// Pool utilities

struct ScaledMetrics {
  double loss = 0.0;
  double violation = 0.0;
};

/// Min-max scaling of loss and violation over the pool. A metric with zero
/// span scales to 0 everywhere.
inline std::vector<ScaledMetrics> scale_metrics(const std::vector<Candidate>& pool) {
  std::vector<ScaledMetrics> out(pool.size());
  if (pool.empty()) return out;
  auto scale = [&](auto get, auto set) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& c : pool) {
      lo = std::min(lo, get(c));
      hi = std::max(hi, get(c));
    }
    const double span = hi - lo;
    for (std::size_t i = 0; i < pool.size(); ++i) set(out[i], span > 0.0 ? (get(pool[i]) - lo) / span : 0.0);
  };
  scale([](const Candidate& c) { return c.loss; }, [](ScaledMetrics& s, double v) { s.loss = v; });
  scale([](const Candidate& c) { return c.violation; }, [](ScaledMetrics& s, double v) { s.violation = v; });
  return out;
}

/// Indices (in pool order) of candidates not dominated in (loss, violation).
inline std::vector<std::size_t> pareto_front_indices(const std::vector<Candidate>& pool) {
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pool[a].loss != pool[b].loss) return pool[a].loss < pool[b].loss;
    return pool[a].violation < pool[b].violation;
  });
  std::vector<std::size_t> front;
  double best_v = std::numeric_limits<double>::infinity();  // over strictly smaller losses
  for (std::size_t g = 0; g < order.size();) {
    std::size_t e = g;
    while (e < order.size() && pool[order[e]].loss == pool[order[g]].loss) ++e;
    const double group_min = pool[order[g]].violation;  // sorted by violation within the group
    if (group_min < best_v)
      for (std::size_t k = g; k < e && pool[order[k]].violation == group_min; ++k) front.push_back(order[k]);
    best_v = std::min(best_v, group_min);
    g = e;
  }
  std::sort(front.begin(), front.end());
  return front;
}

inline std::vector<Candidate> pareto_front(const std::vector<Candidate>& pool) {
  std::vector<Candidate> out;
  for (std::size_t i : pareto_front_indices(pool)) out.push_back(pool[i]);
  return out;
}

/// Minimizer of omega * scaled loss + (1 - omega) * scaled violation. Ties go
/// to the lower unscaled loss, then the earlier iterate, then pool order.
inline std::size_t select_weighted_index(const std::vector<Candidate>& pool, double omega) {
  if (pool.empty()) throw DomainError("select_weighted: empty pool");
  if (!(omega >= 0.0 && omega < 1.0)) throw ConfigError("omega must lie in [0,1)");
  const auto scaled = scale_metrics(pool);
  std::size_t best = 0;
  auto score = [&](std::size_t i) { return omega * scaled[i].loss + (1.0 - omega) * scaled[i].violation; };
  for (std::size_t i = 1; i < pool.size(); ++i) {
    const double si = score(i), sb = score(best);
    if (si < sb || (si == sb && (pool[i].loss < pool[best].loss ||
                                 (pool[i].loss == pool[best].loss && pool[i].origin.iterate < pool[best].origin.iterate))))
      best = i;
  }
  return best;
}

inline Candidate select_weighted(const std::vector<Candidate>& pool, double omega) {
  return pool[select_weighted_index(pool, omega)];
}

// ---------------------------------------------------------------------------
// Driver

inline Candidate evaluate_candidate(const Network& shape, ParamVector w, const LabeledDataset& train,
                                    const std::vector<AdversarialExample>& adv, CandidateOrigin origin) {
  const Network net = shape.with_params(w);
  return {std::move(w), loss(net, train), total_violation(net, adv), origin};
}

/// Called after each iteration with the record just appended.
using IterationCallback = std::function<void(const IterationRecord&)>;

inline FinetuneResult run_finetune(const Network& net0, const std::vector<AdversarialExample>& adv,
                                   const LabeledDataset& train, const FinetuneConfig& cfg,
                                   const IterationCallback& on_iteration = {}) {
  cfg.validate();
  if (adv.empty()) throw DomainError("run_finetune: adversarial set is empty");
  require_nonempty(train);

  const auto t_start = std::chrono::steady_clock::now();
  const ParamVector w0 = net0.to_params();
  const ParamLayout layout = w0.layout;

  FinetuneResult res;
  res.cuts = CutPool(layout, cfg.delta, cfg.epsilon_bar, cfg.max_cuts);
  const double loss0 = loss(net0, train);
  if (!std::isfinite(loss0)) throw NumericalError("pre-trained loss is not finite");
  res.loss_ref = relax_loss_reference(loss0, cfg.xi);

  res.pool.push_back(evaluate_candidate(net0, w0, train, adv, {0, 0.0}));
  if (!std::isfinite(res.pool.front().violation)) throw NumericalError("pre-trained violation is not finite");

  // Linearizations at the pre-trained point.
  res.cuts.append(make_adversary_cuts(net0, adv, cfg.delta, cfg.epsilon_bar, 0));
  res.cuts.append(make_loss_cut(net0, res.loss_ref, train, 0));

  double best_v = res.pool.front().violation;
  Vector duals;
  std::vector<bool> always_free;
  if (cfg.block) always_free = layout.blocks().empty() ? std::vector<bool>(static_cast<std::size_t>(layout.size()), false)
                                                       : layout.bias_mask();

  for (int k = 1; k <= cfg.max_iterations; ++k) {
    QPSolution sol;
    if (cfg.block) {
      BlockOptions bopt{cfg.block->p, cfg.block->T, cfg.seed + static_cast<std::uint64_t>(k), always_free};
      sol = run_block_coordinate(w0, res.cuts, bopt, cfg.qp);
    } else {
      sol = project(QPInstance{w0, &res.cuts, std::nullopt, std::nullopt, duals}, cfg.qp);
    }
    IterationRecord rec;
    rec.k = k;
    rec.qp_status = sol.status;
    rec.qp_sweeps = sol.iterations_used;
    rec.qp_active_set_steps = sol.active_set_steps;
    rec.qp_max_violation = sol.max_violation;
    if (sol.status == QPStatus::infeasible_detected) {
      rec.pool_size = res.pool.size();
      rec.best_violation = best_v;
      rec.loss_iterate = std::numeric_limits<double>::quiet_NaN();
      rec.violation_iterate = std::numeric_limits<double>::quiet_NaN();
      rec.cut_count = res.cuts.size();
      rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
      res.history.records.push_back(rec);
      if (on_iteration) on_iteration(rec);
      res.history.stopped_early = true;
      res.history.stop_reason = "QP infeasible at iteration " + std::to_string(k);
      break;
    }
    duals = sol.duals;
    const ParamVector& wk = sol.w;
    const Network net_k = net0.with_params(wk);

    for (double alpha : cfg.alpha_grid) {
      res.pool.push_back(evaluate_candidate(net0, blend(w0, wk, alpha), train, adv, {k, alpha}));
      best_v = std::min(best_v, res.pool.back().violation);
    }
    const Candidate& iterate = *std::find_if(res.pool.end() - static_cast<std::ptrdiff_t>(cfg.alpha_grid.size()),
                                             res.pool.end(), [](const Candidate& c) { return c.origin.alpha == 1.0; });
    rec.loss_iterate = iterate.loss;
    rec.violation_iterate = iterate.violation;
    rec.pool_size = res.pool.size();
    rec.best_violation = best_v;

    // Linearize at the new iterate; these cuts enter the next projection.
    res.cuts.append(make_adversary_cuts(net_k, adv, cfg.delta, cfg.epsilon_bar, k));
    res.cuts.append(make_loss_cut(net_k, res.loss_ref, train, k));
    rec.cut_count = res.cuts.size();
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    res.history.records.push_back(rec);
    if (on_iteration) on_iteration(rec);

    if (cfg.target_violation && iterate.violation <= *cfg.target_violation) {
      if (k < cfg.max_iterations) {
        res.history.stopped_early = true;
        res.history.stop_reason = "target violation reached at iteration " + std::to_string(k);
      }
      break;
    }
  }

  res.selected_index = select_weighted_index(res.pool, cfg.omega);
  res.selected = res.pool[res.selected_index];
  res.net = net0.with_params(res.selected.w);
  return res;
}

// ---------------------------------------------------------------------------
// Reports

inline void write_history_csv(const History& h, std::ostream& os) {
  os << "k,qp_status,loss_iterate,violation_iterate,best_violation,pool_size,wall_time_s\n";
  os << std::setprecision(17);
  for (const auto& r : h.records)
    os << r.k << ',' << to_string(r.qp_status) << ',' << r.loss_iterate << ',' << r.violation_iterate << ','
       << r.best_violation << ',' << r.pool_size << ',' << r.wall_time_s << '\n';
}

inline void write_history_csv(const History& h, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path + " for writing");
  write_history_csv(h, os);
}

inline nlohmann::json pool_to_json(const std::vector<Candidate>& pool, bool include_params,
                                   std::optional<std::size_t> selected = std::nullopt) {
  const auto front = pareto_front_indices(pool);
  std::vector<bool> on_front(pool.size(), false);
  for (auto i : front) on_front[i] = true;
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    nlohmann::json c{{"iterate", pool[i].origin.iterate},
                     {"alpha", pool[i].origin.alpha},
                     {"loss", pool[i].loss},
                     {"violation", pool[i].violation},
                     {"pareto", static_cast<bool>(on_front[i])}};
    if (selected) c["selected"] = *selected == i;
    if (include_params) c["params"] = std::vector<double>(pool[i].w.values.data(), pool[i].w.values.data() + pool[i].w.size());
    arr.push_back(std::move(c));
  }
  return arr;
}

}  // namespace advcorr

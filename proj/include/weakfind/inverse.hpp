#pragma once

// Recovery of the per-element strength field from load/measurement pairs:
// dimensionless weights, the misfit cost, adjoint right-hand sides,
// element gradients and the projected descent loop.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "weakfind/common.hpp"
#include "weakfind/fem.hpp"
#include "weakfind/mesh.hpp"
#include "weakfind/sensing.hpp"
#include "weakfind/smoothing.hpp"

namespace weakfind {

struct WeightScheme {
  enum class Variant { local, average, max, local_max };
  Variant variant = Variant::local_max;
  double eps_w = 0.05;  ///< floor fraction of the per-case maximum for local_max

  void validate() const {
    if (variant == Variant::local_max && !(eps_w > 0.0)) throw InputError("eps_w must be positive for local-max weighting");
  }
};

using Weights = std::map<ReadingKey, double>;

/// Weights per (case, sensor, component). Displacement and strain readings of
/// each load case form separate pools for the average / max statistics.
inline Weights compute_weights(const MeasurementSet& measurements, const WeightScheme& scheme) {
  scheme.validate();
  if (measurements.empty()) throw InputError("no measurements");
  struct Pool {
    double sum_abs = 0.0;
    double max_abs = 0.0;
    std::size_t count = 0;
  };
  std::map<std::pair<int, bool>, Pool> pools;
  for (const auto& [key, v] : measurements.values) {
    auto& p = pools[{key.case_id, is_strain(key.component)}];
    p.sum_abs += std::abs(v);
    p.max_abs = std::max(p.max_abs, std::abs(v));
    ++p.count;
  }
  using V = WeightScheme::Variant;
  Weights w;
  for (const auto& [key, v] : measurements.values) {
    const auto& p = pools.at({key.case_id, is_strain(key.component)});
    double scale = 0.0;
    switch (scheme.variant) {
      case V::local:
        if (v == 0.0)
          throw InputError("local weighting needs non-zero measurements (case " + std::to_string(key.case_id) +
                           ", sensor " + std::to_string(key.sensor_id) + "); use the local-max scheme");
        scale = std::abs(v);
        break;
      case V::average: scale = p.sum_abs / static_cast<double>(p.count); break;
      case V::max: scale = p.max_abs; break;
      case V::local_max: scale = std::max(scheme.eps_w * p.max_abs, std::abs(v)); break;
    }
    if (!(scale > 0.0) || !std::isfinite(1.0 / (scale * scale)))
      throw InputError("all measurements of a pool are zero in case " + std::to_string(key.case_id) +
                       "; weights are undefined");
    w[key] = 1.0 / (scale * scale);
  }
  return w;
}

/// I = 1/2 sum w (measured - computed)^2 over all measurement keys.
inline double cost_function(const std::map<ReadingKey, double>& computed, const MeasurementSet& measurements,
                            const Weights& weights) {
  double cost = 0.0;
  for (const auto& [key, m] : measurements.values) {
    auto it = computed.find(key);
    if (it == computed.end())
      throw InputError("no computed reading for case " + std::to_string(key.case_id) + ", sensor " +
                       std::to_string(key.sensor_id) + ", component " + std::string(to_string(key.component)));
    const double r = m - it->second;
    cost += 0.5 * weights.at(key) * r * r;
  }
  return cost;
}

/// Channel-aligned variant used inside the optimization loop.
inline double case_cost(const Eigen::VectorXd& computed, const Eigen::VectorXd& measured, const Eigen::VectorXd& weights) {
  return 0.5 * (weights.array() * (measured - computed).array().square()).sum();
}

/// Adjoint force vector b with K u~ = b: the weighted misfit scattered through
/// the transposed interpolation rows, b = sum_j w_j (m_j - r_j) row_j.
inline Eigen::VectorXd adjoint_rhs(const ObservationOperator& obs, const Eigen::VectorXd& computed,
                                   const Eigen::VectorXd& measured, const Eigen::VectorXd& weights,
                                   std::size_t full_size) {
  const Eigen::VectorXd coeff = weights.array() * (measured - computed).array();
  return obs.scatter(coeff, full_size);
}

/// g_e = sum_i u~_i^T K_e u_i with the unscaled element matrices.
inline Eigen::VectorXd element_gradients(const StiffnessAssembler& assembler, const std::vector<Eigen::VectorXd>& forward,
                                         const std::vector<Eigen::VectorXd>& adjoint) {
  const std::size_t ne = assembler.mesh().element_count();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ne));
  for (std::size_t i = 0; i < forward.size(); ++i)
    for (std::size_t e = 0; e < ne; ++e) {
      const auto& dofs = assembler.dofs_of(e);
      const Eigen::VectorXd ue = element_values(forward[i], dofs);
      const Eigen::VectorXd ae = element_values(adjoint[i], dofs);
      g[static_cast<Eigen::Index>(e)] += ae.dot(assembler.element_matrix(e) * ue);
    }
  return g;
}

/// alpha - gamma * direction, projected onto [eps, 1].
inline StrengthField update_alpha(const StrengthField& alpha, const Eigen::VectorXd& direction, double gamma) {
  StrengthField next = alpha;
  next.alpha = alpha.alpha - gamma * direction;
  next.clamp();
  return next;
}

struct LineSearchOptions {
  double gamma0 = 0.5;  ///< initial step as a fraction of |direction|_inf
  double shrink = 0.5;
  double armijo = 1e-4;
  int max_backtracks = 40;
};

struct LineSearchResult {
  StrengthField alpha;
  double cost = 0.0;
  double gamma = 0.0;
  int backtracks = 0;
  bool success = false;
};

/// Backtracking Armijo search along the projected path
/// alpha(gamma) = P[alpha - gamma d]. Sufficient decrease is measured against
/// the raw gradient: I(alpha') <= I(alpha) - c g.(alpha - alpha').
inline LineSearchResult backtracking_line_search(const StrengthField& alpha, const Eigen::VectorXd& direction,
                                                 const Eigen::VectorXd& gradient, double cost0,
                                                 const std::function<double(const StrengthField&)>& cost_of,
                                                 const LineSearchOptions& opt = {}) {
  LineSearchResult res{alpha, cost0, 0.0, 0, false};
  const double dmax = direction.cwiseAbs().maxCoeff();
  if (!(dmax > 0.0)) return res;
  double gamma = opt.gamma0 / dmax;
  for (int k = 0; k <= opt.max_backtracks; ++k) {
    StrengthField trial = update_alpha(alpha, direction, gamma);
    const double decrease = gradient.dot(alpha.alpha - trial.alpha);
    if (decrease > 0.0) {
      const double c = cost_of(trial);
      if (c <= cost0 - opt.armijo * decrease) {
        res = {std::move(trial), c, gamma, k, true};
        return res;
      }
    }
    gamma *= opt.shrink;
    res.backtracks = k + 1;
  }
  return res;
}

// ---------------------------------------------------------------------------

struct InverseConfig {
  WeightScheme weights;
  SmootherConfig smoother;
  double gamma0 = 0.5;
  bool line_search = true;
  int max_iters = 500;
  double eps_alpha = 0.01;
  double tol_cost = 1e-6;
  int stall_window = 10;
  SolverKind solver = SolverKind::direct;

  void validate() const {
    weights.validate();
    smoother.validate();
    if (!(gamma0 > 0.0)) throw InputError("gamma0 must be positive");
    if (max_iters < 1) throw InputError("max_iters must be at least 1");
    if (!(eps_alpha > 0.0 && eps_alpha < 1.0)) throw InputError("eps_alpha must lie in (0, 1)");
    if (!(tol_cost >= 0.0)) throw InputError("tol_cost must be non-negative");
  }
};

/// Loads, resolved sensors and measurements aligned to observation channels.
class InverseProblem {
 public:
  struct CaseData {
    LoadCase load;
    Eigen::VectorXd force;     ///< full-size nodal forces
    Eigen::VectorXd measured;  ///< per channel; zero where not measured
    Eigen::VectorXd weights;   ///< per channel; zero where not measured
  };

  struct Evaluation {
    double cost = 0.0;
    std::vector<Eigen::VectorXd> displacements;
    std::vector<Eigen::VectorXd> readings;
  };

  InverseProblem(const StiffnessAssembler& assembler, const std::vector<LoadCase>& loads, const SensorSet& sensors,
                 const MeasurementSet& measurements, const WeightScheme& scheme)
      : assembler_(&assembler), sensors_(sensors), obs_(assembler.mesh(), sensors) {
    measurements.validate(loads, sensors);
    weights_ = compute_weights(measurements, scheme);
    std::map<std::pair<int, Component>, std::size_t> channel_of;
    for (std::size_t c = 0; c < obs_.size(); ++c) {
      const auto& ch = obs_.channels()[c];
      channel_of[{sensors.sensors[ch.sensor].id, ch.component}] = c;
    }
    for (const auto& lc : loads) {
      CaseData cd{lc, assembler.load_vector(lc), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obs_.size())),
                  Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obs_.size()))};
      std::size_t count = 0;
      for (const auto& [key, v] : measurements.values) {
        if (key.case_id != lc.id) continue;
        const auto c = static_cast<Eigen::Index>(channel_of.at({key.sensor_id, key.component}));
        cd.measured[c] = v;
        cd.weights[c] = weights_.at(key);
        ++count;
      }
      if (count == 0) throw InputError("load case " + std::to_string(lc.id) + " has no measurements");
      cases_.push_back(std::move(cd));
    }
  }

  const StiffnessAssembler& assembler() const { return *assembler_; }
  const Mesh& mesh() const { return assembler_->mesh(); }
  const ObservationOperator& observations() const { return obs_; }
  const SensorSet& sensors() const { return sensors_; }
  const std::vector<CaseData>& cases() const { return cases_; }
  const Weights& weights() const { return weights_; }
  std::size_t case_count() const { return cases_.size(); }

  /// One forward solve per load case; cost summed in case order.
  Evaluation evaluate(const GlobalSystem& sys) const {
    Evaluation ev;
    ev.displacements.resize(cases_.size());
    ev.readings.resize(cases_.size());
    std::vector<double> costs(cases_.size(), 0.0);
    parallel_for(cases_.size(), [&](std::size_t i) {
      ev.displacements[i] = sys.solve(cases_[i].force);
      ev.readings[i] = obs_.apply(ev.displacements[i]);
      costs[i] = case_cost(ev.readings[i], cases_[i].measured, cases_[i].weights);
    });
    for (double c : costs) ev.cost += c;
    return ev;
  }

  double cost(const StrengthField& alpha, SolverKind kind = SolverKind::direct, SolveCounter* counter = nullptr) const {
    const GlobalSystem sys(*assembler_, alpha, kind, counter);
    return evaluate(sys).cost;
  }

  /// One adjoint solve per load case, then the element gradient.
  Eigen::VectorXd gradient(const GlobalSystem& sys, const Evaluation& ev) const {
    std::vector<Eigen::VectorXd> adj(cases_.size());
    const std::size_t full = assembler_->dofs().full_size();
    parallel_for(cases_.size(), [&](std::size_t i) {
      adj[i] = solve_adjoint(sys, adjoint_rhs(obs_, ev.readings[i], cases_[i].measured, cases_[i].weights, full));
    });
    return element_gradients(*assembler_, ev.displacements, adj);
  }

  Eigen::VectorXd gradient(const StrengthField& alpha, SolverKind kind = SolverKind::direct) const {
    const GlobalSystem sys(*assembler_, alpha, kind);
    return gradient(sys, evaluate(sys));
  }

 private:
  const StiffnessAssembler* assembler_;
  SensorSet sensors_;
  ObservationOperator obs_;
  Weights weights_;
  std::vector<CaseData> cases_;
};

enum class StopReason { zero_cost, zero_gradient, stalled, max_iterations, line_search_failed };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::zero_cost: return "zero cost";
    case StopReason::zero_gradient: return "zero gradient";
    case StopReason::stalled: return "relative cost decrease below tolerance";
    case StopReason::max_iterations: return "maximum iterations reached";
    case StopReason::line_search_failed: return "line search failed";
  }
  return "";
}

struct IterationReport {
  int iteration = 0;
  double cost = 0.0;  ///< cost of the alpha the iteration started from
  const StrengthField* alpha = nullptr;
  const InverseProblem::Evaluation* evaluation = nullptr;
  std::size_t gradient_solves = 0;  ///< forward + adjoint solves of this iteration
};

struct InversionResult {
  StrengthField alpha;
  std::vector<double> cost_history;  ///< cost at the start of each iteration
  double final_cost = 0.0;           ///< cost of the returned alpha
  int iterations = 0;
  bool converged = false;
  StopReason reason = StopReason::max_iterations;
  std::vector<std::size_t> gradient_solves;     ///< per iteration, always 2n
  std::vector<std::size_t> line_search_solves;  ///< per iteration, trial evaluations
  std::vector<double> steps;                    ///< accepted gamma * |d|_inf per iteration
  int line_search_failures = 0;
};

/// Raised when an iteration fails; carries the state reached so far.
class InversionAborted : public SolverError {
 public:
  InversionAborted(const std::string& what, InversionResult state) : SolverError(what), state_(std::move(state)) {}
  const InversionResult& state() const { return state_; }

 private:
  InversionResult state_;
};

/// Projected descent on alpha:
///   forward solves -> adjoint solves -> gradient -> smoothing -> update.
/// Starts from alpha = 1 unless an initial field is given.
inline InversionResult run_inversion(const InverseProblem& problem, const InverseConfig& cfg,
                                     const std::function<void(const IterationReport&)>& observer = {},
                                     const StrengthField* initial = nullptr) {
  cfg.validate();
  const Mesh& mesh = problem.mesh();
  const Smoother smoother(mesh, cfg.smoother);
  InversionResult res;
  res.alpha = initial ? *initial : StrengthField::uniform(mesh.element_count(), 1.0, cfg.eps_alpha);
  res.alpha.eps = cfg.eps_alpha;
  res.alpha.validate(mesh.element_count());
  LineSearchOptions ls;
  ls.gamma0 = cfg.gamma0;
  double latest = std::numeric_limits<double>::quiet_NaN();

  for (int it = 1; it <= cfg.max_iters; ++it) {
    res.iterations = it;
    try {
      SolveCounter grad_counter;
      const GlobalSystem sys(problem.assembler(), res.alpha, cfg.solver, &grad_counter);
      const auto ev = problem.evaluate(sys);
      res.cost_history.push_back(ev.cost);
      latest = ev.cost;
      if (ev.cost == 0.0) {
        res.gradient_solves.push_back(grad_counter.value());
        res.line_search_solves.push_back(0);
        res.converged = true;
        res.reason = StopReason::zero_cost;
        if (observer) observer({it, ev.cost, &res.alpha, &ev, grad_counter.value()});
        break;
      }
      const Eigen::VectorXd g = problem.gradient(sys, ev);
      res.gradient_solves.push_back(grad_counter.value());
      if (observer) observer({it, ev.cost, &res.alpha, &ev, grad_counter.value()});

      const std::size_t h = res.cost_history.size();
      const auto window = static_cast<std::size_t>(cfg.stall_window);
      if (h > window) {
        const double before = res.cost_history[h - 1 - window];
        if (before - ev.cost < cfg.tol_cost * before) {
          res.line_search_solves.push_back(0);
          res.converged = true;
          res.reason = StopReason::stalled;
          break;
        }
      }

      Eigen::VectorXd d = smoother.apply(g);
      if (!(g.dot(d) > 0.0)) d = g;  // smoothing destroyed descent
      if (!(d.cwiseAbs().maxCoeff() > 0.0)) {
        res.line_search_solves.push_back(0);
        res.converged = true;
        res.reason = StopReason::zero_gradient;
        break;
      }
      if (cfg.line_search) {
        SolveCounter ls_counter;
        auto cost_of = [&](const StrengthField& a) { return problem.cost(a, cfg.solver, &ls_counter); };
        auto step = backtracking_line_search(res.alpha, d, g, ev.cost, cost_of, ls);
        if (!step.success && d != g) {
          d = g;  // the smoothed direction gave no usable decrease; retry unsmoothed
          step = backtracking_line_search(res.alpha, d, g, ev.cost, cost_of, ls);
        }
        res.line_search_solves.push_back(ls_counter.value());
        if (!step.success) {
          ++res.line_search_failures;
          res.converged = true;
          res.reason = StopReason::line_search_failed;
          break;
        }
        res.alpha = std::move(step.alpha);
        res.steps.push_back(step.gamma * d.cwiseAbs().maxCoeff());
        latest = step.cost;
      } else {
        res.line_search_solves.push_back(0);
        res.alpha = update_alpha(res.alpha, d, cfg.gamma0 / d.cwiseAbs().maxCoeff());
        res.steps.push_back(cfg.gamma0);
        latest = std::numeric_limits<double>::quiet_NaN();
      }
      if (it == cfg.max_iters) res.reason = StopReason::max_iterations;
    } catch (const SolverError& e) {
      throw InversionAborted("inversion aborted at iteration " + std::to_string(it) + ": " + e.what(), res);
    }
  }
  res.final_cost = std::isnan(latest) ? problem.cost(res.alpha, cfg.solver) : latest;
  return res;
}

}  // namespace weakfind

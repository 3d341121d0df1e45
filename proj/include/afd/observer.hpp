#pragma once

#include "afd/common.hpp"
#include "afd/linsys.hpp"

#include <iosfwd>
#include <vector>

namespace afd {

/// Gaussian estimates x ~ N(mu_x, sigma_x), z ~ N(mu_z, sigma_z) held by the passive observer.
struct Belief {
  Vector mu_x;
  Matrix sigma_x;
  Vector mu_z;
  Matrix sigma_z;

  void validate() const;
};

struct PredictedState {
  Vector mu_x_pred;
  Matrix sigma_x_pred;
  Matrix b_star;  // B diag(u)
};

struct StatePosterior {
  Vector mu_x;
  Matrix sigma_x;
};

struct FaultPosterior {
  Vector mu_z;
  Matrix sigma_z;
};

/// Fault evolution assumed by the filter (independent of the simulated FaultProcess).
struct FaultWalkModel {
  Vector mu_xi;
  Matrix sigma_xi;

  static FaultWalkModel isotropic(Eigen::Index n_u, double variance);
};

/// Everything the observer needs from the plant, plus the assumed fault walk.
struct ObserverModel {
  Matrix a, b, c, sigma_w, sigma_v;
  FaultWalkModel walk;
  double jitter = 1e-12;  // diagonal floor applied to stored covariances

  static ObserverModel from_plant(const LinearFaultPlant& plant, FaultWalkModel walk);
};

/// One-step-ahead prior; fault uncertainty enters as extra process noise B* Σ_z B*ᵀ.
PredictedState predict(const Belief& belief, const Vector& u, const Matrix& a, const Matrix& b,
                       const Matrix& sigma_w);

/// Gain-form measurement update K = Σ Cᵀ (Σ_v + C Σ Cᵀ)⁻¹.
StatePosterior correct_state(const PredictedState& pred, const Vector& y, const Matrix& c,
                             const Matrix& sigma_v);

/// Information-form update Σ⁺ = (Σ⁻¹ + Cᵀ Σ_v⁻¹ C)⁻¹; needs invertible Σ_pred and Σ_v.
/// Algebraically equal to correct_state, kept for cross-checking.
StatePosterior correct_state_information_form(const PredictedState& pred, const Vector& y,
                                              const Matrix& c, const Matrix& sigma_v);

/// Refines the fault estimate for the current step by treating the state innovation
/// (posterior minus prediction) as a measurement of B* z.
FaultPosterior update_fault(const Belief& belief, const PredictedState& pred,
                            const StatePosterior& posterior);

FaultPosterior propagate_fault(const FaultPosterior& fault, const FaultWalkModel& walk);

/// predict → correct with y_{t+1} → fault update → fault propagation.
Belief observer_step(const Belief& belief, const Vector& u, const Vector& y_next,
                     const ObserverModel& model);

/// Symmetrize and floor the diagonal at `jitter`.
Matrix condition_covariance(const Matrix& m, double jitter);

/// CSV columns: t, mu_x*, sigma_x* (triu), mu_z*, sigma_z* (triu).
void write_belief_csv(std::ostream& out, const std::vector<Belief>& trajectory);

}  // namespace afd

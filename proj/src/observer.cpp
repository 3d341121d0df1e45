#include "afd/observer.hpp"

#include "afd/csv.hpp"

#include <ostream>
#include <sstream>

namespace afd {

namespace {

void require_psd(const Matrix& m, const char* what) {
  if (!is_symmetric_psd(m, 1e-9)) throw ContractViolation(std::string(what) + " must be symmetric PSD");
}

// Cholesky solve with a conditioning check; throws with the reciprocal condition estimate.
Eigen::LLT<Matrix> factor_spd(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  if (llt.info() != Eigen::Success || !(rcond > 1e-15)) {
    std::ostringstream msg;
    msg << what << " is singular or indefinite (rcond estimate " << rcond << ")";
    throw NumericalError(msg.str());
  }
  return llt;
}

}  // namespace

void Belief::validate() const {
  require(sigma_x.rows() == mu_x.size() && sigma_x.cols() == mu_x.size(),
          "belief: sigma_x shape does not match mu_x");
  require(sigma_z.rows() == mu_z.size() && sigma_z.cols() == mu_z.size(),
          "belief: sigma_z shape does not match mu_z");
  require(mu_x.allFinite() && mu_z.allFinite(), "belief: means must be finite");
  require_psd(sigma_x, "belief sigma_x");
  require_psd(sigma_z, "belief sigma_z");
}

FaultWalkModel FaultWalkModel::isotropic(Eigen::Index n_u, double variance) {
  return {Vector::Zero(n_u), variance * Matrix::Identity(n_u, n_u)};
}

ObserverModel ObserverModel::from_plant(const LinearFaultPlant& plant, FaultWalkModel walk) {
  ObserverModel m;
  m.a = plant.a();
  m.b = plant.b();
  m.c = plant.c();
  m.sigma_w = plant.sigma_w();
  m.sigma_v = plant.sigma_v();
  m.walk = std::move(walk);
  return m;
}

Matrix condition_covariance(const Matrix& m, double jitter) {
  Matrix out = symmetrize(m);
  for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, i) = std::max(out(i, i), jitter);
  return out;
}

PredictedState predict(const Belief& belief, const Vector& u, const Matrix& a, const Matrix& b,
                       const Matrix& sigma_w) {
  belief.validate();
  require(a.rows() == belief.mu_x.size() && a.cols() == belief.mu_x.size(),
          "predict: A does not match the state dimension");
  require(b.rows() == a.rows() && b.cols() == belief.mu_z.size() && u.size() == b.cols(),
          "predict: B or u does not match the fault dimension");
  require_psd(sigma_w, "predict sigma_w");
  require(u.allFinite(), "predict: non-finite input");

  PredictedState pred;
  pred.b_star = b * u.asDiagonal();
  pred.mu_x_pred = a * belief.mu_x + pred.b_star * belief.mu_z;
  pred.sigma_x_pred = symmetrize(a * belief.sigma_x * a.transpose() +
                                 pred.b_star * belief.sigma_z * pred.b_star.transpose() + sigma_w);
  return pred;
}

StatePosterior correct_state(const PredictedState& pred, const Vector& y, const Matrix& c,
                             const Matrix& sigma_v) {
  const auto nx = pred.mu_x_pred.size();
  require(c.cols() == nx && y.size() == c.rows(), "correct_state: C or y shape mismatch");
  require(sigma_v.rows() == c.rows() && sigma_v.cols() == c.rows(),
          "correct_state: sigma_v shape mismatch");
  require(y.allFinite(), "correct_state: non-finite measurement");

  const Matrix innovation_cov = symmetrize(sigma_v + c * pred.sigma_x_pred * c.transpose());
  const auto llt = factor_spd(innovation_cov, "innovation covariance");
  // K = Σ Cᵀ S⁻¹ = (S⁻¹ C Σ)ᵀ for symmetric S and Σ.
  const Matrix gain = llt.solve(c * pred.sigma_x_pred).transpose();

  StatePosterior post;
  post.mu_x = pred.mu_x_pred + gain * (y - c * pred.mu_x_pred);
  post.sigma_x = (Matrix::Identity(nx, nx) - gain * c) * pred.sigma_x_pred;
  return post;
}

StatePosterior correct_state_information_form(const PredictedState& pred, const Vector& y,
                                              const Matrix& c, const Matrix& sigma_v) {
  const auto prior = factor_spd(pred.sigma_x_pred, "predicted state covariance");
  const auto noise = factor_spd(sigma_v, "measurement noise covariance");
  const auto nx = pred.mu_x_pred.size();
  const Matrix prior_info = prior.solve(Matrix::Identity(nx, nx));
  const Matrix information = prior_info + c.transpose() * noise.solve(c);
  const auto info_llt = factor_spd(symmetrize(information), "posterior information");

  StatePosterior post;
  post.sigma_x = info_llt.solve(Matrix::Identity(nx, nx));
  post.mu_x = post.sigma_x * (prior_info * pred.mu_x_pred + c.transpose() * noise.solve(y));
  return post;
}

FaultPosterior update_fault(const Belief& belief, const PredictedState& pred,
                            const StatePosterior& posterior) {
  const auto nu = belief.mu_z.size();
  FaultPosterior out{belief.mu_z, belief.sigma_z};
  if (pred.b_star.isZero(0.0)) return out;  // no excitation, nothing to learn

  const Matrix denominator = symmetrize(posterior.sigma_x + pred.sigma_x_pred);
  const auto llt = factor_spd(denominator, "fault gain denominator");
  const Matrix gain = llt.solve(pred.b_star * belief.sigma_z).transpose();  // n_u × n_x

  out.mu_z = belief.mu_z + gain * (posterior.mu_x - pred.mu_x_pred);
  out.sigma_z = (Matrix::Identity(nu, nu) - gain * pred.b_star) * belief.sigma_z;
  return out;
}

FaultPosterior propagate_fault(const FaultPosterior& fault, const FaultWalkModel& walk) {
  require(walk.mu_xi.size() == fault.mu_z.size(), "propagate_fault: walk mean shape mismatch");
  require(walk.sigma_xi.rows() == fault.sigma_z.rows() &&
              walk.sigma_xi.cols() == fault.sigma_z.cols(),
          "propagate_fault: walk covariance shape mismatch");
  return {fault.mu_z + walk.mu_xi, fault.sigma_z + walk.sigma_xi};
}

Belief observer_step(const Belief& belief, const Vector& u, const Vector& y_next,
                     const ObserverModel& model) {
  const PredictedState pred = predict(belief, u, model.a, model.b, model.sigma_w);
  StatePosterior state = correct_state(pred, y_next, model.c, model.sigma_v);
  state.sigma_x = condition_covariance(state.sigma_x, model.jitter);
  FaultPosterior fault = update_fault(belief, pred, state);
  fault.sigma_z = condition_covariance(fault.sigma_z, model.jitter);
  fault = propagate_fault(fault, model.walk);

  Belief next{std::move(state.mu_x), std::move(state.sigma_x), std::move(fault.mu_z),
              condition_covariance(fault.sigma_z, model.jitter)};
  if (!next.mu_x.allFinite() || !next.sigma_x.allFinite() || !next.mu_z.allFinite() ||
      !next.sigma_z.allFinite())
    throw NumericalError("observer_step: non-finite belief");
  return next;
}

void write_belief_csv(std::ostream& out, const std::vector<Belief>& trajectory) {
  if (trajectory.empty()) return;
  const auto nx = trajectory.front().mu_x.size();
  const auto nu = trajectory.front().mu_z.size();
  std::vector<std::string> header{"t"};
  for (Eigen::Index i = 0; i < nx; ++i) header.push_back("mu_x" + std::to_string(i));
  for (Eigen::Index i = 0; i < nx; ++i)
    for (Eigen::Index j = i; j < nx; ++j)
      header.push_back("sigma_x" + std::to_string(i) + std::to_string(j));
  for (Eigen::Index i = 0; i < nu; ++i) header.push_back("mu_z" + std::to_string(i));
  for (Eigen::Index i = 0; i < nu; ++i)
    for (Eigen::Index j = i; j < nu; ++j)
      header.push_back("sigma_z" + std::to_string(i) + std::to_string(j));
  write_csv_row(out, header);

  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    const Belief& b = trajectory[t];
    std::vector<std::string> row{std::to_string(t)};
    auto append = [&row](const Vector& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(format_double(v[i]));
    };
    append(b.mu_x);
    append(triu(b.sigma_x));
    append(b.mu_z);
    append(triu(b.sigma_z));
    write_csv_row(out, row);
  }
}

}  // namespace afd

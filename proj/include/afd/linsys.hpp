#pragma once

#include "afd/common.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace afd {

/// Discrete-time linear plant with multiplicative actuator faults:
///   x⁺ = A x + B diag(z) u + w,   y = C x + v,
/// simulated in deviation coordinates around the linearization point.
class LinearFaultPlant {
 public:
  LinearFaultPlant(Matrix a, Matrix b, Matrix c, Matrix sigma_w, Matrix sigma_v, Vector u_min,
                   Vector u_max, double t_s);

  const Matrix& a() const { return a_; }
  const Matrix& b() const { return b_; }
  const Matrix& c() const { return c_; }
  const Matrix& sigma_w() const { return sigma_w_; }
  const Matrix& sigma_v() const { return sigma_v_; }
  const Vector& u_min() const { return u_min_; }
  const Vector& u_max() const { return u_max_; }
  double t_s() const { return t_s_; }

  Eigen::Index state_dim() const { return a_.rows(); }
  Eigen::Index input_dim() const { return b_.cols(); }
  Eigen::Index output_dim() const { return c_.rows(); }

  // Square-root factors of the noise covariances, computed once at construction.
  const Matrix& process_noise_factor() const { return w_factor_; }
  const Matrix& measurement_noise_factor() const { return v_factor_; }

 private:
  Matrix a_, b_, c_, sigma_w_, sigma_v_;
  Vector u_min_, u_max_;
  double t_s_;
  Matrix w_factor_, v_factor_;
};

enum class FaultKind { constant, random_walk, jump };

/// True fault evolution z_t → z_{t+1}; independent of state and input.
struct FaultProcess {
  FaultKind kind = FaultKind::constant;
  Vector walk_mean;   // random walk drift
  Matrix walk_cov;    // random walk covariance
  int min_dwell = 30; // jump: minimum segment length in steps
  double jump_hazard = 1.0 / 30.0;  // jump: per-step resample probability once the dwell expired

  static FaultProcess constant();
  static FaultProcess random_walk(Vector mean, Matrix cov);
  static FaultProcess jump(int min_dwell, double hazard);
  void validate(Eigen::Index n_u) const;
};

struct PlantState {
  Vector x;           // deviation from the linearization point
  Vector z;           // actuator effectiveness, 1 = healthy
  int fault_age = 0;  // steps since the last fault change
};

struct PlantStep {
  PlantState next;
  Vector y;  // measurement of next.x
};

/// One plant transition. Input must already lie in the input set (see clip_action).
/// The fault draw happens first and always consumes the same amount of randomness,
/// so the fault trajectory does not depend on the applied inputs.
PlantStep step_plant(const LinearFaultPlant& plant, const FaultProcess& faults,
                     const PlantState& state, const Vector& u, Rng& rng);

/// Measurement y = C x + v.
Vector measure(const LinearFaultPlant& plant, const Vector& x, Rng& rng);

Vector clip_action(const Vector& u, const LinearFaultPlant& plant);

/// Physical description of the three-tank rig: tanks 1 and 2 are pumped, tank 3 sits
/// between them, and flow runs 1 → 3 → 2 → outlet (Torricelli outflow through valves).
struct ThreeTankParameters {
  Vector areas = Vector::Constant(3, 0.0154);        // tank cross sections [m²]
  double pipe_area = 5e-5;                           // connecting pipe section [m²]
  Vector valve_coefficients = (Vector(3) << 0.5, 0.5, 0.675).finished();  // μ13, μ32, μ20
  Vector levels = (Vector(3) << 0.489, 0.2332, 0.3611).finished();        // h1, h2, h3 [m]
  Vector pump_gains = Vector::Ones(2);               // flow per unit input [m³/s]
  double gravity = 9.81;
};

enum class Discretization { euler, exact };

struct ContinuousModel {
  Matrix a, b;
};

ContinuousModel linearize_three_tank(const ThreeTankParameters& params);
std::pair<Matrix, Matrix> discretize(const ContinuousModel& model, double t_s,
                                     Discretization scheme);

/// Shipped default instance (forward-Euler, t_s = 0.1 s, Σ_w = 1e-8 I, Σ_v = 1e-6 I,
/// input set [-0.002, 0.02]², outputs = levels of tanks 1 and 2).
LinearFaultPlant default_three_tank();

/// Build a plant from a config object. Either explicit `A`, `B`, `C` or a `three_tank`
/// block; missing keys fall back to the default instance.
LinearFaultPlant plant_from_json(const nlohmann::json& config);
LinearFaultPlant load_plant_config(const std::string& path);

// JSON helpers shared by the config loaders.
Matrix json_matrix(const nlohmann::json& value, const std::string& key);
Vector json_vector(const nlohmann::json& value, const std::string& key);
/// Scalar → scalar·I, array of arrays → full matrix.
Matrix json_covariance(const nlohmann::json& value, const std::string& key, Eigen::Index n);
nlohmann::json matrix_json(const Matrix& m);
nlohmann::json vector_json(const Vector& v);

}  // namespace afd

#include "afd/linsys.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <fstream>
#include <sstream>

namespace afd {

using nlohmann::json;

LinearFaultPlant::LinearFaultPlant(Matrix a, Matrix b, Matrix c, Matrix sigma_w, Matrix sigma_v,
                                   Vector u_min, Vector u_max, double t_s)
    : a_(std::move(a)),
      b_(std::move(b)),
      c_(std::move(c)),
      sigma_w_(std::move(sigma_w)),
      sigma_v_(std::move(sigma_v)),
      u_min_(std::move(u_min)),
      u_max_(std::move(u_max)),
      t_s_(t_s) {
  const auto nx = a_.rows();
  require(a_.cols() == nx && nx > 0, "plant: A must be square and non-empty");
  require(b_.rows() == nx && b_.cols() > 0, "plant: B rows must match A");
  require(c_.cols() == nx && c_.rows() > 0, "plant: C columns must match A");
  require(sigma_w_.rows() == nx && sigma_w_.cols() == nx, "plant: sigma_w must be n_x × n_x");
  require(sigma_v_.rows() == c_.rows() && sigma_v_.cols() == c_.rows(),
          "plant: sigma_v must be n_y × n_y");
  require(u_min_.size() == b_.cols() && u_max_.size() == b_.cols(),
          "plant: input bounds must have n_u entries");
  require((u_min_.array() < u_max_.array()).all(), "plant: u_min < u_max must hold componentwise");
  require(a_.allFinite() && b_.allFinite() && c_.allFinite(), "plant: matrices must be finite");
  require(is_symmetric_psd(sigma_w_), "plant: sigma_w must be symmetric PSD");
  require(is_symmetric_psd(sigma_v_), "plant: sigma_v must be symmetric PSD");
  require(t_s_ > 0.0, "plant: sampling time must be positive");
  w_factor_ = psd_factor(sigma_w_);
  v_factor_ = psd_factor(sigma_v_);
}

FaultProcess FaultProcess::constant() { return FaultProcess{}; }

FaultProcess FaultProcess::random_walk(Vector mean, Matrix cov) {
  FaultProcess p;
  p.kind = FaultKind::random_walk;
  p.walk_mean = std::move(mean);
  p.walk_cov = std::move(cov);
  return p;
}

FaultProcess FaultProcess::jump(int min_dwell, double hazard) {
  FaultProcess p;
  p.kind = FaultKind::jump;
  p.min_dwell = min_dwell;
  p.jump_hazard = hazard;
  return p;
}

void FaultProcess::validate(Eigen::Index n_u) const {
  if (kind == FaultKind::random_walk) {
    require(walk_mean.size() == n_u, "fault process: walk mean must have n_u entries");
    require(walk_cov.rows() == n_u && walk_cov.cols() == n_u,
            "fault process: walk covariance must be n_u × n_u");
    require(is_symmetric_psd(walk_cov), "fault process: walk covariance must be PSD");
  }
  if (kind == FaultKind::jump) {
    require(min_dwell >= 1, "fault process: dwell must be at least one step");
    require(jump_hazard >= 0.0 && jump_hazard <= 1.0, "fault process: hazard must lie in [0,1]");
  }
}

namespace {

void advance_fault(const FaultProcess& faults, PlantState& state, Rng& rng) {
  const auto nu = state.z.size();
  switch (faults.kind) {
    case FaultKind::constant:
      ++state.fault_age;
      return;
    case FaultKind::random_walk: {
      const Vector xi = faults.walk_mean + psd_factor(faults.walk_cov) * standard_normal_vector(rng, nu);
      state.z = (state.z + xi).cwiseMax(0.0).cwiseMin(1.0);
      ++state.fault_age;
      return;
    }
    case FaultKind::jump: {
      // Fixed draw count per step: one hazard uniform plus a full candidate vector.
      const double hazard_draw = uniform01(rng);
      Vector candidate(nu);
      for (Eigen::Index i = 0; i < nu; ++i) candidate[i] = uniform01(rng);
      const bool dwell_expired = state.fault_age + 1 >= faults.min_dwell;
      if (dwell_expired && hazard_draw < faults.jump_hazard) {
        state.z = candidate;
        state.fault_age = 0;
      } else {
        ++state.fault_age;
      }
      return;
    }
  }
}

}  // namespace

Vector measure(const LinearFaultPlant& plant, const Vector& x, Rng& rng) {
  return plant.c() * x +
         plant.measurement_noise_factor() * standard_normal_vector(rng, plant.output_dim());
}

PlantStep step_plant(const LinearFaultPlant& plant, const FaultProcess& faults,
                     const PlantState& state, const Vector& u, Rng& rng) {
  require(state.x.size() == plant.state_dim(), "step_plant: state dimension mismatch");
  require(state.z.size() == plant.input_dim(), "step_plant: fault dimension mismatch");
  require(u.size() == plant.input_dim(), "step_plant: input dimension mismatch");
  require(u.allFinite() && state.x.allFinite() && state.z.allFinite(),
          "step_plant: non-finite input or state");

  PlantStep out;
  out.next = state;
  advance_fault(faults, out.next, rng);
  const Vector w = plant.process_noise_factor() * standard_normal_vector(rng, plant.state_dim());
  out.next.x = plant.a() * state.x + plant.b() * state.z.cwiseProduct(u) + w;
  out.y = measure(plant, out.next.x, rng);
  return out;
}

Vector clip_action(const Vector& u, const LinearFaultPlant& plant) {
  require(u.size() == plant.input_dim(), "clip_action: input dimension mismatch");
  return u.cwiseMax(plant.u_min()).cwiseMin(plant.u_max());
}

ContinuousModel linearize_three_tank(const ThreeTankParameters& p) {
  if (p.areas.size() != 3 || (p.areas.array() <= 0.0).any())
    throw ConfigError("three_tank.areas: expected three positive cross sections");
  if (p.valve_coefficients.size() != 3 || (p.valve_coefficients.array() <= 0.0).any())
    throw ConfigError("three_tank.valve_coefficients: expected three positive coefficients");
  if (p.levels.size() != 3) throw ConfigError("three_tank.levels: expected three levels");
  if (p.pump_gains.size() != 2) throw ConfigError("three_tank.pump_gains: expected two gains");
  const double h1 = p.levels[0], h2 = p.levels[1], h3 = p.levels[2];
  if (!(h1 > h3 && h3 > h2 && h2 > 0.0))
    throw ConfigError("three_tank.levels: operating point must satisfy h1 > h3 > h2 > 0");

  // q_ij = μ_ij S_n sqrt(2 g Δh); slopes ∂q/∂Δh at the operating point.
  const double k = p.pipe_area * std::sqrt(2.0 * p.gravity);
  const double s13 = p.valve_coefficients[0] * k / (2.0 * std::sqrt(h1 - h3));
  const double s32 = p.valve_coefficients[1] * k / (2.0 * std::sqrt(h3 - h2));
  const double s20 = p.valve_coefficients[2] * k / (2.0 * std::sqrt(h2));

  ContinuousModel m;
  m.a = Matrix::Zero(3, 3);
  m.a(0, 0) = -s13 / p.areas[0];
  m.a(0, 2) = s13 / p.areas[0];
  m.a(1, 1) = -(s32 + s20) / p.areas[1];
  m.a(1, 2) = s32 / p.areas[1];
  m.a(2, 0) = s13 / p.areas[2];
  m.a(2, 1) = s32 / p.areas[2];
  m.a(2, 2) = -(s13 + s32) / p.areas[2];
  m.b = Matrix::Zero(3, 2);
  m.b(0, 0) = p.pump_gains[0] / p.areas[0];
  m.b(1, 1) = p.pump_gains[1] / p.areas[1];
  return m;
}

std::pair<Matrix, Matrix> discretize(const ContinuousModel& model, double t_s,
                                     Discretization scheme) {
  const auto nx = model.a.rows();
  const auto nu = model.b.cols();
  if (scheme == Discretization::euler) {
    return {Matrix::Identity(nx, nx) + t_s * model.a, t_s * model.b};
  }
  // Zero-order hold: exp([[A, B], [0, 0]] t_s) = [[A_d, B_d], [0, I]].
  Matrix augmented = Matrix::Zero(nx + nu, nx + nu);
  augmented.topLeftCorner(nx, nx) = model.a * t_s;
  augmented.topRightCorner(nx, nu) = model.b * t_s;
  const Matrix e = augmented.exp();
  return {e.topLeftCorner(nx, nx), e.topRightCorner(nx, nu)};
}

LinearFaultPlant default_three_tank() { return plant_from_json(json::object()); }

Matrix json_matrix(const json& value, const std::string& key) {
  if (!value.is_array() || value.empty() || !value[0].is_array())
    throw ConfigError(key + ": expected a non-empty array of row arrays");
  const auto rows = static_cast<Eigen::Index>(value.size());
  const auto cols = static_cast<Eigen::Index>(value[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = value[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ConfigError(key + ": ragged matrix rows");
    for (Eigen::Index j = 0; j < cols; ++j) {
      const auto& entry = row[static_cast<std::size_t>(j)];
      if (!entry.is_number()) throw ConfigError(key + ": non-numeric entry");
      m(i, j) = entry.get<double>();
    }
  }
  return m;
}

Vector json_vector(const json& value, const std::string& key) {
  if (!value.is_array()) throw ConfigError(key + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(value.size()));
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!value[i].is_number()) throw ConfigError(key + ": non-numeric entry");
    v[static_cast<Eigen::Index>(i)] = value[i].get<double>();
  }
  return v;
}

Matrix json_covariance(const json& value, const std::string& key, Eigen::Index n) {
  if (value.is_number()) return value.get<double>() * Matrix::Identity(n, n);
  Matrix m = json_matrix(value, key);
  if (m.rows() != n || m.cols() != n)
    throw ConfigError(key + ": expected " + std::to_string(n) + "×" + std::to_string(n));
  return m;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

namespace {

double json_number(const json& obj, const std::string& key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) throw ConfigError(key + ": expected a number");
  return obj[key].get<double>();
}

ThreeTankParameters three_tank_from_json(const json& block) {
  ThreeTankParameters p;
  if (!block.is_object()) throw ConfigError("three_tank: expected an object");
  if (block.contains("areas")) p.areas = json_vector(block["areas"], "three_tank.areas");
  if (block.contains("valve_coefficients"))
    p.valve_coefficients = json_vector(block["valve_coefficients"], "three_tank.valve_coefficients");
  if (block.contains("levels")) p.levels = json_vector(block["levels"], "three_tank.levels");
  if (block.contains("pump_gains"))
    p.pump_gains = json_vector(block["pump_gains"], "three_tank.pump_gains");
  p.pipe_area = json_number(block, "pipe_area", p.pipe_area);
  p.gravity = json_number(block, "gravity", p.gravity);
  return p;
}

}  // namespace

LinearFaultPlant plant_from_json(const json& config) {
  if (!config.is_object()) throw ConfigError("plant config: expected an object");
  const double t_s = json_number(config, "t_s", 0.1);
  if (t_s <= 0.0) throw ConfigError("t_s: sampling time must be positive");

  Discretization scheme = Discretization::euler;
  if (config.contains("discretization")) {
    const auto name = config["discretization"].is_string()
                          ? config["discretization"].get<std::string>() : std::string{};
    if (name == "euler") scheme = Discretization::euler;
    else if (name == "exact") scheme = Discretization::exact;
    else throw ConfigError("discretization: expected \"euler\" or \"exact\"");
  }

  Matrix a, b;
  const bool explicit_ab = config.contains("A") || config.contains("B");
  if (explicit_ab) {
    if (!config.contains("A") || !config.contains("B"))
      throw ConfigError("A/B: explicit matrices must be given together");
    a = json_matrix(config["A"], "A");
    b = json_matrix(config["B"], "B");
  } else {
    const ThreeTankParameters params =
        config.contains("three_tank") ? three_tank_from_json(config["three_tank"])
                                      : ThreeTankParameters{};
    std::tie(a, b) = discretize(linearize_three_tank(params), t_s, scheme);
  }
  const auto nx = a.rows();
  if (a.cols() != nx) throw ConfigError("A: must be square");
  if (b.rows() != nx) throw ConfigError("B: row count must match A");
  const auto nu = b.cols();

  Matrix c;
  if (config.contains("C")) {
    c = json_matrix(config["C"], "C");
  } else {
    if (nx < 2) throw ConfigError("C: required when the state has fewer than two components");
    c = Matrix::Zero(2, nx);
    c(0, 0) = 1.0;
    c(1, 1) = 1.0;
  }
  if (c.cols() != nx) throw ConfigError("C: column count must match A");
  const auto ny = c.rows();

  const Matrix sigma_w =
      config.contains("sigma_w") ? json_covariance(config["sigma_w"], "sigma_w", nx)
                                 : Matrix(1e-8 * Matrix::Identity(nx, nx));
  const Matrix sigma_v =
      config.contains("sigma_v") ? json_covariance(config["sigma_v"], "sigma_v", ny)
                                 : Matrix(1e-6 * Matrix::Identity(ny, ny));

  auto bound = [&](const char* key, double fallback) -> Vector {
    if (!config.contains(key)) return Vector::Constant(nu, fallback);
    if (config[key].is_number()) return Vector::Constant(nu, config[key].get<double>());
    Vector v = json_vector(config[key], key);
    if (v.size() != nu) throw ConfigError(std::string(key) + ": expected n_u entries");
    return v;
  };
  const Vector u_min = bound("u_min", -0.002);
  const Vector u_max = bound("u_max", 0.02);
  if (!(u_min.array() < u_max.array()).all()) throw ConfigError("u_min: must be below u_max");
  if (!is_symmetric_psd(sigma_w)) throw ConfigError("sigma_w: must be symmetric PSD");
  if (!is_symmetric_psd(sigma_v)) throw ConfigError("sigma_v: must be symmetric PSD");

  return LinearFaultPlant(a, b, c, sigma_w, sigma_v, u_min, u_max, t_s);
}

LinearFaultPlant load_plant_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("plant config: cannot open " + path);
  json config;
  try {
    config = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("plant config: parse error in " + path + ": " + e.what());
  }
  return plant_from_json(config);
}

}  // namespace afd

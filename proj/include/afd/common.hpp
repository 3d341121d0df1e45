#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace afd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Broken precondition on the caller side (shape mismatch, stepping a finished episode, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Ill-conditioned or non-finite numerics encountered during an update.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration; the message names the offending key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

/// splitmix64 finalizer; used to derive independent per-episode streams from one base seed.
std::uint64_t mix_seed(std::uint64_t value);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

double standard_normal(Rng& rng);
double uniform01(Rng& rng);
Vector standard_normal_vector(Rng& rng, Eigen::Index n);

/// Uniform sample from the Euclidean ball of the given radius.
Vector sample_ball(Rng& rng, Eigen::Index n, double radius);

Matrix symmetrize(const Matrix& m);
bool is_symmetric_psd(const Matrix& m, double tol = 1e-9);
bool all_finite(const Matrix& m);

/// Factor L with L Lᵀ = m for a symmetric PSD m (eigen-based, tolerates singular m).
Matrix psd_factor(const Matrix& m);

/// Row-major upper triangle, diagonal included.
Vector triu(const Matrix& m);
Matrix from_triu(const Vector& packed, Eigen::Index n);
constexpr Eigen::Index triu_size(Eigen::Index n) { return n * (n + 1) / 2; }

}  // namespace afd

#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "swarmloc/geometry.hpp"

namespace swarmloc::nls {

constexpr int kBlockSize = 4;
constexpr int kMaxResidualDim = 4;

using ResidualVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxResidualDim, 1>;
/// d residual / d tangent(variable), one per referenced variable.
using JacobianBlock = Eigen::Matrix<double, Eigen::Dynamic, kBlockSize, 0, kMaxResidualDim, kBlockSize>;

/// A residual term over one or more 4-dof variable blocks. Jacobians are
/// taken with respect to the boxplus perturbation of each variable.
class ResidualBlock {
 public:
  virtual ~ResidualBlock() = default;

  virtual int dimension() const = 0;
  virtual std::string_view kind() const = 0;

  /// Writes the residual and, when `jacobians` is non-empty, one Jacobian per
  /// variable. Returns false when the Jacobian is singular at this point
  /// (it is then zeroed and the block is skipped by check_jacobian).
  virtual bool evaluate(std::span<const Pose4> values, ResidualVector& residual,
                        std::span<JacobianBlock> jacobians) const = 0;

  const std::vector<int>& variables() const { return variables_; }

  /// Optional Huber threshold on the residual norm.
  std::optional<double> huber_delta;

 protected:
  explicit ResidualBlock(std::vector<int> variables) : variables_(std::move(variables)) {}

 private:
  std::vector<int> variables_;
};

class Problem {
 public:
  int add_variable(const Pose4& initial, bool fixed = false);

  /// Takes ownership; throws std::out_of_range if the block references a
  /// variable that does not exist. Returns the residual index.
  int add_residual(std::unique_ptr<ResidualBlock> block);

  template <typename Block, typename... Args>
  int emplace_residual(Args&&... args) {
    return add_residual(std::make_unique<Block>(std::forward<Args>(args)...));
  }

  void set_fixed(int variable, bool fixed) { fixed_.at(variable) = fixed; }
  bool is_fixed(int variable) const { return fixed_.at(variable); }

  const Pose4& value(int variable) const { return values_.at(variable); }
  void set_value(int variable, const Pose4& p) { values_.at(variable) = p; }
  std::span<const Pose4> values() const { return values_; }

  int num_variables() const { return static_cast<int>(values_.size()); }
  int num_free_variables() const;
  int num_residual_blocks() const { return static_cast<int>(residuals_.size()); }
  int num_residual_scalars() const;
  const ResidualBlock& residual(int i) const { return *residuals_.at(i); }

  /// 0.5 * sum of (robustified) squared residual norms at the current values.
  double cost() const;
  double cost_at(std::span<const Pose4> values) const;

  /// Stacked raw (unrobustified) residuals in insertion order.
  Eigen::VectorXd residual_vector() const;

 private:
  std::vector<Pose4> values_;
  std::vector<bool> fixed_;
  std::vector<std::unique_ptr<ResidualBlock>> residuals_;
};

struct SolverOptions {
  int max_iterations = 50;
  double gradient_tolerance = 1e-10;  // max-norm of the gradient
  double step_tolerance = 1e-10;      // relative to the state norm
  double initial_damping = 1e-4;
  double max_damping = 1e16;
};

enum class Termination { kGradient, kStep, kMaxIterations, kDiverged };

std::string_view to_string(Termination t);

struct SolveReport {
  int iterations = 0;
  int accepted_steps = 0;
  int rejected_steps = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  Termination termination = Termination::kMaxIterations;
  double wall_time_s = 0.0;
  std::vector<double> accepted_costs;  // cost after each accepted step
};

/// Levenberg-Marquardt with Marquardt diagonal scaling over a sparse block
/// normal matrix factorized by sparse LDL^T. Updates `problem` in place;
/// fixed variables are never written.
SolveReport solve(Problem& problem, const SolverOptions& options = {});

/// Gauss-Newton covariance of one free variable's tangent: its 4x4 block of
/// (J^T J)^-1 taken over all free variables, with residuals assumed
/// whitened. Dense, so meant for small problems. nullopt when the variable
/// is fixed or the information matrix is singular.
std::optional<Eigen::Matrix4d> marginal_covariance(const Problem& problem, int variable);

struct JacobianCheck {
  double max_relative_error = 0.0;
  int blocks_checked = 0;
  int blocks_excluded = 0;  // singular or non-finite at the point
};

/// Compares every analytic residual Jacobian at the problem's current values
/// against central differences of step eps along each tangent direction.
JacobianCheck check_jacobian(const Problem& problem, double eps = 1e-6);

}  // namespace swarmloc::nls

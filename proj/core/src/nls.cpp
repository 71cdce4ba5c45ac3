#include "swarmloc/nls.hpp"

#include <Eigen/Cholesky>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <map>
#include <stdexcept>

namespace swarmloc::nls {

namespace {

// Huber: rho(s) = s for s <= d^2, 2 d sqrt(s) - d^2 beyond; returns rho and
// the scale sqrt(rho'(s)) applied to residual and Jacobian.
std::pair<double, double> robustify(const ResidualBlock& block, double sq_norm) {
  if (!block.huber_delta || sq_norm <= (*block.huber_delta) * (*block.huber_delta)) {
    return {sq_norm, 1.0};
  }
  const double d = *block.huber_delta;
  const double norm = std::sqrt(sq_norm);
  return {2.0 * d * norm - d * d, std::sqrt(d / norm)};
}

void gather(const ResidualBlock& block, std::span<const Pose4> all, std::vector<Pose4>& out) {
  out.clear();
  for (int v : block.variables()) out.push_back(all[static_cast<std::size_t>(v)]);
}

bool all_finite(const ResidualVector& r) { return r.allFinite(); }

}  // namespace

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::kGradient: return "gradient";
    case Termination::kStep: return "step";
    case Termination::kMaxIterations: return "max_iter";
    case Termination::kDiverged: return "diverged";
  }
  return "unknown";
}

int Problem::add_variable(const Pose4& initial, bool fixed) {
  values_.push_back(initial);
  fixed_.push_back(fixed);
  return static_cast<int>(values_.size()) - 1;
}

int Problem::add_residual(std::unique_ptr<ResidualBlock> block) {
  if (!block) throw std::invalid_argument("add_residual: null block");
  if (block->dimension() < 1 || block->dimension() > kMaxResidualDim) {
    throw std::invalid_argument("add_residual: unsupported residual dimension");
  }
  for (int v : block->variables()) {
    if (v < 0 || v >= num_variables()) {
      throw std::out_of_range("add_residual: block references a missing variable");
    }
  }
  residuals_.push_back(std::move(block));
  return static_cast<int>(residuals_.size()) - 1;
}

int Problem::num_free_variables() const {
  return static_cast<int>(std::count(fixed_.begin(), fixed_.end(), false));
}

int Problem::num_residual_scalars() const {
  int n = 0;
  for (const auto& r : residuals_) n += r->dimension();
  return n;
}

double Problem::cost() const { return cost_at(values_); }

double Problem::cost_at(std::span<const Pose4> values) const {
  double total = 0.0;
  std::vector<Pose4> local;
  ResidualVector r;
  for (const auto& block : residuals_) {
    gather(*block, values, local);
    r.resize(block->dimension());
    block->evaluate(local, r, {});
    total += robustify(*block, r.squaredNorm()).first;
  }
  return 0.5 * total;
}

Eigen::VectorXd Problem::residual_vector() const {
  Eigen::VectorXd out(num_residual_scalars());
  std::vector<Pose4> local;
  ResidualVector r;
  int row = 0;
  for (const auto& block : residuals_) {
    gather(*block, values_, local);
    r.resize(block->dimension());
    block->evaluate(local, r, {});
    out.segment(row, block->dimension()) = r;
    row += block->dimension();
  }
  return out;
}

namespace {

/// Block-sparse normal equations with a fixed pattern: the compressed
/// matrix is built once and each iteration only rewrites its values.
class NormalEquations {
 public:
  NormalEquations(const Problem& problem, const std::vector<int>& column_of) {
    const int n_free = *std::max_element(column_of.begin(), column_of.end()) + 1;
    dim_ = kBlockSize * n_free;

    std::map<std::pair<int, int>, int> block_ids;
    pairs_.resize(static_cast<std::size_t>(problem.num_residual_blocks()));
    for (int r = 0; r < problem.num_residual_blocks(); ++r) {
      const auto& vars = problem.residual(r).variables();
      for (std::size_t p = 0; p < vars.size(); ++p) {
        for (std::size_t q = 0; q < vars.size(); ++q) {
          const int row = column_of[vars[p]];
          const int col = column_of[vars[q]];
          if (row < 0 || col < 0 || row < col) continue;
          auto [it, inserted] = block_ids.try_emplace({row, col}, static_cast<int>(blocks_.size()));
          if (inserted) blocks_.push_back({row, col, {}});
          pairs_[r].push_back({static_cast<int>(p), static_cast<int>(q), it->second});
        }
      }
    }
    for (int c = 0; c < n_free; ++c) {
      if (!block_ids.contains({c, c})) {
        block_ids[{c, c}] = static_cast<int>(blocks_.size());
        blocks_.push_back({c, c, {}});
      }
      diag_block_.push_back(block_ids.at({c, c}));
    }

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(blocks_.size() * 16);
    for (const auto& b : blocks_) {
      for (int i = 0; i < kBlockSize; ++i) {
        for (int j = 0; j < kBlockSize; ++j) {
          triplets.emplace_back(kBlockSize * b.row + i, kBlockSize * b.col + j, 0.0);
        }
      }
    }
    matrix_.resize(dim_, dim_);
    matrix_.setFromTriplets(triplets.begin(), triplets.end());
    matrix_.makeCompressed();

    const int* outer = matrix_.outerIndexPtr();
    const int* inner = matrix_.innerIndexPtr();
    for (auto& b : blocks_) {
      for (int j = 0; j < kBlockSize; ++j) {
        const int col = kBlockSize * b.col + j;
        const int* first = inner + outer[col];
        const int* last = inner + outer[col + 1];
        const int* pos = std::lower_bound(first, last, kBlockSize * b.row);
        b.offset[j] = static_cast<int>(pos - inner);
      }
    }
    solver_.analyzePattern(matrix_);
    gradient_.resize(dim_);
    diagonal_.resize(dim_);
  }

  int dim() const { return dim_; }
  const Eigen::VectorXd& gradient() const { return gradient_; }
  const Eigen::VectorXd& diagonal() const { return diagonal_; }

  /// Linearizes at `values`. Returns false on a non-finite residual or Jacobian.
  bool linearize(const Problem& problem, std::span<const Pose4> values,
                 const std::vector<int>& column_of) {
    std::fill(matrix_.valuePtr(), matrix_.valuePtr() + matrix_.nonZeros(), 0.0);
    gradient_.setZero();
    std::vector<Pose4> local;
    ResidualVector r;
    std::vector<JacobianBlock> jac;
    for (int ri = 0; ri < problem.num_residual_blocks(); ++ri) {
      const ResidualBlock& block = problem.residual(ri);
      const auto& vars = block.variables();
      gather(block, values, local);
      r.resize(block.dimension());
      jac.assign(vars.size(), JacobianBlock::Zero(block.dimension(), kBlockSize));
      block.evaluate(local, r, jac);
      if (!all_finite(r)) return false;
      const double scale = robustify(block, r.squaredNorm()).second;
      if (scale != 1.0) {
        r *= scale;
        for (auto& j : jac) j *= scale;
      }
      for (std::size_t p = 0; p < vars.size(); ++p) {
        if (!jac[p].allFinite()) return false;
        const int col = column_of[vars[p]];
        if (col >= 0) {
          gradient_.segment<kBlockSize>(kBlockSize * col) += jac[p].transpose() * r;
        }
      }
      for (const auto& pair : pairs_[static_cast<std::size_t>(ri)]) {
        const Eigen::Matrix4d h = jac[pair.p].transpose() * jac[pair.q];
        add_block(blocks_[pair.block], h);
      }
    }
    for (int c = 0; c < dim_ / kBlockSize; ++c) {
      const auto& b = blocks_[diag_block_[c]];
      for (int j = 0; j < kBlockSize; ++j) {
        diagonal_[kBlockSize * c + j] = matrix_.valuePtr()[b.offset[j] + j];
      }
    }
    return true;
  }

  /// Solves (H + mu * clamp(diag H)) delta = -g. The damping is removed
  /// again afterwards so the matrix can be refactorized with another mu.
  bool solve_damped(double mu, Eigen::VectorXd& delta, Eigen::VectorXd& scaled_diag) {
    scaled_diag = diagonal_.cwiseMax(1e-6).cwiseMin(1e32) * mu;
    apply_diagonal(scaled_diag, +1.0);
    solver_.factorize(matrix_);
    const bool ok = solver_.info() == Eigen::Success;
    if (ok) delta = solver_.solve(-gradient_);
    apply_diagonal(scaled_diag, -1.0);
    return ok && delta.allFinite();
  }

 private:
  struct Block {
    int row;
    int col;
    std::array<int, kBlockSize> offset;  // value index of (4 row, 4 col + j)
  };
  struct Pair {
    int p;
    int q;
    int block;
  };

  void add_block(const Block& b, const Eigen::Matrix4d& h) {
    double* values = matrix_.valuePtr();
    for (int j = 0; j < kBlockSize; ++j) {
      for (int i = 0; i < kBlockSize; ++i) values[b.offset[j] + i] += h(i, j);
    }
  }

  void apply_diagonal(const Eigen::VectorXd& d, double sign) {
    double* values = matrix_.valuePtr();
    for (int c = 0; c < dim_ / kBlockSize; ++c) {
      const auto& b = blocks_[diag_block_[c]];
      for (int j = 0; j < kBlockSize; ++j) values[b.offset[j] + j] += sign * d[kBlockSize * c + j];
    }
  }

  int dim_ = 0;
  std::vector<Block> blocks_;
  std::vector<std::vector<Pair>> pairs_;
  std::vector<int> diag_block_;
  Eigen::SparseMatrix<double> matrix_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> solver_;
  Eigen::VectorXd gradient_;
  Eigen::VectorXd diagonal_;
};

double state_norm(std::span<const Pose4> values, const std::vector<int>& column_of) {
  double sq = 0.0;
  for (std::size_t v = 0; v < values.size(); ++v) {
    if (column_of[v] < 0) continue;
    sq += values[v].t.squaredNorm() + values[v].yaw() * values[v].yaw();
  }
  return std::sqrt(sq);
}

}  // namespace

SolveReport solve(Problem& problem, const SolverOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  SolveReport report;
  auto finish = [&](Termination t) {
    report.termination = t;
    report.final_cost = problem.cost();
    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
  };

  report.initial_cost = problem.cost();
  if (!std::isfinite(report.initial_cost)) return finish(Termination::kDiverged);

  std::vector<int> column_of(static_cast<std::size_t>(problem.num_variables()), -1);
  int n_free = 0;
  for (int v = 0; v < problem.num_variables(); ++v) {
    if (!problem.is_fixed(v)) column_of[v] = n_free++;
  }
  if (n_free == 0 || problem.num_residual_blocks() == 0) return finish(Termination::kGradient);

  NormalEquations normal(problem, column_of);
  std::vector<Pose4> current(problem.values().begin(), problem.values().end());
  std::vector<Pose4> trial = current;
  double cost = report.initial_cost;
  double mu = options.initial_damping;
  double nu = 2.0;
  bool relinearize = true;
  Eigen::VectorXd delta;
  Eigen::VectorXd damping;

  for (; report.iterations < options.max_iterations; ++report.iterations) {
    if (relinearize) {
      if (!normal.linearize(problem, current, column_of)) return finish(Termination::kDiverged);
      relinearize = false;
      if (normal.gradient().lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) {
        return finish(Termination::kGradient);
      }
    }

    if (mu > options.max_damping) return finish(Termination::kStep);
    if (!normal.solve_damped(mu, delta, damping)) {
      ++report.rejected_steps;
      mu *= nu;
      nu *= 2.0;
      continue;
    }

    const double x_norm = state_norm(current, column_of);
    if (delta.norm() <= options.step_tolerance * (x_norm + options.step_tolerance)) {
      return finish(Termination::kStep);
    }

    for (int v = 0; v < problem.num_variables(); ++v) {
      const int c = column_of[v];
      trial[v] = c < 0 ? current[v]
                       : boxplus(current[v], Tangent4::from_vector(
                                                 delta.segment<kBlockSize>(kBlockSize * c)));
    }
    const double trial_cost = problem.cost_at(trial);
    // Model decrease of the linearized cost for the damped step.
    const double predicted =
        0.5 * (delta.dot(damping.cwiseProduct(delta)) - delta.dot(normal.gradient()));
    const double rho = predicted > 0.0 ? (cost - trial_cost) / predicted : -1.0;

    if (std::isfinite(trial_cost) && trial_cost < cost && rho > 0.0) {
      std::swap(current, trial);
      cost = trial_cost;
      for (int v = 0; v < problem.num_variables(); ++v) {
        if (column_of[v] >= 0) problem.set_value(v, current[v]);
      }
      report.accepted_costs.push_back(cost);
      ++report.accepted_steps;
      const double f = 2.0 * rho - 1.0;
      mu *= std::max(1.0 / 3.0, 1.0 - f * f * f);
      nu = 2.0;
      relinearize = true;
    } else {
      ++report.rejected_steps;
      mu *= nu;
      nu *= 2.0;
    }
  }
  return finish(Termination::kMaxIterations);
}

std::optional<Eigen::Matrix4d> marginal_covariance(const Problem& problem, int variable) {
  if (problem.is_fixed(variable)) return std::nullopt;
  std::vector<int> column_of(static_cast<std::size_t>(problem.num_variables()), -1);
  int n = 0;
  for (int v = 0; v < problem.num_variables(); ++v) {
    if (!problem.is_fixed(v)) column_of[static_cast<std::size_t>(v)] = kBlockSize * n++;
  }
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(kBlockSize * n, kBlockSize * n);
  std::vector<Pose4> local;
  ResidualVector r;
  std::vector<JacobianBlock> jac;
  for (int ri = 0; ri < problem.num_residual_blocks(); ++ri) {
    const ResidualBlock& block = problem.residual(ri);
    gather(block, problem.values(), local);
    r.resize(block.dimension());
    jac.assign(local.size(), JacobianBlock::Zero(block.dimension(), kBlockSize));
    block.evaluate(local, r, jac);
    const auto& vars = block.variables();
    for (std::size_t a = 0; a < vars.size(); ++a) {
      const int ca = column_of[static_cast<std::size_t>(vars[a])];
      if (ca < 0) continue;
      for (std::size_t b = 0; b < vars.size(); ++b) {
        const int cb = column_of[static_cast<std::size_t>(vars[b])];
        if (cb < 0) continue;
        h.block<kBlockSize, kBlockSize>(ca, cb) += jac[a].transpose() * jac[b];
      }
    }
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
  const Eigen::VectorXd d = ldlt.vectorD();
  if (d.minCoeff() <= 1e-12 * std::max(1.0, d.maxCoeff())) return std::nullopt;
  const int c = column_of[static_cast<std::size_t>(variable)];
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(h.rows(), kBlockSize);
  rhs.block<kBlockSize, kBlockSize>(c, 0).setIdentity();
  const Eigen::MatrixXd cols = ldlt.solve(rhs);
  return Eigen::Matrix4d(cols.block<kBlockSize, kBlockSize>(c, 0));
}

JacobianCheck check_jacobian(const Problem& problem, double eps) {
  JacobianCheck out;
  std::vector<Pose4> local;
  ResidualVector r0, rp, rm;
  std::vector<JacobianBlock> jac;
  for (int ri = 0; ri < problem.num_residual_blocks(); ++ri) {
    const ResidualBlock& block = problem.residual(ri);
    const int dim = block.dimension();
    gather(block, problem.values(), local);
    r0.resize(dim);
    jac.assign(local.size(), JacobianBlock::Zero(dim, kBlockSize));
    const bool regular = block.evaluate(local, r0, jac);
    if (!regular || !r0.allFinite()) {
      ++out.blocks_excluded;
      continue;
    }
    ++out.blocks_checked;
    for (std::size_t p = 0; p < local.size(); ++p) {
      JacobianBlock numeric(dim, kBlockSize);
      for (int c = 0; c < kBlockSize; ++c) {
        Eigen::Vector4d step = Eigen::Vector4d::Zero();
        step[c] = eps;
        std::vector<Pose4> plus = local, minus = local;
        plus[p] = boxplus(local[p], Tangent4::from_vector(step));
        minus[p] = boxplus(local[p], Tangent4::from_vector(-step));
        rp.resize(dim);
        rm.resize(dim);
        block.evaluate(plus, rp, {});
        block.evaluate(minus, rm, {});
        numeric.col(c) = (rp - rm) / (2.0 * eps);
      }
      const double scale = std::max({jac[p].norm(), numeric.norm(), 1e-12});
      const double err = (jac[p] - numeric).norm() / scale;
      if (jac[p].norm() == 0.0 && numeric.norm() < 1e-12) continue;
      out.max_relative_error = std::max(out.max_relative_error, err);
    }
  }
  return out;
}

}  // namespace swarmloc::nls

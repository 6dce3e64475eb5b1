#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "eigenclt/sde_engine.hpp"

namespace eigenclt {

// Packed lower-triangular storage; symmetry holds by construction.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(int n) : n_(n), data_(static_cast<std::size_t>(n) * (n + 1) / 2) {}

  int size() const { return n_; }
  double operator()(int i, int j) const { return data_[index(i, j)]; }
  double& at(int i, int j) { return data_[index(i, j)]; }
  double trace() const;
  double frobenius_norm() const;

  static SymmetricMatrix diagonal(std::span<const double> d);

 private:
  std::size_t index(int i, int j) const {
    if (i < j) std::swap(i, j);
    return static_cast<std::size_t>(i) * (i + 1) / 2 + j;
  }
  int n_ = 0;
  std::vector<double> data_;
};

// Cyclic Jacobi rotations; ascending eigenvalues.
std::vector<double> jacobi_eigenvalues(const SymmetricMatrix& a, int max_sweeps = 100);

enum class MatrixKind { SymmetricBM, Wishart, OU };

MatrixKind parse_matrix_kind(std::string_view name);

constexpr int kMatrixOracleMaxN = 512;

// Simulates the matrix process entrywise with exact Gaussian transitions and
// records the sorted spectrum at every grid stamp. The initial matrix is the
// diagonal embedding of init (zeros when init is empty). Since every
// transition is exact, dt only selects where the spectrum is recorded.
Trajectory simulate_matrix(MatrixKind kind, int n, int p, double horizon, double dt,
                           std::uint64_t seed, std::span<const double> init = {},
                           std::uint32_t replica = 0);

}  // namespace eigenclt

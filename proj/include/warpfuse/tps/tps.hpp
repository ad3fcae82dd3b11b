#pragma once

#include <array>
#include <vector>

#include "warpfuse/core/types.hpp"

namespace warpfuse::tps {

// Control points in normalized [-1,1]^2 coordinates, row-major over a rows x cols
// layout. The points need not form a uniform lattice, but must stay in bounds,
// be pairwise distinct, and satisfy points.size() == rows * cols >= 4.
struct ControlPointGrid {
    int rows = 0;
    int cols = 0;
    std::vector<Vec2> points;

    int count() const { return static_cast<int>(points.size()); }
};

// Uniform lattice with corners at (+-1, +-1); x varies fastest.
// make_control_grid(2,2) yields {(-1,-1),(1,-1),(-1,1),(1,1)}.
ControlPointGrid make_control_grid(int rows, int cols);

// Enforces the ControlPointGrid invariants. Duplicate points raise
// DegenerateGridError; everything else raises std::invalid_argument.
void validate_grid(const ControlPointGrid& grid);

// Radial kernel variants. The default operates on the squared distance directly:
// k(d2) = d2 * ln(d2). The classic form r^2 * ln(r) is exactly half of it, and the
// factor is absorbed by the solved weights, leaving the fitted map unchanged.
enum class TpsKernel {
    kSquaredLog,  // d2 * ln(d2)
    kClassic,     // r^2 * ln(r) = d2 * ln(d2) / 2
};

// Kernel on squared distance d2 >= 0; returns 0 below the singularity guard
// (d2 < 1e-12). Negative d2 raises std::invalid_argument.
double rbf_kernel(double d2);
double rbf_kernel(double d2, TpsKernel kind);

// Assembled interpolation system
//   L = [ K    P ]      Y = [ Q ]
//       [ P^T  0 ],         [ 0 ]
// with K[i][j] = kernel(|p_i - p_j|^2), P rows (1, x_i, y_i), and Y holding the
// target coordinates over three zero rows. All matrices row-major.
struct TpsSystem {
    int n = 0;               // control point count
    std::vector<double> k;   // n x n
    std::vector<double> l;   // (n+3) x (n+3)
    std::vector<double> y;   // (n+3) x 2
};

TpsSystem assemble_tps_system(const ControlPointGrid& grid, const std::vector<Vec2>& targets,
                              TpsKernel kind = TpsKernel::kSquaredLog);

// Solved spline coefficients. affine rows are the constant, x, and y coefficients;
// each row holds the (x-output, y-output) pair.
struct TpsParameters {
    ControlPointGrid source;
    std::vector<Vec2> rbf_weights;
    std::array<Vec2, 3> affine{};
    TpsKernel kernel = TpsKernel::kSquaredLog;
};

// Exact identity mapping on the given grid (zero weights, unit affine).
TpsParameters identity_parameters(const ControlPointGrid& grid);

// Caches the pseudoinverse of L for a fixed grid so repeated solves against new
// targets cost one matrix-vector product pair. The pseudoinverse is the SVD
// minimum-norm inverse with singular values below eps * (n+3) * sigma_max dropped.
class TpsSolver {
public:
    explicit TpsSolver(const ControlPointGrid& grid, TpsKernel kind = TpsKernel::kSquaredLog);

    TpsParameters solve(const std::vector<Vec2>& targets) const;

    const ControlPointGrid& grid() const { return grid_; }

private:
    ControlPointGrid grid_;
    TpsKernel kind_;
    int n_ = 0;
    std::vector<double> pinv_;  // (n+3) x (n+3)
};

// One-shot convenience wrapper around TpsSolver.
TpsParameters solve_tps(const ControlPointGrid& grid, const std::vector<Vec2>& targets);
TpsParameters solve_tps(const ControlPointGrid& grid, const std::vector<Vec2>& targets,
                        TpsKernel kind);

// Spline evaluation at one normalized point:
//   R(X) = sum_i w_i k(|X - p_i|^2) + a0 + a1 * X.x + a2 * X.y   per output axis.
Vec2 evaluate_tps(const TpsParameters& params, Vec2 x);

// Quadratic roughness sum over output axes, w^T K w. Nonnegative up to roundoff;
// exactly 0 for a pure affine map.
double bending_energy(const TpsParameters& params);

}  // namespace warpfuse::tps

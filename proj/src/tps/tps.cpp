#include "warpfuse/tps/tps.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace warpfuse::tps {

namespace {

constexpr double kSingularityGuard = 1.0e-12;

void validate_targets(const ControlPointGrid& grid, const std::vector<Vec2>& targets) {
    if (static_cast<int>(targets.size()) != grid.count()) {
        throw std::invalid_argument("tps: target count does not match control point count");
    }
    for (const Vec2& q : targets) {
        if (!q.finite()) throw std::invalid_argument("tps: non-finite target coordinate");
    }
}

}  // namespace

ControlPointGrid make_control_grid(int rows, int cols) {
    if (rows < 2 || cols < 2) {
        throw std::invalid_argument("make_control_grid: rows and cols must be >= 2");
    }
    ControlPointGrid g;
    g.rows = rows;
    g.cols = cols;
    g.points.reserve(static_cast<size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        const double y = -1.0 + 2.0 * r / (rows - 1);
        for (int c = 0; c < cols; ++c) {
            const double x = -1.0 + 2.0 * c / (cols - 1);
            g.points.push_back({x, y});
        }
    }
    return g;
}

void validate_grid(const ControlPointGrid& grid) {
    const int n = grid.count();
    if (grid.rows < 1 || grid.cols < 1 || n != grid.rows * grid.cols) {
        throw std::invalid_argument("ControlPointGrid: rows * cols must equal point count");
    }
    if (n < 4) throw std::invalid_argument("ControlPointGrid: needs at least 4 points");
    for (const Vec2& p : grid.points) {
        if (!p.finite()) throw std::invalid_argument("ControlPointGrid: non-finite point");
        if (p.x < -1.0 || p.x > 1.0 || p.y < -1.0 || p.y > 1.0) {
            throw std::invalid_argument("ControlPointGrid: point outside [-1,1]^2");
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if ((grid.points[i] - grid.points[j]).squared_norm() < kSingularityGuard * kSingularityGuard) {
                throw DegenerateGridError("ControlPointGrid: duplicate control points");
            }
        }
    }
}

double rbf_kernel(double d2) { return rbf_kernel(d2, TpsKernel::kSquaredLog); }

double rbf_kernel(double d2, TpsKernel kind) {
    if (d2 < 0.0 || !std::isfinite(d2)) {
        throw std::invalid_argument("rbf_kernel: squared distance must be finite and >= 0");
    }
    if (d2 < kSingularityGuard) return 0.0;
    const double v = d2 * std::log(d2);
    return kind == TpsKernel::kSquaredLog ? v : 0.5 * v;
}

TpsSystem assemble_tps_system(const ControlPointGrid& grid, const std::vector<Vec2>& targets,
                              TpsKernel kind) {
    validate_grid(grid);
    validate_targets(grid, targets);

    const int n = grid.count();
    const int m = n + 3;
    TpsSystem sys;
    sys.n = n;
    sys.k.assign(static_cast<size_t>(n) * n, 0.0);
    sys.l.assign(static_cast<size_t>(m) * m, 0.0);
    sys.y.assign(static_cast<size_t>(m) * 2, 0.0);

    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double v = rbf_kernel((grid.points[i] - grid.points[j]).squared_norm(), kind);
            sys.k[static_cast<size_t>(i) * n + j] = v;
            sys.k[static_cast<size_t>(j) * n + i] = v;
        }
    }

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            sys.l[static_cast<size_t>(i) * m + j] = sys.k[static_cast<size_t>(i) * n + j];
        }
        sys.l[static_cast<size_t>(i) * m + n + 0] = 1.0;
        sys.l[static_cast<size_t>(i) * m + n + 1] = grid.points[i].x;
        sys.l[static_cast<size_t>(i) * m + n + 2] = grid.points[i].y;
        sys.l[static_cast<size_t>(n + 0) * m + i] = 1.0;
        sys.l[static_cast<size_t>(n + 1) * m + i] = grid.points[i].x;
        sys.l[static_cast<size_t>(n + 2) * m + i] = grid.points[i].y;

        sys.y[static_cast<size_t>(i) * 2 + 0] = targets[i].x;
        sys.y[static_cast<size_t>(i) * 2 + 1] = targets[i].y;
    }
    return sys;
}

TpsParameters identity_parameters(const ControlPointGrid& grid) {
    validate_grid(grid);
    TpsParameters p;
    p.source = grid;
    p.rbf_weights.assign(grid.points.size(), Vec2{0.0, 0.0});
    p.affine[0] = {0.0, 0.0};
    p.affine[1] = {1.0, 0.0};
    p.affine[2] = {0.0, 1.0};
    return p;
}

TpsSolver::TpsSolver(const ControlPointGrid& grid, TpsKernel kind) : grid_(grid), kind_(kind) {
    validate_grid(grid_);
    n_ = grid_.count();
    const int m = n_ + 3;

    // L depends on the source points only, so its pseudoinverse is shared by
    // every solve against this grid.
    const std::vector<Vec2> self(grid_.points);
    const TpsSystem sys = assemble_tps_system(grid_, self, kind_);

    Eigen::MatrixXd l(m, m);
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < m; ++c) l(r, c) = sys.l[static_cast<size_t>(r) * m + c];
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(l, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sing = svd.singularValues();
    const double cutoff = std::numeric_limits<double>::epsilon() * m * sing(0);
    Eigen::VectorXd inv_sing(sing.size());
    for (int i = 0; i < sing.size(); ++i) {
        inv_sing(i) = sing(i) > cutoff ? 1.0 / sing(i) : 0.0;
    }
    const Eigen::MatrixXd pinv = svd.matrixV() * inv_sing.asDiagonal() * svd.matrixU().transpose();

    pinv_.resize(static_cast<size_t>(m) * m);
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < m; ++c) pinv_[static_cast<size_t>(r) * m + c] = pinv(r, c);
    }
}

TpsParameters TpsSolver::solve(const std::vector<Vec2>& targets) const {
    validate_targets(grid_, targets);
    const int m = n_ + 3;

    TpsParameters out;
    out.source = grid_;
    out.kernel = kind_;
    out.rbf_weights.assign(static_cast<size_t>(n_), Vec2{});

    // W = pinv(L) * Y, with Y's three trailing rows zero.
    for (int r = 0; r < m; ++r) {
        double wx = 0.0;
        double wy = 0.0;
        const double* row = &pinv_[static_cast<size_t>(r) * m];
        for (int i = 0; i < n_; ++i) {
            wx += row[i] * targets[i].x;
            wy += row[i] * targets[i].y;
        }
        if (r < n_) {
            out.rbf_weights[r] = {wx, wy};
        } else {
            out.affine[r - n_] = {wx, wy};
        }
    }
    return out;
}

TpsParameters solve_tps(const ControlPointGrid& grid, const std::vector<Vec2>& targets) {
    return TpsSolver(grid).solve(targets);
}

TpsParameters solve_tps(const ControlPointGrid& grid, const std::vector<Vec2>& targets,
                        TpsKernel kind) {
    return TpsSolver(grid, kind).solve(targets);
}

Vec2 evaluate_tps(const TpsParameters& params, Vec2 x) {
    if (!x.finite()) throw std::invalid_argument("evaluate_tps: non-finite query point");
    const size_t n = params.rbf_weights.size();
    if (n != params.source.points.size()) {
        throw std::invalid_argument("evaluate_tps: weight/point count mismatch");
    }
    double rx = 0.0;
    double ry = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double v = rbf_kernel((x - params.source.points[i]).squared_norm(), params.kernel);
        rx += params.rbf_weights[i].x * v;
        ry += params.rbf_weights[i].y * v;
    }
    rx += params.affine[0].x + params.affine[1].x * x.x + params.affine[2].x * x.y;
    ry += params.affine[0].y + params.affine[1].y * x.x + params.affine[2].y * x.y;
    return {rx, ry};
}

double bending_energy(const TpsParameters& params) {
    const int n = static_cast<int>(params.rbf_weights.size());
    if (n != params.source.count()) {
        throw std::invalid_argument("bending_energy: weight/point count mismatch");
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double k =
                rbf_kernel((params.source.points[i] - params.source.points[j]).squared_norm(),
                           params.kernel);
            total += k * (params.rbf_weights[i].x * params.rbf_weights[j].x +
                          params.rbf_weights[i].y * params.rbf_weights[j].y);
        }
    }
    return total;
}

}  // namespace warpfuse::tps

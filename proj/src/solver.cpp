#include "packtherm/solver.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace packtherm {

namespace {

inline int reflect(int i, int n) {
    if (i < 0) return -i;          // -1 -> 1
    if (i >= n) return 2 * n - 2 - i; // n -> n-2
    return i;
}

/// Five-point affine system diag*T_c - sum_nb a_nb*T_nb = rhs, one row per
/// pixel. Neighbor order: E, W, N (row+1), S (row-1). Reflected neighbors
/// keep their in-domain flat index; finite-volume boundary faces carry a
/// zero coefficient instead.
struct Stencil {
    int rows = 0, cols = 0;
    std::vector<int> nb;      // 4 per pixel
    std::vector<double> coef; // 4 per pixel
    std::vector<double> diag;
    std::vector<double> rhs;
};

void check_inputs(const ScalarField& lambda, const BatteryMask& mask, const PackConfig& config) {
    validate_pack_config(config);
    if (!lambda.spec().same_shape(mask.spec))
        throw Error("solver: conductivity field and mask are on different grids");
    bool has_coolant = false;
    for (uint8_t f : mask.flags)
        if (!f) { has_coolant = true; break; }
    if (!has_coolant)
        throw Error("solver: singular system: no coolant pixels (pure Neumann problem)");
}

Stencil assemble_lowfi(const ScalarField& lambda, const BatteryMask& mask,
                       const PackConfig& config) {
    const GridSpec& g = lambda.spec();
    const int m = g.rows, n = g.cols, N = m * n;
    const double inv_h2 = 1.0 / (g.step * g.step);
    Stencil s;
    s.rows = m;
    s.cols = n;
    s.nb.resize(4 * N);
    s.coef.resize(4 * N);
    s.diag.resize(N);
    s.rhs.resize(N);
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) {
            const int p = r * n + c;
            const int e = r * n + reflect(c + 1, n);
            const int w = r * n + reflect(c - 1, n);
            const int up = reflect(r + 1, m) * n + c;
            const int dn = reflect(r - 1, m) * n + c;
            const double lc = lambda[p];
            const double dlx = lambda[e] - lambda[w];
            const double dly = lambda[up] - lambda[dn];
            s.nb[4 * p + 0] = e;
            s.nb[4 * p + 1] = w;
            s.nb[4 * p + 2] = up;
            s.nb[4 * p + 3] = dn;
            s.coef[4 * p + 0] = (lc + 0.25 * dlx) * inv_h2;
            s.coef[4 * p + 1] = (lc - 0.25 * dlx) * inv_h2;
            s.coef[4 * p + 2] = (lc + 0.25 * dly) * inv_h2;
            s.coef[4 * p + 3] = (lc - 0.25 * dly) * inv_h2;
            if (mask.flags[p]) {
                s.diag[p] = 4.0 * lc * inv_h2;
                s.rhs[p] = config.phi_b;
            } else {
                s.diag[p] = 4.0 * lc * inv_h2 + config.k;
                s.rhs[p] = config.k * config.t0;
            }
        }
    }
    return s;
}

Stencil assemble_reference(const ScalarField& lambda, const BatteryMask& mask,
                           const PackConfig& config) {
    const GridSpec& g = lambda.spec();
    const int m = g.rows, n = g.cols, N = m * n;
    const double inv_h2 = 1.0 / (g.step * g.step);
    auto harm = [](double a, double b) { return 2.0 * a * b / (a + b); };
    Stencil s;
    s.rows = m;
    s.cols = n;
    s.nb.assign(4 * N, 0);
    s.coef.assign(4 * N, 0.0);
    s.diag.resize(N);
    s.rhs.resize(N);
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) {
            const int p = r * n + c;
            double diag = mask.flags[p] ? 0.0 : config.k;
            const double lc = lambda[p];
            auto face = [&](int slot, int nr, int nc) {
                const int q = nr * n + nc;
                const double a = harm(lc, lambda[q]) * inv_h2;
                s.nb[4 * p + slot] = q;
                s.coef[4 * p + slot] = a;
                diag += a;
            };
            if (c + 1 < n) face(0, r, c + 1);
            if (c - 1 >= 0) face(1, r, c - 1);
            if (r + 1 < m) face(2, r + 1, c);
            if (r - 1 >= 0) face(3, r - 1, c);
            s.diag[p] = diag;
            s.rhs[p] = mask.flags[p] ? config.phi_b : config.k * config.t0;
        }
    }
    return s;
}

double max_abs(const std::vector<double>& v) {
    double mx = 0.0;
    for (double x : v) mx = std::max(mx, std::abs(x));
    return mx;
}

double relative_residual(const Stencil& s, const std::vector<double>& T) {
    double worst = 0.0;
    const int N = static_cast<int>(T.size());
    for (int p = 0; p < N; ++p) {
        double acc = s.rhs[p] - s.diag[p] * T[p];
        for (int k = 0; k < 4; ++k) acc += s.coef[4 * p + k] * T[s.nb[4 * p + k]];
        worst = std::max(worst, std::abs(acc));
    }
    return worst / std::max(max_abs(s.rhs), 1e-300);
}

std::vector<double> gauss_seidel(const Stencil& s, const PackConfig& config,
                                 const SolveOptions& opts) {
    if (!(opts.tolerance > 0.0)) throw Error("solver: tolerance must be positive");
    if (opts.max_iterations < 1) throw Error("solver: max_iterations must be >= 1");
    const int N = static_cast<int>(s.diag.size());
    std::vector<double> T(N, config.t0);
    for (int sweep = 0; sweep < opts.max_iterations; ++sweep) {
        double max_change = 0.0, max_t = 0.0;
        for (int p = 0; p < N; ++p) {
            double acc = s.rhs[p];
            acc += s.coef[4 * p + 0] * T[s.nb[4 * p + 0]];
            acc += s.coef[4 * p + 1] * T[s.nb[4 * p + 1]];
            acc += s.coef[4 * p + 2] * T[s.nb[4 * p + 2]];
            acc += s.coef[4 * p + 3] * T[s.nb[4 * p + 3]];
            const double t_new = acc / s.diag[p];
            max_change = std::max(max_change, std::abs(t_new - T[p]));
            max_t = std::max(max_t, std::abs(t_new));
            T[p] = t_new;
        }
        if (max_change <= opts.tolerance * std::max(max_t, 1e-300) &&
            relative_residual(s, T) <= opts.tolerance)
            return T;
    }
    throw Error("solver: no convergence within " + std::to_string(opts.max_iterations) +
                " sweeps (tolerance " + std::to_string(opts.tolerance) + ")");
}

std::vector<double> dense_direct(const Stencil& s) {
    const int N = static_cast<int>(s.diag.size());
    if (s.rows > 32 || s.cols > 32)
        throw Error("solve_dense: grid too large (cap is 32x32)");
    std::vector<double> A(static_cast<size_t>(N) * N, 0.0);
    std::vector<double> b = s.rhs;
    for (int p = 0; p < N; ++p) {
        A[static_cast<size_t>(p) * N + p] = s.diag[p];
        for (int k = 0; k < 4; ++k) {
            if (s.coef[4 * p + k] == 0.0) continue;
            A[static_cast<size_t>(p) * N + s.nb[4 * p + k]] -= s.coef[4 * p + k];
        }
    }
    // Gaussian elimination with partial pivoting.
    std::vector<int> piv(N);
    for (int i = 0; i < N; ++i) piv[i] = i;
    for (int col = 0; col < N; ++col) {
        int best = col;
        double best_abs = std::abs(A[static_cast<size_t>(col) * N + col]);
        for (int r = col + 1; r < N; ++r) {
            const double a = std::abs(A[static_cast<size_t>(r) * N + col]);
            if (a > best_abs) { best = r; best_abs = a; }
        }
        if (best_abs == 0.0) throw Error("solve_dense: singular matrix");
        if (best != col) {
            for (int c = 0; c < N; ++c)
                std::swap(A[static_cast<size_t>(best) * N + c], A[static_cast<size_t>(col) * N + c]);
            std::swap(b[best], b[col]);
        }
        const double pivot = A[static_cast<size_t>(col) * N + col];
        for (int r = col + 1; r < N; ++r) {
            const double f = A[static_cast<size_t>(r) * N + col] / pivot;
            if (f == 0.0) continue;
            A[static_cast<size_t>(r) * N + col] = 0.0;
            for (int c = col + 1; c < N; ++c)
                A[static_cast<size_t>(r) * N + c] -= f * A[static_cast<size_t>(col) * N + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(N);
    for (int r = N - 1; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < N; ++c) acc -= A[static_cast<size_t>(r) * N + c] * x[c];
        x[r] = acc / A[static_cast<size_t>(r) * N + r];
    }
    return x;
}

} // namespace

ScalarField solve_lowfi(const ScalarField& lambda, const BatteryMask& mask,
                        const PackConfig& config, const SolveOptions& opts) {
    check_inputs(lambda, mask, config);
    const Stencil s = assemble_lowfi(lambda, mask, config);
    auto T = opts.method == SolveMethod::dense ? dense_direct(s) : gauss_seidel(s, config, opts);
    return ScalarField(lambda.spec(), std::move(T));
}

ScalarField solve_reference(const ScalarField& lambda, const BatteryMask& mask,
                            const PackConfig& config, const SolveOptions& opts) {
    check_inputs(lambda, mask, config);
    const Stencil s = assemble_reference(lambda, mask, config);
    auto T = opts.method == SolveMethod::dense ? dense_direct(s) : gauss_seidel(s, config, opts);
    return ScalarField(lambda.spec(), std::move(T));
}

ScalarField solve_dense(const ScalarField& lambda, const BatteryMask& mask,
                        const PackConfig& config, Discretization disc) {
    check_inputs(lambda, mask, config);
    const Stencil s = disc == Discretization::lowfi ? assemble_lowfi(lambda, mask, config)
                                                    : assemble_reference(lambda, mask, config);
    return ScalarField(lambda.spec(), dense_direct(s));
}

ScalarField residual_lowfi(const ScalarField& T, const ScalarField& lambda,
                           const BatteryMask& mask, const PackConfig& config) {
    validate_pack_config(config);
    if (!T.spec().same_shape(lambda.spec()) || !T.spec().same_shape(mask.spec))
        throw Error("residual_lowfi: fields are on different grids");
    const GridSpec& g = T.spec();
    const int m = g.rows, n = g.cols;
    const double h2 = g.step * g.step;
    std::vector<double> delta(static_cast<size_t>(m) * n);
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) {
            const int p = r * n + c;
            const int e = r * n + reflect(c + 1, n);
            const int w = r * n + reflect(c - 1, n);
            const int up = reflect(r + 1, m) * n + c;
            const int dn = reflect(r - 1, m) * n + c;
            const double phi = mask.flags[p] ? config.phi_b : -config.k * (T[p] - config.t0);
            const double lc = lambda[p];
            const double t_prime = h2 * phi / lc +
                                   (lambda[e] - lambda[w]) * (T[e] - T[w]) / (4.0 * lc) +
                                   (lambda[up] - lambda[dn]) * (T[up] - T[dn]) / (4.0 * lc) +
                                   T[e] + T[w] + T[up] + T[dn];
            delta[p] = std::abs(T[p] - 0.25 * t_prime);
        }
    }
    return ScalarField(g, std::move(delta));
}

EnergyBalance energy_balance(const ScalarField& T, const BatteryMask& mask,
                             const PackConfig& config, const GridSpec& grid) {
    validate_pack_config(config);
    if (!T.spec().same_shape(mask.spec) || !T.spec().same_shape(grid))
        throw Error("energy_balance: fields are on different grids");
    const double h2 = grid.step * grid.step;
    EnergyBalance eb;
    for (int p = 0; p < grid.cell_count(); ++p) {
        if (mask.flags[p])
            eb.heat_in += config.phi_b * h2;
        else
            eb.heat_out += config.k * (T[p] - config.t0) * h2;
    }
    eb.relative_mismatch = eb.heat_in == 0.0
                               ? 0.0
                               : std::abs(eb.heat_in - eb.heat_out) / eb.heat_in;
    return eb;
}

} // namespace packtherm

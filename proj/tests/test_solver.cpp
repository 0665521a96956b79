#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "packtherm/solver.hpp"

using namespace packtherm;

namespace {

BatteryMask mask_from_flags(const GridSpec& g, std::vector<uint8_t> flags) {
    return BatteryMask{g, std::move(flags)};
}

/// Small random layouts for oracle tests: 16x16 grid over a 16.8 mm box
/// is not physical; instead scale the desk geometry down by using fewer
/// cells on the real 84 mm domain.
Layout random_small_layout(uint64_t seed, int cells) {
    Layout geom;
    return generate_layout(seed, cells, geom);
}

double inf_norm_diff(const ScalarField& a, const ScalarField& b) {
    double mx = 0.0;
    for (int i = 0; i < a.size(); ++i) mx = std::max(mx, std::abs(a[i] - b[i]));
    return mx;
}

} // namespace

TEST_CASE("zero-cell layouts solve to the cold-plate temperature exactly") {
    const PackConfig pack;
    const GridSpec g = GridSpec::square(16, 0.084);
    const ScalarField lam(g, pack.lambda_c);
    const BatteryMask mask = mask_from_flags(g, std::vector<uint8_t>(g.cell_count(), 0));
    for (const ScalarField& T : {solve_lowfi(lam, mask, pack), solve_reference(lam, mask, pack),
                                 solve_dense(lam, mask, pack, Discretization::lowfi),
                                 solve_dense(lam, mask, pack, Discretization::reference)}) {
        const FieldStats s = field_stats(T);
        CHECK(s.min == doctest::Approx(25.0).epsilon(1e-9));
        CHECK(s.max == doctest::Approx(25.0).epsilon(1e-9));
    }
}

TEST_CASE("all-battery grids are singular and rejected") {
    const PackConfig pack;
    const GridSpec g = GridSpec::square(8, 0.084);
    const ScalarField lam(g, pack.lambda_b);
    const BatteryMask mask = mask_from_flags(g, std::vector<uint8_t>(g.cell_count(), 1));
    CHECK_THROWS_WITH_AS(solve_lowfi(lam, mask, pack), doctest::Contains("singular"), Error);
    CHECK_THROWS_WITH_AS(solve_reference(lam, mask, pack), doctest::Contains("singular"), Error);
}

TEST_CASE("hand-assembled 3x3 system matches solve_dense and solve_lowfi") {
    // One battery pixel in the center of a 3x3 grid; assemble the expanded
    // stencil by hand with mirrored neighbors and solve by substitution-free
    // Gaussian elimination written out in the test.
    const PackConfig pack;
    const GridSpec g = GridSpec::square(3, 0.003);
    std::vector<uint8_t> flags(9, 0);
    flags[4] = 1;
    std::vector<double> lam_v(9, pack.lambda_c);
    lam_v[4] = pack.lambda_b;
    const ScalarField lam(g, lam_v);
    const BatteryMask mask = mask_from_flags(g, flags);

    const double h2 = g.step * g.step;
    auto refl = [](int i) { return i < 0 ? -i : (i > 2 ? 4 - i : i); };
    double A[9][9] = {};
    double b[9] = {};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            const int p = 3 * r + c;
            const int e = 3 * r + refl(c + 1), w = 3 * r + refl(c - 1);
            const int up = 3 * refl(r + 1) + c, dn = 3 * refl(r - 1) + c;
            const double lc = lam_v[p];
            const double dlx = lam_v[e] - lam_v[w], dly = lam_v[up] - lam_v[dn];
            A[p][p] += 4.0 * lc / h2;
            A[p][e] -= (lc + 0.25 * dlx) / h2;
            A[p][w] -= (lc - 0.25 * dlx) / h2;
            A[p][up] -= (lc + 0.25 * dly) / h2;
            A[p][dn] -= (lc - 0.25 * dly) / h2;
            if (flags[p]) {
                b[p] = pack.phi_b;
            } else {
                A[p][p] += pack.k;
                b[p] = pack.k * pack.t0;
            }
        }
    }
    // Plain Gaussian elimination (no pivot search; the diagonal dominates).
    for (int col = 0; col < 9; ++col) {
        for (int row = col + 1; row < 9; ++row) {
            const double f = A[row][col] / A[col][col];
            for (int k = col; k < 9; ++k) A[row][k] -= f * A[col][k];
            b[row] -= f * b[col];
        }
    }
    double x[9];
    for (int row = 8; row >= 0; --row) {
        double acc = b[row];
        for (int k = row + 1; k < 9; ++k) acc -= A[row][k] * x[k];
        x[row] = acc / A[row][row];
    }

    const ScalarField dense = solve_dense(lam, mask, pack, Discretization::lowfi);
    const ScalarField iter = solve_lowfi(lam, mask, pack);
    for (int i = 0; i < 9; ++i) {
        CHECK(dense[i] == doctest::Approx(x[i]).epsilon(1e-12));
        CHECK(iter[i] == doctest::Approx(x[i]).epsilon(1e-8));
    }
    CHECK(field_stats(dense).max > 25.0); // the heated pixel warms up
}

TEST_CASE("uniform conductivity, one heated interior pixel on 5x5") {
    const PackConfig pack;
    const GridSpec g = GridSpec::square(5, 0.005);
    const ScalarField lam(g, pack.lambda_c); // uniform: no cross terms anywhere
    std::vector<uint8_t> flags(25, 0);
    flags[12] = 1;
    const BatteryMask mask = mask_from_flags(g, flags);
    SolveOptions tight;
    tight.tolerance = 1e-12; // the 1e-9 agreement bound needs headroom
    const ScalarField it = solve_lowfi(lam, mask, pack, tight);
    const ScalarField de = solve_dense(lam, mask, pack, Discretization::lowfi);
    CHECK(inf_norm_diff(it, de) <= 1e-9);
    CHECK(field_stats(it).max == field_stats(it).max); // finite
    CHECK(it.at(2, 2) > it.at(0, 0));
}

TEST_CASE("oracle equivalence: iterative vs dense on random 16x16 layouts") {
    const PackConfig pack;
    const GridSpec g = GridSpec::square(16, 0.084);
    std::mt19937_64 seeds(404);
    for (int trial = 0; trial < 20; ++trial) {
        const int cells = 1 + static_cast<int>(seeds() % 3);
        const Layout layout = random_small_layout(seeds(), cells);
        const ScalarField lam = rasterize_conductivity(layout, g, pack);
        const BatteryMask mask = battery_mask(layout, g);

        const ScalarField it_lowfi = solve_lowfi(lam, mask, pack);
        const ScalarField de_lowfi = solve_dense(lam, mask, pack, Discretization::lowfi);
        CHECK(inf_norm_diff(it_lowfi, de_lowfi) <= 1e-6);

        const ScalarField it_ref = solve_reference(lam, mask, pack);
        const ScalarField de_ref = solve_dense(lam, mask, pack, Discretization::reference);
        CHECK(inf_norm_diff(it_ref, de_ref) <= 1e-6);
    }
}

TEST_CASE("solve options: method tag, tolerance validation, grid cap, non-convergence") {
    const PackConfig pack;
    const GridSpec g = GridSpec::square(16, 0.084);
    const Layout layout = random_small_layout(5, 2);
    const ScalarField lam = rasterize_conductivity(layout, g, pack);
    const BatteryMask mask = battery_mask(layout, g);

    SolveOptions dense_opts;
    dense_opts.method = SolveMethod::dense;
    CHECK(inf_norm_diff(solve_lowfi(lam, mask, pack, dense_opts),
                        solve_dense(lam, mask, pack, Discretization::lowfi)) == 0.0);

    SolveOptions bad;
    bad.tolerance = 0.0;
    CHECK_THROWS_AS(solve_lowfi(lam, mask, pack, bad), Error);

    SolveOptions few;
    few.max_iterations = 3;
    CHECK_THROWS_WITH_AS(solve_lowfi(lam, mask, pack, few), doctest::Contains("convergence"),
                         Error);

    const GridSpec big = GridSpec::square(64, 0.084);
    const ScalarField lam_big = rasterize_conductivity(layout, big, pack);
    const BatteryMask mask_big = battery_mask(layout, big);
    CHECK_THROWS_WITH_AS(solve_dense(lam_big, mask_big, pack), doctest::Contains("32x32"), Error);
}

TEST_CASE("residual_lowfi: solver fixed point, hand value, and coolant zero") {
    const PackConfig pack;

    // Uniform battery conductivity, T == t0, h = 0.00042 m: the single-pixel
    // physics error is h^2 phi_b / lambda_b / 4 everywhere.
    const GridSpec g200 = GridSpec::square(200, 0.084);
    const ScalarField lam_b(g200, pack.lambda_b);
    const ScalarField t0_field(g200, pack.t0);
    const BatteryMask all_battery =
        mask_from_flags(g200, std::vector<uint8_t>(g200.cell_count(), 1));
    const ScalarField delta = residual_lowfi(t0_field, lam_b, all_battery, pack);
    const double expected = 0.25 * g200.step * g200.step * pack.phi_b / pack.lambda_b;
    CHECK(expected == doctest::Approx(6.07e-4).epsilon(1e-3));
    for (int i = 0; i < 50; ++i) CHECK(delta[i] == doctest::Approx(expected).epsilon(1e-12));

    // On coolant pixels at T == t0 the completed intensity vanishes.
    const ScalarField lam_c(g200, pack.lambda_c);
    const BatteryMask no_battery =
        mask_from_flags(g200, std::vector<uint8_t>(g200.cell_count(), 0));
    const ScalarField delta_c = residual_lowfi(t0_field, lam_c, no_battery, pack);
    CHECK(field_stats(delta_c).max == 0.0);

    // The solver output is the fixed point of the Jacobi reconstruction.
    const GridSpec g = GridSpec::square(64, 0.084);
    const Layout layout = random_small_layout(42, 8);
    const ScalarField lam = rasterize_conductivity(layout, g, pack);
    const BatteryMask mask = battery_mask(layout, g);
    const ScalarField T = solve_lowfi(lam, mask, pack);
    const ScalarField res = residual_lowfi(T, lam, mask, pack);
    const FieldStats s = field_stats(res);
    CHECK(s.mean <= 1e-8);
    CHECK(s.max <= 1e-6);
}

TEST_CASE("energy balance: conservative solver closes the books") {
    const PackConfig pack;
    const GridSpec g = GridSpec::square(64, 0.084);
    const Layout layout = random_small_layout(9, 8);
    const ScalarField lam = rasterize_conductivity(layout, g, pack);
    const BatteryMask mask = battery_mask(layout, g);

    const ScalarField T = solve_reference(lam, mask, pack);
    const EnergyBalance eb = energy_balance(T, mask, pack, g);
    CHECK(eb.heat_in > 0.0);
    CHECK(eb.relative_mismatch <= 1e-6);

    // T == t0 removes no heat at all.
    const EnergyBalance none = energy_balance(ScalarField(g, pack.t0), mask, pack, g);
    CHECK(none.relative_mismatch == 1.0);

    // Zero-cell: no heat in, mismatch 0 by convention.
    const BatteryMask empty = mask_from_flags(g, std::vector<uint8_t>(g.cell_count(), 0));
    const EnergyBalance zero = energy_balance(ScalarField(g, pack.t0), empty, pack, g);
    CHECK(zero.heat_in == 0.0);
    CHECK(zero.relative_mismatch == 0.0);

    // The non-conservative stencil does NOT close the books exactly; that gap
    // is the point of having two fidelities.
    const ScalarField T_lowfi = solve_lowfi(lam, mask, pack);
    const EnergyBalance lofi = energy_balance(T_lowfi, mask, pack, g);
    CHECK(lofi.relative_mismatch > 1e-6);
}

TEST_CASE("minimum principle and fidelity gap on random 8-cell layouts") {
    const PackConfig pack;
    const GridSpec g = GridSpec::square(64, 0.084);
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        const Layout layout = random_small_layout(seed, 8);
        const ScalarField lam = rasterize_conductivity(layout, g, pack);
        const BatteryMask mask = battery_mask(layout, g);
        const ScalarField ref = solve_reference(lam, mask, pack);
        CHECK(field_stats(ref).min >= 25.0 - 1e-9);

        const ScalarField lowfi = solve_lowfi(lam, mask, pack);
        double mean_gap = 0.0;
        for (int i = 0; i < g.cell_count(); ++i) mean_gap += std::abs(ref[i] - lowfi[i]);
        mean_gap /= g.cell_count();
        CHECK(mean_gap > 0.0);

        // The gap concentrates near battery-coolant interfaces: pixels with a
        // neighbor of the other material show a larger mean gap than the rest.
        double on_iface = 0.0, off_iface = 0.0;
        int n_iface = 0, n_off = 0;
        for (int r = 0; r < g.rows; ++r) {
            for (int c = 0; c < g.cols; ++c) {
                const int p = r * g.cols + c;
                bool iface = false;
                if (r > 0 && mask.flags[p] != mask.flags[p - g.cols]) iface = true;
                if (r + 1 < g.rows && mask.flags[p] != mask.flags[p + g.cols]) iface = true;
                if (c > 0 && mask.flags[p] != mask.flags[p - 1]) iface = true;
                if (c + 1 < g.cols && mask.flags[p] != mask.flags[p + 1]) iface = true;
                const double gap = std::abs(ref[p] - lowfi[p]);
                if (iface) {
                    on_iface += gap;
                    ++n_iface;
                } else {
                    off_iface += gap;
                    ++n_off;
                }
            }
        }
        REQUIRE(n_iface > 0);
        CHECK(on_iface / n_iface > off_iface / n_off);
    }
}

TEST_CASE("x-mirror symmetric layouts produce x-mirror symmetric fields") {
    const PackConfig pack;
    const GridSpec g = GridSpec::square(64, 0.084);
    Layout layout;
    layout.centers_mm = {{30.0, 40.0}, {54.0, 40.0}, {42.0, 64.0}};
    REQUIRE_NOTHROW(validate_layout(layout));
    const ScalarField lam = rasterize_conductivity(layout, g, pack);
    const BatteryMask mask = battery_mask(layout, g);
    for (const ScalarField& T : {solve_lowfi(lam, mask, pack), solve_reference(lam, mask, pack)}) {
        double worst = 0.0;
        for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c)
                worst = std::max(worst, std::abs(T.at(r, c) - T.at(r, g.cols - 1 - c)));
        CHECK(worst <= 1e-9);
    }
}

#include "packtherm/raster.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace packtherm {

int BatteryMask::true_count() const {
    int n = 0;
    for (uint8_t f : flags) n += f != 0;
    return n;
}

Layout generate_layout(uint64_t seed, int n_cells, const Layout& geometry, int max_rejections) {
    if (n_cells < 0) throw Error("generate_layout: n_cells must be non-negative");
    Layout out = geometry;
    out.centers_mm.clear();
    if (n_cells == 0) return out;

    const double lo = geometry.min_wall_dist_mm();
    const double hi_x = geometry.domain_w_mm - lo;
    const double hi_y = geometry.domain_h_mm - lo;
    if (hi_x < lo || hi_y < lo)
        throw Error("generate_layout: wall clearance leaves no feasible center box");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(lo, hi_x), uy(lo, hi_y);
    const double min_dist = geometry.min_center_dist_mm();

    // Sequential placement jams on a fair share of random sequences at the
    // 8-cell density, so a run of consecutive rejections discards the partial
    // layout and starts over within the same stream. All rejections count
    // against the one budget.
    constexpr int kJamCap = 200;
    int rejections = 0;
    int consecutive = 0;
    while (static_cast<int>(out.centers_mm.size()) < n_cells) {
        const double x = ux(rng);
        const double y = uy(rng);
        bool ok = true;
        for (const auto& c : out.centers_mm) {
            if (std::hypot(x - c[0], y - c[1]) < min_dist) {
                ok = false;
                break;
            }
        }
        if (ok) {
            out.centers_mm.push_back({x, y});
            consecutive = 0;
            continue;
        }
        if (++rejections > max_rejections)
            throw Error("generate_layout: placement failed after " +
                        std::to_string(max_rejections) +
                        " rejected samples; constraints infeasible or near-infeasible");
        if (++consecutive >= kJamCap) {
            out.centers_mm.clear();
            consecutive = 0;
        }
    }
    return out;
}

namespace {

void check_domain(const Layout& layout, const GridSpec& grid) {
    const double w_m = layout.domain_w_mm * 1e-3;
    const double h_m = layout.domain_h_mm * 1e-3;
    if (std::abs(grid.width - w_m) > 1e-9 || std::abs(grid.height - h_m) > 1e-9)
        throw Error("raster: grid domain does not match layout domain");
}

} // namespace

BatteryMask battery_mask(const Layout& layout, const GridSpec& grid) {
    check_domain(layout, grid);
    BatteryMask mask{grid, std::vector<uint8_t>(static_cast<size_t>(grid.cell_count()), 0)};
    const double h_mm = grid.step * 1e3;
    const double r2 = layout.radius_mm() * layout.radius_mm();
    for (const auto& c : layout.centers_mm) {
        // Only pixels inside the cell's bounding box can be covered.
        const int c0 = std::max(0, static_cast<int>((c[0] - layout.radius_mm()) / h_mm) - 1);
        const int c1 = std::min(grid.cols - 1, static_cast<int>((c[0] + layout.radius_mm()) / h_mm) + 1);
        const int r0 = std::max(0, static_cast<int>((c[1] - layout.radius_mm()) / h_mm) - 1);
        const int r1 = std::min(grid.rows - 1, static_cast<int>((c[1] + layout.radius_mm()) / h_mm) + 1);
        for (int row = r0; row <= r1; ++row) {
            const double py = (row + 0.5) * h_mm;
            for (int col = c0; col <= c1; ++col) {
                const double px = (col + 0.5) * h_mm;
                const double dx = px - c[0];
                const double dy = py - c[1];
                if (dx * dx + dy * dy < r2) mask.flags[grid.index(row, col)] = 1;
            }
        }
    }
    return mask;
}

ScalarField rasterize_conductivity(const Layout& layout, const GridSpec& grid,
                                   const PackConfig& config) {
    validate_pack_config(config);
    const BatteryMask mask = battery_mask(layout, grid);
    std::vector<double> v(static_cast<size_t>(grid.cell_count()));
    for (int i = 0; i < grid.cell_count(); ++i)
        v[i] = mask.flags[i] ? config.lambda_b : config.lambda_c;
    return ScalarField(grid, std::move(v));
}

ScalarField rasterize_initial_intensity(const Layout& layout, const GridSpec& grid,
                                        const PackConfig& config) {
    validate_pack_config(config);
    const BatteryMask mask = battery_mask(layout, grid);
    std::vector<double> v(static_cast<size_t>(grid.cell_count()));
    for (int i = 0; i < grid.cell_count(); ++i) v[i] = mask.flags[i] ? config.phi_b : 0.0;
    return ScalarField(grid, std::move(v));
}

} // namespace packtherm

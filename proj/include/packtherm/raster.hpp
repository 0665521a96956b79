#pragma once

#include <cstdint>
#include <vector>

#include "packtherm/grid.hpp"
#include "packtherm/layout.hpp"

namespace packtherm {

/// Pixel membership in the battery region: a pixel belongs to a cell iff its
/// center lies strictly within diameter/2 of that cell's center.
struct BatteryMask {
    GridSpec spec;
    std::vector<uint8_t> flags; ///< row-major, 1 = battery pixel

    bool at(int row, int col) const { return flags[spec.index(row, col)] != 0; }
    int true_count() const;
};

/// Draw cell centers one at a time, uniformly over the feasible center box,
/// rejecting samples that violate a clearance. The geometry argument supplies
/// domain and clearance settings; its centers are ignored. Throws after
/// max_rejections rejected samples.
Layout generate_layout(uint64_t seed, int n_cells, const Layout& geometry,
                       int max_rejections = 10000);

BatteryMask battery_mask(const Layout& layout, const GridSpec& grid);

/// lambda_b on battery pixels, lambda_c elsewhere.
ScalarField rasterize_conductivity(const Layout& layout, const GridSpec& grid,
                                   const PackConfig& config);

/// phi_b on battery pixels, zero elsewhere (the coolant sink is implicit in
/// the temperature and not part of the initial intensity map).
ScalarField rasterize_initial_intensity(const Layout& layout, const GridSpec& grid,
                                        const PackConfig& config);

} // namespace packtherm

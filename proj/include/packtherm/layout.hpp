#pragma once

#include <array>
#include <string>
#include <vector>

#include "packtherm/errors.hpp"

namespace packtherm {

/// Battery-cell placement inside a rectangular pack cross-section.
/// All lengths in millimeters. Clearances are surface based: two cells need a
/// center distance of at least diameter + gap_cell, and a cell center must
/// stay at least diameter/2 + gap_wall away from every wall. Ties exactly at
/// the bound are accepted.
struct Layout {
    double domain_w_mm = 84.0;
    double domain_h_mm = 84.0;
    double diameter_mm = 21.0;
    double gap_cell_mm = 2.0;
    double gap_wall_mm = 2.0;
    std::vector<std::array<double, 2>> centers_mm;

    double radius_mm() const { return 0.5 * diameter_mm; }
    double min_center_dist_mm() const { return diameter_mm + gap_cell_mm; }
    double min_wall_dist_mm() const { return radius_mm() + gap_wall_mm; }
};

/// Throws Error naming the violated constraint; no-op for valid layouts.
void validate_layout(const Layout& layout);

/// Physical constants of the pack model. Defaults are the cylindrical-cell
/// indirect-liquid-cooling configuration: battery intensity phi_b [W/m^2],
/// coolant linear sink coefficient k [W/(m^2 K)], conductivities [W/(m K)],
/// cold-plate temperature t0 [degC].
struct PackConfig {
    double phi_b = 12348.35;
    double k = 3000.0;
    double lambda_b = 0.89724;
    double lambda_c = 3.0;
    double t0 = 25.0;
};

void validate_pack_config(const PackConfig& c);

/// Layout JSON:
/// {"domain_mm":[84.0,84.0],"diameter_mm":21.0,"gap_cell_mm":2.0,
///  "gap_wall_mm":2.0,"centers_mm":[[x,y],...]}
void write_layout(const Layout& layout, const std::string& path);
Layout read_layout(const std::string& path); ///< validates constraints on load

} // namespace packtherm

#pragma once

#include <string>

#include "packtherm/grid.hpp"

namespace packtherm {

/// 8-bit grayscale PGM (binary P5): [lo, hi] maps linearly to [0, 255] with
/// clamping outside; a degenerate range (lo == hi) renders mid-gray 128.
void write_pgm(const ScalarField& field, const std::string& path, double lo, double hi);

/// Range defaults to the field's own min/max.
void write_pgm(const ScalarField& field, const std::string& path);

} // namespace packtherm

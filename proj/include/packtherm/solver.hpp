#pragma once

#include "packtherm/grid.hpp"
#include "packtherm/layout.hpp"
#include "packtherm/raster.hpp"

namespace packtherm {

enum class SolveMethod { iterative, dense };

struct SolveOptions {
    double tolerance = 1e-10;   ///< relative residual and relative change
    int max_iterations = 200000;
    SolveMethod method = SolveMethod::iterative;
};

/// Steady temperature of the expanded-derivative five-point stencil (the same
/// discretization the physics loss penalizes): cross terms from the
/// conductivity gradient plus a conductivity-scaled Laplacian, with battery
/// source phi_b, coolant sink -k (T - t0) kept inside the linear system, and
/// out-of-domain neighbors mirrored about the boundary node.
ScalarField solve_lowfi(const ScalarField& lambda, const BatteryMask& mask,
                        const PackConfig& config, const SolveOptions& opts = {});

/// Conservative finite-volume discretization: per-pixel flux balance with
/// harmonic-mean face conductivities and zero-flux boundary faces. This is
/// the ground-truth (high-fidelity) solver of the artifact.
ScalarField solve_reference(const ScalarField& lambda, const BatteryMask& mask,
                            const PackConfig& config, const SolveOptions& opts = {});

enum class Discretization { lowfi, reference };

/// Direct dense solve of either discretization, for grids up to 32x32.
/// Gaussian elimination with partial pivoting; exact to machine precision.
ScalarField solve_dense(const ScalarField& lambda, const BatteryMask& mask,
                        const PackConfig& config, Discretization disc = Discretization::lowfi);

/// Per-pixel physics error |T - T'/4| of the low-fidelity stencil, with the
/// intensity completed from T itself (phi_b on battery pixels, -k (T - t0)
/// on coolant pixels). Zero exactly at the solve_lowfi solution.
ScalarField residual_lowfi(const ScalarField& T, const ScalarField& lambda,
                           const BatteryMask& mask, const PackConfig& config);

struct EnergyBalance {
    double heat_in = 0.0;           ///< sum over battery pixels of phi_b h^2 [W/m]
    double heat_out = 0.0;          ///< sum over coolant pixels of k (T - t0) h^2 [W/m]
    double relative_mismatch = 0.0; ///< |in - out| / in; 0 by convention when in == 0
};

EnergyBalance energy_balance(const ScalarField& T, const BatteryMask& mask,
                             const PackConfig& config, const GridSpec& grid);

} // namespace packtherm

#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "packtherm/autodiff.hpp"
#include "packtherm/grid.hpp"

namespace packtherm {

/// Five-level UNet that maps a conductivity layout to a temperature field.
/// The raw conductivity input is normalized to a binary battery indicator
/// (lambda_b -> 1, lambda_c -> 0) and the raw network output is mapped to
/// degrees Celsius as T = out_offset + out_scale * raw. The final 1x1
/// convolution is zero-initialized so an untrained net predicts exactly
/// out_offset everywhere.
struct BackboneConfig {
    std::array<int, 5> widths{16, 32, 64, 128, 256};
    int groups = 8;
    double lambda_battery = 0.89724;
    double lambda_coolant = 3.0;
    double out_scale = 1.0;  ///< s [degC]
    double out_offset = 25.0; ///< T0 [degC]
    bool zero_init_final = true;
};

void validate_backbone_config(const BackboneConfig& c);

/// Four-level reduced UNet correcting the backbone output: consumes
/// (T_hat - in_offset) / in_scale and returns T_hat + in_scale * raw.
/// One conv-GN-ReLU block per level. Zero-initialized final layer makes the
/// untrained head the identity.
struct HeadConfig {
    std::array<int, 4> widths{8, 16, 32, 64};
    int groups = 8;
    double in_scale = 1.0;
    double in_offset = 25.0;
    bool zero_init_final = true;
};

void validate_head_config(const HeadConfig& c);

ModelParams build_backbone(const BackboneConfig& config, uint64_t seed);
ModelParams build_head(const HeadConfig& config, uint64_t seed);

/// Architecturally identical to the backbone; trained supervised.
ModelParams build_supervised_baseline(const BackboneConfig& config, uint64_t seed);

/// lambda_input is the raw conductivity field as a (B,1,H,W) tensor. Output
/// is a (B,1,H,W) temperature estimate in degC. Inputs whose spatial size is
/// not a multiple of 2^5 are reflect-padded up and cropped back.
Tensor forward_backbone(Tape* tape, const ModelParams& params, const BackboneConfig& config,
                        const Tensor& lambda_input);

Tensor forward_head(Tape* tape, const ModelParams& params, const HeadConfig& config,
                    const Tensor& t_hat);

/// Inference conveniences (no tape).
ScalarField predict_backbone(const ModelParams& params, const BackboneConfig& config,
                             const ScalarField& lambda);
ScalarField predict_pipeline(const ModelParams& backbone, const BackboneConfig& bc,
                             const ModelParams& head, const HeadConfig& hc,
                             const ScalarField& lambda);

int64_t backbone_param_count(const BackboneConfig& config);
int64_t head_param_count(const HeadConfig& config);

} // namespace packtherm

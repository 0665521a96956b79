#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "packtherm/autodiff.hpp"
#include "packtherm/layout.hpp"
#include "packtherm/manifest.hpp"
#include "packtherm/nets.hpp"

namespace packtherm {

struct TrainConfig {
    int epochs_pretrain = 10;
    int epochs_posttrain = 15;
    double lr0 = 1e-3;
    double lr_decay = 0.85; ///< multiplied once per epoch
    int batch_size = 1;     ///< only 1 is supported
    double eta1 = 0.0;      ///< weighting shift
    double eta2 = 10.0;     ///< weighting scale
    uint64_t seed = 1;
};

void validate_train_config(const TrainConfig& c);

struct TrainStep {
    int epoch = 0;
    std::string case_id;
    double loss = 0.0;
    double lr = 0.0;
};

struct TrainLog {
    std::vector<TrainStep> steps;
    std::vector<double> epoch_mean_loss;
    std::vector<double> epoch_lr;
    std::vector<double> val_mae; ///< per epoch; supervised training only
    double wall_seconds = 0.0;
};

/// JSON lines, one record per step: {"epoch":..,"case":..,"loss":..,"lr":..}.
void write_train_log(const TrainLog& log, const std::string& path);
TrainLog read_train_log(const std::string& path);

/// Completed intensity from the backbone output: phi_b on battery pixels
/// (lambda == lambda_b), -k (T_hat - t0) on coolant pixels. Computed from the
/// detached prediction; carries no gradient.
Tensor complete_intensity(const Tensor& t_hat, const ScalarField& lambda,
                          const PackConfig& config);

/// Jacobi reconstruction T' of each pixel from its reflected neighbors, the
/// completed intensity, and the conductivity gradient. Detached constant; its
/// quarter is the physics-loss target, and T = T'/4 exactly at the
/// low-fidelity solution.
Tensor jacobi_target(const Tensor& t_hat, const ScalarField& lambda, const Tensor& phi, double h);

/// w = eta1 + eta2 (delta - min) / (max - min), min/max over the whole
/// sample; uniform eta1 + eta2/2 when the error map is flat (max - min below
/// 1e-12). Detached.
Tensor pixel_weights(const Tensor& delta, double eta1, double eta2);

/// Weighted L1 distance between the prediction and the detached Jacobi
/// fixed-point target; gradients flow only through the standalone prediction.
Tensor physics_loss(Tape* tape, const Tensor& t_hat, const ScalarField& lambda,
                    const PackConfig& config, double h, double eta1, double eta2);

Tensor data_loss(Tape* tape, const Tensor& t_tilde, const Tensor& t_truth, double eta1,
                 double eta2);

/// Unsupervised pre-training of the backbone on the pretrain split (layouts
/// only). Per-epoch seeded shuffling; Adam; exponential lr decay. Aborts on a
/// non-finite loss, naming the case.
TrainLog pretrain(ModelParams& backbone, const BackboneConfig& bc, const PackConfig& pack,
                  const DatasetManifest& manifest, const TrainConfig& tc);

/// Supervised post-training of the head on the labeled split with the
/// backbone frozen (enforced by a parameter hash check).
TrainLog posttrain(const ModelParams& backbone, const BackboneConfig& bc, ModelParams& head,
                   const HeadConfig& hc, const DatasetManifest& manifest, const TrainConfig& tc);

/// Supervised baseline on the labeled split for epochs_pretrain +
/// epochs_posttrain epochs, keeping the checkpoint with the best validation
/// MAE.
TrainLog train_supervised(ModelParams& baseline, const BackboneConfig& bc,
                          const DatasetManifest& manifest, const TrainConfig& tc);

} // namespace packtherm

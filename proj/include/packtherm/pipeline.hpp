#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "packtherm/layout.hpp"
#include "packtherm/manifest.hpp"
#include "packtherm/metrics.hpp"
#include "packtherm/nets.hpp"
#include "packtherm/solver.hpp"
#include "packtherm/training.hpp"

namespace packtherm {

/// One declarative document for a full run: grid, physics, layout geometry,
/// dataset splits, solver, network widths, and training settings. Unknown
/// JSON keys are rejected. Network normalization constants (indicator
/// levels, output offset) are derived from the pack section so they cannot
/// drift apart.
struct RunConfig {
    int grid_rows = 64;
    int grid_cols = 64;
    PackConfig pack;
    Layout geometry;  ///< centers ignored; domain and clearances used
    int cells = 8;
    int count_pretrain = 200;
    int count_labeled = 20;
    int count_val = 20;
    int count_test = 50;
    uint64_t dataset_seed = 7;
    SolveOptions solver;
    BackboneConfig backbone;
    HeadConfig head;
    TrainConfig train;

    GridSpec grid() const;
};

RunConfig read_run_config(const std::string& path);
void write_run_config(const RunConfig& cfg, const std::string& path);

/// Writes layouts/, fields/ (conductivity rasters), and manifest.json under
/// out_dir with split assignment pretrain/labeled/val/test. Case i draws its
/// layout from dataset_seed + i. No-op when the manifest already exists,
/// unless force.
void generate_dataset(const RunConfig& cfg, const std::string& out_dir, bool force = false);

/// Solves ground truth for every case of the given splits that lacks one
/// (all of labeled/val/test when splits is empty) and records the
/// temperature paths back into the manifest. Returns the number of cases
/// solved. kind is "reference", "lowfi" or "dense".
int solve_dataset(const std::string& manifest_path, const std::string& kind,
                  const PackConfig& pack, const SolveOptions& opts,
                  const std::vector<Split>& splits = {}, bool force = false, int workers = 0);

/// PTMW file plus a JSON sidecar at path + ".json" recording kind, seed and
/// architecture; head sidecars also record the backbone model path.
void save_model(const ModelParams& params, const std::string& kind, const RunConfig& cfg,
                uint64_t seed, const std::string& path,
                const std::string& backbone_model_path = "");

struct LoadedModel {
    std::string kind; ///< "backbone" | "head" | "supervised"
    ModelParams params;
    BackboneConfig backbone_cfg;
    HeadConfig head_cfg;
    std::string backbone_model_path; ///< heads only
    uint64_t seed = 0;
};

LoadedModel load_model(const std::string& path);

/// Builds the inference function a model file denotes; heads pull in their
/// recorded backbone.
Predictor make_predictor(const std::string& model_path);

std::string run_pretrain(const RunConfig& cfg, const std::string& manifest_path, uint64_t seed,
                         const std::string& out_model, const std::string& log_path);
std::string run_posttrain(const RunConfig& cfg, const std::string& manifest_path,
                          const std::string& backbone_model, uint64_t seed,
                          const std::string& out_model, const std::string& log_path);
std::string run_train_supervised(const RunConfig& cfg, const std::string& manifest_path,
                                 uint64_t seed, const std::string& out_model,
                                 const std::string& log_path);

EvalReport run_eval(const std::string& model_path, const std::string& manifest_path, Split split,
                    const std::string& report_path);

/// gen -> solve -> pretrain -> posttrain -> train-supervised -> eval ->
/// render, all under out_dir, reusing artifacts that already exist. seed
/// overrides cfg.train.seed when non-zero.
void run_pipeline(const RunConfig& cfg, const std::string& out_dir, uint64_t seed = 0,
                  bool force = false);

} // namespace packtherm

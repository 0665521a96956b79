#pragma once

#include <functional>
#include <string>
#include <vector>

#include "packtherm/grid.hpp"
#include "packtherm/manifest.hpp"
#include "packtherm/raster.hpp"

namespace packtherm {

double mae(const ScalarField& pred, const ScalarField& truth);
double bmae(const ScalarField& pred, const ScalarField& truth, const BatteryMask& mask);
double max_ae(const ScalarField& pred, const ScalarField& truth);

/// Absolute error of the peak temperature: |max(pred) - max(truth)|.
double mt_ae(const ScalarField& pred, const ScalarField& truth);

struct CaseEval {
    std::string id;
    double mae = 0.0, bmae = 0.0, max_ae = 0.0, mt_ae = 0.0;
};

struct EvalReport {
    std::string model;
    std::string split;
    std::vector<CaseEval> cases;
    double mean_mae = 0.0, mean_bmae = 0.0, mean_max_ae = 0.0, mean_mt_ae = 0.0;
};

using Predictor = std::function<ScalarField(const ScalarField& lambda)>;

/// Runs the predictor over every case of the split (each must carry a
/// ground-truth temperature), computes the four indices per case with the
/// battery mask rasterized from the case layout, and aggregates by per-case
/// mean.
EvalReport evaluate(const Predictor& predict, const DatasetManifest& manifest, Split split,
                    const std::string& model_name);

void write_report_json(const EvalReport& report, const std::string& path);
EvalReport read_report_json(const std::string& path);
void write_report_csv(const EvalReport& report, const std::string& path);

} // namespace packtherm

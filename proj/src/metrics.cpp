#include "packtherm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace packtherm {

namespace {
void check_same_grid(const ScalarField& a, const ScalarField& b, const char* op) {
    if (!a.spec().same_shape(b.spec()))
        throw Error(std::string(op) + ": fields are on different grids");
}
} // namespace

double mae(const ScalarField& pred, const ScalarField& truth) {
    check_same_grid(pred, truth, "mae");
    double acc = 0.0;
    for (int i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - truth[i]);
    return acc / pred.size();
}

double bmae(const ScalarField& pred, const ScalarField& truth, const BatteryMask& mask) {
    check_same_grid(pred, truth, "bmae");
    if (!pred.spec().same_shape(mask.spec)) throw Error("bmae: mask is on a different grid");
    double acc = 0.0;
    int n = 0;
    for (int i = 0; i < pred.size(); ++i) {
        if (!mask.flags[i]) continue;
        acc += std::abs(pred[i] - truth[i]);
        ++n;
    }
    if (n == 0) throw Error("bmae: empty battery mask");
    return acc / n;
}

double max_ae(const ScalarField& pred, const ScalarField& truth) {
    check_same_grid(pred, truth, "max_ae");
    double mx = 0.0;
    for (int i = 0; i < pred.size(); ++i) mx = std::max(mx, std::abs(pred[i] - truth[i]));
    return mx;
}

double mt_ae(const ScalarField& pred, const ScalarField& truth) {
    check_same_grid(pred, truth, "mt_ae");
    return std::abs(field_stats(pred).max - field_stats(truth).max);
}

EvalReport evaluate(const Predictor& predict, const DatasetManifest& manifest, Split split,
                    const std::string& model_name) {
    EvalReport report;
    report.model = model_name;
    report.split = to_string(split);
    for (const CaseEntry* c : manifest.split_cases(split)) {
        if (c->temperature_path.empty())
            throw Error("evaluate: case '" + c->id + "' has no ground-truth temperature");
        const Layout layout = read_layout(manifest.resolve(c->layout_path));
        const double w_m = layout.domain_w_mm * 1e-3, h_m = layout.domain_h_mm * 1e-3;
        const ScalarField lambda = read_field(manifest.resolve(c->conductivity_path), w_m, h_m);
        const ScalarField truth = read_field(manifest.resolve(c->temperature_path), w_m, h_m);
        const BatteryMask mask = battery_mask(layout, lambda.spec());
        const ScalarField pred = predict(lambda);
        CaseEval e;
        e.id = c->id;
        e.mae = mae(pred, truth);
        e.bmae = bmae(pred, truth, mask);
        e.max_ae = max_ae(pred, truth);
        e.mt_ae = mt_ae(pred, truth);
        report.cases.push_back(std::move(e));
    }
    if (report.cases.empty()) throw Error("evaluate: split has no cases");
    for (const auto& e : report.cases) {
        report.mean_mae += e.mae;
        report.mean_bmae += e.bmae;
        report.mean_max_ae += e.max_ae;
        report.mean_mt_ae += e.mt_ae;
    }
    const double n = static_cast<double>(report.cases.size());
    report.mean_mae /= n;
    report.mean_bmae /= n;
    report.mean_max_ae /= n;
    report.mean_mt_ae /= n;
    return report;
}

void write_report_json(const EvalReport& report, const std::string& path) {
    nlohmann::ordered_json j;
    j["model"] = report.model;
    j["split"] = report.split;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& e : report.cases) {
        rows.push_back({{"id", e.id},
                        {"mae", e.mae},
                        {"bmae", e.bmae},
                        {"max_ae", e.max_ae},
                        {"mt_ae", e.mt_ae}});
    }
    j["cases"] = rows;
    j["aggregate"] = {{"mae", report.mean_mae},
                      {"bmae", report.mean_bmae},
                      {"max_ae", report.mean_max_ae},
                      {"mt_ae", report.mean_mt_ae}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("write_report_json: cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
}

EvalReport read_report_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("read_report_json: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("read_report_json: malformed JSON in '" + path + "': " + e.what());
    }
    EvalReport r;
    try {
        r.model = j.at("model").get<std::string>();
        r.split = j.at("split").get<std::string>();
        for (const auto& row : j.at("cases")) {
            CaseEval e;
            e.id = row.at("id").get<std::string>();
            e.mae = row.at("mae").get<double>();
            e.bmae = row.at("bmae").get<double>();
            e.max_ae = row.at("max_ae").get<double>();
            e.mt_ae = row.at("mt_ae").get<double>();
            r.cases.push_back(std::move(e));
        }
        r.mean_mae = j.at("aggregate").at("mae").get<double>();
        r.mean_bmae = j.at("aggregate").at("bmae").get<double>();
        r.mean_max_ae = j.at("aggregate").at("max_ae").get<double>();
        r.mean_mt_ae = j.at("aggregate").at("mt_ae").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw Error("read_report_json: malformed report in '" + path + "': " + e.what());
    }
    return r;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("write_report_csv: cannot open '" + path + "' for writing");
    out << "id,mae,bmae,max_ae,mt_ae\n";
    char line[256];
    for (const auto& e : report.cases) {
        std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g,%.17g\n", e.id.c_str(), e.mae,
                      e.bmae, e.max_ae, e.mt_ae);
        out << line;
    }
}

} // namespace packtherm

#include "packtherm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "packtherm/render.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace packtherm {

GridSpec RunConfig::grid() const {
    return GridSpec(grid_rows, grid_cols, geometry.domain_w_mm * 1e-3,
                    geometry.domain_h_mm * 1e-3);
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : allowed)
            if (item.key() == k) { ok = true; break; }
        if (!ok) throw Error("run config: unknown key '" + item.key() + "' in " + where);
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig config_from_json(const json& j) {
    RunConfig cfg;
    check_keys(j, {"grid", "pack", "layout", "dataset", "solver", "backbone", "head", "train"},
               "top level");
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        check_keys(g, {"rows", "cols"}, "grid");
        maybe(g, "rows", cfg.grid_rows);
        maybe(g, "cols", cfg.grid_cols);
    }
    if (j.contains("pack")) {
        const auto& p = j.at("pack");
        check_keys(p, {"phi_b", "k", "lambda_b", "lambda_c", "t0"}, "pack");
        maybe(p, "phi_b", cfg.pack.phi_b);
        maybe(p, "k", cfg.pack.k);
        maybe(p, "lambda_b", cfg.pack.lambda_b);
        maybe(p, "lambda_c", cfg.pack.lambda_c);
        maybe(p, "t0", cfg.pack.t0);
    }
    if (j.contains("layout")) {
        const auto& l = j.at("layout");
        check_keys(l, {"cells", "domain_mm", "diameter_mm", "gap_cell_mm", "gap_wall_mm"},
                   "layout");
        maybe(l, "cells", cfg.cells);
        if (l.contains("domain_mm")) {
            cfg.geometry.domain_w_mm = l.at("domain_mm").at(0).get<double>();
            cfg.geometry.domain_h_mm = l.at("domain_mm").at(1).get<double>();
        }
        maybe(l, "diameter_mm", cfg.geometry.diameter_mm);
        maybe(l, "gap_cell_mm", cfg.geometry.gap_cell_mm);
        maybe(l, "gap_wall_mm", cfg.geometry.gap_wall_mm);
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        check_keys(d, {"pretrain", "labeled", "val", "test", "seed"}, "dataset");
        maybe(d, "pretrain", cfg.count_pretrain);
        maybe(d, "labeled", cfg.count_labeled);
        maybe(d, "val", cfg.count_val);
        maybe(d, "test", cfg.count_test);
        maybe(d, "seed", cfg.dataset_seed);
    }
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        check_keys(s, {"tolerance", "max_iterations"}, "solver");
        maybe(s, "tolerance", cfg.solver.tolerance);
        maybe(s, "max_iterations", cfg.solver.max_iterations);
    }
    if (j.contains("backbone")) {
        const auto& b = j.at("backbone");
        check_keys(b, {"widths", "groups", "out_scale"}, "backbone");
        if (b.contains("widths")) {
            const auto w = b.at("widths").get<std::vector<int>>();
            if (w.size() != 5) throw Error("run config: backbone.widths must have 5 entries");
            std::copy(w.begin(), w.end(), cfg.backbone.widths.begin());
        }
        maybe(b, "groups", cfg.backbone.groups);
        maybe(b, "out_scale", cfg.backbone.out_scale);
    }
    if (j.contains("head")) {
        const auto& h = j.at("head");
        check_keys(h, {"widths", "groups"}, "head");
        if (h.contains("widths")) {
            const auto w = h.at("widths").get<std::vector<int>>();
            if (w.size() != 4) throw Error("run config: head.widths must have 4 entries");
            std::copy(w.begin(), w.end(), cfg.head.widths.begin());
        }
        maybe(h, "groups", cfg.head.groups);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t,
                   {"epochs_pretrain", "epochs_posttrain", "lr0", "lr_decay", "batch_size",
                    "eta1", "eta2", "seed"},
                   "train");
        maybe(t, "epochs_pretrain", cfg.train.epochs_pretrain);
        maybe(t, "epochs_posttrain", cfg.train.epochs_posttrain);
        maybe(t, "lr0", cfg.train.lr0);
        maybe(t, "lr_decay", cfg.train.lr_decay);
        maybe(t, "batch_size", cfg.train.batch_size);
        maybe(t, "eta1", cfg.train.eta1);
        maybe(t, "eta2", cfg.train.eta2);
        maybe(t, "seed", cfg.train.seed);
    }
    // Derived normalization constants: keep the networks aligned with the physics.
    cfg.backbone.lambda_battery = cfg.pack.lambda_b;
    cfg.backbone.lambda_coolant = cfg.pack.lambda_c;
    cfg.backbone.out_offset = cfg.pack.t0;
    cfg.head.in_scale = cfg.backbone.out_scale;
    cfg.head.in_offset = cfg.pack.t0;

    validate_pack_config(cfg.pack);
    validate_backbone_config(cfg.backbone);
    validate_head_config(cfg.head);
    validate_train_config(cfg.train);
    cfg.grid(); // throws on a bad grid/domain combination
    return cfg;
}

ordered_json config_to_json(const RunConfig& cfg) {
    ordered_json j;
    j["grid"] = {{"rows", cfg.grid_rows}, {"cols", cfg.grid_cols}};
    j["pack"] = {{"phi_b", cfg.pack.phi_b},
                 {"k", cfg.pack.k},
                 {"lambda_b", cfg.pack.lambda_b},
                 {"lambda_c", cfg.pack.lambda_c},
                 {"t0", cfg.pack.t0}};
    j["layout"] = {{"cells", cfg.cells},
                   {"domain_mm", {cfg.geometry.domain_w_mm, cfg.geometry.domain_h_mm}},
                   {"diameter_mm", cfg.geometry.diameter_mm},
                   {"gap_cell_mm", cfg.geometry.gap_cell_mm},
                   {"gap_wall_mm", cfg.geometry.gap_wall_mm}};
    j["dataset"] = {{"pretrain", cfg.count_pretrain},
                    {"labeled", cfg.count_labeled},
                    {"val", cfg.count_val},
                    {"test", cfg.count_test},
                    {"seed", cfg.dataset_seed}};
    j["solver"] = {{"tolerance", cfg.solver.tolerance},
                   {"max_iterations", cfg.solver.max_iterations}};
    j["backbone"] = {{"widths", cfg.backbone.widths},
                     {"groups", cfg.backbone.groups},
                     {"out_scale", cfg.backbone.out_scale}};
    j["head"] = {{"widths", cfg.head.widths}, {"groups", cfg.head.groups}};
    j["train"] = {{"epochs_pretrain", cfg.train.epochs_pretrain},
                  {"epochs_posttrain", cfg.train.epochs_posttrain},
                  {"lr0", cfg.train.lr0},
                  {"lr_decay", cfg.train.lr_decay},
                  {"batch_size", cfg.train.batch_size},
                  {"eta1", cfg.train.eta1},
                  {"eta2", cfg.train.eta2},
                  {"seed", cfg.train.seed}};
    return j;
}

std::string case_id(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "case_%04d", i);
    return buf;
}

} // namespace

RunConfig read_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("read_run_config: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("read_run_config: malformed JSON in '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

void write_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("write_run_config: cannot open '" + path + "' for writing");
    out << config_to_json(cfg).dump(2) << "\n";
}

void generate_dataset(const RunConfig& cfg, const std::string& out_dir, bool force) {
    const fs::path root(out_dir);
    const fs::path manifest_path = root / "manifest.json";
    if (!force && fs::exists(manifest_path)) {
        std::cout << "dataset: " << manifest_path.string() << " exists, skipping generation\n";
        return;
    }
    fs::create_directories(root / "layouts");
    fs::create_directories(root / "fields");
    const GridSpec grid = cfg.grid();

    DatasetManifest manifest;
    manifest.base_dir = root.string();
    const int total = cfg.count_pretrain + cfg.count_labeled + cfg.count_val + cfg.count_test;
    // A batch run spanning hundreds of seeds needs headroom beyond the
    // single-layout default rejection budget.
    constexpr int kPlacementBudget = 1000000;
    for (int i = 0; i < total; ++i) {
        const std::string id = case_id(i);
        const Layout layout = generate_layout(cfg.dataset_seed + static_cast<uint64_t>(i),
                                              cfg.cells, cfg.geometry, kPlacementBudget);
        const std::string layout_rel = "layouts/" + id + ".layout.json";
        write_layout(layout, (root / layout_rel).string());
        const ScalarField lambda = rasterize_conductivity(layout, grid, cfg.pack);
        const std::string lambda_rel = "fields/" + id + ".lambda.tfld";
        write_field(lambda, (root / lambda_rel).string());

        CaseEntry e;
        e.id = id;
        e.layout_path = layout_rel;
        e.conductivity_path = lambda_rel;
        if (i < cfg.count_pretrain)
            e.split = Split::pretrain;
        else if (i < cfg.count_pretrain + cfg.count_labeled)
            e.split = Split::labeled;
        else if (i < cfg.count_pretrain + cfg.count_labeled + cfg.count_val)
            e.split = Split::val;
        else
            e.split = Split::test;
        manifest.cases.push_back(std::move(e));
    }
    write_manifest(manifest, manifest_path.string());
    std::cout << "dataset: wrote " << total << " cases to " << root.string() << std::endl;
}

int solve_dataset(const std::string& manifest_path, const std::string& kind,
                  const PackConfig& pack, const SolveOptions& opts,
                  const std::vector<Split>& splits, bool force, int workers) {
    DatasetManifest manifest = read_manifest(manifest_path);
    std::vector<Split> wanted = splits;
    if (wanted.empty()) wanted = {Split::labeled, Split::val, Split::test};

    std::vector<size_t> todo;
    for (size_t i = 0; i < manifest.cases.size(); ++i) {
        const CaseEntry& c = manifest.cases[i];
        if (std::find(wanted.begin(), wanted.end(), c.split) == wanted.end()) continue;
        if (!c.temperature_path.empty() && !force) continue;
        todo.push_back(i);
    }
    if (todo.empty()) return 0;

    auto solve_one = [&](size_t idx) {
        CaseEntry& c = manifest.cases[idx];
        const Layout layout = read_layout(manifest.resolve(c.layout_path));
        const double w_m = layout.domain_w_mm * 1e-3, h_m = layout.domain_h_mm * 1e-3;
        const ScalarField lambda = read_field(manifest.resolve(c.conductivity_path), w_m, h_m);
        const BatteryMask mask = battery_mask(layout, lambda.spec());
        ScalarField T = [&] {
            if (kind == "reference") return solve_reference(lambda, mask, pack, opts);
            if (kind == "lowfi") return solve_lowfi(lambda, mask, pack, opts);
            if (kind == "dense") return solve_dense(lambda, mask, pack, Discretization::reference);
            throw Error("solve_dataset: unknown solver kind '" + kind + "'");
        }();
        const std::string rel = "fields/" + c.id + ".T_" + kind + ".tfld";
        write_field(T, manifest.resolve(rel));
        c.temperature_path = rel;
    };

    if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min<int>(workers, static_cast<int>(todo.size())));
    if (workers == 1) {
        for (size_t idx : todo) solve_one(idx);
    } else {
        std::mutex mu;
        size_t next = 0;
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        for (int t = 0; t < workers; ++t) {
            pool.emplace_back([&]() {
                for (;;) {
                    size_t idx;
                    {
                        std::lock_guard<std::mutex> lock(mu);
                        if (next >= todo.size() || failure) return;
                        idx = todo[next++];
                    }
                    try {
                        solve_one(idx);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(mu);
                        if (!failure) failure = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }
    write_manifest(manifest, manifest_path);
    return static_cast<int>(todo.size());
}

// --- model files ---------------------------------------------------------------

void save_model(const ModelParams& params, const std::string& kind, const RunConfig& cfg,
                uint64_t seed, const std::string& path,
                const std::string& backbone_model_path) {
    save_params(params, path);
    ordered_json j;
    j["kind"] = kind;
    j["seed"] = seed;
    if (kind == "backbone" || kind == "supervised") {
        j["backbone"] = {{"widths", cfg.backbone.widths},
                         {"groups", cfg.backbone.groups},
                         {"out_scale", cfg.backbone.out_scale},
                         {"out_offset", cfg.backbone.out_offset},
                         {"lambda_battery", cfg.backbone.lambda_battery},
                         {"lambda_coolant", cfg.backbone.lambda_coolant}};
    } else if (kind == "head") {
        j["head"] = {{"widths", cfg.head.widths},
                     {"groups", cfg.head.groups},
                     {"in_scale", cfg.head.in_scale},
                     {"in_offset", cfg.head.in_offset}};
        j["backbone_model"] = backbone_model_path;
    } else {
        throw Error("save_model: unknown kind '" + kind + "'");
    }
    std::ofstream out(path + ".json", std::ios::trunc);
    if (!out) throw Error("save_model: cannot open '" + path + ".json' for writing");
    out << j.dump(2) << "\n";
}

LoadedModel load_model(const std::string& path) {
    std::ifstream in(path + ".json");
    if (!in) throw Error("load_model: missing sidecar '" + path + ".json'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("load_model: malformed sidecar for '" + path + "': " + e.what());
    }
    LoadedModel m;
    m.kind = j.at("kind").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    m.params = load_params(path);
    if (m.kind == "backbone" || m.kind == "supervised") {
        const auto& b = j.at("backbone");
        const auto w = b.at("widths").get<std::vector<int>>();
        std::copy(w.begin(), w.end(), m.backbone_cfg.widths.begin());
        m.backbone_cfg.groups = b.at("groups").get<int>();
        m.backbone_cfg.out_scale = b.at("out_scale").get<double>();
        m.backbone_cfg.out_offset = b.at("out_offset").get<double>();
        m.backbone_cfg.lambda_battery = b.at("lambda_battery").get<double>();
        m.backbone_cfg.lambda_coolant = b.at("lambda_coolant").get<double>();
    } else if (m.kind == "head") {
        const auto& h = j.at("head");
        const auto w = h.at("widths").get<std::vector<int>>();
        std::copy(w.begin(), w.end(), m.head_cfg.widths.begin());
        m.head_cfg.groups = h.at("groups").get<int>();
        m.head_cfg.in_scale = h.at("in_scale").get<double>();
        m.head_cfg.in_offset = h.at("in_offset").get<double>();
        m.backbone_model_path = j.at("backbone_model").get<std::string>();
    } else {
        throw Error("load_model: unknown kind '" + m.kind + "' in sidecar");
    }
    return m;
}

Predictor make_predictor(const std::string& model_path) {
    auto model = std::make_shared<LoadedModel>(load_model(model_path));
    if (model->kind == "backbone" || model->kind == "supervised") {
        return [model](const ScalarField& lambda) {
            return predict_backbone(model->params, model->backbone_cfg, lambda);
        };
    }
    // Head: resolve the backbone relative to the head file.
    fs::path bb(model->backbone_model_path);
    if (bb.is_relative()) bb = fs::path(model_path).parent_path() / bb;
    auto backbone = std::make_shared<LoadedModel>(load_model(bb.string()));
    if (backbone->kind != "backbone")
        throw Error("make_predictor: '" + bb.string() + "' is not a backbone model");
    return [model, backbone](const ScalarField& lambda) {
        return predict_pipeline(backbone->params, backbone->backbone_cfg, model->params,
                                model->head_cfg, lambda);
    };
}

// --- stages ---------------------------------------------------------------------

std::string run_pretrain(const RunConfig& cfg, const std::string& manifest_path, uint64_t seed,
                         const std::string& out_model, const std::string& log_path) {
    const DatasetManifest manifest = read_manifest(manifest_path);
    ModelParams backbone = build_backbone(cfg.backbone, seed);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const TrainLog log = pretrain(backbone, cfg.backbone, cfg.pack, manifest, tc);
    save_model(backbone, "backbone", cfg, seed, out_model);
    if (!log_path.empty()) write_train_log(log, log_path);
    std::cout << "pretrain: " << log.steps.size() << " steps, mean loss "
              << log.epoch_mean_loss.front() << " -> " << log.epoch_mean_loss.back() << " ("
              << log.wall_seconds << " s)" << std::endl;
    return out_model;
}

std::string run_posttrain(const RunConfig& cfg, const std::string& manifest_path,
                          const std::string& backbone_model, uint64_t seed,
                          const std::string& out_model, const std::string& log_path) {
    const DatasetManifest manifest = read_manifest(manifest_path);
    const LoadedModel bb = load_model(backbone_model);
    if (bb.kind != "backbone")
        throw Error("run_posttrain: '" + backbone_model + "' is not a backbone model");
    RunConfig cfg_local = cfg;
    cfg_local.head.in_scale = bb.backbone_cfg.out_scale;
    cfg_local.head.in_offset = bb.backbone_cfg.out_offset;
    ModelParams head = build_head(cfg_local.head, seed);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const TrainLog log = posttrain(bb.params, bb.backbone_cfg, head, cfg_local.head, manifest, tc);
    save_model(head, "head", cfg_local, seed, out_model,
               fs::relative(backbone_model, fs::path(out_model).parent_path()).string());
    if (!log_path.empty()) write_train_log(log, log_path);
    std::cout << "posttrain: " << log.steps.size() << " steps, mean loss "
              << log.epoch_mean_loss.front() << " -> " << log.epoch_mean_loss.back() << " ("
              << log.wall_seconds << " s)" << std::endl;
    return out_model;
}

std::string run_train_supervised(const RunConfig& cfg, const std::string& manifest_path,
                                 uint64_t seed, const std::string& out_model,
                                 const std::string& log_path) {
    const DatasetManifest manifest = read_manifest(manifest_path);
    ModelParams baseline = build_supervised_baseline(cfg.backbone, seed);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const TrainLog log = train_supervised(baseline, cfg.backbone, manifest, tc);
    save_model(baseline, "supervised", cfg, seed, out_model);
    if (!log_path.empty()) write_train_log(log, log_path);
    std::cout << "train-supervised: " << log.steps.size() << " steps, best val MAE "
              << *std::min_element(log.val_mae.begin(), log.val_mae.end()) << " ("
              << log.wall_seconds << " s)" << std::endl;
    return out_model;
}

EvalReport run_eval(const std::string& model_path, const std::string& manifest_path, Split split,
                    const std::string& report_path) {
    const DatasetManifest manifest = read_manifest(manifest_path);
    const Predictor predict = make_predictor(model_path);
    const EvalReport report =
        evaluate(predict, manifest, split, fs::path(model_path).filename().string());
    if (!report_path.empty()) write_report_json(report, report_path);
    return report;
}

void run_pipeline(const RunConfig& cfg, const std::string& out_dir, uint64_t seed, bool force) {
    if (seed == 0) seed = cfg.train.seed;
    const fs::path root(out_dir);
    fs::create_directories(root / "models");
    fs::create_directories(root / "logs");
    fs::create_directories(root / "reports");
    fs::create_directories(root / "renders");
    write_run_config(cfg, (root / "resolved_config.json").string());

    generate_dataset(cfg, out_dir, force);
    const std::string manifest_path = (root / "manifest.json").string();
    const int solved = solve_dataset(manifest_path, "reference", cfg.pack, cfg.solver, {}, force);
    std::cout << "solve: " << solved << " cases solved" << std::endl;

    const std::string tag = "_seed" + std::to_string(seed);
    const std::string backbone_model = (root / "models" / ("backbone" + tag + ".ptmw")).string();
    const std::string head_model = (root / "models" / ("head" + tag + ".ptmw")).string();
    const std::string sup_model = (root / "models" / ("supervised" + tag + ".ptmw")).string();

    if (force || !fs::exists(backbone_model))
        run_pretrain(cfg, manifest_path, seed, backbone_model,
                     (root / "logs" / ("pretrain" + tag + ".jsonl")).string());
    else
        std::cout << "pretrain: " << backbone_model << " exists, skipping\n";
    if (force || !fs::exists(head_model))
        run_posttrain(cfg, manifest_path, backbone_model, seed, head_model,
                      (root / "logs" / ("posttrain" + tag + ".jsonl")).string());
    else
        std::cout << "posttrain: " << head_model << " exists, skipping\n";
    if (force || !fs::exists(sup_model))
        run_train_supervised(cfg, manifest_path, seed, sup_model,
                             (root / "logs" / ("supervised" + tag + ".jsonl")).string());
    else
        std::cout << "train-supervised: " << sup_model << " exists, skipping\n";

    const EvalReport rep_backbone =
        run_eval(backbone_model, manifest_path, Split::test,
                 (root / "reports" / ("eval_backbone" + tag + ".json")).string());
    const EvalReport rep_pi = run_eval(head_model, manifest_path, Split::test,
                                       (root / "reports" / ("eval_pi" + tag + ".json")).string());
    const EvalReport rep_sup =
        run_eval(sup_model, manifest_path, Split::test,
                 (root / "reports" / ("eval_supervised" + tag + ".json")).string());

    ordered_json cmp;
    cmp["seed"] = seed;
    cmp["backbone"] = {{"mae", rep_backbone.mean_mae},
                       {"bmae", rep_backbone.mean_bmae},
                       {"max_ae", rep_backbone.mean_max_ae},
                       {"mt_ae", rep_backbone.mean_mt_ae}};
    cmp["pi"] = {{"mae", rep_pi.mean_mae},
                 {"bmae", rep_pi.mean_bmae},
                 {"max_ae", rep_pi.mean_max_ae},
                 {"mt_ae", rep_pi.mean_mt_ae}};
    cmp["supervised"] = {{"mae", rep_sup.mean_mae},
                         {"bmae", rep_sup.mean_bmae},
                         {"max_ae", rep_sup.mean_max_ae},
                         {"mt_ae", rep_sup.mean_mt_ae}};
    cmp["relative_mae_improvement"] =
        (rep_sup.mean_mae - rep_pi.mean_mae) / rep_sup.mean_mae;
    {
        std::ofstream out((root / "reports" / ("comparison" + tag + ".json")).string(),
                          std::ios::trunc);
        out << cmp.dump(2) << "\n";
    }
    std::printf("%-12s %10s %10s %10s %10s\n", "model", "MAE", "BMAE", "Max-AE", "MT-AE");
    std::printf("%-12s %10.4f %10.4f %10.4f %10.4f\n", "pi-cnn", rep_pi.mean_mae,
                rep_pi.mean_bmae, rep_pi.mean_max_ae, rep_pi.mean_mt_ae);
    std::printf("%-12s %10.4f %10.4f %10.4f %10.4f\n", "supervised", rep_sup.mean_mae,
                rep_sup.mean_bmae, rep_sup.mean_max_ae, rep_sup.mean_mt_ae);

    // Render the first test case: truth and pipeline prediction on one scale.
    const DatasetManifest manifest = read_manifest(manifest_path);
    const auto test_cases = manifest.split_cases(Split::test);
    if (!test_cases.empty()) {
        const CaseEntry& c = *test_cases.front();
        const Layout layout = read_layout(manifest.resolve(c.layout_path));
        const double w_m = layout.domain_w_mm * 1e-3, h_m = layout.domain_h_mm * 1e-3;
        const ScalarField lambda = read_field(manifest.resolve(c.conductivity_path), w_m, h_m);
        const ScalarField truth = read_field(manifest.resolve(c.temperature_path), w_m, h_m);
        const ScalarField pred = make_predictor(head_model)(lambda);
        const FieldStats ts = field_stats(truth);
        write_pgm(truth, (root / "renders" / (c.id + "_truth.pgm")).string(), ts.min, ts.max);
        write_pgm(pred, (root / "renders" / (c.id + "_pred.pgm")).string(), ts.min, ts.max);
    }
    std::cout << "pipeline: done\n";
}

} // namespace packtherm

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "packtherm/pipeline.hpp"
#include "packtherm/render.hpp"

namespace fs = std::filesystem;
using namespace packtherm;

namespace {

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return read_run_config(path);
}

std::vector<Split> parse_splits(const std::string& csv) {
    std::vector<Split> out;
    std::string cur;
    for (char ch : csv + ",") {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(split_from_string(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Battery-pack temperature-field pipeline: layout generation, steady-state "
                 "solvers, physics-informed training, and evaluation"};
    app.require_subcommand(1);

    // gen-layouts
    std::string gen_out, gen_config;
    int gen_count = -1, gen_cells = -1, gen_grid = -1;
    uint64_t gen_seed = 7;
    std::string gen_splits;
    bool gen_force = false;
    auto* gen = app.add_subcommand("gen-layouts", "Generate random layouts, conductivity rasters, "
                                                  "and a split manifest");
    gen->add_option("--out", gen_out, "Output dataset directory")->required();
    gen->add_option("--count", gen_count, "Total number of cases (overrides config splits)");
    gen->add_option("--seed", gen_seed, "Base seed; case i uses seed + i");
    gen->add_option("--cells", gen_cells, "Battery cells per layout");
    gen->add_option("--grid", gen_grid, "Grid resolution n (n-by-n)");
    gen->add_option("--splits", gen_splits, "Split sizes pretrain,labeled,val,test");
    gen->add_option("--config", gen_config, "Run-config JSON supplying the remaining settings");
    gen->add_flag("--force", gen_force, "Regenerate even if a manifest exists");

    // solve
    std::string solve_manifest, solve_kind = "reference", solve_splits_csv, solve_config;
    double solve_tol = -1.0;
    int solve_workers = 0;
    bool solve_force = false;
    auto* solve = app.add_subcommand("solve", "Solve ground-truth temperature fields for manifest "
                                              "cases");
    solve->add_option("--manifest", solve_manifest, "Manifest JSON")->required();
    solve->add_option("--solver", solve_kind, "reference | lowfi | dense");
    solve->add_option("--tol", solve_tol, "Relative residual tolerance");
    solve->add_option("--splits", solve_splits_csv, "Splits to solve (default labeled,val,test)");
    solve->add_option("--workers", solve_workers, "Parallel workers (default: cores)");
    solve->add_option("--config", solve_config, "Run-config JSON for pack constants");
    solve->add_flag("--force", solve_force, "Re-solve cases that already have a temperature");

    // training commands share flags
    struct TrainArgs {
        std::string manifest, config, out_model, log, backbone;
        uint64_t seed = 0;
    };
    TrainArgs pre, post, sup;
    auto add_train_opts = [](CLI::App* cmd, TrainArgs& a, bool with_backbone) {
        cmd->add_option("--manifest", a.manifest, "Manifest JSON")->required();
        cmd->add_option("--config", a.config, "Run-config JSON");
        cmd->add_option("--seed", a.seed, "Training seed (overrides config)");
        cmd->add_option("--out-model", a.out_model, "Output PTMW model path")->required();
        cmd->add_option("--log", a.log, "Training-log JSONL path");
        if (with_backbone)
            cmd->add_option("--backbone", a.backbone, "Trained backbone PTMW")->required();
    };
    auto* cmd_pre = app.add_subcommand("pretrain", "Physics-informed pre-training of the backbone "
                                                   "on the pretrain split (no labels)");
    add_train_opts(cmd_pre, pre, false);
    auto* cmd_post = app.add_subcommand("posttrain", "Supervised post-training of the projection "
                                                     "head with the backbone frozen");
    add_train_opts(cmd_post, post, true);
    auto* cmd_sup = app.add_subcommand("train-supervised", "Supervised baseline on the labeled "
                                                           "split");
    add_train_opts(cmd_sup, sup, false);

    // eval
    std::string eval_model, eval_manifest, eval_split = "test", eval_report, eval_baseline;
    auto* cmd_eval = app.add_subcommand("eval", "Evaluate a model on a split");
    cmd_eval->add_option("--model", eval_model, "PTMW model (backbone, head, or supervised)")
        ->required();
    cmd_eval->add_option("--manifest", eval_manifest, "Manifest JSON")->required();
    cmd_eval->add_option("--split", eval_split, "pretrain | labeled | val | test");
    cmd_eval->add_option("--report", eval_report, "EvalReport JSON output path");
    cmd_eval->add_option("--baseline", eval_baseline, "Second model for a comparison table");

    // render
    std::string render_field, render_out;
    double render_min = 0.0, render_max = 0.0;
    bool has_min = false, has_max = false;
    double render_width = 0.084, render_height = 0.084;
    auto* cmd_render = app.add_subcommand("render", "Render a TFLD field to a grayscale PGM");
    cmd_render->add_option("--field", render_field, "TFLD input")->required();
    cmd_render->add_option("--out", render_out, "PGM output")->required();
    cmd_render->add_option("--min", render_min, "Lower bound of the gray scale")
        ->each([&](const std::string&) { has_min = true; });
    cmd_render->add_option("--max", render_max, "Upper bound of the gray scale")
        ->each([&](const std::string&) { has_max = true; });
    cmd_render->add_option("--width", render_width, "Physical width [m] (metadata only)");
    cmd_render->add_option("--height", render_height, "Physical height [m] (metadata only)");

    // pipeline
    std::string pipe_config, pipe_out;
    uint64_t pipe_seed = 0;
    bool pipe_force = false;
    auto* cmd_pipe = app.add_subcommand("pipeline", "gen -> solve -> pretrain -> posttrain -> "
                                                    "train-supervised -> eval -> render from one "
                                                    "config file");
    cmd_pipe->add_option("--config", pipe_config, "Run-config JSON")->required();
    cmd_pipe->add_option("--out", pipe_out, "Output directory")->required();
    cmd_pipe->add_option("--train-seed", pipe_seed, "Training seed (overrides config)");
    cmd_pipe->add_flag("--force", pipe_force, "Redo stages whose outputs exist");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            RunConfig cfg = load_config_or_default(gen_config);
            if (gen_cells >= 0) cfg.cells = gen_cells;
            if (gen_grid > 0) cfg.grid_rows = cfg.grid_cols = gen_grid;
            cfg.dataset_seed = gen_seed;
            if (!gen_splits.empty()) {
                int a, b, c, d;
                if (std::sscanf(gen_splits.c_str(), "%d,%d,%d,%d", &a, &b, &c, &d) != 4)
                    throw Error("gen-layouts: --splits wants four comma-separated counts");
                cfg.count_pretrain = a;
                cfg.count_labeled = b;
                cfg.count_val = c;
                cfg.count_test = d;
            } else if (gen_count >= 0) {
                // Proportional to the desk default 200/20/20/50, remainder by
                // largest fraction (ties to the earlier split).
                const double fr[4] = {200.0 / 290, 20.0 / 290, 20.0 / 290, 50.0 / 290};
                int counts[4];
                double rem[4];
                int used = 0;
                for (int i = 0; i < 4; ++i) {
                    const double want = fr[i] * gen_count;
                    counts[i] = static_cast<int>(want);
                    rem[i] = want - counts[i];
                    used += counts[i];
                }
                while (used < gen_count) {
                    int best = 0;
                    for (int i = 1; i < 4; ++i)
                        if (rem[i] > rem[best]) best = i;
                    counts[best] += 1;
                    rem[best] = -1.0;
                    ++used;
                }
                cfg.count_pretrain = counts[0];
                cfg.count_labeled = counts[1];
                cfg.count_val = counts[2];
                cfg.count_test = counts[3];
            }
            generate_dataset(cfg, gen_out, gen_force);
        } else if (solve->parsed()) {
            RunConfig cfg = load_config_or_default(solve_config);
            SolveOptions opts = cfg.solver;
            if (solve_tol > 0.0) opts.tolerance = solve_tol;
            const auto splits =
                solve_splits_csv.empty() ? std::vector<Split>{} : parse_splits(solve_splits_csv);
            const int n = solve_dataset(solve_manifest, solve_kind, cfg.pack, opts, splits,
                                        solve_force, solve_workers);
            std::cout << "solve: " << n << " cases solved\n";
        } else if (cmd_pre->parsed()) {
            RunConfig cfg = load_config_or_default(pre.config);
            const uint64_t seed = pre.seed ? pre.seed : cfg.train.seed;
            run_pretrain(cfg, pre.manifest, seed, pre.out_model, pre.log);
        } else if (cmd_post->parsed()) {
            RunConfig cfg = load_config_or_default(post.config);
            const uint64_t seed = post.seed ? post.seed : cfg.train.seed;
            run_posttrain(cfg, post.manifest, post.backbone, seed, post.out_model, post.log);
        } else if (cmd_sup->parsed()) {
            RunConfig cfg = load_config_or_default(sup.config);
            const uint64_t seed = sup.seed ? sup.seed : cfg.train.seed;
            run_train_supervised(cfg, sup.manifest, seed, sup.out_model, sup.log);
        } else if (cmd_eval->parsed()) {
            const Split split = split_from_string(eval_split);
            const EvalReport r = run_eval(eval_model, eval_manifest, split, eval_report);
            std::printf("%-24s MAE %.6f  BMAE %.6f  Max-AE %.6f  MT-AE %.6f\n", r.model.c_str(),
                        r.mean_mae, r.mean_bmae, r.mean_max_ae, r.mean_mt_ae);
            if (!eval_baseline.empty()) {
                const EvalReport b = run_eval(eval_baseline, eval_manifest, split, "");
                std::printf("%-24s MAE %.6f  BMAE %.6f  Max-AE %.6f  MT-AE %.6f\n",
                            b.model.c_str(), b.mean_mae, b.mean_bmae, b.mean_max_ae,
                            b.mean_mt_ae);
                std::printf("relative MAE improvement: %.2f%%\n",
                            100.0 * (b.mean_mae - r.mean_mae) / b.mean_mae);
            }
        } else if (cmd_render->parsed()) {
            const ScalarField f = read_field(render_field, render_width, render_height);
            if (has_min || has_max) {
                const FieldStats s = field_stats(f);
                write_pgm(f, render_out, has_min ? render_min : s.min,
                          has_max ? render_max : s.max);
            } else {
                write_pgm(f, render_out);
            }
            std::cout << "render: wrote " << render_out << "\n";
        } else if (cmd_pipe->parsed()) {
            const RunConfig cfg = read_run_config(pipe_config);
            run_pipeline(cfg, pipe_out, pipe_seed, pipe_force);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

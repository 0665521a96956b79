#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "packtherm/pipeline.hpp"
#include "packtherm/render.hpp"

using namespace packtherm;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.grid_rows = cfg.grid_cols = 32;
    cfg.cells = 3;
    cfg.count_pretrain = 2;
    cfg.count_labeled = 1;
    cfg.count_val = 1;
    cfg.count_test = 1;
    cfg.backbone.widths = {8, 8, 8, 8, 8};
    cfg.head.widths = {8, 8, 8, 8};
    cfg.train.epochs_pretrain = 2;
    cfg.train.epochs_posttrain = 2;
    return cfg;
}

const char* cli_path() { return std::getenv("PACKTHERM_CLI"); }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(cli_path()) + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

} // namespace

TEST_CASE("run config json: round trip, defaults, unknown keys rejected") {
    const fs::path dir = fresh_dir("packtherm_pipe_cfg");
    RunConfig cfg = tiny_config();
    cfg.pack.t0 = 26.5;
    cfg.train.eta2 = 7.0;
    const std::string path = (dir / "cfg.json").string();
    write_run_config(cfg, path);
    const RunConfig back = read_run_config(path);
    CHECK(back.grid_rows == 32);
    CHECK(back.cells == 3);
    CHECK(back.pack.t0 == 26.5);
    CHECK(back.train.eta2 == 7.0);
    CHECK(back.backbone.widths[0] == 8);
    // Derived constants follow the pack section.
    CHECK(back.backbone.out_offset == 26.5);
    CHECK(back.head.in_offset == 26.5);

    std::ofstream((dir / "bad.json").string()) << R"({"grid": {"rows": 32, "colz": 32}})";
    CHECK_THROWS_WITH_AS(read_run_config((dir / "bad.json").string()),
                         doctest::Contains("unknown key"), Error);
    std::ofstream((dir / "bad2.json").string()) << R"({"solvers": {}})";
    CHECK_THROWS_WITH_AS(read_run_config((dir / "bad2.json").string()),
                         doctest::Contains("unknown key"), Error);
}

TEST_CASE("generate_dataset: deterministic bytes, idempotent reruns") {
    const RunConfig cfg = tiny_config();
    const fs::path a = fresh_dir("packtherm_pipe_gen_a");
    const fs::path b = fresh_dir("packtherm_pipe_gen_b");
    generate_dataset(cfg, a.string());
    generate_dataset(cfg, b.string());
    for (const char* rel :
         {"manifest.json", "layouts/case_0000.layout.json", "fields/case_0003.lambda.tfld"}) {
        CHECK(file_bytes(a / rel) == file_bytes(b / rel));
    }
    // A second run without force leaves the manifest untouched.
    const auto before = fs::last_write_time(a / "manifest.json");
    generate_dataset(cfg, a.string());
    CHECK(fs::last_write_time(a / "manifest.json") == before);
}

TEST_CASE("solve_dataset: fills temperatures, skips solved, fidelity gap shows") {
    const RunConfig cfg = tiny_config();
    const fs::path dir = fresh_dir("packtherm_pipe_solve");
    generate_dataset(cfg, dir.string());
    const std::string manifest_path = (dir / "manifest.json").string();

    const int solved = solve_dataset(manifest_path, "reference", cfg.pack, cfg.solver);
    CHECK(solved == 3); // labeled + val + test
    CHECK(solve_dataset(manifest_path, "reference", cfg.pack, cfg.solver) == 0);

    const DatasetManifest m = read_manifest(manifest_path);
    for (const CaseEntry& c : m.cases) {
        if (c.split == Split::pretrain) {
            CHECK(c.temperature_path.empty());
        } else {
            REQUIRE_FALSE(c.temperature_path.empty());
            const ScalarField T = read_field(m.resolve(c.temperature_path), 0.084, 0.084);
            CHECK(field_stats(T).min >= 25.0 - 1e-9);
        }
    }

    // The two fidelities genuinely differ on the same case.
    const CaseEntry* test_case = m.split_cases(Split::test).front();
    const ScalarField lam = read_field(m.resolve(test_case->conductivity_path), 0.084, 0.084);
    const Layout layout = read_layout(m.resolve(test_case->layout_path));
    const BatteryMask mask = battery_mask(layout, lam.spec());
    const ScalarField ref = read_field(m.resolve(test_case->temperature_path), 0.084, 0.084);
    const ScalarField lofi = solve_lowfi(lam, mask, cfg.pack);
    double gap = 0.0;
    for (int i = 0; i < ref.size(); ++i) gap += std::abs(ref[i] - lofi[i]);
    CHECK(gap / ref.size() > 0.0);

    // The dense oracle refuses grids beyond its cap through the same entry.
    RunConfig big = cfg;
    big.grid_rows = big.grid_cols = 64;
    big.count_pretrain = 1;
    big.count_labeled = 1;
    big.count_val = 0;
    big.count_test = 0;
    const fs::path bdir = fresh_dir("packtherm_pipe_solve_big");
    generate_dataset(big, bdir.string());
    CHECK_THROWS_WITH_AS(
        solve_dataset((bdir / "manifest.json").string(), "dense", big.pack, big.solver),
        doctest::Contains("32x32"), Error);
}

TEST_CASE("model save/load and predictors") {
    const RunConfig cfg = tiny_config();
    const fs::path dir = fresh_dir("packtherm_pipe_models");
    const ModelParams backbone = build_backbone(cfg.backbone, 11);
    const std::string bpath = (dir / "backbone.ptmw").string();
    save_model(backbone, "backbone", cfg, 11, bpath);
    const LoadedModel lb = load_model(bpath);
    CHECK(lb.kind == "backbone");
    CHECK(lb.seed == 11);
    CHECK(lb.backbone_cfg.widths[4] == 8);

    const ModelParams head = build_head(cfg.head, 12);
    const std::string hpath = (dir / "head.ptmw").string();
    save_model(head, "head", cfg, 12, hpath, "backbone.ptmw");

    const Layout layout = generate_layout(3, 3, Layout{}, 1000000);
    const ScalarField lam =
        rasterize_conductivity(layout, GridSpec::square(32, 0.084), cfg.pack);
    // Zero-initialized backbone predicts t0; the identity head preserves it.
    const ScalarField t_b = make_predictor(bpath)(lam);
    const ScalarField t_h = make_predictor(hpath)(lam);
    for (int i = 0; i < t_b.size(); ++i) {
        CHECK(t_b[i] == 25.0);
        CHECK(t_h[i] == t_b[i]);
    }

    CHECK_THROWS_WITH_AS(load_model((dir / "nope.ptmw").string()), doctest::Contains("sidecar"),
                         Error);
}

TEST_CASE("pgm render: header, scaling, degenerate range") {
    const fs::path dir = fresh_dir("packtherm_pipe_render");
    const GridSpec g(3, 3, 3.0, 3.0);
    std::vector<double> v = {0.0, 1.0, 0.5, 0.25, 0.75, 1.0, 0.0, 0.5, 1.0};
    const ScalarField f(g, v);
    const std::string path = (dir / "f.pgm").string();
    write_pgm(f, path, 0.0, 1.0);
    const std::string bytes = file_bytes(path);
    const std::string header = "P5\n3 3\n255\n";
    REQUIRE(bytes.substr(0, header.size()) == header);
    REQUIRE(bytes.size() == header.size() + 9);
    CHECK(static_cast<unsigned char>(bytes[header.size() + 0]) == 0);
    CHECK(static_cast<unsigned char>(bytes[header.size() + 1]) == 255);
    CHECK(static_cast<unsigned char>(bytes[header.size() + 2]) == 128);

    // Degenerate range renders mid-gray.
    write_pgm(ScalarField(g, 7.0), path);
    const std::string flat = file_bytes(path);
    for (size_t i = header.size(); i < flat.size(); ++i)
        CHECK(static_cast<unsigned char>(flat[i]) == 128);

    // Out-of-range values clamp.
    write_pgm(f, path, 0.25, 0.75);
    const std::string clamped = file_bytes(path);
    CHECK(static_cast<unsigned char>(clamped[header.size() + 0]) == 0);
    CHECK(static_cast<unsigned char>(clamped[header.size() + 1]) == 255);
}

TEST_CASE("cli: determinism, failure modes, and a miniature end-to-end run") {
    if (!cli_path()) {
        MESSAGE("PACKTHERM_CLI not set; skipping CLI integration cases");
        return;
    }
    const fs::path dir = fresh_dir("packtherm_pipe_cli");

    // gen-layouts twice with one seed: byte-identical outputs.
    const fs::path g1 = dir / "g1", g2 = dir / "g2";
    REQUIRE(run_cli("gen-layouts --out " + g1.string() +
                    " --count 5 --seed 7 --cells 3 --grid 64") == 0);
    REQUIRE(run_cli("gen-layouts --out " + g2.string() +
                    " --count 5 --seed 7 --cells 3 --grid 64") == 0);
    CHECK(file_bytes(g1 / "manifest.json") == file_bytes(g2 / "manifest.json"));
    CHECK(file_bytes(g1 / "layouts/case_0002.layout.json") ==
          file_bytes(g2 / "layouts/case_0002.layout.json"));
    CHECK(file_bytes(g1 / "fields/case_0004.lambda.tfld") ==
          file_bytes(g2 / "fields/case_0004.lambda.tfld"));

    // Infeasible cell count exits nonzero.
    CHECK(run_cli("gen-layouts --out " + (dir / "g_fail").string() +
                  " --count 1 --seed 1 --cells 100 --grid 32") != 0);

    // Dense solver on a grid beyond its cap exits nonzero.
    CHECK(run_cli("solve --manifest " + (g1 / "manifest.json").string() + " --solver dense") != 0);

    // Miniature pipeline from one config file.
    const RunConfig cfg = tiny_config();
    const std::string cfg_path = (dir / "mini.json").string();
    write_run_config(cfg, cfg_path);
    const fs::path out = dir / "run";
    REQUIRE(run_cli("pipeline --config " + cfg_path + " --out " + out.string()) == 0);
    CHECK(fs::exists(out / "resolved_config.json"));
    CHECK(fs::exists(out / "models/backbone_seed1.ptmw"));
    CHECK(fs::exists(out / "models/head_seed1.ptmw"));
    CHECK(fs::exists(out / "models/supervised_seed1.ptmw"));
    CHECK(fs::exists(out / "reports/comparison_seed1.json"));
    CHECK(fs::exists(out / "logs/pretrain_seed1.jsonl"));
    const EvalReport rep = read_report_json((out / "reports/eval_pi_seed1.json").string());
    CHECK(rep.cases.size() == 1);
    CHECK(rep.mean_mae >= 0.0);

    // The rendered PGM is well-formed.
    bool found_pgm = false;
    for (const auto& entry : fs::directory_iterator(out / "renders")) {
        const std::string bytes = file_bytes(entry.path());
        REQUIRE(bytes.substr(0, 3) == "P5\n");
        found_pgm = true;
    }
    CHECK(found_pgm);

    // Re-running the pipeline skips training (idempotent) and still succeeds.
    REQUIRE(run_cli("pipeline --config " + cfg_path + " --out " + out.string()) == 0);

    // eval with a baseline prints a comparison and exits cleanly.
    CHECK(run_cli("eval --model " + (out / "models/head_seed1.ptmw").string() + " --manifest " +
                  (out / "manifest.json").string() + " --split test --baseline " +
                  (out / "models/supervised_seed1.ptmw").string()) == 0);

    // render subcommand on a solved field.
    const DatasetManifest m = read_manifest((out / "manifest.json").string());
    const CaseEntry* tc = m.split_cases(Split::test).front();
    CHECK(run_cli("render --field " + m.resolve(tc->temperature_path) + " --out " +
                  (dir / "t.pgm").string()) == 0);
    CHECK(file_bytes(dir / "t.pgm").substr(0, 3) == "P5\n");
}

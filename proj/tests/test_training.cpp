#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "packtherm/metrics.hpp"
#include "packtherm/solver.hpp"
#include "packtherm/training.hpp"

using namespace packtherm;
namespace fs = std::filesystem;

namespace {

/// Small on-disk dataset for the loop smoke tests: cells on the desk domain,
/// coarse grid, reference ground truth for labeled/val splits.
struct MiniDataset {
    fs::path dir;
    std::string manifest_path;
};

MiniDataset make_mini_dataset(const std::string& name, int grid_n, int n_pretrain, int n_labeled,
                              int n_val, int cells, uint64_t seed0) {
    MiniDataset ds;
    ds.dir = fs::temp_directory_path() / name;
    fs::remove_all(ds.dir);
    fs::create_directories(ds.dir / "layouts");
    fs::create_directories(ds.dir / "fields");
    const PackConfig pack;
    const GridSpec grid = GridSpec::square(grid_n, 0.084);
    DatasetManifest manifest;
    manifest.base_dir = ds.dir.string();
    const int total = n_pretrain + n_labeled + n_val;
    for (int i = 0; i < total; ++i) {
        const std::string id = "mini_" + std::to_string(i);
        const Layout layout = generate_layout(seed0 + i, cells, Layout{}, 1000000);
        write_layout(layout, (ds.dir / "layouts" / (id + ".json")).string());
        const ScalarField lam = rasterize_conductivity(layout, grid, pack);
        const std::string lam_rel = "fields/" + id + ".lambda.tfld";
        write_field(lam, (ds.dir / lam_rel).string());
        CaseEntry e;
        e.id = id;
        e.layout_path = "layouts/" + id + ".json";
        e.conductivity_path = lam_rel;
        e.split = i < n_pretrain ? Split::pretrain
                                 : (i < n_pretrain + n_labeled ? Split::labeled : Split::val);
        if (e.split != Split::pretrain) {
            const ScalarField T = solve_reference(lam, battery_mask(layout, grid), pack);
            const std::string t_rel = "fields/" + id + ".T.tfld";
            write_field(T, (ds.dir / t_rel).string());
            e.temperature_path = t_rel;
        }
        manifest.cases.push_back(std::move(e));
    }
    ds.manifest_path = (ds.dir / "manifest.json").string();
    write_manifest(manifest, ds.manifest_path);
    return ds;
}

BackboneConfig tiny_backbone() {
    BackboneConfig cfg;
    cfg.widths = {8, 8, 8, 8, 8};
    return cfg;
}

HeadConfig tiny_head() {
    HeadConfig cfg;
    cfg.widths = {8, 8, 8, 8};
    return cfg;
}

} // namespace

TEST_CASE("complete_intensity: case split and detachment") {
    const PackConfig pack;
    const GridSpec g = GridSpec::square(8, 0.084);
    std::vector<double> lam_v(64, pack.lambda_c);
    for (int i = 0; i < 8; ++i) lam_v[i] = pack.lambda_b; // first row battery
    const ScalarField lam(g, lam_v);

    const Tensor t0_field = Tensor::full({1, 1, 8, 8}, pack.t0, true);
    const Tensor phi = complete_intensity(t0_field, lam, pack);
    CHECK_FALSE(phi.requires_grad());
    for (int i = 0; i < 8; ++i) CHECK(phi.val()[i] == pack.phi_b);
    for (int i = 8; i < 64; ++i) CHECK(phi.val()[i] == 0.0);

    // Coolant pixel at 26 degC with k = 3000: phi = -3000.
    Tensor warm = Tensor::full({1, 1, 8, 8}, 26.0, false);
    const Tensor phi_warm = complete_intensity(warm, lam, pack);
    CHECK(phi_warm.val()[63] == doctest::Approx(-3000.0).epsilon(1e-12));
    // Battery pixels ignore the temperature entirely.
    CHECK(phi_warm.val()[0] == pack.phi_b);
}

TEST_CASE("jacobi_target: constants are fixed points; hand value; solver fixed point") {
    const PackConfig pack;

    // Uniform conductivity, zero intensity, constant field c: T' = 4c.
    const GridSpec g(8, 8, 0.084, 0.084);
    const ScalarField lam_u(g, pack.lambda_c);
    const Tensor c_field = Tensor::full({1, 1, 8, 8}, 7.25, false);
    const Tensor zero_phi = Tensor::zeros({1, 1, 8, 8}, false);
    const Tensor tp = jacobi_target(c_field, lam_u, zero_phi, g.step);
    for (int i = 0; i < 64; ++i) CHECK(tp.val()[i] == doctest::Approx(4 * 7.25).epsilon(1e-14));

    // Uniform battery conductivity, phi_b, T == t0, h = 0.42 mm.
    const GridSpec g200 = GridSpec::square(200, 0.084);
    const ScalarField lam_b(g200, pack.lambda_b);
    const Tensor t0_field = Tensor::full({1, 1, 200, 200}, pack.t0, false);
    const Tensor phi_b = Tensor::full({1, 1, 200, 200}, pack.phi_b, false);
    const Tensor tp2 = jacobi_target(t0_field, lam_b, phi_b, g200.step);
    const double lift = 0.25 * tp2.val()[0] - pack.t0;
    CHECK(lift == doctest::Approx(6.07e-4).epsilon(2e-3));

    // The low-fidelity solution is the fixed point of T'/4.
    const GridSpec g64 = GridSpec::square(64, 0.084);
    const Layout layout = generate_layout(3, 8, Layout{}, 1000000);
    const ScalarField lam = rasterize_conductivity(layout, g64, pack);
    const BatteryMask mask = battery_mask(layout, g64);
    const ScalarField T = solve_lowfi(lam, mask, pack);
    const Tensor t_hat = Tensor::from_field(T);
    const Tensor phi = complete_intensity(t_hat, lam, pack);
    const Tensor tp3 = jacobi_target(t_hat, lam, phi, g64.step);
    double worst = 0.0;
    for (int i = 0; i < t_hat.numel(); ++i)
        worst = std::max(worst, std::abs(0.25 * tp3.val()[i] - t_hat.val()[i]));
    CHECK(worst <= 1e-8);
}

TEST_CASE("pixel_weights: ramp, degenerate fallback, endpoint") {
    std::vector<double> ramp(100);
    for (int i = 0; i < 100; ++i) ramp[i] = i / 99.0;
    const Tensor d = Tensor::from_values({1, 1, 10, 10}, ramp, false);
    const Tensor w = pixel_weights(d, 0.0, 10.0);
    for (int i = 0; i < 100; ++i)
        CHECK(w.val()[i] == doctest::Approx(10.0 * ramp[i]).epsilon(1e-12));
    CHECK(w.val()[0] == 0.0); // the min-delta pixel gets eta1 exactly

    const Tensor flat = Tensor::full({1, 1, 4, 4}, 0.123, false);
    const Tensor wf = pixel_weights(flat, 0.0, 10.0);
    for (int i = 0; i < 16; ++i) CHECK(wf.val()[i] == 5.0);
}

TEST_CASE("physics_loss: solved field scores ~0, zero-cell t0 scores 0, non-negative") {
    const PackConfig pack;
    const GridSpec g = GridSpec::square(64, 0.084);
    const Layout layout = generate_layout(12, 8, Layout{}, 1000000);
    const ScalarField lam = rasterize_conductivity(layout, g, pack);
    const BatteryMask mask = battery_mask(layout, g);
    const ScalarField T = solve_lowfi(lam, mask, pack);
    Tensor t_hat = Tensor::from_values({1, 1, 64, 64}, T.values(), true);
    Tape tape;
    const Tensor loss = physics_loss(&tape, t_hat, lam, pack, g.step, 0.0, 10.0);
    CHECK(loss.item() >= 0.0);
    CHECK(loss.item() <= 1e-8);

    const ScalarField lam_cool(g, pack.lambda_c);
    Tensor t0_hat = Tensor::full({1, 1, 64, 64}, pack.t0, true);
    Tape tape2;
    CHECK(physics_loss(&tape2, t0_hat, lam_cool, pack, g.step, 0.0, 10.0).item() == 0.0);

    std::mt19937_64 r(8);
    std::uniform_real_distribution<double> dist(20.0, 40.0);
    std::vector<double> rv(64 * 64);
    for (double& v : rv) v = dist(r);
    Tensor t_rand = Tensor::from_values({1, 1, 64, 64}, rv, true);
    Tape tape3;
    CHECK(physics_loss(&tape3, t_rand, lam, pack, g.step, 0.0, 10.0).item() >= 0.0);
}

TEST_CASE("physics_loss gradient: battery pixels pull, isolated coolant pixels do not") {
    const PackConfig pack;
    const GridSpec g = GridSpec::square(64, 0.084);
    const Layout layout = generate_layout(42, 8, Layout{}, 1000000);
    const ScalarField lam = rasterize_conductivity(layout, g, pack);
    const BatteryMask mask = battery_mask(layout, g);

    Tensor t_hat = Tensor::full({1, 1, 64, 64}, pack.t0, true);
    Tape tape;
    Tensor loss = physics_loss(&tape, t_hat, lam, pack, g.step, 0.0, 10.0);
    tape.backward(loss);

    // A battery pixel deep inside a cell: nonzero gradient. The domain corner
    // (far from every cell, neighbors all coolant): zero gradient.
    int battery_px = -1;
    for (int r = 2; r < 62 && battery_px < 0; ++r)
        for (int c = 2; c < 62 && battery_px < 0; ++c) {
            const int p = r * 64 + c;
            if (mask.flags[p] && mask.flags[p - 1] && mask.flags[p + 1] && mask.flags[p - 64] &&
                mask.flags[p + 64])
                battery_px = p;
        }
    REQUIRE(battery_px >= 0);
    CHECK(t_hat.grad()[battery_px] != 0.0);
    CHECK(t_hat.grad()[0] == 0.0);
}

TEST_CASE("physics_loss: scaling eta2 rescales the loss, not the gradient direction") {
    const PackConfig pack;
    const GridSpec g = GridSpec::square(32, 0.084);
    const Layout layout = generate_layout(6, 3, Layout{}, 1000000);
    const ScalarField lam = rasterize_conductivity(layout, g, pack);
    std::mt19937_64 r(5);
    std::uniform_real_distribution<double> dist(24.0, 30.0);
    std::vector<double> tv(32 * 32);
    for (double& v : tv) v = dist(r);

    auto grad_at = [&](double eta2, double& loss_out) {
        Tensor t_hat = Tensor::from_values({1, 1, 32, 32}, tv, true);
        Tape tape;
        Tensor loss = physics_loss(&tape, t_hat, lam, pack, g.step, 0.0, eta2);
        tape.backward(loss);
        loss_out = loss.item();
        return std::vector<double>(t_hat.grad(), t_hat.grad() + t_hat.numel());
    };
    double l10 = 0.0, l20 = 0.0;
    const auto g10 = grad_at(10.0, l10);
    const auto g20 = grad_at(20.0, l20);
    CHECK(l20 == doctest::Approx(2.0 * l10).epsilon(1e-12));
    for (size_t i = 0; i < g10.size(); ++i) {
        const double s10 = g10[i] > 0 ? 1.0 : (g10[i] < 0 ? -1.0 : 0.0);
        const double s20 = g20[i] > 0 ? 1.0 : (g20[i] < 0 ? -1.0 : 0.0);
        CHECK(s10 == s20);
    }
}

TEST_CASE("data_loss: zero at truth, degenerate arithmetic, shift invariance") {
    Tensor a = Tensor::full({1, 1, 8, 8}, 27.0, true);
    const Tensor truth = Tensor::full({1, 1, 8, 8}, 27.0, false);
    Tape tape;
    CHECK(data_loss(&tape, a, truth, 0.0, 10.0).item() == 0.0);

    // Uniform 0.1 gap: degenerate weights 5, loss 0.5.
    Tensor b = Tensor::full({1, 1, 8, 8}, 27.1, true);
    Tape tape2;
    CHECK(data_loss(&tape2, b, truth, 0.0, 10.0).item() == doctest::Approx(0.5).epsilon(1e-12));

    // Adding the same constant to both sides changes nothing.
    std::mt19937_64 r(3);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> pv(64), tv(64);
    for (int i = 0; i < 64; ++i) {
        pv[i] = 25.0 + dist(r);
        tv[i] = 25.0 + dist(r);
    }
    auto shift_all = [](std::vector<double> v, double c) {
        for (double& x : v) x += c;
        return v;
    };
    Tensor p0 = Tensor::from_values({1, 1, 8, 8}, pv, true);
    Tensor t0 = Tensor::from_values({1, 1, 8, 8}, tv, false);
    Tensor p1 = Tensor::from_values({1, 1, 8, 8}, shift_all(pv, 4.2), true);
    Tensor t1 = Tensor::from_values({1, 1, 8, 8}, shift_all(tv, 4.2), false);
    Tape ta, tb;
    CHECK(data_loss(&ta, p0, t0, 0.0, 10.0).item() ==
          doctest::Approx(data_loss(&tb, p1, t1, 0.0, 10.0).item()).epsilon(1e-12));
}

TEST_CASE("pretrain: smoke run decreases loss, lr trace, zero-cell dataset") {
    const auto ds = make_mini_dataset("packtherm_train_pre", 32, 1, 0, 0, 3, 500);
    const DatasetManifest manifest = read_manifest(ds.manifest_path);
    const BackboneConfig cfg = tiny_backbone();
    ModelParams backbone = build_backbone(cfg, 1);
    TrainConfig tc;
    tc.epochs_pretrain = 3;
    tc.seed = 9;
    const TrainLog log = pretrain(backbone, cfg, PackConfig{}, manifest, tc);
    REQUIRE(log.epoch_mean_loss.size() == 3);
    CHECK(log.epoch_mean_loss[1] < log.epoch_mean_loss[0]);
    CHECK(log.epoch_mean_loss[2] < log.epoch_mean_loss[1]);
    CHECK(log.epoch_lr[0] == doctest::Approx(1e-3).epsilon(1e-15));
    CHECK(log.epoch_lr[1] == doctest::Approx(8.5e-4).epsilon(1e-12));
    CHECK(log.epoch_lr[2] == doctest::Approx(7.225e-4).epsilon(1e-12));

    // The pre-trained backbone beats the constant-t0 predictor against the
    // low-fidelity truth of its own training layout.
    {
        const CaseEntry* cs = manifest.split_cases(Split::pretrain).front();
        const Layout layout = read_layout(manifest.resolve(cs->layout_path));
        const ScalarField lam =
            read_field(manifest.resolve(cs->conductivity_path), 0.084, 0.084);
        const ScalarField truth =
            solve_lowfi(lam, battery_mask(layout, lam.spec()), PackConfig{});
        const ScalarField pred = predict_backbone(backbone, cfg, lam);
        CHECK(mae(pred, truth) < mae(ScalarField(lam.spec(), 25.0), truth));
    }

    // Zero-cell-only dataset: identity-at-init nails the solution, loss 0.
    const auto ds0 = make_mini_dataset("packtherm_train_pre0", 32, 1, 0, 0, 0, 900);
    ModelParams backbone0 = build_backbone(cfg, 2);
    const TrainLog log0 =
        pretrain(backbone0, cfg, PackConfig{}, read_manifest(ds0.manifest_path), tc);
    CHECK(log0.steps.front().loss == 0.0);

    // Determinism: identical seeds give bitwise-identical loss sequences.
    ModelParams backbone_a = build_backbone(cfg, 1);
    const TrainLog log_a = pretrain(backbone_a, cfg, PackConfig{}, manifest, tc);
    REQUIRE(log_a.steps.size() == log.steps.size());
    for (size_t i = 0; i < log.steps.size(); ++i)
        CHECK(log_a.steps[i].loss == log.steps[i].loss);

    CHECK_THROWS_WITH_AS(
        pretrain(backbone, cfg, PackConfig{},
                 read_manifest(make_mini_dataset("packtherm_train_none", 32, 0, 1, 1, 2, 40)
                                   .manifest_path),
                 tc),
        doctest::Contains("empty"), Error);
}

TEST_CASE("posttrain: frozen backbone, identity-at-init loss, 1-case overfit") {
    const auto ds = make_mini_dataset("packtherm_train_post", 32, 1, 1, 1, 3, 600);
    const DatasetManifest manifest = read_manifest(ds.manifest_path);
    BackboneConfig cfg = tiny_backbone();
    const HeadConfig hcfg = tiny_head();
    // A zero-init backbone emits a constant field, which would leave the head
    // without any spatial signal to fit; random final weights give the head a
    // structured input the way a pretrained backbone would.
    cfg.zero_init_final = false;
    ModelParams backbone = build_backbone(cfg, 1);
    TrainConfig tc;
    tc.epochs_posttrain = 400;
    tc.lr0 = 0.01;
    tc.lr_decay = 0.999;
    tc.seed = 12;

    const uint64_t hash_before = params_hash(backbone);
    ModelParams head = build_head(hcfg, 2);
    const TrainLog log = posttrain(backbone, cfg, head, hcfg, manifest, tc);
    CHECK(params_hash(backbone) == hash_before);

    // At init the head is the identity, so the first-step loss must equal the
    // data loss of the raw backbone prediction.
    const CaseEntry* labeled = manifest.split_cases(Split::labeled).front();
    const Layout layout = read_layout(manifest.resolve(labeled->layout_path));
    const ScalarField lam =
        read_field(manifest.resolve(labeled->conductivity_path), 0.084, 0.084);
    const ScalarField truth =
        read_field(manifest.resolve(labeled->temperature_path), 0.084, 0.084);
    const Tensor t_hat = Tensor::from_field(predict_backbone(backbone, cfg, lam));
    Tape tape;
    const double direct = data_loss(&tape, t_hat, Tensor::from_field(truth), 0.0, 10.0).item();
    CHECK(log.steps.front().loss == doctest::Approx(direct).epsilon(1e-12));

    // Single labeled case, 25 epochs: the head overfits it.
    CHECK(log.epoch_mean_loss.back() < 0.1 * log.epoch_mean_loss.front());
}

TEST_CASE("train_supervised: checkpoint selection and empty-split error") {
    const auto ds = make_mini_dataset("packtherm_train_sup", 32, 0, 2, 1, 3, 700);
    const DatasetManifest manifest = read_manifest(ds.manifest_path);
    BackboneConfig cfg = tiny_backbone();
    ModelParams baseline = build_supervised_baseline(cfg, 4);
    TrainConfig tc;
    tc.epochs_pretrain = 3;
    tc.epochs_posttrain = 3; // 6 epochs total
    tc.seed = 5;
    const TrainLog log = train_supervised(baseline, cfg, manifest, tc);
    REQUIRE(log.val_mae.size() == 6);
    const double best = *std::min_element(log.val_mae.begin(), log.val_mae.end());
    CHECK(best <= log.val_mae.back());

    const auto ds_empty = make_mini_dataset("packtherm_train_sup0", 32, 1, 0, 1, 3, 800);
    ModelParams b2 = build_supervised_baseline(cfg, 4);
    CHECK_THROWS_WITH_AS(train_supervised(b2, cfg, read_manifest(ds_empty.manifest_path), tc),
                         doctest::Contains("empty labeled"), Error);
}

TEST_CASE("train log jsonl round trip") {
    TrainLog log;
    log.steps = {{1, "a", 0.5, 1e-3}, {1, "b", 0.25, 1e-3}, {2, "a", 0.125, 8.5e-4}};
    const fs::path dir = fs::temp_directory_path() / "packtherm_train_log";
    fs::create_directories(dir);
    const std::string path = (dir / "log.jsonl").string();
    write_train_log(log, path);
    const TrainLog back = read_train_log(path);
    REQUIRE(back.steps.size() == 3);
    CHECK(back.steps[1].case_id == "b");
    CHECK(back.steps[2].loss == 0.125);
    REQUIRE(back.epoch_mean_loss.size() == 2);
    CHECK(back.epoch_mean_loss[0] == doctest::Approx(0.375).epsilon(1e-15));
    CHECK(back.epoch_lr[1] == doctest::Approx(8.5e-4).epsilon(1e-15));
}

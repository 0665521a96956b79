#include "packtherm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <random>

#include <json.hpp>

#include "packtherm/layout.hpp"
#include "packtherm/metrics.hpp"

namespace packtherm {

void validate_train_config(const TrainConfig& c) {
    if (c.epochs_pretrain < 1 || c.epochs_posttrain < 1)
        throw Error("train config: epoch counts must be >= 1");
    if (!(c.lr0 > 0.0)) throw Error("train config: lr0 must be positive");
    if (!(c.lr_decay > 0.0)) throw Error("train config: lr_decay must be positive");
    if (c.batch_size != 1) throw Error("train config: only batch size 1 is supported");
    if (!(c.eta2 > 0.0)) throw Error("train config: eta2 must be positive");
    if (c.eta1 < 0.0) throw Error("train config: eta1 must be non-negative");
}

void write_train_log(const TrainLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("write_train_log: cannot open '" + path + "' for writing");
    for (const auto& s : log.steps) {
        nlohmann::ordered_json j;
        j["epoch"] = s.epoch;
        j["case"] = s.case_id;
        j["loss"] = s.loss;
        j["lr"] = s.lr;
        out << j.dump() << "\n";
    }
}

TrainLog read_train_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("read_train_log: cannot open '" + path + "'");
    TrainLog log;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error("read_train_log: malformed line in '" + path + "': " + e.what());
        }
        TrainStep s;
        s.epoch = j.at("epoch").get<int>();
        s.case_id = j.at("case").get<std::string>();
        s.loss = j.at("loss").get<double>();
        s.lr = j.at("lr").get<double>();
        log.steps.push_back(std::move(s));
    }
    // Rebuild the per-epoch summaries from the step records.
    int max_epoch = 0;
    for (const auto& s : log.steps) max_epoch = std::max(max_epoch, s.epoch);
    log.epoch_mean_loss.assign(max_epoch, 0.0);
    log.epoch_lr.assign(max_epoch, 0.0);
    std::vector<int> counts(max_epoch, 0);
    for (const auto& s : log.steps) {
        log.epoch_mean_loss[s.epoch - 1] += s.loss;
        log.epoch_lr[s.epoch - 1] = s.lr;
        counts[s.epoch - 1] += 1;
    }
    for (int e = 0; e < max_epoch; ++e)
        if (counts[e] > 0) log.epoch_mean_loss[e] /= counts[e];
    return log;
}

// --- loss building blocks ----------------------------------------------------

namespace {

inline int reflect(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

void check_loss_input(const Tensor& t, const ScalarField& lambda, const char* op) {
    const Shape4& s = t.shape();
    if (s.b != 1 || s.c != 1)
        throw Error(std::string(op) + ": expected a (1,1,H,W) tensor");
    if (s.h != lambda.rows() || s.w != lambda.cols())
        throw Error(std::string(op) + ": tensor and conductivity field shapes differ");
}

inline bool is_battery(double lam, const PackConfig& c) {
    return std::abs(lam - c.lambda_b) < std::abs(lam - c.lambda_c);
}

} // namespace

Tensor complete_intensity(const Tensor& t_hat, const ScalarField& lambda,
                          const PackConfig& config) {
    check_loss_input(t_hat, lambda, "complete_intensity");
    validate_pack_config(config);
    const int n = t_hat.numel();
    const double* th = t_hat.val();
    std::vector<double> phi(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        phi[i] = is_battery(lambda[i], config) ? config.phi_b
                                               : -config.k * (th[i] - config.t0);
    return Tensor::from_values(t_hat.shape(), std::move(phi), false);
}

Tensor jacobi_target(const Tensor& t_hat, const ScalarField& lambda, const Tensor& phi,
                     double h) {
    check_loss_input(t_hat, lambda, "jacobi_target");
    if (!(phi.shape() == t_hat.shape())) throw Error("jacobi_target: phi shape mismatch");
    const int m = lambda.rows(), n = lambda.cols();
    const double h2 = h * h;
    const double* T = t_hat.val();
    const double* ph = phi.val();
    std::vector<double> tp(static_cast<size_t>(m) * n);
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) {
            const int p = r * n + c;
            const int e = r * n + reflect(c + 1, n);
            const int w = r * n + reflect(c - 1, n);
            const int up = reflect(r + 1, m) * n + c;
            const int dn = reflect(r - 1, m) * n + c;
            const double lc = lambda[p];
            tp[p] = h2 * ph[p] / lc +
                    (lambda[e] - lambda[w]) * (T[e] - T[w]) / (4.0 * lc) +
                    (lambda[up] - lambda[dn]) * (T[up] - T[dn]) / (4.0 * lc) +
                    T[e] + T[w] + T[up] + T[dn];
        }
    }
    return Tensor::from_values(t_hat.shape(), std::move(tp), false);
}

Tensor pixel_weights(const Tensor& delta, double eta1, double eta2) {
    const int n = delta.numel();
    const double* d = delta.val();
    double lo = d[0], hi = d[0];
    for (int i = 1; i < n; ++i) {
        lo = std::min(lo, d[i]);
        hi = std::max(hi, d[i]);
    }
    std::vector<double> w(static_cast<size_t>(n));
    if (hi - lo < 1e-12) {
        std::fill(w.begin(), w.end(), eta1 + 0.5 * eta2);
    } else {
        const double inv = eta2 / (hi - lo);
        for (int i = 0; i < n; ++i) w[i] = eta1 + (d[i] - lo) * inv;
    }
    return Tensor::from_values(delta.shape(), std::move(w), false);
}

Tensor physics_loss(Tape* tape, const Tensor& t_hat, const ScalarField& lambda,
                    const PackConfig& config, double h, double eta1, double eta2) {
    const Tensor det = t_hat.detach();
    const Tensor phi = complete_intensity(det, lambda, config);
    const Tensor tp = jacobi_target(det, lambda, phi, h);
    const int n = t_hat.numel();
    std::vector<double> target(static_cast<size_t>(n)), delta(static_cast<size_t>(n));
    const double* T = det.val();
    const double* tpv = tp.val();
    for (int i = 0; i < n; ++i) {
        target[i] = 0.25 * tpv[i];
        delta[i] = std::abs(T[i] - target[i]);
    }
    const Tensor target_t = Tensor::from_values(t_hat.shape(), std::move(target), false);
    const Tensor w = pixel_weights(Tensor::from_values(t_hat.shape(), std::move(delta), false),
                                   eta1, eta2);
    return weighted_l1(tape, t_hat, target_t, w);
}

Tensor data_loss(Tape* tape, const Tensor& t_tilde, const Tensor& t_truth, double eta1,
                 double eta2) {
    if (!(t_tilde.shape() == t_truth.shape())) throw Error("data_loss: shape mismatch");
    const Tensor truth = t_truth.detach();
    const int n = t_tilde.numel();
    std::vector<double> delta(static_cast<size_t>(n));
    const double* a = t_tilde.val();
    const double* b = truth.val();
    for (int i = 0; i < n; ++i) delta[i] = std::abs(a[i] - b[i]);
    const Tensor w = pixel_weights(Tensor::from_values(t_tilde.shape(), std::move(delta), false),
                                   eta1, eta2);
    return weighted_l1(tape, t_tilde, truth, w);
}

// --- training loops -----------------------------------------------------------

namespace {

struct CaseData {
    std::string id;
    GridSpec spec;
    Tensor lambda_tensor;
    ScalarField lambda;
    std::optional<ScalarField> truth;
    std::optional<Tensor> truth_tensor;
};

std::vector<CaseData> load_cases(const DatasetManifest& manifest, Split split,
                                 bool need_truth, const char* op) {
    std::vector<CaseData> out;
    for (const CaseEntry* c : manifest.split_cases(split)) {
        const Layout layout = read_layout(manifest.resolve(c->layout_path));
        const double w_m = layout.domain_w_mm * 1e-3, h_m = layout.domain_h_mm * 1e-3;
        ScalarField lambda = read_field(manifest.resolve(c->conductivity_path), w_m, h_m);
        CaseData d{c->id, lambda.spec(), Tensor::from_field(lambda), std::move(lambda),
                   std::nullopt, std::nullopt};
        if (!c->temperature_path.empty()) {
            d.truth = read_field(manifest.resolve(c->temperature_path), w_m, h_m);
            d.truth_tensor = Tensor::from_field(*d.truth);
        } else if (need_truth) {
            throw Error(std::string(op) + ": case '" + c->id + "' has no ground-truth temperature");
        }
        out.push_back(std::move(d));
    }
    if (out.empty())
        throw Error(std::string(op) + ": empty " + to_string(split) + " split");
    return out;
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

std::vector<std::vector<double>> snapshot_values(const ModelParams& p) {
    std::vector<std::vector<double>> snap;
    for (const auto& item : p.items)
        snap.emplace_back(item.value.val(), item.value.val() + item.value.numel());
    return snap;
}

void restore_values(ModelParams& p, const std::vector<std::vector<double>>& snap) {
    for (size_t i = 0; i < p.items.size(); ++i)
        std::copy(snap[i].begin(), snap[i].end(), p.items[i].value.val());
}

} // namespace

TrainLog pretrain(ModelParams& backbone, const BackboneConfig& bc, const PackConfig& pack,
                  const DatasetManifest& manifest, const TrainConfig& tc) {
    validate_train_config(tc);
    Timer timer;
    auto cases = load_cases(manifest, Split::pretrain, false, "pretrain");
    std::mt19937_64 rng(tc.seed);
    std::vector<size_t> order(cases.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainLog log;
    double lr = tc.lr0;
    for (int epoch = 1; epoch <= tc.epochs_pretrain; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (size_t idx : order) {
            const CaseData& cd = cases[idx];
            Tape tape;
            Tensor t_hat = forward_backbone(&tape, backbone, bc, cd.lambda_tensor);
            Tensor loss = physics_loss(&tape, t_hat, cd.lambda, pack, cd.spec.step,
                                       tc.eta1, tc.eta2);
            if (!std::isfinite(loss.item()))
                throw Error("pretrain: non-finite loss at case '" + cd.id + "'");
            backbone.zero_grads();
            tape.backward(loss);
            adam_step(backbone, lr);
            log.steps.push_back({epoch, cd.id, loss.item(), lr});
            sum += loss.item();
        }
        log.epoch_mean_loss.push_back(sum / cases.size());
        log.epoch_lr.push_back(lr);
        lr = decay_lr(lr, tc.lr_decay);
    }
    log.wall_seconds = timer.seconds();
    return log;
}

TrainLog posttrain(const ModelParams& backbone, const BackboneConfig& bc, ModelParams& head,
                   const HeadConfig& hc, const DatasetManifest& manifest, const TrainConfig& tc) {
    validate_train_config(tc);
    Timer timer;
    auto cases = load_cases(manifest, Split::labeled, true, "posttrain");
    const uint64_t hash_before = params_hash(backbone);

    // The backbone is frozen, so its prediction per case is a constant.
    std::vector<Tensor> t_hats;
    t_hats.reserve(cases.size());
    for (const auto& cd : cases)
        t_hats.push_back(forward_backbone(nullptr, backbone, bc, cd.lambda_tensor));

    std::mt19937_64 rng(tc.seed);
    std::vector<size_t> order(cases.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainLog log;
    double lr = tc.lr0;
    for (int epoch = 1; epoch <= tc.epochs_posttrain; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (size_t idx : order) {
            const CaseData& cd = cases[idx];
            Tape tape;
            Tensor t_tilde = forward_head(&tape, head, hc, t_hats[idx]);
            Tensor loss = data_loss(&tape, t_tilde, *cd.truth_tensor, tc.eta1, tc.eta2);
            if (!std::isfinite(loss.item()))
                throw Error("posttrain: non-finite loss at case '" + cd.id + "'");
            head.zero_grads();
            tape.backward(loss);
            adam_step(head, lr);
            log.steps.push_back({epoch, cd.id, loss.item(), lr});
            sum += loss.item();
        }
        log.epoch_mean_loss.push_back(sum / cases.size());
        log.epoch_lr.push_back(lr);
        lr = decay_lr(lr, tc.lr_decay);
    }
    if (params_hash(backbone) != hash_before)
        throw Error("posttrain: backbone parameters changed; frozen contract violated");
    log.wall_seconds = timer.seconds();
    return log;
}

TrainLog train_supervised(ModelParams& baseline, const BackboneConfig& bc,
                          const DatasetManifest& manifest, const TrainConfig& tc) {
    validate_train_config(tc);
    Timer timer;
    auto cases = load_cases(manifest, Split::labeled, true, "train_supervised");
    auto val_cases = load_cases(manifest, Split::val, true, "train_supervised");

    std::mt19937_64 rng(tc.seed);
    std::vector<size_t> order(cases.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    const int epochs = tc.epochs_pretrain + tc.epochs_posttrain;
    TrainLog log;
    double lr = tc.lr0;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_snapshot;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (size_t idx : order) {
            const CaseData& cd = cases[idx];
            Tape tape;
            Tensor pred = forward_backbone(&tape, baseline, bc, cd.lambda_tensor);
            Tensor loss = data_loss(&tape, pred, *cd.truth_tensor, tc.eta1, tc.eta2);
            if (!std::isfinite(loss.item()))
                throw Error("train_supervised: non-finite loss at case '" + cd.id + "'");
            baseline.zero_grads();
            tape.backward(loss);
            adam_step(baseline, lr);
            log.steps.push_back({epoch, cd.id, loss.item(), lr});
            sum += loss.item();
        }
        log.epoch_mean_loss.push_back(sum / cases.size());
        log.epoch_lr.push_back(lr);
        lr = decay_lr(lr, tc.lr_decay);

        double val_sum = 0.0;
        for (const auto& vd : val_cases) {
            const Tensor pred = forward_backbone(nullptr, baseline, bc, vd.lambda_tensor);
            val_sum += mae(pred.to_field(vd.spec), *vd.truth);
        }
        const double val = val_sum / val_cases.size();
        log.val_mae.push_back(val);
        if (val < best_val) {
            best_val = val;
            best_snapshot = snapshot_values(baseline);
        }
    }
    restore_values(baseline, best_snapshot);
    log.wall_seconds = timer.seconds();
    return log;
}

} // namespace packtherm

#include "packtherm/nets.hpp"

#include <cmath>
#include <random>

namespace packtherm {

void validate_backbone_config(const BackboneConfig& c) {
    if (c.groups < 1) throw Error("backbone config: groups must be >= 1");
    for (int w : c.widths) {
        if (w <= 0) throw Error("backbone config: widths must be positive");
        if (w % c.groups != 0)
            throw Error("backbone config: widths must be multiples of the group count");
    }
    if (!(c.out_scale > 0.0)) throw Error("backbone config: out_scale must be positive");
    if (c.lambda_battery == c.lambda_coolant)
        throw Error("backbone config: lambda_battery and lambda_coolant must differ");
}

void validate_head_config(const HeadConfig& c) {
    if (c.groups < 1) throw Error("head config: groups must be >= 1");
    for (int w : c.widths) {
        if (w <= 0) throw Error("head config: widths must be positive");
        if (w % c.groups != 0)
            throw Error("head config: widths must be multiples of the group count");
    }
    if (!(c.in_scale > 0.0)) throw Error("head config: in_scale must be positive");
}

namespace {

/// He-uniform fan-in initialization; bias zero.
Tensor init_conv_weight(std::mt19937_64& rng, int co, int ci, int k, bool zero) {
    std::vector<double> w(static_cast<size_t>(co) * ci * k * k, 0.0);
    if (!zero) {
        const double limit = std::sqrt(6.0 / (static_cast<double>(ci) * k * k));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (double& x : w) x = dist(rng);
    }
    return Tensor::from_values({co, ci, k, k}, std::move(w), true);
}

void add_conv(ModelParams& p, std::mt19937_64& rng, const std::string& prefix, int co, int ci,
              int k, bool zero = false) {
    p.items.emplace_back(prefix + ".weight", init_conv_weight(rng, co, ci, k, zero));
    p.items.emplace_back(prefix + ".bias", Tensor::zeros({1, co, 1, 1}, true));
}

void add_gn(ModelParams& p, const std::string& prefix, int channels) {
    p.items.emplace_back(prefix + ".scale", Tensor::full({1, channels, 1, 1}, 1.0, true));
    p.items.emplace_back(prefix + ".shift", Tensor::zeros({1, channels, 1, 1}, true));
}

struct PadPlan {
    int top = 0, bottom = 0, left = 0, right = 0;
};

/// Reflect-pad both spatial dims up to the next multiple of m, split across
/// the two sides so no side exceeds the mirror limit.
PadPlan pad_to_multiple(int h, int w, int m) {
    PadPlan p;
    const int ph = (h % m == 0) ? 0 : m - h % m;
    const int pw = (w % m == 0) ? 0 : m - w % m;
    p.top = ph / 2;
    p.bottom = ph - p.top;
    p.left = pw / 2;
    p.right = pw - p.left;
    return p;
}

struct ConvBlockRef {
    const Tensor *w, *b, *gn_scale, *gn_shift;
};

ConvBlockRef block_ref(const ModelParams& p, const std::string& conv, const std::string& gn) {
    return {&p.at(conv + ".weight").value, &p.at(conv + ".bias").value,
            &p.at(gn + ".scale").value, &p.at(gn + ".shift").value};
}

Tensor conv_gn_act(Tape* tape, const Tensor& x, const ConvBlockRef& r, int groups, bool use_gelu) {
    Tensor y = conv2d(tape, x, *r.w, *r.b);
    y = group_norm(tape, y, groups, *r.gn_scale, *r.gn_shift);
    return use_gelu ? gelu(tape, y) : relu(tape, y);
}

/// Binary battery indicator from the raw conductivity values.
Tensor conductivity_indicator(const Tensor& lambda_raw, double lb, double lc) {
    const int n = lambda_raw.numel();
    std::vector<double> v(static_cast<size_t>(n));
    const double* x = lambda_raw.val();
    for (int i = 0; i < n; ++i) v[i] = std::abs(x[i] - lb) < std::abs(x[i] - lc) ? 1.0 : 0.0;
    return Tensor::from_values(lambda_raw.shape(), std::move(v), false);
}

} // namespace

ModelParams build_backbone(const BackboneConfig& config, uint64_t seed) {
    validate_backbone_config(config);
    std::mt19937_64 rng(seed);
    ModelParams p;
    int ci = 1;
    for (int l = 0; l < 5; ++l) {
        const int w = config.widths[l];
        const std::string enc = "enc" + std::to_string(l);
        add_conv(p, rng, enc + ".conv0", w, ci, 3);
        add_gn(p, enc + ".gn0", w);
        add_conv(p, rng, enc + ".conv1", w, w, 3);
        add_gn(p, enc + ".gn1", w);
        ci = w;
    }
    for (int l = 4; l >= 0; --l) {
        const int w = config.widths[l];
        const int up_ch = l == 4 ? config.widths[4] : config.widths[l + 1];
        const std::string dec = "dec" + std::to_string(l);
        add_conv(p, rng, dec + ".conv0", w, up_ch + w, 3);
        add_gn(p, dec + ".gn0", w);
        add_conv(p, rng, dec + ".conv1", w, w, 3);
        add_gn(p, dec + ".gn1", w);
    }
    add_conv(p, rng, "out", 1, config.widths[0], 1, config.zero_init_final);
    return p;
}

ModelParams build_supervised_baseline(const BackboneConfig& config, uint64_t seed) {
    return build_backbone(config, seed);
}

ModelParams build_head(const HeadConfig& config, uint64_t seed) {
    validate_head_config(config);
    std::mt19937_64 rng(seed);
    ModelParams p;
    int ci = 1;
    for (int l = 0; l < 4; ++l) {
        const int w = config.widths[l];
        const std::string enc = "enc" + std::to_string(l);
        add_conv(p, rng, enc + ".conv", w, ci, 3);
        add_gn(p, enc + ".gn", w);
        ci = w;
    }
    for (int l = 3; l >= 0; --l) {
        const int w = config.widths[l];
        const int up_ch = l == 3 ? config.widths[3] : config.widths[l + 1];
        const std::string dec = "dec" + std::to_string(l);
        add_conv(p, rng, dec + ".conv", w, up_ch + w, 3);
        add_gn(p, dec + ".gn", w);
    }
    add_conv(p, rng, "out", 1, config.widths[0], 1, config.zero_init_final);
    return p;
}

Tensor forward_backbone(Tape* tape, const ModelParams& params, const BackboneConfig& config,
                        const Tensor& lambda_input) {
    if (lambda_input.shape().c != 1) throw Error("forward_backbone: input must be single-channel");
    const int H = lambda_input.shape().h, W = lambda_input.shape().w;
    Tensor x = conductivity_indicator(lambda_input, config.lambda_battery, config.lambda_coolant);
    const PadPlan pad = pad_to_multiple(H, W, 32);
    x = reflect_pad(tape, x, pad.top, pad.bottom, pad.left, pad.right);

    std::array<Tensor, 5> skips;
    for (int l = 0; l < 5; ++l) {
        const std::string enc = "enc" + std::to_string(l);
        x = conv_gn_act(tape, x, block_ref(params, enc + ".conv0", enc + ".gn0"), config.groups, true);
        x = conv_gn_act(tape, x, block_ref(params, enc + ".conv1", enc + ".gn1"), config.groups, true);
        skips[l] = x;
        x = avg_pool2(tape, x);
    }
    for (int l = 4; l >= 0; --l) {
        const std::string dec = "dec" + std::to_string(l);
        x = bilinear_up2(tape, x);
        x = concat_channels(tape, x, skips[l]);
        x = conv_gn_act(tape, x, block_ref(params, dec + ".conv0", dec + ".gn0"), config.groups, true);
        x = conv_gn_act(tape, x, block_ref(params, dec + ".conv1", dec + ".gn1"), config.groups, true);
    }
    x = conv2d(tape, x, params.at("out.weight").value, params.at("out.bias").value);
    x = crop(tape, x, pad.top, pad.left, H, W);
    return affine(tape, x, config.out_scale, config.out_offset);
}

Tensor forward_head(Tape* tape, const ModelParams& params, const HeadConfig& config,
                    const Tensor& t_hat) {
    if (t_hat.shape().c != 1) throw Error("forward_head: input must be single-channel");
    const int H = t_hat.shape().h, W = t_hat.shape().w;
    Tensor x = affine(tape, t_hat, 1.0 / config.in_scale, -config.in_offset / config.in_scale);
    const PadPlan pad = pad_to_multiple(H, W, 16);
    x = reflect_pad(tape, x, pad.top, pad.bottom, pad.left, pad.right);

    std::array<Tensor, 4> skips;
    for (int l = 0; l < 4; ++l) {
        const std::string enc = "enc" + std::to_string(l);
        x = conv_gn_act(tape, x, block_ref(params, enc + ".conv", enc + ".gn"), config.groups, false);
        skips[l] = x;
        x = avg_pool2(tape, x);
    }
    for (int l = 3; l >= 0; --l) {
        const std::string dec = "dec" + std::to_string(l);
        x = bilinear_up2(tape, x);
        x = concat_channels(tape, x, skips[l]);
        x = conv_gn_act(tape, x, block_ref(params, dec + ".conv", dec + ".gn"), config.groups, false);
    }
    x = conv2d(tape, x, params.at("out.weight").value, params.at("out.bias").value);
    x = crop(tape, x, pad.top, pad.left, H, W);
    return add(tape, t_hat, affine(tape, x, config.in_scale, 0.0));
}

ScalarField predict_backbone(const ModelParams& params, const BackboneConfig& config,
                             const ScalarField& lambda) {
    const Tensor out = forward_backbone(nullptr, params, config, Tensor::from_field(lambda));
    return out.to_field(lambda.spec());
}

ScalarField predict_pipeline(const ModelParams& backbone, const BackboneConfig& bc,
                             const ModelParams& head, const HeadConfig& hc,
                             const ScalarField& lambda) {
    const Tensor t_hat = forward_backbone(nullptr, backbone, bc, Tensor::from_field(lambda));
    const Tensor t_tilde = forward_head(nullptr, head, hc, t_hat);
    return t_tilde.to_field(lambda.spec());
}

int64_t backbone_param_count(const BackboneConfig& config) {
    int64_t n = 0;
    auto conv = [&n](int co, int ci, int k) { n += static_cast<int64_t>(co) * ci * k * k + co; };
    auto gn = [&n](int c) { n += 2 * static_cast<int64_t>(c); };
    int ci = 1;
    for (int l = 0; l < 5; ++l) {
        const int w = config.widths[l];
        conv(w, ci, 3);
        gn(w);
        conv(w, w, 3);
        gn(w);
        ci = w;
    }
    for (int l = 4; l >= 0; --l) {
        const int w = config.widths[l];
        const int up_ch = l == 4 ? config.widths[4] : config.widths[l + 1];
        conv(w, up_ch + w, 3);
        gn(w);
        conv(w, w, 3);
        gn(w);
    }
    conv(1, config.widths[0], 1);
    return n;
}

int64_t head_param_count(const HeadConfig& config) {
    int64_t n = 0;
    auto conv = [&n](int co, int ci, int k) { n += static_cast<int64_t>(co) * ci * k * k + co; };
    auto gn = [&n](int c) { n += 2 * static_cast<int64_t>(c); };
    int ci = 1;
    for (int l = 0; l < 4; ++l) {
        const int w = config.widths[l];
        conv(w, ci, 3);
        gn(w);
        ci = w;
    }
    for (int l = 3; l >= 0; --l) {
        const int w = config.widths[l];
        const int up_ch = l == 3 ? config.widths[3] : config.widths[l + 1];
        conv(w, up_ch + w, 3);
        gn(w);
    }
    conv(1, config.widths[0], 1);
    return n;
}

} // namespace packtherm

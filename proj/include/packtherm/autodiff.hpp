#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "packtherm/grid.hpp"

namespace packtherm {

struct Shape4 {
    int b = 1, c = 1, h = 1, w = 1;
    int numel() const { return b * c * h * w; }
    int plane() const { return h * w; }
    bool operator==(const Shape4& o) const {
        return b == o.b && c == o.c && h == o.h && w == o.w;
    }
    std::string str() const;
};

/// 4D (batch, channel, height, width) array with shared value/gradient
/// storage. Copies are views onto the same buffers; the gradient buffer
/// exists only when requires_grad is set.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape4 shape, bool requires_grad = false);
    static Tensor full(Shape4 shape, double value, bool requires_grad = false);
    static Tensor from_values(Shape4 shape, std::vector<double> values, bool requires_grad = false);
    static Tensor from_field(const ScalarField& f, bool requires_grad = false);

    const Shape4& shape() const { return shape_; }
    int numel() const { return shape_.numel(); }
    bool requires_grad() const { return requires_grad_; }

    double* val() { return val_->data(); }
    const double* val() const { return val_->data(); }
    double* grad();
    const double* grad() const;
    bool defined() const { return static_cast<bool>(val_); }

    void zero_grad();
    double item() const; ///< value of a one-element tensor

    ScalarField to_field(const GridSpec& spec) const; ///< 1x1xHxW -> field

    /// Same values, no gradient, not connected to any tape.
    Tensor detach() const;

private:
    Shape4 shape_;
    std::shared_ptr<std::vector<double>> val_;
    std::shared_ptr<std::vector<double>> grad_;
    bool requires_grad_ = false;
};

/// Reverse-mode tape. Operators append their output and a backward closure
/// when recording is wanted (tape pointer non-null and some input requires
/// gradient); backward runs the closures in reverse. Each backward call
/// zeroes the recorded intermediates, so leaf gradients accumulate by
/// exactly one unit per call until zero_grad.
class Tape {
public:
    void record(Tensor out, std::function<void()> fn) {
        nodes_.push_back({std::move(out), std::move(fn)});
    }
    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    /// Seeds d(loss)/d(loss) = 1 and propagates. loss must be a one-element
    /// tensor with requires_grad.
    void backward(Tensor& loss);

private:
    struct Node {
        Tensor out;
        std::function<void()> fn;
    };
    std::vector<Node> nodes_;
};

// --- operators ------------------------------------------------------------
// All take the tape first; pass nullptr for inference (no recording, outputs
// never require gradients).

/// Cross-correlation with weight (out_ch, in_ch, k, k), k in {1, 3}; 3x3 uses
/// one-pixel reflect padding (mirror about the border pixel, no duplication),
/// 1x1 uses none. bias has out_ch elements. Spatial size is preserved.
Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor group_norm(Tape* tape, const Tensor& input, int groups, const Tensor& scale,
                  const Tensor& shift, double eps = 1e-5);

Tensor gelu(Tape* tape, const Tensor& input); ///< exact x * Phi(x), Gaussian CDF
Tensor relu(Tape* tape, const Tensor& input);

Tensor avg_pool2(Tape* tape, const Tensor& input);    ///< 2x2 mean, stride 2; even dims
Tensor bilinear_up2(Tape* tape, const Tensor& input); ///< x2, align-corners = false

Tensor concat_channels(Tape* tape, const Tensor& a, const Tensor& b);
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor affine(Tape* tape, const Tensor& x, double scale, double offset); ///< scale*x + offset

/// Mirror-pads about the border pixels without duplicating them; each side's
/// pad must stay below the corresponding dim.
Tensor reflect_pad(Tape* tape, const Tensor& input, int top, int bottom, int left, int right);
Tensor crop(Tape* tape, const Tensor& input, int top, int left, int out_h, int out_w);

/// (1/numel) * sum w |pred - target| as a scalar tensor. Gradients propagate
/// to every input that requires them; training passes detached targets and
/// weights so only pred receives one.
Tensor weighted_l1(Tape* tape, const Tensor& pred, const Tensor& target, const Tensor& weights);

// --- parameters and optimizer ---------------------------------------------

/// Named trainable tensor with its Adam state.
struct Parameter {
    std::string name;
    Tensor value;
    std::vector<double> m, v; ///< first/second moment, same length as value
    int64_t step = 0;

    Parameter(std::string name_, Tensor value_);
};

struct ModelParams {
    std::vector<Parameter> items;

    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    int64_t value_count() const;
    void zero_grads();
};

/// Standard Adam with bias correction, applied to every parameter whose
/// gradient buffer is populated.
void adam_step(ModelParams& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

inline double decay_lr(double lr, double factor) { return lr * factor; }

/// FNV-1a over parameter names and value bytes; used for frozen-parameter
/// contracts.
uint64_t params_hash(const ModelParams& params);

/// PTMW parameter file: magic "PTMW", u32 version = 1, u32 count, then per
/// parameter: u32 name length + UTF-8 name, u32 rank, u32 dims, f32 LE
/// payload. Values are stored in 32-bit precision.
void save_params(const ModelParams& params, const std::string& path);
ModelParams load_params(const std::string& path);

} // namespace packtherm

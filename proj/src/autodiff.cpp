#include "packtherm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace packtherm {

std::string Shape4::str() const {
    return "(" + std::to_string(b) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

Tensor Tensor::zeros(Shape4 shape, bool requires_grad) {
    return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(Shape4 shape, double value, bool requires_grad) {
    Tensor t;
    t.shape_ = shape;
    t.val_ = std::make_shared<std::vector<double>>(static_cast<size_t>(shape.numel()), value);
    t.requires_grad_ = requires_grad;
    if (requires_grad)
        t.grad_ = std::make_shared<std::vector<double>>(static_cast<size_t>(shape.numel()), 0.0);
    return t;
}

Tensor Tensor::from_values(Shape4 shape, std::vector<double> values, bool requires_grad) {
    if (static_cast<int>(values.size()) != shape.numel())
        throw Error("Tensor: value count does not match shape " + shape.str());
    Tensor t;
    t.shape_ = shape;
    t.val_ = std::make_shared<std::vector<double>>(std::move(values));
    t.requires_grad_ = requires_grad;
    if (requires_grad)
        t.grad_ = std::make_shared<std::vector<double>>(static_cast<size_t>(shape.numel()), 0.0);
    return t;
}

Tensor Tensor::from_field(const ScalarField& f, bool requires_grad) {
    return from_values({1, 1, f.rows(), f.cols()}, f.values(), requires_grad);
}

double* Tensor::grad() {
    if (!grad_) throw Error("Tensor: gradient requested on a tensor without requires_grad");
    return grad_->data();
}

const double* Tensor::grad() const {
    if (!grad_) throw Error("Tensor: gradient requested on a tensor without requires_grad");
    return grad_->data();
}

void Tensor::zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1) throw Error("Tensor: item() requires a one-element tensor");
    return (*val_)[0];
}

ScalarField Tensor::to_field(const GridSpec& spec) const {
    if (shape_.b != 1 || shape_.c != 1 || shape_.h != spec.rows || shape_.w != spec.cols)
        throw Error("Tensor: shape " + shape_.str() + " does not match grid");
    return ScalarField(spec, *val_);
}

Tensor Tensor::detach() const {
    Tensor t;
    t.shape_ = shape_;
    t.val_ = val_;
    t.requires_grad_ = false;
    return t;
}

void Tape::backward(Tensor& loss) {
    if (loss.numel() != 1) throw Error("backward: loss must be a one-element tensor");
    if (!loss.requires_grad()) throw Error("backward: loss does not require gradients");
    for (auto& n : nodes_) n.out.zero_grad();
    loss.grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
}

// --- kernels ----------------------------------------------------------------

namespace {

constexpr int kBlock = 256; // columns per cache block in the matmul loops

inline void axpy(double* __restrict y, double a, const double* __restrict x, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double dot(const double* __restrict a, const double* __restrict b, int n) {
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

/// C (MxN) += A (MxK) * B (KxN), row-major.
void gemm_nn_acc(double* C, const double* A, const double* B, int M, int K, int N) {
    for (int j0 = 0; j0 < N; j0 += kBlock) {
        const int j1 = std::min(N, j0 + kBlock);
        for (int i = 0; i < M; ++i) {
            double* crow = C + static_cast<size_t>(i) * N;
            const double* arow = A + static_cast<size_t>(i) * K;
            for (int k = 0; k < K; ++k) {
                const double a = arow[k];
                const double* brow = B + static_cast<size_t>(k) * N;
                for (int j = j0; j < j1; ++j) crow[j] += a * brow[j];
            }
        }
    }
}

/// C (KxN) += A^T (A is MxK) * B (MxN).
void gemm_tn_acc(double* C, const double* A, const double* B, int M, int K, int N) {
    for (int j0 = 0; j0 < N; j0 += kBlock) {
        const int j1 = std::min(N, j0 + kBlock);
        for (int i = 0; i < M; ++i) {
            const double* arow = A + static_cast<size_t>(i) * K;
            const double* brow = B + static_cast<size_t>(i) * N;
            for (int k = 0; k < K; ++k) {
                const double a = arow[k];
                double* crow = C + static_cast<size_t>(k) * N;
                for (int j = j0; j < j1; ++j) crow[j] += a * brow[j];
            }
        }
    }
}

/// C (MxK) += A (MxN) * B^T (B is KxN).
void gemm_nt_acc(double* C, const double* A, const double* B, int M, int K, int N) {
    for (int i = 0; i < M; ++i) {
        const double* arow = A + static_cast<size_t>(i) * N;
        double* crow = C + static_cast<size_t>(i) * K;
        for (int k = 0; k < K; ++k) crow[k] += dot(arow, B + static_cast<size_t>(k) * N, N);
    }
}

inline int reflect(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

void check_finite(const Tensor& t, const char* op) {
#ifndef NDEBUG
    const double* v = t.val();
    for (int i = 0; i < t.numel(); ++i)
        if (!std::isfinite(v[i]))
            throw Error(std::string(op) + ": non-finite value in output");
#else
    (void)t;
    (void)op;
#endif
}

Tensor make_out(Shape4 shape, Tape* tape, bool any_input_grad) {
    return Tensor::zeros(shape, tape != nullptr && any_input_grad);
}

/// Gather offsets for a 3x3 reflect-padded window: map[kk * HW + p] is the
/// flat source pixel feeding kernel tap kk at output pixel p.
std::vector<int> window_map3(int H, int W) {
    std::vector<int> map(static_cast<size_t>(9) * H * W);
    int kk = 0;
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx, ++kk) {
            int* row = map.data() + static_cast<size_t>(kk) * H * W;
            for (int y = 0; y < H; ++y) {
                const int sy = reflect(y + dy, H) * W;
                for (int x = 0; x < W; ++x) row[y * W + x] = sy + reflect(x + dx, W);
            }
        }
    }
    return map;
}

} // namespace

// --- conv2d -----------------------------------------------------------------

Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& weight, const Tensor& bias) {
    const Shape4 xs = input.shape(), ws = weight.shape();
    if (ws.h != ws.w || (ws.h != 1 && ws.h != 3))
        throw Error("conv2d: kernel must be 1x1 or 3x3");
    if (ws.c != xs.c) throw Error("conv2d: input channels do not match weight");
    if (bias.numel() != ws.b) throw Error("conv2d: bias size does not match output channels");
    const int B = xs.b, Ci = xs.c, H = xs.h, W = xs.w;
    const int Co = ws.b, kk = ws.h * ws.w, K = Ci * kk;
    const int N = H * W;

    const bool needs = input.requires_grad() || weight.requires_grad() || bias.requires_grad();
    Tensor out = make_out({B, Co, H, W}, tape, needs);

    std::vector<int> map;
    if (kk == 9) map = window_map3(H, W);

    std::vector<double> col;
    if (kk == 9) col.resize(static_cast<size_t>(K) * N);
    for (int n = 0; n < B; ++n) {
        const double* x = input.val() + static_cast<size_t>(n) * Ci * N;
        double* o = out.val() + static_cast<size_t>(n) * Co * N;
        const double* colp = x;
        if (kk == 9) {
            for (int ci = 0; ci < Ci; ++ci)
                for (int t = 0; t < 9; ++t) {
                    const int* src = map.data() + static_cast<size_t>(t) * N;
                    double* dst = col.data() + (static_cast<size_t>(ci) * 9 + t) * N;
                    for (int p = 0; p < N; ++p) dst[p] = x[ci * N + src[p]];
                }
            colp = col.data();
        }
        for (int co = 0; co < Co; ++co)
            std::fill(o + static_cast<size_t>(co) * N, o + static_cast<size_t>(co + 1) * N,
                      bias.val()[co]);
        gemm_nn_acc(o, weight.val(), colp, Co, K, N);
    }
    check_finite(out, "conv2d");

    if (out.requires_grad()) {
        tape->record(out, [input, weight, bias, out, map = std::move(map), B, Ci, Co, kk, K, N]() {
            std::vector<double> col, dcol;
            if (kk == 9) col.resize(static_cast<size_t>(K) * N);
            const bool need_x = input.requires_grad();
            if (need_x && kk == 9) dcol.assign(static_cast<size_t>(K) * N, 0.0);
            for (int n = 0; n < B; ++n) {
                const double* x = input.val() + static_cast<size_t>(n) * Ci * N;
                const double* g = out.grad() + static_cast<size_t>(n) * Co * N;
                const double* colp = x;
                if (kk == 9) {
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int t = 0; t < 9; ++t) {
                            const int* src = map.data() + static_cast<size_t>(t) * N;
                            double* dst = col.data() + (static_cast<size_t>(ci) * 9 + t) * N;
                            for (int p = 0; p < N; ++p) dst[p] = x[ci * N + src[p]];
                        }
                    colp = col.data();
                }
                if (bias.requires_grad()) {
                    Tensor b = bias;
                    for (int co = 0; co < Co; ++co) {
                        double acc = 0.0;
                        const double* gr = g + static_cast<size_t>(co) * N;
#pragma omp simd reduction(+ : acc)
                        for (int p = 0; p < N; ++p) acc += gr[p];
                        b.grad()[co] += acc;
                    }
                }
                if (weight.requires_grad()) {
                    Tensor w = weight;
                    gemm_nt_acc(w.grad(), g, colp, Co, K, N);
                }
                if (need_x) {
                    Tensor xin = input;
                    double* dx = xin.grad() + static_cast<size_t>(n) * Ci * N;
                    if (kk == 1) {
                        gemm_tn_acc(dx, weight.val(), g, Co, K, N);
                    } else {
                        std::fill(dcol.begin(), dcol.end(), 0.0);
                        gemm_tn_acc(dcol.data(), weight.val(), g, Co, K, N);
                        for (int ci = 0; ci < Ci; ++ci)
                            for (int t = 0; t < 9; ++t) {
                                const int* src = map.data() + static_cast<size_t>(t) * N;
                                const double* dc =
                                    dcol.data() + (static_cast<size_t>(ci) * 9 + t) * N;
                                for (int p = 0; p < N; ++p) dx[ci * N + src[p]] += dc[p];
                            }
                    }
                }
            }
        });
    }
    return out;
}

// --- group_norm ---------------------------------------------------------------

Tensor group_norm(Tape* tape, const Tensor& input, int groups, const Tensor& scale,
                  const Tensor& shift, double eps) {
    const Shape4 xs = input.shape();
    if (groups < 1 || xs.c % groups != 0)
        throw Error("group_norm: channel count must be divisible by groups");
    if (scale.numel() != xs.c || shift.numel() != xs.c)
        throw Error("group_norm: scale/shift must have one entry per channel");
    const int B = xs.b, C = xs.c, HW = xs.plane();
    const int cg = C / groups;
    const int gn = cg * HW; // elements per group

    const bool needs = input.requires_grad() || scale.requires_grad() || shift.requires_grad();
    Tensor out = make_out(xs, tape, needs);

    auto mean_inv = std::make_shared<std::vector<double>>(static_cast<size_t>(2) * B * groups);
    for (int n = 0; n < B; ++n) {
        for (int g = 0; g < groups; ++g) {
            const double* x = input.val() + (static_cast<size_t>(n) * C + g * cg) * HW;
            double sum = 0.0, sq = 0.0;
#pragma omp simd reduction(+ : sum, sq)
            for (int i = 0; i < gn; ++i) {
                sum += x[i];
                sq += x[i] * x[i];
            }
            const double mu = sum / gn;
            const double var = std::max(sq / gn - mu * mu, 0.0);
            const double inv = 1.0 / std::sqrt(var + eps);
            (*mean_inv)[2 * (n * groups + g)] = mu;
            (*mean_inv)[2 * (n * groups + g) + 1] = inv;
            double* o = out.val() + (static_cast<size_t>(n) * C + g * cg) * HW;
            for (int c = 0; c < cg; ++c) {
                const double a = scale.val()[g * cg + c] * inv;
                const double b = shift.val()[g * cg + c] - scale.val()[g * cg + c] * mu * inv;
                for (int i = 0; i < HW; ++i) o[c * HW + i] = a * x[c * HW + i] + b;
            }
        }
    }
    check_finite(out, "group_norm");

    if (out.requires_grad()) {
        tape->record(out, [input, scale, shift, out, mean_inv, groups, B, C, HW, cg, gn]() {
            for (int n = 0; n < B; ++n) {
                for (int g = 0; g < groups; ++g) {
                    const double mu = (*mean_inv)[2 * (n * groups + g)];
                    const double inv = (*mean_inv)[2 * (n * groups + g) + 1];
                    const double* x = input.val() + (static_cast<size_t>(n) * C + g * cg) * HW;
                    const double* go = out.grad() + (static_cast<size_t>(n) * C + g * cg) * HW;
                    // dxhat, plus the two reductions the input gradient needs
                    double sum1 = 0.0, sum2 = 0.0;
                    for (int c = 0; c < cg; ++c) {
                        const double sc = scale.val()[g * cg + c];
                        double s1 = 0.0, s2 = 0.0;
#pragma omp simd reduction(+ : s1, s2)
                        for (int i = 0; i < HW; ++i) {
                            const double dxh = go[c * HW + i] * sc;
                            s1 += dxh;
                            s2 += dxh * (x[c * HW + i] - mu) * inv;
                        }
                        sum1 += s1;
                        sum2 += s2;
                    }
                    if (scale.requires_grad() || shift.requires_grad()) {
                        for (int c = 0; c < cg; ++c) {
                            double ds = 0.0, db = 0.0;
#pragma omp simd reduction(+ : ds, db)
                            for (int i = 0; i < HW; ++i) {
                                const double xh = (x[c * HW + i] - mu) * inv;
                                ds += go[c * HW + i] * xh;
                                db += go[c * HW + i];
                            }
                            if (scale.requires_grad()) {
                                Tensor s = scale;
                                s.grad()[g * cg + c] += ds;
                            }
                            if (shift.requires_grad()) {
                                Tensor s = shift;
                                s.grad()[g * cg + c] += db;
                            }
                        }
                    }
                    if (input.requires_grad()) {
                        Tensor xin = input;
                        double* dx = xin.grad() + (static_cast<size_t>(n) * C + g * cg) * HW;
                        for (int c = 0; c < cg; ++c) {
                            const double sc = scale.val()[g * cg + c];
                            for (int i = 0; i < HW; ++i) {
                                const double xh = (x[c * HW + i] - mu) * inv;
                                const double dxh = go[c * HW + i] * sc;
                                dx[c * HW + i] += inv * (dxh - sum1 / gn - xh * sum2 / gn);
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

// --- pointwise ----------------------------------------------------------------

namespace {
inline double gauss_cdf(double x) { return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)); }
inline double gauss_pdf(double x) { return std::exp(-0.5 * x * x) * 0.3989422804014327; }
} // namespace

Tensor gelu(Tape* tape, const Tensor& input) {
    Tensor out = make_out(input.shape(), tape, input.requires_grad());
    const double* x = input.val();
    double* o = out.val();
    const int n = input.numel();
    for (int i = 0; i < n; ++i) o[i] = x[i] * gauss_cdf(x[i]);
    check_finite(out, "gelu");
    if (out.requires_grad()) {
        tape->record(out, [input, out, n]() {
            Tensor xin = input;
            const double* x = xin.val();
            const double* g = out.grad();
            double* dx = xin.grad();
            for (int i = 0; i < n; ++i) dx[i] += g[i] * (gauss_cdf(x[i]) + x[i] * gauss_pdf(x[i]));
        });
    }
    return out;
}

Tensor relu(Tape* tape, const Tensor& input) {
    Tensor out = make_out(input.shape(), tape, input.requires_grad());
    const double* x = input.val();
    double* o = out.val();
    const int n = input.numel();
    for (int i = 0; i < n; ++i) o[i] = x[i] > 0.0 ? x[i] : 0.0;
    if (out.requires_grad()) {
        tape->record(out, [input, out, n]() {
            Tensor xin = input;
            const double* x = xin.val();
            const double* g = out.grad();
            double* dx = xin.grad();
            for (int i = 0; i < n; ++i)
                if (x[i] > 0.0) dx[i] += g[i];
        });
    }
    return out;
}

Tensor affine(Tape* tape, const Tensor& x, double scale, double offset) {
    Tensor out = make_out(x.shape(), tape, x.requires_grad());
    const double* xv = x.val();
    double* o = out.val();
    const int n = x.numel();
    for (int i = 0; i < n; ++i) o[i] = scale * xv[i] + offset;
    check_finite(out, "affine");
    if (out.requires_grad()) {
        tape->record(out, [x, out, scale, n]() {
            Tensor xin = x;
            axpy(xin.grad(), scale, out.grad(), n);
        });
    }
    return out;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) throw Error("add: shape mismatch");
    Tensor out = make_out(a.shape(), tape, a.requires_grad() || b.requires_grad());
    const int n = a.numel();
    const double* av = a.val();
    const double* bv = b.val();
    double* o = out.val();
    for (int i = 0; i < n; ++i) o[i] = av[i] + bv[i];
    check_finite(out, "add");
    if (out.requires_grad()) {
        tape->record(out, [a, b, out, n]() {
            if (a.requires_grad()) {
                Tensor t = a;
                axpy(t.grad(), 1.0, out.grad(), n);
            }
            if (b.requires_grad()) {
                Tensor t = b;
                axpy(t.grad(), 1.0, out.grad(), n);
            }
        });
    }
    return out;
}

// --- resampling -----------------------------------------------------------------

Tensor avg_pool2(Tape* tape, const Tensor& input) {
    const Shape4 xs = input.shape();
    if (xs.h % 2 != 0 || xs.w % 2 != 0) throw Error("avg_pool2: spatial dims must be even");
    const int B = xs.b, C = xs.c, H = xs.h, W = xs.w, Ho = H / 2, Wo = W / 2;
    Tensor out = make_out({B, C, Ho, Wo}, tape, input.requires_grad());
    for (int nc = 0; nc < B * C; ++nc) {
        const double* x = input.val() + static_cast<size_t>(nc) * H * W;
        double* o = out.val() + static_cast<size_t>(nc) * Ho * Wo;
        for (int y = 0; y < Ho; ++y)
            for (int x2 = 0; x2 < Wo; ++x2)
                o[y * Wo + x2] = 0.25 * (x[(2 * y) * W + 2 * x2] + x[(2 * y) * W + 2 * x2 + 1] +
                                         x[(2 * y + 1) * W + 2 * x2] +
                                         x[(2 * y + 1) * W + 2 * x2 + 1]);
    }
    check_finite(out, "avg_pool2");
    if (out.requires_grad()) {
        tape->record(out, [input, out, B, C, H, W, Ho, Wo]() {
            Tensor xin = input;
            for (int nc = 0; nc < B * C; ++nc) {
                double* dx = xin.grad() + static_cast<size_t>(nc) * H * W;
                const double* g = out.grad() + static_cast<size_t>(nc) * Ho * Wo;
                for (int y = 0; y < Ho; ++y)
                    for (int x2 = 0; x2 < Wo; ++x2) {
                        const double v = 0.25 * g[y * Wo + x2];
                        dx[(2 * y) * W + 2 * x2] += v;
                        dx[(2 * y) * W + 2 * x2 + 1] += v;
                        dx[(2 * y + 1) * W + 2 * x2] += v;
                        dx[(2 * y + 1) * W + 2 * x2 + 1] += v;
                    }
            }
        });
    }
    return out;
}

namespace {
struct LinTap {
    int i0, i1;
    double w0, w1;
};

std::vector<LinTap> up2_taps(int n_in) {
    std::vector<LinTap> taps(static_cast<size_t>(2) * n_in);
    for (int o = 0; o < 2 * n_in; ++o) {
        const double src = 0.5 * o - 0.25;
        const int i0f = static_cast<int>(std::floor(src));
        const double frac = src - i0f;
        LinTap t;
        t.i0 = std::clamp(i0f, 0, n_in - 1);
        t.i1 = std::clamp(i0f + 1, 0, n_in - 1);
        t.w0 = 1.0 - frac;
        t.w1 = frac;
        taps[o] = t;
    }
    return taps;
}
} // namespace

Tensor bilinear_up2(Tape* tape, const Tensor& input) {
    const Shape4 xs = input.shape();
    const int B = xs.b, C = xs.c, H = xs.h, W = xs.w, Ho = 2 * H, Wo = 2 * W;
    Tensor out = make_out({B, C, Ho, Wo}, tape, input.requires_grad());
    const auto ty = up2_taps(H);
    const auto tx = up2_taps(W);
    for (int nc = 0; nc < B * C; ++nc) {
        const double* x = input.val() + static_cast<size_t>(nc) * H * W;
        double* o = out.val() + static_cast<size_t>(nc) * Ho * Wo;
        for (int y = 0; y < Ho; ++y) {
            const LinTap& a = ty[y];
            for (int x2 = 0; x2 < Wo; ++x2) {
                const LinTap& b = tx[x2];
                o[y * Wo + x2] = a.w0 * (b.w0 * x[a.i0 * W + b.i0] + b.w1 * x[a.i0 * W + b.i1]) +
                                 a.w1 * (b.w0 * x[a.i1 * W + b.i0] + b.w1 * x[a.i1 * W + b.i1]);
            }
        }
    }
    check_finite(out, "bilinear_up2");
    if (out.requires_grad()) {
        tape->record(out, [input, out, ty, tx, B, C, H, W, Ho, Wo]() {
            Tensor xin = input;
            for (int nc = 0; nc < B * C; ++nc) {
                double* dx = xin.grad() + static_cast<size_t>(nc) * H * W;
                const double* g = out.grad() + static_cast<size_t>(nc) * Ho * Wo;
                for (int y = 0; y < Ho; ++y) {
                    const LinTap& a = ty[y];
                    for (int x2 = 0; x2 < Wo; ++x2) {
                        const LinTap& b = tx[x2];
                        const double gv = g[y * Wo + x2];
                        dx[a.i0 * W + b.i0] += a.w0 * b.w0 * gv;
                        dx[a.i0 * W + b.i1] += a.w0 * b.w1 * gv;
                        dx[a.i1 * W + b.i0] += a.w1 * b.w0 * gv;
                        dx[a.i1 * W + b.i1] += a.w1 * b.w1 * gv;
                    }
                }
            }
        });
    }
    return out;
}

// --- shape ops -------------------------------------------------------------------

Tensor concat_channels(Tape* tape, const Tensor& a, const Tensor& b) {
    const Shape4 as = a.shape(), bs = b.shape();
    if (as.b != bs.b || as.h != bs.h || as.w != bs.w)
        throw Error("concat_channels: batch/spatial shape mismatch");
    const int B = as.b, HW = as.plane(), Ca = as.c, Cb = bs.c;
    Tensor out = make_out({B, Ca + Cb, as.h, as.w}, tape, a.requires_grad() || b.requires_grad());
    for (int n = 0; n < B; ++n) {
        double* o = out.val() + static_cast<size_t>(n) * (Ca + Cb) * HW;
        std::memcpy(o, a.val() + static_cast<size_t>(n) * Ca * HW, sizeof(double) * Ca * HW);
        std::memcpy(o + static_cast<size_t>(Ca) * HW, b.val() + static_cast<size_t>(n) * Cb * HW,
                    sizeof(double) * Cb * HW);
    }
    if (out.requires_grad()) {
        tape->record(out, [a, b, out, B, HW, Ca, Cb]() {
            for (int n = 0; n < B; ++n) {
                const double* g = out.grad() + static_cast<size_t>(n) * (Ca + Cb) * HW;
                if (a.requires_grad()) {
                    Tensor t = a;
                    axpy(t.grad() + static_cast<size_t>(n) * Ca * HW, 1.0, g, Ca * HW);
                }
                if (b.requires_grad()) {
                    Tensor t = b;
                    axpy(t.grad() + static_cast<size_t>(n) * Cb * HW, 1.0,
                         g + static_cast<size_t>(Ca) * HW, Cb * HW);
                }
            }
        });
    }
    return out;
}

Tensor reflect_pad(Tape* tape, const Tensor& input, int top, int bottom, int left, int right) {
    const Shape4 xs = input.shape();
    if (top < 0 || bottom < 0 || left < 0 || right < 0 || top > xs.h - 1 || bottom > xs.h - 1 ||
        left > xs.w - 1 || right > xs.w - 1)
        throw Error("reflect_pad: each pad must be in [0, dim-1]");
    if (top == 0 && bottom == 0 && left == 0 && right == 0) return input;
    const int B = xs.b, C = xs.c, H = xs.h, W = xs.w;
    const int Ho = H + top + bottom, Wo = W + left + right;
    Tensor out = make_out({B, C, Ho, Wo}, tape, input.requires_grad());
    for (int nc = 0; nc < B * C; ++nc) {
        const double* x = input.val() + static_cast<size_t>(nc) * H * W;
        double* o = out.val() + static_cast<size_t>(nc) * Ho * Wo;
        for (int y = 0; y < Ho; ++y) {
            const int sy = reflect(y - top, H) * W;
            for (int x2 = 0; x2 < Wo; ++x2) o[y * Wo + x2] = x[sy + reflect(x2 - left, W)];
        }
    }
    if (out.requires_grad()) {
        tape->record(out, [input, out, B, C, H, W, Ho, Wo, top, left]() {
            Tensor xin = input;
            for (int nc = 0; nc < B * C; ++nc) {
                double* dx = xin.grad() + static_cast<size_t>(nc) * H * W;
                const double* g = out.grad() + static_cast<size_t>(nc) * Ho * Wo;
                for (int y = 0; y < Ho; ++y) {
                    const int sy = reflect(y - top, H) * W;
                    for (int x2 = 0; x2 < Wo; ++x2)
                        dx[sy + reflect(x2 - left, W)] += g[y * Wo + x2];
                }
            }
        });
    }
    return out;
}

Tensor crop(Tape* tape, const Tensor& input, int top, int left, int out_h, int out_w) {
    const Shape4 xs = input.shape();
    if (top < 0 || left < 0 || out_h < 1 || out_w < 1 || top + out_h > xs.h ||
        left + out_w > xs.w)
        throw Error("crop: window exceeds input size");
    if (top == 0 && left == 0 && out_h == xs.h && out_w == xs.w) return input;
    const int B = xs.b, C = xs.c, H = xs.h, W = xs.w;
    Tensor out = make_out({B, C, out_h, out_w}, tape, input.requires_grad());
    for (int nc = 0; nc < B * C; ++nc) {
        const double* x = input.val() + static_cast<size_t>(nc) * H * W;
        double* o = out.val() + static_cast<size_t>(nc) * out_h * out_w;
        for (int y = 0; y < out_h; ++y)
            std::memcpy(o + static_cast<size_t>(y) * out_w,
                        x + static_cast<size_t>(y + top) * W + left, sizeof(double) * out_w);
    }
    if (out.requires_grad()) {
        tape->record(out, [input, out, B, C, H, W, out_h, out_w, top, left]() {
            Tensor xin = input;
            for (int nc = 0; nc < B * C; ++nc) {
                double* dx = xin.grad() + static_cast<size_t>(nc) * H * W;
                const double* g = out.grad() + static_cast<size_t>(nc) * out_h * out_w;
                for (int y = 0; y < out_h; ++y)
                    axpy(dx + static_cast<size_t>(y + top) * W + left, 1.0,
                         g + static_cast<size_t>(y) * out_w, out_w);
            }
        });
    }
    return out;
}

Tensor weighted_l1(Tape* tape, const Tensor& pred, const Tensor& target, const Tensor& weights) {
    if (!(pred.shape() == target.shape()) || !(pred.shape() == weights.shape()))
        throw Error("weighted_l1: shape mismatch");
    const int n = pred.numel();
    const double* p = pred.val();
    const double* t = target.val();
    const double* w = weights.val();
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (int i = 0; i < n; ++i) acc += w[i] * std::abs(p[i] - t[i]);
    const bool needs = pred.requires_grad() || target.requires_grad() || weights.requires_grad();
    Tensor out = make_out({1, 1, 1, 1}, tape, needs);
    out.val()[0] = acc / n;
    check_finite(out, "weighted_l1");
    if (out.requires_grad()) {
        tape->record(out, [pred, target, weights, out, n]() {
            const double g = out.grad()[0] / n;
            const double* p = pred.val();
            const double* t = target.val();
            const double* w = weights.val();
            Tensor tp = pred, tt = target, tw = weights;
            double* dp = pred.requires_grad() ? tp.grad() : nullptr;
            double* dt = target.requires_grad() ? tt.grad() : nullptr;
            double* dw = weights.requires_grad() ? tw.grad() : nullptr;
            for (int i = 0; i < n; ++i) {
                const double diff = p[i] - t[i];
                const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                if (dp) dp[i] += g * w[i] * s;
                if (dt) dt[i] -= g * w[i] * s;
                if (dw) dw[i] += g * std::abs(diff);
            }
        });
    }
    return out;
}

// --- parameters --------------------------------------------------------------

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)) {
    if (!value.requires_grad()) throw Error("Parameter: value must require gradients");
    m.assign(static_cast<size_t>(value.numel()), 0.0);
    v.assign(static_cast<size_t>(value.numel()), 0.0);
}

Parameter& ModelParams::at(const std::string& name) {
    for (auto& p : items)
        if (p.name == name) return p;
    throw Error("ModelParams: no parameter named '" + name + "'");
}

const Parameter& ModelParams::at(const std::string& name) const {
    for (const auto& p : items)
        if (p.name == name) return p;
    throw Error("ModelParams: no parameter named '" + name + "'");
}

int64_t ModelParams::value_count() const {
    int64_t n = 0;
    for (const auto& p : items) n += p.value.numel();
    return n;
}

void ModelParams::zero_grads() {
    for (auto& p : items) p.value.zero_grad();
}

void adam_step(ModelParams& params, double lr, double beta1, double beta2, double eps) {
    for (auto& p : params.items) {
        p.step += 1;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(p.step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(p.step));
        const int n = p.value.numel();
        double* val = p.value.val();
        const double* g = p.value.grad();
        for (int i = 0; i < n; ++i) {
            p.m[i] = beta1 * p.m[i] + (1.0 - beta1) * g[i];
            p.v[i] = beta2 * p.v[i] + (1.0 - beta2) * g[i] * g[i];
            val[i] -= lr * (p.m[i] / bc1) / (std::sqrt(p.v[i] / bc2) + eps);
        }
    }
}

uint64_t params_hash(const ModelParams& params) {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, size_t len) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& p : params.items) {
        mix(p.name.data(), p.name.size() + 1);
        mix(p.value.val(), sizeof(double) * static_cast<size_t>(p.value.numel()));
    }
    return h;
}

namespace {
constexpr char kParamMagic[4] = {'P', 'T', 'M', 'W'};

void put_u32(std::string& buf, uint32_t v) {
    for (int k = 0; k < 4; ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
} // namespace

void save_params(const ModelParams& params, const std::string& path) {
    std::string buf;
    buf.append(kParamMagic, 4);
    put_u32(buf, 1);
    put_u32(buf, static_cast<uint32_t>(params.items.size()));
    for (const auto& p : params.items) {
        put_u32(buf, static_cast<uint32_t>(p.name.size()));
        buf.append(p.name);
        const Shape4& s = p.value.shape();
        put_u32(buf, 4);
        for (int d : {s.b, s.c, s.h, s.w}) put_u32(buf, static_cast<uint32_t>(d));
        for (int i = 0; i < p.value.numel(); ++i) {
            const float f = static_cast<float>(p.value.val()[i]);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(buf, bits);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("save_params: cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("save_params: short write to '" + path + "'");
}

ModelParams load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_params: cannot open '" + path + "'");
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const unsigned char* p = reinterpret_cast<const unsigned char*>(raw.data());
    size_t off = 0;
    auto need = [&](size_t bytes) {
        if (off + bytes > raw.size()) throw Error("load_params: truncated file '" + path + "'");
    };
    need(12);
    if (std::memcmp(p, kParamMagic, 4) != 0)
        throw Error("load_params: bad magic in '" + path + "'");
    if (get_u32(p + 4) != 1) throw Error("load_params: unsupported version in '" + path + "'");
    const uint32_t count = get_u32(p + 8);
    off = 12;
    ModelParams params;
    for (uint32_t i = 0; i < count; ++i) {
        need(4);
        const uint32_t name_len = get_u32(p + off);
        off += 4;
        need(name_len + 4);
        std::string name(reinterpret_cast<const char*>(p + off), name_len);
        off += name_len;
        const uint32_t rank = get_u32(p + off);
        off += 4;
        if (rank != 4) throw Error("load_params: unsupported rank in '" + path + "'");
        need(16);
        Shape4 s;
        s.b = static_cast<int>(get_u32(p + off));
        s.c = static_cast<int>(get_u32(p + off + 4));
        s.h = static_cast<int>(get_u32(p + off + 8));
        s.w = static_cast<int>(get_u32(p + off + 12));
        off += 16;
        const size_t n = static_cast<size_t>(s.numel());
        need(n * 4);
        std::vector<double> values(n);
        for (size_t k = 0; k < n; ++k) {
            const uint32_t bits = get_u32(p + off + 4 * k);
            float f;
            std::memcpy(&f, &bits, 4);
            values[k] = static_cast<double>(f);
        }
        off += n * 4;
        params.items.emplace_back(name, Tensor::from_values(s, std::move(values), true));
    }
    if (off != raw.size()) throw Error("load_params: trailing bytes in '" + path + "'");
    return params;
}

} // namespace packtherm

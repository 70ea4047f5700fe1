#include "codelab/eps_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <string>

namespace codelab {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::SiLU: return "silu";
        case Activation::Identity: return "identity";
    }
    return "unknown";
}

Activation activation_from_string(std::string_view name) {
    if (name == "silu") return Activation::SiLU;
    if (name == "identity") return Activation::Identity;
    throw InvalidArgument("unknown activation '" + std::string(name) + "'");
}

std::size_t ParamArrays::size() const {
    std::size_t n = 0;
    for (auto b : blocks()) n += b.size();
    return n;
}

std::array<std::size_t, 6> EpsModel::block_sizes() const {
    const auto h = static_cast<std::size_t>(hidden_width);
    const auto in = static_cast<std::size_t>(input_width());
    return {h * in, h, h * h, h, 2 * h, 2};
}

void EpsModel::validate() const {
    if (hidden_width < 1) throw InvalidArgument("hidden_width must be >= 1");
    if (embed_width < 2 || embed_width % 2 != 0) throw InvalidArgument("embed_width must be even and >= 2");
    if (!(freq_base > 0.0) || !std::isfinite(freq_base)) throw InvalidArgument("freq_base must be positive");
    const auto sizes = block_sizes();
    const auto blocks = params.blocks();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (blocks[i].size() != sizes[i])
            throw InvalidArgument("parameter block " + std::string(ParamArrays::kNames[i]) + " has " +
                                  std::to_string(blocks[i].size()) + " entries, expected " + std::to_string(sizes[i]));
        for (double v : blocks[i])
            if (!std::isfinite(v))
                throw InvalidArgument("non-finite value in parameter block " + std::string(ParamArrays::kNames[i]));
    }
}

EpsModel zero_model(int hidden_width, int embed_width, Activation activation, double freq_base) {
    EpsModel m;
    m.hidden_width = hidden_width;
    m.embed_width = embed_width;
    m.activation = activation;
    m.freq_base = freq_base;
    if (hidden_width < 1) throw InvalidArgument("hidden_width must be >= 1");
    if (embed_width < 2 || embed_width % 2 != 0) throw InvalidArgument("embed_width must be even and >= 2");
    const auto sizes = m.block_sizes();
    auto& p = m.params;
    std::vector<double>* blocks[] = {&p.w1, &p.b1, &p.w2, &p.b2, &p.w3, &p.b3};
    for (std::size_t i = 0; i < 6; ++i) blocks[i]->assign(sizes[i], 0.0);
    return m;
}

EpsModel init_model(int hidden_width, int embed_width, std::uint64_t seed, Activation activation, double freq_base) {
    EpsModel m = zero_model(hidden_width, embed_width, activation, freq_base);
    std::mt19937_64 rng(seed);
    auto fill = [&rng](std::vector<double>& v, int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& x : v) x = dist(rng);
    };
    auto& p = m.params;
    fill(p.w1, m.input_width());
    fill(p.b1, m.input_width());
    fill(p.w2, hidden_width);
    fill(p.b2, hidden_width);
    fill(p.w3, hidden_width);
    fill(p.b3, hidden_width);
    return m;
}

void time_embedding(const EpsModel& model, int t, int steps, std::span<double> out) {
    const int half = model.embed_width / 2;
    const double u = static_cast<double>(t) / static_cast<double>(steps);
    for (int k = 0; k < half; ++k) {
        const double freq = half == 1 ? 1.0 : std::pow(model.freq_base, static_cast<double>(k) / (half - 1));
        out[static_cast<std::size_t>(k)] = std::sin(u * freq);
        out[static_cast<std::size_t>(k + half)] = std::cos(u * freq);
    }
}

void time_bias(const EpsModel& model, int t, int steps, std::span<double> out) {
    const auto h = static_cast<std::size_t>(model.hidden_width);
    const auto e = static_cast<std::size_t>(model.embed_width);
    const auto in = static_cast<std::size_t>(model.input_width());
    std::vector<double> emb(e);
    time_embedding(model, t, steps, emb);
    for (std::size_t j = 0; j < h; ++j) {
        double acc = model.params.b1[j];
        const double* row = model.params.w1.data() + j * in + 2;
        for (std::size_t k = 0; k < e; ++k) acc += row[k] * emb[k];
        out[j] = acc;
    }
}

namespace {

// Eight packed doubles; GCC/Clang lower this to whatever SIMD width the
// target has.
typedef double Pack __attribute__((vector_size(64)));
typedef std::uint64_t PackBits __attribute__((vector_size(64)));
constexpr std::size_t kPack = 8;

inline Pack load_pack(const double* p) {
    Pack v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store_pack(double* p, Pack v) { std::memcpy(p, &v, sizeof v); }

// exp(x) from a round-to-nearest range reduction and a degree-12 Taylor
// polynomial (relative error ~2e-16). Written once for scalars and packs:
// both run the same IEEE operations, so every lane matches the scalar
// result exactly.
template <class V, class Bits>
inline V exp_det(V x) {
    constexpr double kLog2e = 1.4426950408889634;
    constexpr double kLn2Hi = 0x1.62e42fee00000p-1;
    constexpr double kLn2Lo = 0x1.a39ef35793c76p-33;
    constexpr double kShift = 0x1.8p52;
    const V zero{};
    x = x < -708.0 ? zero - 708.0 : x;
    x = x > 708.0 ? zero + 708.0 : x;
    const V kd = x * kLog2e + kShift;
    const V k = kd - kShift;
    const V r = (x - k * kLn2Hi) - k * kLn2Lo;
    V p = zero + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // The low mantissa bits of kd hold k; move them into the exponent field.
    const Bits bits = (std::bit_cast<Bits>(kd) << 52) + (Bits{} + (std::uint64_t{1023} << 52));
    return p * std::bit_cast<V>(bits);
}

template <class V, class Bits>
inline V sigmoid(V z) {
    return 1.0 / (1.0 + exp_det<V, Bits>(-z));
}

template <class V, class Bits>
inline V silu_derivative(V z) {
    const V s = sigmoid<V, Bits>(z);
    return s * (1.0 + z * (1.0 - s));
}

void activate(Activation act, const double* pre, double* h, std::size_t n) {
    if (act == Activation::Identity) {
        std::copy(pre, pre + n, h);
        return;
    }
    std::size_t i = 0;
    for (; i + kPack <= n; i += kPack) {
        const Pack z = load_pack(pre + i);
        store_pack(h + i, z * sigmoid<Pack, PackBits>(z));
    }
    for (; i < n; ++i) h[i] = pre[i] * sigmoid<double, std::uint64_t>(pre[i]);
}

// d *= act'(pre), elementwise.
void scale_by_derivative(Activation act, const double* pre, double* d, std::size_t n) {
    if (act == Activation::Identity) return;
    std::size_t i = 0;
    for (; i + kPack <= n; i += kPack)
        store_pack(d + i, load_pack(d + i) * silu_derivative<Pack, PackBits>(load_pack(pre + i)));
    for (; i < n; ++i) d[i] *= silu_derivative<double, std::uint64_t>(pre[i]);
}

// out[j][b] = bias[j] + sum_k w[j][k] in[k][b] over a feature-major batch.
// Each output element sums k = 0..in_dim-1 in order, independent of n and
// of which code path handles it, so tiled and tail results agree bit for bit.
void affine_fm(const double* w, const double* bias, int out_dim, int in_dim, const double* in, double* out,
               std::size_t n) {
    constexpr std::size_t kRows = 4;
    constexpr std::size_t kCols = 2 * kPack;
    const auto od = static_cast<std::size_t>(out_dim);
    const auto id = static_cast<std::size_t>(in_dim);
    const std::size_t full_cols = n - n % kCols;
    const std::size_t full_rows = od - od % kRows;
    for (std::size_t b0 = 0; b0 < full_cols; b0 += kCols) {
        for (std::size_t j = 0; j < full_rows; j += kRows) {
            Pack a0l, a0h, a1l, a1h, a2l, a2h, a3l, a3h;
            {
                const double c0 = bias ? bias[j] : 0.0, c1 = bias ? bias[j + 1] : 0.0;
                const double c2 = bias ? bias[j + 2] : 0.0, c3 = bias ? bias[j + 3] : 0.0;
                a0l = a0h = Pack{} + c0;
                a1l = a1h = Pack{} + c1;
                a2l = a2h = Pack{} + c2;
                a3l = a3h = Pack{} + c3;
            }
            const double* wr = w + j * id;
            for (std::size_t k = 0; k < id; ++k) {
                const double* x = in + k * n + b0;
                const Pack xl = load_pack(x), xh = load_pack(x + kPack);
                const double w0 = wr[k], w1 = wr[id + k], w2 = wr[2 * id + k], w3 = wr[3 * id + k];
                a0l += w0 * xl;
                a0h += w0 * xh;
                a1l += w1 * xl;
                a1h += w1 * xh;
                a2l += w2 * xl;
                a2h += w2 * xh;
                a3l += w3 * xl;
                a3h += w3 * xh;
            }
            double* o = out + j * n + b0;
            store_pack(o, a0l);
            store_pack(o + kPack, a0h);
            store_pack(o + n, a1l);
            store_pack(o + n + kPack, a1h);
            store_pack(o + 2 * n, a2l);
            store_pack(o + 2 * n + kPack, a2h);
            store_pack(o + 3 * n, a3l);
            store_pack(o + 3 * n + kPack, a3h);
        }
        for (std::size_t j = full_rows; j < od; ++j) {
            Pack al = Pack{} + (bias ? bias[j] : 0.0), ah = al;
            for (std::size_t k = 0; k < id; ++k) {
                const double* x = in + k * n + b0;
                const double wv = w[j * id + k];
                al += wv * load_pack(x);
                ah += wv * load_pack(x + kPack);
            }
            store_pack(out + j * n + b0, al);
            store_pack(out + j * n + b0 + kPack, ah);
        }
    }
    for (std::size_t j = 0; j < od; ++j) {
        for (std::size_t b = full_cols; b < n; ++b) {
            double acc = bias ? bias[j] : 0.0;
            for (std::size_t k = 0; k < id; ++k) acc += w[j * id + k] * in[k * n + b];
            out[j * n + b] = acc;
        }
    }
}

void transpose(const double* src, std::size_t rows, std::size_t cols, double* dst) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

void check_steps(std::span<const int> t, const NoiseSchedule& sched) {
    for (int ti : t) sched.require_step(ti);
}

}  // namespace

namespace detail {

void MlpWorkspace::resize(const EpsModel& model, std::size_t n) {
    batch = n;
    const auto h = static_cast<std::size_t>(model.hidden_width);
    for (auto* v : {&pre1, &h1, &pre2, &h2, &d_h2, &d_pre2, &d_h1, &d_pre1}) v->resize(h * n);
    out.resize(2 * n);
    d_out.resize(2 * n);
}

void forward(const EpsModel& model, std::span<const Point2> x, std::span<const double> tbias, bool shared_tbias,
             MlpWorkspace& ws) {
    const std::size_t n = x.size();
    ws.resize(model, n);
    const auto h = static_cast<std::size_t>(model.hidden_width);
    const auto in = static_cast<std::size_t>(model.input_width());
    const double* w1 = model.params.w1.data();
    for (std::size_t j = 0; j < h; ++j) {
        const double wx = w1[j * in], wy = w1[j * in + 1];
        double* __restrict row = ws.pre1.data() + j * n;
        if (shared_tbias) {
            const double c = tbias[j];
            for (std::size_t b = 0; b < n; ++b) row[b] = (c + wx * x[b].x) + wy * x[b].y;
        } else {
            for (std::size_t b = 0; b < n; ++b) row[b] = (tbias[b * h + j] + wx * x[b].x) + wy * x[b].y;
        }
    }
    activate(model.activation, ws.pre1.data(), ws.h1.data(), h * n);
    affine_fm(model.params.w2.data(), model.params.b2.data(), model.hidden_width, model.hidden_width, ws.h1.data(),
              ws.pre2.data(), n);
    activate(model.activation, ws.pre2.data(), ws.h2.data(), h * n);
    affine_fm(model.params.w3.data(), model.params.b3.data(), 2, model.hidden_width, ws.h2.data(), ws.out.data(), n);
}

void backward_to_pre1(const EpsModel& model, MlpWorkspace& ws) {
    const std::size_t n = ws.batch;
    const auto h = static_cast<std::size_t>(model.hidden_width);
    ws.w3_t.resize(2 * h);
    ws.w2_t.resize(h * h);
    transpose(model.params.w3.data(), 2, h, ws.w3_t.data());
    transpose(model.params.w2.data(), h, h, ws.w2_t.data());
    affine_fm(ws.w3_t.data(), nullptr, model.hidden_width, 2, ws.d_out.data(), ws.d_h2.data(), n);
    std::copy(ws.d_h2.begin(), ws.d_h2.end(), ws.d_pre2.begin());
    scale_by_derivative(model.activation, ws.pre2.data(), ws.d_pre2.data(), h * n);
    affine_fm(ws.w2_t.data(), nullptr, model.hidden_width, model.hidden_width, ws.d_pre2.data(), ws.d_h1.data(), n);
    std::copy(ws.d_h1.begin(), ws.d_h1.end(), ws.d_pre1.begin());
    scale_by_derivative(model.activation, ws.pre1.data(), ws.d_pre1.data(), h * n);
}

void input_vjp(const EpsModel& model, std::span<const Point2> x, std::span<const double> tbias, bool shared_tbias,
               std::span<const Point2> cotangent, std::span<Point2> out, MlpWorkspace& ws) {
    const std::size_t n = x.size();
    forward(model, x, tbias, shared_tbias, ws);
    for (std::size_t b = 0; b < n; ++b) {
        ws.d_out[b] = cotangent[b].x;
        ws.d_out[n + b] = cotangent[b].y;
    }
    backward_to_pre1(model, ws);
    const auto h = static_cast<std::size_t>(model.hidden_width);
    const auto in = static_cast<std::size_t>(model.input_width());
    for (std::size_t b = 0; b < n; ++b) out[b] = {0.0, 0.0};
    for (std::size_t j = 0; j < h; ++j) {
        const double wx = model.params.w1[j * in], wy = model.params.w1[j * in + 1];
        const double* d = ws.d_pre1.data() + j * n;
        for (std::size_t b = 0; b < n; ++b) {
            out[b].x += wx * d[b];
            out[b].y += wy * d[b];
        }
    }
}

}  // namespace detail

std::vector<Point2> predict_eps(const EpsModel& model, std::span<const Point2> x, std::span<const int> t,
                                const NoiseSchedule& sched) {
    if (x.size() != t.size()) throw InvalidArgument("predict_eps: x and t batches differ in length");
    check_steps(t, sched);
    const auto h = static_cast<std::size_t>(model.hidden_width);
    std::vector<double> tb(h * x.size());
    for (std::size_t b = 0; b < x.size(); ++b)
        time_bias(model, t[b], sched.steps(), std::span<double>(tb).subspan(b * h, h));
    detail::MlpWorkspace ws;
    detail::forward(model, x, tb, false, ws);
    std::vector<Point2> eps(x.size());
    const std::size_t n = x.size();
    for (std::size_t b = 0; b < n; ++b) eps[b] = {ws.out[b], ws.out[n + b]};
    return eps;
}

Point2 predict_eps(const EpsModel& model, Point2 x, int t, const NoiseSchedule& sched) {
    const int ts[] = {t};
    return predict_eps(model, std::span<const Point2>(&x, 1), ts, sched).front();
}

GradBundle loss_and_param_grads(const EpsModel& model, std::span<const Point2> x0, std::span<const Point2> eps,
                                std::span<const int> t, const NoiseSchedule& sched) {
    const std::size_t n = x0.size();
    if (n == 0) throw InvalidArgument("loss_and_param_grads: empty batch");
    if (eps.size() != n || t.size() != n) throw InvalidArgument("loss_and_param_grads: batch lengths differ");
    check_steps(t, sched);

    const auto h = static_cast<std::size_t>(model.hidden_width);
    const auto e = static_cast<std::size_t>(model.embed_width);
    const auto in = static_cast<std::size_t>(model.input_width());

    // Item-major copy of the layer-1 input [x, y, emb...] for the weight gradient.
    std::vector<double> input_t(n * in);
    std::vector<double> tb(n * h);
    std::vector<Point2> xt(n);
    for (std::size_t b = 0; b < n; ++b) {
        xt[b] = forward_noising(x0[b], t[b], eps[b], sched);
        double* row = input_t.data() + b * in;
        row[0] = xt[b].x;
        row[1] = xt[b].y;
        time_embedding(model, t[b], sched.steps(), std::span<double>(row + 2, e));
        time_bias(model, t[b], sched.steps(), std::span<double>(tb).subspan(b * h, h));
    }

    detail::MlpWorkspace ws;
    detail::forward(model, xt, tb, false, ws);

    GradBundle g;
    const double inv_n = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        const double rx = ws.out[b] - eps[b].x;
        const double ry = ws.out[n + b] - eps[b].y;
        loss += rx * rx + ry * ry;
        ws.d_out[b] = 2.0 * rx * inv_n;
        ws.d_out[n + b] = 2.0 * ry * inv_n;
    }
    g.loss = loss * inv_n;

    auto& gr = g.grads;
    const auto sizes = model.block_sizes();
    gr.w1.assign(sizes[0], 0.0);
    gr.b1.assign(sizes[1], 0.0);
    gr.w2.assign(sizes[2], 0.0);
    gr.b2.assign(sizes[3], 0.0);
    gr.w3.assign(sizes[4], 0.0);
    gr.b3.assign(sizes[5], 0.0);

    detail::backward_to_pre1(model, ws);

    // Item-major hidden activations so the outer products vectorize over k
    // while the batch reduction stays in item order.
    std::vector<double> h1_t(n * h), h2_t(n * h);
    transpose(ws.h1.data(), h, n, h1_t.data());
    transpose(ws.h2.data(), h, n, h2_t.data());

    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = 0; i < 2; ++i) {
            const double s = ws.d_out[i * n + b];
            gr.b3[i] += s;
            double* __restrict gw = gr.w3.data() + i * h;
            const double* __restrict a = h2_t.data() + b * h;
            for (std::size_t k = 0; k < h; ++k) gw[k] += s * a[k];
        }
        for (std::size_t j = 0; j < h; ++j) {
            const double s = ws.d_pre2[j * n + b];
            gr.b2[j] += s;
            double* __restrict gw = gr.w2.data() + j * h;
            const double* __restrict a = h1_t.data() + b * h;
            for (std::size_t k = 0; k < h; ++k) gw[k] += s * a[k];
        }
        for (std::size_t j = 0; j < h; ++j) {
            const double s = ws.d_pre1[j * n + b];
            gr.b1[j] += s;
            double* __restrict gw = gr.w1.data() + j * in;
            const double* __restrict a = input_t.data() + b * in;
            for (std::size_t k = 0; k < in; ++k) gw[k] += s * a[k];
        }
    }
    return g;
}

Point2 input_grad(const EpsModel& model, Point2 x, int t, Point2 cotangent, const NoiseSchedule& sched) {
    sched.require_step(t);
    std::vector<double> tb(static_cast<std::size_t>(model.hidden_width));
    time_bias(model, t, sched.steps(), tb);
    detail::MlpWorkspace ws;
    Point2 out;
    detail::input_vjp(model, std::span<const Point2>(&x, 1), tb, true, std::span<const Point2>(&cotangent, 1),
                      std::span<Point2>(&out, 1), ws);
    return out;
}

}  // namespace codelab

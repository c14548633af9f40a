#include "ncct/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <thread>

#include "ncct/crc32.hpp"
#include "ncct/error.hpp"
#include "ncct/rng.hpp"

namespace ncct {

void ArchConfig::validate() const {
    if (num_classes < 2)
        throw InvalidArgument("num_classes must be >= 2, got " + std::to_string(num_classes));
    if (conv1_channels < 1 || conv2_channels < 1)
        throw InvalidArgument("conv channel counts must be >= 1");
}

ParamLayout ParamLayout::make(const ArchConfig& arch) {
    const std::size_t c1 = arch.conv1_channels;
    const std::size_t c2 = arch.conv2_channels;
    const std::size_t C = arch.num_classes;
    const std::size_t D = arch.feature_dim();
    ParamLayout l;
    l.conv1_w = 0;
    l.conv1_b = l.conv1_w + c1 * 9;
    l.conv2_w = l.conv1_b + c1;
    l.conv2_b = l.conv2_w + c2 * c1 * 9;
    l.backbone_size = l.conv2_b + c2;
    l.pcc_w = l.backbone_size;
    l.pcc_b = l.pcc_w + C * D;
    l.ncc_w = l.pcc_b + C;
    l.ncc_b = l.ncc_w + C * D;
    l.total = l.ncc_b + C;
    return l;
}

bool ModelParams::all_finite() const {
    return std::all_of(values.begin(), values.end(),
                       [](double v) { return std::isfinite(v); });
}

ModelParams init_params(const ArchConfig& arch, std::uint64_t seed) {
    arch.validate();
    const ParamLayout l = ParamLayout::make(arch);
    ModelParams p;
    p.arch = arch;
    p.values.assign(l.total, 0.0);

    Rng rng(mix_seed({seed, 0x696E6974ull /* "init" */}));
    auto fill_uniform = [&](std::size_t begin, std::size_t end, double fan_in) {
        const double bound = std::sqrt(6.0 / fan_in);
        for (std::size_t i = begin; i < end; ++i)
            p.values[i] = rng.uniform(-bound, bound);
    };
    fill_uniform(l.conv1_w, l.conv1_b, 9.0);
    fill_uniform(l.conv2_w, l.conv2_b, arch.conv1_channels * 9.0);
    fill_uniform(l.pcc_w, l.pcc_b, arch.feature_dim());
    fill_uniform(l.ncc_w, l.ncc_b, arch.feature_dim());
    // biases stay zero
    return p;
}

SpatialDims SpatialDims::make(int h, int w) {
    SpatialDims d;
    d.h = h;
    d.w = w;
    d.h1 = h - 2;
    d.w1 = w - 2;
    d.hp1 = d.h1 / 2;
    d.wp1 = d.w1 / 2;
    d.h2 = d.hp1 - 2;
    d.w2 = d.wp1 - 2;
    d.hp2 = d.h2 / 2;
    d.wp2 = d.w2 / 2;
    if (d.hp2 < 1 || d.wp2 < 1)
        throw InvalidArgument("input " + std::to_string(h) + "x" + std::to_string(w) +
                              " too small for the backbone (needs >= 10x10)");
    return d;
}

namespace {

constexpr double kLogClamp = 1e-12;


// conv 3x3 valid + ReLU. in: ic×ih×iw, out: oc×(ih-2)×(iw-2).
void conv3x3_relu(const double* in, int ic, int ih, int iw, const double* w,
                  const double* b, double* out, int oc) {
    const int oh = ih - 2, ow = iw - 2;
    for (int o = 0; o < oc; ++o) {
        double* outc = out + static_cast<std::size_t>(o) * oh * ow;
        const double bias = b[o];
        for (int i = 0; i < oh * ow; ++i) outc[i] = bias;
        for (int c = 0; c < ic; ++c) {
            const double* inc = in + static_cast<std::size_t>(c) * ih * iw;
            const double* wk = w + (static_cast<std::size_t>(o) * ic + c) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const double wv = wk[ky * 3 + kx];
                    for (int oy = 0; oy < oh; ++oy) {
                        const double* src = inc + (oy + ky) * iw + kx;
                        double* dst = outc + oy * ow;
                        for (int ox = 0; ox < ow; ++ox) dst[ox] += wv * src[ox];
                    }
                }
            }
        }
        for (int i = 0; i < oh * ow; ++i) outc[i] = outc[i] > 0.0 ? outc[i] : 0.0;
    }
}

// 2x2 maxpool, stride 2, trailing odd row/col dropped. Ties resolve to
// the first cell in scan order (top-left, top-right, bottom-left,
// bottom-right), recorded in `arg` for the backward unpool.
void maxpool2x2(const double* in, int ch, int ih, int iw, double* out,
                std::uint8_t* arg) {
    const int oh = ih / 2, ow = iw / 2;
    for (int c = 0; c < ch; ++c) {
        const double* inc = in + static_cast<std::size_t>(c) * ih * iw;
        double* outc = out + static_cast<std::size_t>(c) * oh * ow;
        std::uint8_t* argc = arg + static_cast<std::size_t>(c) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const double* cell = inc + (2 * oy) * iw + 2 * ox;
                double best = cell[0];
                std::uint8_t bi = 0;
                if (cell[1] > best) { best = cell[1]; bi = 1; }
                if (cell[iw] > best) { best = cell[iw]; bi = 2; }
                if (cell[iw + 1] > best) { best = cell[iw + 1]; bi = 3; }
                outc[oy * ow + ox] = best;
                argc[oy * ow + ox] = bi;
            }
        }
    }
}

void softmax_row(const double* logits, int n, double* probs) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        probs[i] = std::exp(logits[i] - mx);
        sum += probs[i];
    }
    for (int i = 0; i < n; ++i) probs[i] /= sum;
}

} // namespace

// Per-batch activation arena. One contiguous block per quantity, one
// slice per sample; the backward pass reads slices by sample index.
struct BatchEvaluation::Impl {
    const ModelParams* params = nullptr;
    SpatialDims dims;
    int batch = 0;
    bool strong_present = false;
    PredictionBundle bundle;

    struct ViewActs {
        std::vector<double> a1, p1, a2, feat; // post-ReLU / pooled / features
        std::vector<std::uint8_t> arg1, arg2;
        std::vector<Image> inputs;
    };
    ViewActs weak, strong;

    void run_view(const std::vector<Image>& images, ViewActs& acts, Matrix& p_p,
                  Matrix& p_n, Matrix& feats);
};

namespace {

void head_logits(const double* w, const double* b, const double* f, int C, int D,
                 double* logits) {
    for (int c = 0; c < C; ++c) {
        double s = b[c];
        const double* row = w + static_cast<std::size_t>(c) * D;
        for (int d = 0; d < D; ++d) s += row[d] * f[d];
        logits[c] = s;
    }
}

} // namespace

void BatchEvaluation::Impl::run_view(const std::vector<Image>& images, ViewActs& acts,
                                     Matrix& p_p, Matrix& p_n, Matrix& feats) {
    const ArchConfig& arch = params->arch;
    const ParamLayout l = params->layout();
    const int c1 = arch.conv1_channels, c2 = arch.conv2_channels;
    const int C = arch.num_classes, D = arch.feature_dim();
    const SpatialDims& d = dims;

    const std::size_t a1_n = static_cast<std::size_t>(c1) * d.h1 * d.w1;
    const std::size_t p1_n = static_cast<std::size_t>(c1) * d.hp1 * d.wp1;
    const std::size_t a2_n = static_cast<std::size_t>(c2) * d.h2 * d.w2;
    const std::size_t p2_n = static_cast<std::size_t>(c2) * d.hp2 * d.wp2;

    acts.a1.resize(a1_n * batch);
    acts.p1.resize(p1_n * batch);
    acts.arg1.resize(p1_n * batch);
    acts.a2.resize(a2_n * batch);
    acts.arg2.resize(a2_n * batch); // sized for a2; only p2-shaped prefix per sample used
    acts.feat.resize(static_cast<std::size_t>(D) * batch);
    acts.inputs = images;

    p_p = Matrix(batch, C);
    p_n = Matrix(batch, C);
    feats = Matrix(batch, D);

    std::vector<double> p2(p2_n);
    std::vector<double> logits(C);
    const double* vals = params->values.data();

    for (int i = 0; i < batch; ++i) {
        const Image& img = images[i];
        if (img.height != d.h || img.width != d.w)
            throw InvalidArgument("batch image " + std::to_string(i) + " is " +
                                  std::to_string(img.height) + "x" + std::to_string(img.width) +
                                  ", expected " + std::to_string(d.h) + "x" + std::to_string(d.w));
        double* a1 = acts.a1.data() + a1_n * i;
        double* p1 = acts.p1.data() + p1_n * i;
        std::uint8_t* arg1 = acts.arg1.data() + p1_n * i;
        double* a2 = acts.a2.data() + a2_n * i;
        std::uint8_t* arg2 = acts.arg2.data() + a2_n * i;
        double* feat = acts.feat.data() + static_cast<std::size_t>(D) * i;

        conv3x3_relu(img.pixels.data(), 1, d.h, d.w, vals + l.conv1_w, vals + l.conv1_b,
                     a1, c1);
        maxpool2x2(a1, c1, d.h1, d.w1, p1, arg1);
        conv3x3_relu(p1, c1, d.hp1, d.wp1, vals + l.conv2_w, vals + l.conv2_b, a2, c2);
        maxpool2x2(a2, c2, d.h2, d.w2, p2.data(), arg2);

        const int area = d.hp2 * d.wp2;
        for (int ch = 0; ch < c2; ++ch) {
            double s = 0.0;
            const double* pc = p2.data() + static_cast<std::size_t>(ch) * area;
            for (int k = 0; k < area; ++k) s += pc[k];
            feat[ch] = s / area;
        }
        std::copy(feat, feat + D, feats.row(i));

        head_logits(vals + l.pcc_w, vals + l.pcc_b, feat, C, D, logits.data());
        softmax_row(logits.data(), C, p_p.row(i));
        head_logits(vals + l.ncc_w, vals + l.ncc_b, feat, C, D, logits.data());
        softmax_row(logits.data(), C, p_n.row(i));
    }
}

BatchEvaluation::BatchEvaluation(const ModelParams& params, const std::vector<Image>& weak,
                                 const std::vector<Image>& strong)
    : impl_(std::make_unique<Impl>()) {
    params.arch.validate();
    if (weak.empty()) throw InvalidArgument("empty batch");
    if (!strong.empty() && strong.size() != weak.size())
        throw InvalidArgument("weak/strong batch size mismatch: " +
                              std::to_string(weak.size()) + " vs " +
                              std::to_string(strong.size()));
    impl_->params = &params;
    impl_->dims = SpatialDims::make(weak[0].height, weak[0].width);
    impl_->batch = static_cast<int>(weak.size());
    impl_->strong_present = !strong.empty();

    impl_->run_view(weak, impl_->weak, impl_->bundle.p_w_p, impl_->bundle.p_w_n,
                    impl_->bundle.features_w);
    if (impl_->strong_present)
        impl_->run_view(strong, impl_->strong, impl_->bundle.p_s_p, impl_->bundle.p_s_n,
                        impl_->bundle.features_s);
}

BatchEvaluation::~BatchEvaluation() = default;
BatchEvaluation::BatchEvaluation(BatchEvaluation&&) noexcept = default;
BatchEvaluation& BatchEvaluation::operator=(BatchEvaluation&&) noexcept = default;

const PredictionBundle& BatchEvaluation::bundle() const { return impl_->bundle; }
int BatchEvaluation::batch_size() const { return impl_->batch; }
bool BatchEvaluation::has_strong() const { return impl_->strong_present; }

PredictionBundle forward(const ModelParams& params, const std::vector<Image>& weak,
                         const std::vector<Image>& strong) {
    BatchEvaluation eval(params, weak, strong);
    return eval.bundle();
}

namespace {

// Backward through one view's backbone for one sample, adding parameter
// gradients into `g` (same layout as params).
void backbone_backward(const ModelParams& params, const SpatialDims& d,
                       const BatchEvaluation::Impl::ViewActs& acts, int i,
                       const double* d_feat, double* g) {
    const ArchConfig& arch = params.arch;
    const ParamLayout l = params.layout();
    const int c1 = arch.conv1_channels, c2 = arch.conv2_channels;

    const std::size_t a1_n = static_cast<std::size_t>(c1) * d.h1 * d.w1;
    const std::size_t p1_n = static_cast<std::size_t>(c1) * d.hp1 * d.wp1;
    const std::size_t a2_n = static_cast<std::size_t>(c2) * d.h2 * d.w2;

    const double* a1 = acts.a1.data() + a1_n * i;
    const double* p1 = acts.p1.data() + p1_n * i;
    const std::uint8_t* arg1 = acts.arg1.data() + p1_n * i;
    const double* a2 = acts.a2.data() + a2_n * i;
    const std::uint8_t* arg2 = acts.arg2.data() + a2_n * i;
    const Image& img = acts.inputs[i];
    const double* vals = params.values.data();

    // GAP + unpool2 + ReLU2 in one scatter: each pooled cell routes
    // d_feat[ch]/area to its argmax position if that unit is active.
    std::vector<double> d_z2(a2_n, 0.0);
    const int area2 = d.hp2 * d.wp2;
    for (int ch = 0; ch < c2; ++ch) {
        const double gph = d_feat[ch] / area2;
        const double* a2c = a2 + static_cast<std::size_t>(ch) * d.h2 * d.w2;
        double* dz2c = d_z2.data() + static_cast<std::size_t>(ch) * d.h2 * d.w2;
        const std::uint8_t* argc = arg2 + static_cast<std::size_t>(ch) * d.hp2 * d.wp2;
        for (int oy = 0; oy < d.hp2; ++oy) {
            for (int ox = 0; ox < d.wp2; ++ox) {
                const std::uint8_t b = argc[oy * d.wp2 + ox];
                const int iy = 2 * oy + (b >> 1), ix = 2 * ox + (b & 1);
                if (a2c[iy * d.w2 + ix] > 0.0) dz2c[iy * d.w2 + ix] = gph;
            }
        }
    }

    // conv2 backward: weight/bias grads and d_p1.
    std::vector<double> d_p1(p1_n, 0.0);
    for (int o = 0; o < c2; ++o) {
        const double* dz2c = d_z2.data() + static_cast<std::size_t>(o) * d.h2 * d.w2;
        double bsum = 0.0;
        for (int k = 0; k < d.h2 * d.w2; ++k) bsum += dz2c[k];
        g[l.conv2_b + o] += bsum;
        for (int c = 0; c < c1; ++c) {
            const double* p1c = p1 + static_cast<std::size_t>(c) * d.hp1 * d.wp1;
            double* dp1c = d_p1.data() + static_cast<std::size_t>(c) * d.hp1 * d.wp1;
            const double* wk = vals + l.conv2_w + (static_cast<std::size_t>(o) * c1 + c) * 9;
            double* gw = g + l.conv2_w + (static_cast<std::size_t>(o) * c1 + c) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const double wv = wk[ky * 3 + kx];
                    double acc = 0.0;
                    for (int oy = 0; oy < d.h2; ++oy) {
                        const double* dz_row = dz2c + oy * d.w2;
                        const double* in_row = p1c + (oy + ky) * d.wp1 + kx;
                        double* dp_row = dp1c + (oy + ky) * d.wp1 + kx;
                        for (int ox = 0; ox < d.w2; ++ox) {
                            acc += dz_row[ox] * in_row[ox];
                            dp_row[ox] += wv * dz_row[ox];
                        }
                    }
                    gw[ky * 3 + kx] += acc;
                }
            }
        }
    }

    // unpool1 + ReLU1.
    std::vector<double> d_z1(a1_n, 0.0);
    for (int ch = 0; ch < c1; ++ch) {
        const double* a1c = a1 + static_cast<std::size_t>(ch) * d.h1 * d.w1;
        double* dz1c = d_z1.data() + static_cast<std::size_t>(ch) * d.h1 * d.w1;
        const double* dp1c = d_p1.data() + static_cast<std::size_t>(ch) * d.hp1 * d.wp1;
        const std::uint8_t* argc = arg1 + static_cast<std::size_t>(ch) * d.hp1 * d.wp1;
        for (int oy = 0; oy < d.hp1; ++oy) {
            for (int ox = 0; ox < d.wp1; ++ox) {
                const double gval = dp1c[oy * d.wp1 + ox];
                if (gval == 0.0) continue;
                const std::uint8_t b = argc[oy * d.wp1 + ox];
                const int iy = 2 * oy + (b >> 1), ix = 2 * ox + (b & 1);
                if (a1c[iy * d.w1 + ix] > 0.0) dz1c[iy * d.w1 + ix] = gval;
            }
        }
    }

    // conv1 backward: weight/bias grads only (no input gradient needed).
    for (int o = 0; o < c1; ++o) {
        const double* dz1c = d_z1.data() + static_cast<std::size_t>(o) * d.h1 * d.w1;
        double bsum = 0.0;
        for (int k = 0; k < d.h1 * d.w1; ++k) bsum += dz1c[k];
        g[l.conv1_b + o] += bsum;
        double* gw = g + l.conv1_w + static_cast<std::size_t>(o) * 9;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                double acc = 0.0;
                for (int oy = 0; oy < d.h1; ++oy) {
                    const double* dz_row = dz1c + oy * d.w1;
                    const double* in_row = img.pixels.data() + (oy + ky) * d.w + kx;
                    for (int ox = 0; ox < d.w1; ++ox) acc += dz_row[ox] * in_row[ox];
                }
                gw[ky * 3 + kx] += acc;
            }
        }
    }
}

void validate_plan(const BatchEvaluation& eval, const LossPlan& plan) {
    const int n = eval.batch_size();
    if (static_cast<int>(plan.labels.size()) != n ||
        static_cast<int>(plan.supervised.size()) != n ||
        static_cast<int>(plan.consistency.size()) != n)
        throw InvalidArgument("loss plan arrays do not match batch size " +
                              std::to_string(n));
    bool any_consistency = false;
    for (int i = 0; i < n; ++i) {
        if (plan.supervised[i] && plan.consistency[i])
            throw InvalidArgument("sample " + std::to_string(i) +
                                  " assigned to both loss terms");
        any_consistency |= plan.consistency[i] != 0;
    }
    if (any_consistency) {
        if (!eval.has_strong())
            throw InvalidArgument("consistency loss requires the strong view");
        if (plan.mask.rows != n || plan.target.rows != n)
            throw InvalidArgument("mask/target rows do not match batch size");
    }
}

const char* block_name(const ParamLayout& l, std::size_t idx) {
    if (idx < l.conv1_b) return "conv1.w";
    if (idx < l.conv2_w) return "conv1.b";
    if (idx < l.conv2_b) return "conv2.w";
    if (idx < l.backbone_size) return "conv2.b";
    if (idx < l.pcc_b) return "pcc.w";
    if (idx < l.ncc_w) return "pcc.b";
    if (idx < l.ncc_b) return "ncc.w";
    return "ncc.b";
}

} // namespace

GradientReport backward(const ModelParams& params, const BatchEvaluation& eval,
                        const LossPlan& plan, int threads) {
    validate_plan(eval, plan);
    const auto& impl = eval.impl();
    const PredictionBundle& bundle = impl.bundle;
    const ArchConfig& arch = params.arch;
    const ParamLayout l = params.layout();
    const int n = impl.batch;
    const int C = arch.num_classes, D = arch.feature_dim();

    int n_sup = 0, n_con = 0;
    for (int i = 0; i < n; ++i) {
        n_sup += plan.supervised[i] != 0;
        n_con += plan.consistency[i] != 0;
    }

    const bool con_uses_ncc = plan.head == ConsistencyHead::ncc;
    const std::size_t head_w = con_uses_ncc ? l.ncc_w : l.pcc_w;
    const std::size_t head_b = con_uses_ncc ? l.ncc_b : l.pcc_b;
    const Matrix& p_con = con_uses_ncc ? bundle.p_s_n : bundle.p_s_p;

    // Chunks are computed independently (possibly on worker threads) and
    // folded in index order, so the reduction tree never depends on the
    // thread count. The two loss terms accumulate into separate buffers
    // summed only at the end, which makes gradient additivity
    // (grads(L_s) + grads(L_c) == grads(L_s + L_c)) hold exactly.
    constexpr int kChunk = 8;
    const int n_chunks = (n + kChunk - 1) / kChunk;

    struct ChunkOut {
        std::vector<double> g_sup, g_con;
        double ls = 0.0, lc = 0.0;
        std::exception_ptr error;
    };
    std::vector<ChunkOut> outs(n_chunks);

    auto run_chunk = [&](int ci) {
        ChunkOut& out = outs[ci];
        out.g_sup.assign(l.total, 0.0);
        out.g_con.assign(l.total, 0.0);
        std::vector<double> d_logits(C), d_feat(D);
        const int base = ci * kChunk;
        const int end = std::min(n, base + kChunk);

        for (int i = base; i < end; ++i) {
            if (plan.supervised[i]) {
                const double* p = bundle.p_w_p.row(i);
                const int y = plan.labels[i];
                if (y < 0 || y >= C)
                    throw InvalidArgument("label " + std::to_string(y) + " out of range");
                const double py = p[y];
                out.ls += -std::log(std::max(py, kLogClamp)) / n_sup;
                if (py > kLogClamp) {
                    for (int c = 0; c < C; ++c) d_logits[c] = p[c] / n_sup;
                    d_logits[y] -= 1.0 / n_sup;
                } else {
                    std::fill(d_logits.begin(), d_logits.end(), 0.0);
                }
                const double* f = bundle.features_w.row(i);
                for (int c = 0; c < C; ++c) {
                    const double dl = d_logits[c];
                    out.g_sup[l.pcc_b + c] += dl;
                    double* gw = out.g_sup.data() + l.pcc_w + static_cast<std::size_t>(c) * D;
                    for (int dd = 0; dd < D; ++dd) gw[dd] += dl * f[dd];
                }
                for (int dd = 0; dd < D; ++dd) {
                    double s = 0.0;
                    for (int c = 0; c < C; ++c)
                        s += d_logits[c] * params.values[l.pcc_w + static_cast<std::size_t>(c) * D + dd];
                    d_feat[dd] = s;
                }
                backbone_backward(params, impl.dims, impl.weak, i, d_feat.data(),
                                  out.g_sup.data());
            } else if (plan.consistency[i]) {
                const double* q = p_con.row(i);
                const double* t = plan.target.row(i);
                const double* m = plan.mask.row(i);
                double live_mass = 0.0; // sum of m*t over unclamped entries
                double sample_loss = 0.0;
                for (int c = 0; c < C; ++c) {
                    if (m[c] == 0.0) continue;
                    sample_loss += -t[c] * std::log(std::max(q[c], kLogClamp));
                    if (q[c] > kLogClamp) live_mass += m[c] * t[c];
                }
                out.lc += sample_loss / n_con;
                for (int c = 0; c < C; ++c) {
                    double dl = q[c] * live_mass;
                    if (m[c] != 0.0 && q[c] > kLogClamp) dl -= m[c] * t[c];
                    d_logits[c] = dl / n_con;
                }
                const double* f = bundle.features_s.row(i);
                for (int c = 0; c < C; ++c) {
                    const double dl = d_logits[c];
                    out.g_con[head_b + c] += dl;
                    double* gw = out.g_con.data() + head_w + static_cast<std::size_t>(c) * D;
                    for (int dd = 0; dd < D; ++dd) gw[dd] += dl * f[dd];
                }
                for (int dd = 0; dd < D; ++dd) {
                    double s = 0.0;
                    for (int c = 0; c < C; ++c)
                        s += d_logits[c] * params.values[head_w + static_cast<std::size_t>(c) * D + dd];
                    d_feat[dd] = s;
                }
                backbone_backward(params, impl.dims, impl.strong, i, d_feat.data(),
                                  out.g_con.data());
            }
        }
    };

    const int workers = std::clamp(threads, 1, n_chunks);
    if (workers <= 1) {
        for (int ci = 0; ci < n_chunks; ++ci) run_chunk(ci);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (int ci = w; ci < n_chunks; ci += workers) {
                    try {
                        run_chunk(ci);
                    } catch (...) {
                        outs[ci].error = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        for (const auto& out : outs)
            if (out.error) std::rethrow_exception(out.error);
    }

    std::vector<double> g_sup(l.total, 0.0), g_con(l.total, 0.0);
    double loss_s_total = 0.0, loss_c_total = 0.0;
    for (const auto& out : outs) {
        for (std::size_t k = 0; k < l.total; ++k) g_sup[k] += out.g_sup[k];
        for (std::size_t k = 0; k < l.total; ++k) g_con[k] += out.g_con[k];
        loss_s_total += out.ls;
        loss_c_total += out.lc;
    }

    GradientReport report;
    report.grads.resize(l.total);
    for (std::size_t k = 0; k < l.total; ++k) report.grads[k] = g_sup[k] + g_con[k];
    report.loss_s = loss_s_total;
    report.loss_c = loss_c_total;
    report.loss = loss_s_total + loss_c_total;

    for (std::size_t k = 0; k < l.total; ++k) {
        if (!std::isfinite(report.grads[k]))
            throw DivergenceError(std::string("non-finite gradient in block ") +
                                  block_name(l, k));
    }
    if (!std::isfinite(report.loss))
        throw DivergenceError("non-finite loss value");
    return report;
}

double loss_value(const ModelParams& params, const std::vector<Image>& weak,
                  const std::vector<Image>& strong, const LossPlan& plan,
                  LossTerms terms) {
    int n_sup = 0, n_con = 0;
    for (std::size_t i = 0; i < plan.supervised.size(); ++i) {
        n_sup += plan.supervised[i] != 0;
        n_con += plan.consistency[i] != 0;
    }
    const bool need_strong = terms != LossTerms::supervised && n_con > 0;
    if (need_strong && strong.empty())
        throw InvalidArgument("consistency loss requires the strong view");
    BatchEvaluation eval(params, weak, need_strong ? strong : std::vector<Image>{});
    const PredictionBundle& bundle = eval.bundle();
    const int n = eval.batch_size();
    const int C = params.arch.num_classes;

    double loss = 0.0;
    if (terms != LossTerms::consistency && n_sup > 0) {
        double ls = 0.0;
        for (int i = 0; i < n; ++i) {
            if (!plan.supervised[i]) continue;
            ls += -std::log(std::max(bundle.p_w_p.at(i, plan.labels[i]), kLogClamp));
        }
        loss += ls / n_sup;
    }
    if (terms != LossTerms::supervised && n_con > 0) {
        const Matrix& q = plan.head == ConsistencyHead::ncc ? bundle.p_s_n : bundle.p_s_p;
        double lc = 0.0;
        for (int i = 0; i < n; ++i) {
            if (!plan.consistency[i]) continue;
            for (int c = 0; c < C; ++c) {
                if (plan.mask.at(i, c) == 0.0) continue;
                lc += -plan.target.at(i, c) * std::log(std::max(q.at(i, c), kLogClamp));
            }
        }
        loss += lc / n_con;
    }
    return loss;
}

GradCheckReport grad_check(const ModelParams& params, const std::vector<Image>& weak,
                           const std::vector<Image>& strong, const LossPlan& plan,
                           LossTerms terms, double epsilon, double tolerance) {
    LossPlan restricted = plan;
    if (terms == LossTerms::supervised)
        std::fill(restricted.consistency.begin(), restricted.consistency.end(), 0);
    if (terms == LossTerms::consistency)
        std::fill(restricted.supervised.begin(), restricted.supervised.end(), 0);

    BatchEvaluation eval(params, weak,
                         terms == LossTerms::supervised ? std::vector<Image>{} : strong);
    GradientReport analytic = backward(params, eval, restricted);

    ModelParams probe = params;
    GradCheckReport report;
    for (std::size_t k = 0; k < params.values.size(); ++k) {
        const double orig = params.values[k];
        probe.values[k] = orig + epsilon;
        const double up = loss_value(probe, weak, strong, restricted, terms);
        probe.values[k] = orig - epsilon;
        const double down = loss_value(probe, weak, strong, restricted, terms);
        probe.values[k] = orig;

        const double numeric = (up - down) / (2.0 * epsilon);
        const double a = analytic.grads[k];
        const double rel = std::abs(a - numeric) /
                           std::max({1.0, std::abs(a), std::abs(numeric)});
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_index = k;
            report.analytic_at_worst = a;
            report.numeric_at_worst = numeric;
        }
    }
    report.pass = report.max_rel_err < tolerance;
    return report;
}

namespace {

constexpr std::uint8_t kNcptMagic[4] = {0x4E, 0x43, 0x50, 0x54}; // "NCPT"
constexpr std::uint8_t kNcptVersion = 1;

void put_u16le(std::vector<std::uint8_t>& buf, std::uint16_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xFF));
    buf.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32le(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64le(std::vector<std::uint8_t>& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

struct Cursor {
    const std::uint8_t* p;
    std::size_t left;
    const std::string& path;

    void need(std::size_t n) const {
        if (left < n)
            throw TruncationError(path + ": expected " + std::to_string(n) +
                                  " more bytes, got " + std::to_string(left));
    }
    std::uint8_t u8() { need(1); --left; return *p++; }
    std::uint16_t u16() { need(2); std::uint16_t v = p[0] | (p[1] << 8); p += 2; left -= 2; return v; }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = p[0] | (p[1] << 8) | (p[2] << 16) |
                          (static_cast<std::uint32_t>(p[3]) << 24);
        p += 4;
        left -= 4;
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        left -= 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        left -= n;
        return s;
    }
};

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::size_t offset; // into ModelParams::values
    std::size_t count;
};

std::vector<NamedTensor> tensor_table(const ArchConfig& arch) {
    const ParamLayout l = ParamLayout::make(arch);
    const std::uint32_t c1 = arch.conv1_channels, c2 = arch.conv2_channels;
    const std::uint32_t C = arch.num_classes, D = arch.feature_dim();
    return {
        {"conv1.w", {c1, 1, 3, 3}, l.conv1_w, c1 * 9ull},
        {"conv1.b", {c1}, l.conv1_b, c1},
        {"conv2.w", {c2, c1, 3, 3}, l.conv2_w, static_cast<std::size_t>(c2) * c1 * 9},
        {"conv2.b", {c2}, l.conv2_b, c2},
        {"pcc.w", {C, D}, l.pcc_w, static_cast<std::size_t>(C) * D},
        {"pcc.b", {C}, l.pcc_b, C},
        {"ncc.w", {C, D}, l.ncc_w, static_cast<std::size_t>(C) * D},
        {"ncc.b", {C}, l.ncc_b, C},
    };
}

} // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    const auto table = tensor_table(params.arch);
    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), kNcptMagic, kNcptMagic + 4);
    buf.push_back(kNcptVersion);
    put_u32le(buf, static_cast<std::uint32_t>(table.size()));
    for (const auto& t : table) {
        put_u16le(buf, static_cast<std::uint16_t>(t.name.size()));
        buf.insert(buf.end(), t.name.begin(), t.name.end());
        buf.push_back(static_cast<std::uint8_t>(t.dims.size()));
        for (std::uint32_t dim : t.dims) put_u32le(buf, dim);
        for (std::size_t k = 0; k < t.count; ++k) put_f64le(buf, params.values[t.offset + k]);
    }
    put_u32le(buf, crc32(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    in.close();

    if (buf.size() < 9)
        throw TruncationError(path + ": expected at least 9 header bytes, got " +
                              std::to_string(buf.size()));
    if (std::memcmp(buf.data(), kNcptMagic, 4) != 0)
        throw FormatError(path + ": bad magic, not an NCPT file");
    if (buf[4] != kNcptVersion)
        throw FormatError(path + ": unsupported NCPT version " + std::to_string(buf[4]));
    if (buf.size() < 13)
        throw TruncationError(path + ": expected at least 13 bytes, got " +
                              std::to_string(buf.size()));

    // Structure first (truncation mid-record reads as truncation, not as a
    // checksum failure), then the CRC over everything before the trailer.
    Cursor cur{buf.data() + 9, buf.size() - 13, path};
    const std::uint32_t count = (buf[5]) | (buf[6] << 8) | (buf[7] << 16) |
                                (static_cast<std::uint32_t>(buf[8]) << 24);

    std::map<std::string, std::pair<std::vector<std::uint32_t>, std::vector<double>>> tensors;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint16_t name_len = cur.u16();
        std::string name = cur.str(name_len);
        const std::uint8_t rank = cur.u8();
        std::vector<std::uint32_t> dims(rank);
        std::size_t n = 1;
        for (std::uint8_t r = 0; r < rank; ++r) {
            dims[r] = cur.u32();
            n *= dims[r];
        }
        if (n > cur.left / 8)
            throw TruncationError(path + ": tensor '" + name + "' promises " +
                                  std::to_string(n) + " values but only " +
                                  std::to_string(cur.left) + " bytes remain");
        std::vector<double> vals(n);
        for (std::size_t k = 0; k < n; ++k) vals[k] = cur.f64();
        tensors[name] = {std::move(dims), std::move(vals)};
    }
    if (cur.left != 0)
        throw FormatError(path + ": " + std::to_string(cur.left) +
                          " trailing bytes after tensors");

    const std::uint32_t stored_crc = buf[buf.size() - 4] | (buf[buf.size() - 3] << 8) |
                                     (buf[buf.size() - 2] << 16) |
                                     (static_cast<std::uint32_t>(buf[buf.size() - 1]) << 24);
    const std::uint32_t actual_crc = crc32(buf.data(), buf.size() - 4);
    if (stored_crc != actual_crc) {
        char msg[96];
        std::snprintf(msg, sizeof msg, "checksum mismatch: stored %08X, computed %08X",
                      stored_crc, actual_crc);
        throw ChecksumError(path + ": " + msg);
    }

    auto dims_of = [&](const std::string& name) -> const std::vector<std::uint32_t>& {
        auto it = tensors.find(name);
        if (it == tensors.end())
            throw FormatError(path + ": missing tensor '" + name + "'");
        return it->second.first;
    };

    const auto& c1w = dims_of("conv1.w");
    const auto& c2w = dims_of("conv2.w");
    const auto& pw = dims_of("pcc.w");
    if (c1w.size() != 4 || c2w.size() != 4 || pw.size() != 2)
        throw FormatError(path + ": unexpected tensor ranks");

    ArchConfig arch;
    arch.conv1_channels = static_cast<int>(c1w[0]);
    arch.conv2_channels = static_cast<int>(c2w[0]);
    arch.num_classes = static_cast<int>(pw[0]);
    arch.validate();
    if (c2w[1] != c1w[0] || pw[1] != static_cast<std::uint32_t>(arch.feature_dim()))
        throw FormatError(path + ": tensor shapes are not mutually consistent");

    ModelParams params;
    params.arch = arch;
    params.values.assign(ParamLayout::make(arch).total, 0.0);
    for (const auto& t : tensor_table(arch)) {
        auto it = tensors.find(t.name);
        if (it == tensors.end())
            throw FormatError(path + ": missing tensor '" + t.name + "'");
        if (it->second.first != t.dims)
            throw FormatError(path + ": tensor '" + t.name + "' has unexpected shape");
        if (it->second.second.size() != t.count)
            throw FormatError(path + ": tensor '" + t.name + "' has unexpected size");
        std::copy(it->second.second.begin(), it->second.second.end(),
                  params.values.begin() + static_cast<std::ptrdiff_t>(t.offset));
    }
    return params;
}

} // namespace ncct

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ncct/image.hpp"
#include "ncct/matrix.hpp"

namespace ncct {

// Shared convolutional backbone with two independent affine heads:
// the positive-class classifier (pcc) and the negative-class
// classifier (ncc).
//
// Backbone: conv(1->c1, 3x3 valid) + ReLU + 2x2 maxpool,
//           conv(c1->c2, 3x3 valid) + ReLU + 2x2 maxpool,
//           global average pool -> D = c2 features.
// Inputs must be at least 10x10 for the pooled maps to stay non-empty.

struct ArchConfig {
    int conv1_channels = 16;
    int conv2_channels = 32;
    int num_classes = 7;

    int feature_dim() const { return conv2_channels; }
    void validate() const;
};

// Parameters live in one flat vector; the layout below names the slices.
// pcc and ncc occupy disjoint ranges by construction.
struct ParamLayout {
    std::size_t conv1_w = 0, conv1_b = 0;
    std::size_t conv2_w = 0, conv2_b = 0;
    std::size_t pcc_w = 0, pcc_b = 0;
    std::size_t ncc_w = 0, ncc_b = 0;
    std::size_t backbone_size = 0; // conv blocks end here; heads follow
    std::size_t total = 0;

    static ParamLayout make(const ArchConfig& arch);
};

struct ModelParams {
    ArchConfig arch;
    std::vector<double> values;

    ParamLayout layout() const { return ParamLayout::make(arch); }
    bool all_finite() const;
};

// Fan-in-scaled uniform weights, U(-sqrt(6/fan_in), sqrt(6/fan_in)),
// which targets std sqrt(2/fan_in); biases zero.
ModelParams init_params(const ArchConfig& arch, std::uint64_t seed);

// Spatial extents along the backbone: input -> conv1 -> pool -> conv2 -> pool.
// Throws when the pooled maps would collapse (inputs below 10x10).
struct SpatialDims {
    int h = 0, w = 0;
    int h1 = 0, w1 = 0;   // after conv1 (valid 3x3)
    int hp1 = 0, wp1 = 0; // after 2x2 pool
    int h2 = 0, w2 = 0;   // after conv2
    int hp2 = 0, wp2 = 0; // after 2x2 pool

    static SpatialDims make(int h, int w);
};

// Softmax outputs of both heads on both views, plus pooled features.
// When the strong view is not evaluated, its matrices stay empty.
struct PredictionBundle {
    Matrix p_w_p, p_s_p; // pcc on weak / strong view, batch×C
    Matrix p_w_n, p_s_n; // ncc on weak / strong view, batch×C
    Matrix features_w, features_s; // batch×D
};

// Forward pass that retains per-sample activations so a backward pass
// can follow without recomputing.
class BatchEvaluation {
public:
    BatchEvaluation(const ModelParams& params, const std::vector<Image>& weak,
                    const std::vector<Image>& strong);
    ~BatchEvaluation();
    BatchEvaluation(BatchEvaluation&&) noexcept;
    BatchEvaluation& operator=(BatchEvaluation&&) noexcept;

    const PredictionBundle& bundle() const;
    int batch_size() const;
    bool has_strong() const;

    struct Impl;
    Impl& impl() { return *impl_; }
    const Impl& impl() const { return *impl_; }

private:
    std::unique_ptr<Impl> impl_;
};

// Prediction-only forward (activations discarded).
PredictionBundle forward(const ModelParams& params, const std::vector<Image>& weak,
                         const std::vector<Image>& strong);

enum class ConsistencyHead { ncc, pcc };

// Which samples feed which loss term, with the discrete structure
// (selection, mask, stop-gradient target) pinned. backward treats all
// of it as constant; only the network outputs are live.
struct LossPlan {
    std::vector<int> labels;                 // train labels, one per sample
    std::vector<std::uint8_t> supervised;    // 1 -> sample contributes to L_s
    std::vector<std::uint8_t> consistency;   // 1 -> sample contributes to L_c
    Matrix mask;   // batch×C top-k mask; only consistency rows are read
    Matrix target; // batch×C stop-grad target (weak-view probs of `head`)
    ConsistencyHead head = ConsistencyHead::ncc;
};

struct GradientReport {
    std::vector<double> grads; // congruent to ModelParams::values
    double loss_s = 0.0;
    double loss_c = 0.0;
    double loss = 0.0; // loss_s + loss_c
};

// Exact gradient of L_s + L_c under the plan. L_s is the mean CE of
// supervised samples through pcc on the weak view; L_c is the masked
// consistency of consistency samples through `head` on the strong view
// toward the fixed target. Throws DivergenceError on non-finite values,
// naming the parameter block.
//
// Per-sample contributions accumulate inside fixed 8-sample chunks and
// the chunks fold in index order, so the result is bit-identical for
// every `threads` value.
GradientReport backward(const ModelParams& params, const BatchEvaluation& eval,
                        const LossPlan& plan, int threads = 1);

enum class LossTerms { supervised, consistency, both };

// The loss backward differentiates, re-evaluated from scratch (for the
// finite-difference path): live forward, fixed plan.
double loss_value(const ModelParams& params, const std::vector<Image>& weak,
                  const std::vector<Image>& strong, const LossPlan& plan,
                  LossTerms terms);

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    bool pass = false;
};

// Central finite differences over every parameter, compared against the
// analytic gradient. Relative error per entry is |a-n| / max(1,|a|,|n|).
GradCheckReport grad_check(const ModelParams& params, const std::vector<Image>& weak,
                           const std::vector<Image>& strong, const LossPlan& plan,
                           LossTerms terms, double epsilon = 1e-3,
                           double tolerance = 1e-4);

// NCPT v1 checkpoint container. Little-endian:
//
//   magic   4 bytes 4E 43 50 54 ("NCPT")
//   version u8      1
//   count   u32     number of named tensors
//   tensor  (repeated)
//           u16 name length, UTF-8 name, u8 rank, u32 dims[rank],
//           IEEE-754 binary64 values
//   crc32   u32     CRC-32 of every preceding byte
//
// Tensors: conv1.w [c1,1,3,3], conv1.b [c1], conv2.w [c2,c1,3,3],
// conv2.b [c2], pcc.w [C,D], pcc.b [C], ncc.w [C,D], ncc.b [C].
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

} // namespace ncct

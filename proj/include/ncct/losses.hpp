#pragma once

#include <vector>

#include "ncct/matrix.hpp"

namespace ncct {

// Logs are clamped at 1e-12 throughout so a zero probability yields a
// large finite loss instead of inf; `clamp_events` out-params count how
// often the floor actually fired.

// Row mask keeping k classes per sample in the consistency sum.
struct NegativeMask {
    Matrix mask; // batch×C of {0,1}; exactly k ones per row
    int k = 0;
};

struct LossReport {
    double loss_s = 0.0;
    double loss_c = 0.0;
    double total = 0.0; // loss_s + loss_c, exactly
    int num_confident = 0;
    int num_non_confident = 0;
    int clamp_events = 0;
};

// Mean cross-entropy over the `rows` subset of `probs` against the
// train labels: (1/|rows|) sum_i -log p[i][y_i]. Empty subset -> 0.
double supervised_ce(const Matrix& probs, const std::vector<int>& labels,
                     const std::vector<int>& rows, int* clamp_events = nullptr);

// 1.0 at the k largest entries of each row, 0.0 elsewhere. Ties resolve
// toward the lower class index. Requires 1 <= k <= C.
NegativeMask topk_mask(const Matrix& scores, int k);

// 1.0 at the k smallest entries, same tie rule. Used by the single-head
// ablation, where the k least-likely classes play the negative role.
NegativeMask bottomk_mask(const Matrix& scores, int k);

// Masked consistency pulling the strong view toward the weak view:
//   (1/max(1,|rows|)) sum_{i in rows} sum_c -mask[i][c] * p_w[i][c]
//                                           * log(max(p_s[i][c], 1e-12))
// The weak-view target is a constant (stop-gradient lives upstream);
// the masked target is used verbatim, never renormalized.
double masked_consistency(const Matrix& p_w, const Matrix& p_s, const NegativeMask& mask,
                          const std::vector<int>& rows, int* clamp_events = nullptr);

// Overall objective: straight sum, no weighting knob.
LossReport combine(double loss_s, double loss_c, int num_confident = 0,
                   int num_non_confident = 0, int clamp_events = 0);

} // namespace ncct

#include "ncct/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ncct/error.hpp"

namespace ncct {

namespace {

constexpr double kLogClamp = 1e-12;

void check_row(const Matrix& m, int row, const char* what) {
    if (row < 0 || row >= m.rows)
        throw InvalidArgument(std::string(what) + " row index " + std::to_string(row) +
                              " out of range [0, " + std::to_string(m.rows) + ")");
}

double clamped_log(double p, int* clamp_events) {
    if (p < kLogClamp) {
        if (clamp_events) ++*clamp_events;
        p = kLogClamp;
    }
    return std::log(p);
}

NegativeMask rank_mask(const Matrix& scores, int k, bool largest) {
    if (k < 1 || k > scores.cols)
        throw InvalidArgument("k = " + std::to_string(k) + " outside [1, " +
                              std::to_string(scores.cols) + "]");
    NegativeMask nm;
    nm.k = k;
    nm.mask = Matrix(scores.rows, scores.cols);
    std::vector<int> order(scores.cols);
    for (int i = 0; i < scores.rows; ++i) {
        const double* row = scores.row(i);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (row[a] != row[b]) return largest ? row[a] > row[b] : row[a] < row[b];
            return a < b;
        });
        double* out = nm.mask.row(i);
        for (int j = 0; j < k; ++j) out[order[j]] = 1.0;
    }
    return nm;
}

} // namespace

double supervised_ce(const Matrix& probs, const std::vector<int>& labels,
                     const std::vector<int>& rows, int* clamp_events) {
    if (probs.rows != static_cast<int>(labels.size()))
        throw InvalidArgument("probs/labels size mismatch");
    if (rows.empty()) return 0.0;
    double sum = 0.0;
    for (int r : rows) {
        check_row(probs, r, "supervised_ce");
        const int y = labels[r];
        if (y < 0 || y >= probs.cols)
            throw InvalidArgument("label " + std::to_string(y) + " out of range");
        sum += -clamped_log(probs.at(r, y), clamp_events);
    }
    return sum / static_cast<double>(rows.size());
}

NegativeMask topk_mask(const Matrix& scores, int k) { return rank_mask(scores, k, true); }

NegativeMask bottomk_mask(const Matrix& scores, int k) {
    return rank_mask(scores, k, false);
}

double masked_consistency(const Matrix& p_w, const Matrix& p_s, const NegativeMask& mask,
                          const std::vector<int>& rows, int* clamp_events) {
    const Matrix& m = mask.mask;
    if (p_w.rows != p_s.rows || p_w.rows != m.rows || p_w.cols != p_s.cols ||
        p_w.cols != m.cols)
        throw InvalidArgument("weak/strong/mask shape mismatch");
    double sum = 0.0;
    for (int r : rows) {
        check_row(p_s, r, "masked_consistency");
        for (int c = 0; c < p_s.cols; ++c) {
            if (m.at(r, c) == 0.0) continue;
            sum += -m.at(r, c) * p_w.at(r, c) * clamped_log(p_s.at(r, c), clamp_events);
        }
    }
    return sum / static_cast<double>(std::max<std::size_t>(1, rows.size()));
}

LossReport combine(double loss_s, double loss_c, int num_confident, int num_non_confident,
                   int clamp_events) {
    if (!std::isfinite(loss_s) || !std::isfinite(loss_c))
        throw DivergenceError("non-finite loss term");
    LossReport r;
    r.loss_s = loss_s;
    r.loss_c = loss_c;
    r.total = loss_s + loss_c;
    r.num_confident = num_confident;
    r.num_non_confident = num_non_confident;
    r.clamp_events = clamp_events;
    return r;
}

} // namespace ncct

#pragma once

#include <map>
#include <vector>

#include "ncct/matrix.hpp"

namespace ncct {

// Per-class dynamic thresholds. T_c is the mean over the samples of the
// batch carrying train label c of their predicted probability for c.
// Only classes present in the batch have an entry.
struct ThresholdVector {
    std::map<int, double> by_class;

    bool has(int c) const { return by_class.count(c) != 0; }
    double at(int c) const;
};

// `probs` is batch×C (softmax rows), `labels` the train labels. The
// mean is clamped into the [min, max] span of its class group so the
// comparisons below stay exact when FP rounding nudges the mean a ulp
// past an extreme (identical values, for instance).
ThresholdVector compute_thresholds(const Matrix& probs, const std::vector<int>& labels);

struct BatchPartition {
    std::vector<int> confident;     // batch indices, ascending
    std::vector<int> non_confident; // batch indices, ascending

    int size() const { return static_cast<int>(confident.size() + non_confident.size()); }
};

// A sample is confident iff probs[i][labels[i]] >= T_{labels[i]}
// (inclusive). Every index lands in exactly one list.
BatchPartition partition_batch(const Matrix& probs, const std::vector<int>& labels,
                               const ThresholdVector& thresholds);

} // namespace ncct

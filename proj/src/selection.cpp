#include "ncct/selection.hpp"

#include <algorithm>
#include <string>

#include "ncct/error.hpp"

namespace ncct {

double ThresholdVector::at(int c) const {
    auto it = by_class.find(c);
    if (it == by_class.end())
        throw InvalidArgument("no threshold for class " + std::to_string(c) +
                              " (class absent from batch)");
    return it->second;
}

namespace {

void check_shapes(const Matrix& probs, const std::vector<int>& labels) {
    if (probs.rows != static_cast<int>(labels.size()))
        throw InvalidArgument("probs has " + std::to_string(probs.rows) +
                              " rows but there are " + std::to_string(labels.size()) +
                              " labels");
    for (int i = 0; i < probs.rows; ++i)
        if (labels[i] < 0 || labels[i] >= probs.cols)
            throw InvalidArgument("label " + std::to_string(labels[i]) +
                                  " out of range at row " + std::to_string(i));
}

} // namespace

ThresholdVector compute_thresholds(const Matrix& probs, const std::vector<int>& labels) {
    check_shapes(probs, labels);
    struct Group {
        double sum = 0.0, lo = 0.0, hi = 0.0;
        int count = 0;
    };
    std::map<int, Group> groups;
    for (int i = 0; i < probs.rows; ++i) {
        const double p = probs.at(i, labels[i]);
        Group& g = groups[labels[i]];
        if (g.count == 0) {
            g.lo = g.hi = p;
        } else {
            g.lo = std::min(g.lo, p);
            g.hi = std::max(g.hi, p);
        }
        g.sum += p;
        ++g.count;
    }
    ThresholdVector tv;
    for (const auto& [c, g] : groups)
        tv.by_class[c] = std::clamp(g.sum / g.count, g.lo, g.hi);
    return tv;
}

BatchPartition partition_batch(const Matrix& probs, const std::vector<int>& labels,
                               const ThresholdVector& thresholds) {
    check_shapes(probs, labels);
    BatchPartition part;
    for (int i = 0; i < probs.rows; ++i) {
        if (probs.at(i, labels[i]) >= thresholds.at(labels[i]))
            part.confident.push_back(i);
        else
            part.non_confident.push_back(i);
    }
    return part;
}

} // namespace ncct

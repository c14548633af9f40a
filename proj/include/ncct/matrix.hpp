#pragma once

#include <cstddef>
#include <vector>

namespace ncct {

// Dense row-major matrix of doubles. Probability matrices in this
// project are batch×C with one row per sample.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

    bool empty() const { return data.empty(); }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

} // namespace ncct

#pragma once

#include <cstddef>
#include <vector>

namespace ncct {

// Row-major H×W grayscale intensity grid, values in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pixels; // size height*width

    Image() = default;
    Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, 0.0) {}

    double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    // Edge-replicated read: coordinates outside the grid clamp to the
    // nearest border pixel.
    double at_clamped(int y, int x) const {
        if (y < 0) y = 0;
        if (y >= height) y = height - 1;
        if (x < 0) x = 0;
        if (x >= width) x = width - 1;
        return at(y, x);
    }

    bool same_shape(const Image& other) const {
        return height == other.height && width == other.width;
    }

    friend bool operator==(const Image&, const Image&) = default;
};

} // namespace ncct

#include "ncct/augment.hpp"

#include <algorithm>
#include <cmath>

#include "ncct/error.hpp"

namespace ncct {

TransformKind transform_from_name(const std::string& name) {
    if (name == "rotate") return TransformKind::rotate;
    if (name == "translate_x") return TransformKind::translate_x;
    if (name == "translate_y") return TransformKind::translate_y;
    if (name == "contrast") return TransformKind::contrast;
    if (name == "brightness") return TransformKind::brightness;
    if (name == "invert") return TransformKind::invert;
    if (name == "shear_x") return TransformKind::shear_x;
    throw InvalidArgument("unknown transform '" + name + "'");
}

std::string transform_name(TransformKind k) {
    switch (k) {
        case TransformKind::rotate: return "rotate";
        case TransformKind::translate_x: return "translate_x";
        case TransformKind::translate_y: return "translate_y";
        case TransformKind::contrast: return "contrast";
        case TransformKind::brightness: return "brightness";
        case TransformKind::invert: return "invert";
        case TransformKind::shear_x: return "shear_x";
    }
    throw InvalidArgument("unknown transform kind");
}

namespace {

constexpr double kPi = 3.14159265358979323846;

// Nearest-neighbor pull-back through an affine map: for every output
// pixel, sample the input at the inverse-transformed position, clamped
// to the grid (edge replication).
Image resample_affine(const Image& img, double m00, double m01, double m10, double m11,
                      double tx, double ty) {
    const double cx = (img.width - 1) / 2.0;
    const double cy = (img.height - 1) / 2.0;
    Image out(img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double rx = x - cx - tx;
            const double ry = y - cy - ty;
            const int sx = static_cast<int>(std::lround(m00 * rx + m01 * ry + cx));
            const int sy = static_cast<int>(std::lround(m10 * rx + m11 * ry + cy));
            out.at(y, x) = img.at_clamped(sy, sx);
        }
    }
    return out;
}

} // namespace

Image apply_transform(const Image& img, const TransformSpec& t) {
    if (t.magnitude < 0.0 || t.magnitude > 1.0)
        throw InvalidArgument("transform magnitude must be in [0,1]");
    const double sign = t.negate ? -1.0 : 1.0;
    const double m = sign * t.magnitude;

    switch (t.kind) {
        case TransformKind::rotate: {
            const double a = m * (30.0 * kPi / 180.0);
            // inverse rotation pulls output pixels back to the source
            return resample_affine(img, std::cos(a), std::sin(a), -std::sin(a),
                                   std::cos(a), 0.0, 0.0);
        }
        case TransformKind::translate_x: {
            const int shift = static_cast<int>(std::lround(m * 0.2 * img.width));
            return resample_affine(img, 1, 0, 0, 1, shift, 0.0);
        }
        case TransformKind::translate_y: {
            const int shift = static_cast<int>(std::lround(m * 0.2 * img.height));
            return resample_affine(img, 1, 0, 0, 1, 0.0, shift);
        }
        case TransformKind::shear_x:
            // x' = x + s*(y - cy); inverse shears by -s
            return resample_affine(img, 1.0, -m * 0.3, 0.0, 1.0, 0.0, 0.0);
        case TransformKind::contrast: {
            // gain in [0.5, 1.5]; written as p + (gain-1)*(p-0.5) so that
            // magnitude 0 is the bit-exact identity
            const double gain_m1 = m * 0.5;
            Image out = img;
            for (double& p : out.pixels) p = std::clamp(p + gain_m1 * (p - 0.5), 0.0, 1.0);
            return out;
        }
        case TransformKind::brightness: {
            const double shift = m * 0.3;
            Image out = img;
            for (double& p : out.pixels) p = std::clamp(p + shift, 0.0, 1.0);
            return out;
        }
        case TransformKind::invert: {
            Image out = img;
            for (double& p : out.pixels) p = 1.0 - p;
            return out;
        }
    }
    throw InvalidArgument("unknown transform kind");
}

Image weak_augment(const Image& img, const AugmentStream& stream) {
    constexpr int pad = 4;
    Rng rng = stream.rng(1);
    const int off_y = static_cast<int>(rng.uniform_below(2 * pad + 1));
    const int off_x = static_cast<int>(rng.uniform_below(2 * pad + 1));
    const bool flip = rng.bernoulli(0.5);

    Image out(img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            // crop window in padded coordinates, read with edge clamp
            const int sy = y + off_y - pad;
            const int sx = x + off_x - pad;
            const int ox = flip ? img.width - 1 - x : x;
            out.at(y, ox) = img.at_clamped(sy, sx);
        }
    }
    return out;
}

Image strong_augment(const Image& img, const AugmentStream& stream) {
    Rng rng = stream.rng(2);
    Image out = img;
    for (int i = 0; i < 2; ++i) {
        TransformSpec t;
        t.kind = static_cast<TransformKind>(rng.uniform_below(kNumTransformKinds));
        t.magnitude = rng.uniform01();
        t.negate = rng.bernoulli(0.5);
        out = apply_transform(out, t);
    }
    for (double& p : out.pixels) p = std::clamp(p, 0.0, 1.0);
    return out;
}

} // namespace ncct

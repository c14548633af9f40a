#pragma once

#include <cstdint>
#include <string>

#include "ncct/image.hpp"
#include "ncct/rng.hpp"

namespace ncct {

// Per-sample random stream, keyed on (global_seed, epoch, sample_id).
// Identical keys give identical streams, so augmentation results do not
// depend on batch composition or evaluation order.
struct AugmentStream {
    std::uint64_t global_seed = 0;
    std::uint64_t epoch = 0;
    std::uint64_t sample_id = 0;

    // `lane` separates consumers of the same key (weak vs strong view).
    Rng rng(std::uint64_t lane = 0) const {
        return Rng(mix_seed({global_seed, 0x617567ull /* "aug" */, epoch, sample_id, lane}));
    }
};

enum class TransformKind {
    rotate,      // +/- 30 degrees at full magnitude
    translate_x, // +/- 20% of width
    translate_y, // +/- 20% of height
    contrast,    // gain in [0.5, 1.5]
    brightness,  // shift +/- 0.3
    invert,      // 1 - x, magnitude-free
    shear_x,     // +/- 0.3
};
constexpr int kNumTransformKinds = 7;

TransformKind transform_from_name(const std::string& name);
std::string transform_name(TransformKind k);

// magnitude 0 is always the identity; `negate` picks the sign of the
// effect for the signed transforms (ignored by invert).
struct TransformSpec {
    TransformKind kind = TransformKind::rotate;
    double magnitude = 0.0; // in [0, 1]
    bool negate = false;
};

// Deterministic application of one transform. Geometric ops resample
// nearest-neighbor with edge replication.
Image apply_transform(const Image& img, const TransformSpec& t);

// Pad 4px (edge replication), random H×W crop, horizontal flip with
// probability 0.5.
Image weak_augment(const Image& img, const AugmentStream& stream);

// Two transforms sampled uniformly with replacement, random magnitude
// and sign each, applied in sampled order; output clamped to [0, 1].
Image strong_augment(const Image& img, const AugmentStream& stream);

} // namespace ncct

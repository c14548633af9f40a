#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ncct/image.hpp"

namespace ncct {

enum class Split { train, test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct Sample {
    Image image;
    int true_label = 0;  // ground truth, never touched by noise injection
    int train_label = 0; // what the trainer sees
    std::uint32_t id = 0;

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
    std::vector<Sample> samples;
    int num_classes = 0;
    int height = 0;
    int width = 0;
    Split split_tag = Split::train;

    std::size_t size() const { return samples.size(); }

    // Fraction of samples whose train label disagrees with the truth.
    double noise_rate() const;

    // Sample counts keyed by train label.
    std::vector<std::size_t> class_counts() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

// source class -> target class label confusions for asymmetric noise.
struct ConfusionPairs {
    std::map<int, int> pairs;

    // The seven most-confused expression pairs, with the usual 7-class
    // index order 0=surprise 1=fear 2=disgust 3=happy 4=sad 5=anger
    // 6=neutral: surprise->anger, fear->surprise, disgust->anger,
    // happy->neutral, sad->neutral, anger->happy, neutral->sad.
    static ConfusionPairs default_pairs();

    // Text file, one `src,dst` line per pair. '#' starts a comment.
    static ConfusionPairs from_file(const std::string& path);

    void validate(int num_classes) const;
};

// Synthetic benchmark generator. Each class renders an oriented-bar
// template (angle indexed by class), perturbed per sample by rotation,
// translation and pixel noise, all scaled by `variation` in [0,1].
// Pixels are quantized to the u8 grid (multiples of 1/255) so that
// datasets survive NCDS round trips exactly. Labels start clean
// (train_label == true_label). Deterministic in `seed`.
Dataset generate_toy_dataset(int num_classes, int per_class, int height, int width,
                             double variation, std::uint64_t seed,
                             Split split = Split::train);

// Relabel exactly round(rate*|d|) samples, chosen uniformly without
// replacement, to a uniform class other than their true label.
Dataset inject_symmetric_noise(const Dataset& d, double rate, std::uint64_t seed);

// For each source->target pair, relabel exactly round(rate * |class src|)
// samples of that source class (by true label) to the target class.
Dataset inject_asymmetric_noise(const Dataset& d, double rate,
                                const ConfusionPairs& pairs, std::uint64_t seed);

// Duplicate minority-class samples (uniform with replacement, fresh ids)
// until every train-label class count equals the current maximum.
Dataset oversample_balance(const Dataset& d, std::uint64_t seed);

// NCDS v1 container. Little-endian throughout:
//
//   magic   4 bytes  4E 43 44 53 ("NCDS")
//   version u8       1
//   header  4x u32   num_samples, num_classes, height, width
//   sample  (repeated num_samples times)
//           u32 id, u8 true_label, u8 train_label, H*W u8 pixels
//           (pixel byte = round(intensity * 255))
//   crc32   u32      CRC-32 of every preceding byte
//
// The split tag lives in a sidecar text file `<path>.manifest` with a
// `split=train|test` line (plus free-form `key=value` metadata).
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

// CRC32 of an entire file on disk (manifest bookkeeping).
std::uint32_t file_crc32(const std::string& path);

// CRC32 for manifest bookkeeping. A trailing self-checksum (NCDS and NCPT
// files end with the CRC of everything before it) makes the whole-file CRC a
// constant residue, so such a trailer is detected and excluded.
std::uint32_t file_payload_crc32(const std::string& path);

} // namespace ncct

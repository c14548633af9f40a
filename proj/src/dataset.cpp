#include "ncct/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ncct/crc32.hpp"
#include "ncct/error.hpp"
#include "ncct/rng.hpp"

namespace ncct {

std::string split_name(Split s) {
    return s == Split::train ? "train" : "test";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "test") return Split::test;
    throw FormatError("unknown split tag '" + name + "' (expected train|test)");
}

double Dataset::noise_rate() const {
    if (samples.empty()) return 0.0;
    std::size_t mismatched = 0;
    for (const auto& s : samples)
        if (s.train_label != s.true_label) ++mismatched;
    return static_cast<double>(mismatched) / static_cast<double>(samples.size());
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (const auto& s : samples) counts[s.train_label]++;
    return counts;
}

ConfusionPairs ConfusionPairs::default_pairs() {
    // surprise->anger, fear->surprise, disgust->anger, happy->neutral,
    // sad->neutral, anger->happy, neutral->sad
    ConfusionPairs p;
    p.pairs = {{0, 5}, {1, 0}, {2, 5}, {3, 6}, {4, 6}, {5, 3}, {6, 4}};
    return p;
}

ConfusionPairs ConfusionPairs::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pairs file: " + path);
    ConfusionPairs result;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        auto is_space = [](unsigned char c) { return std::isspace(c); };
        line.erase(line.begin(), std::find_if_not(line.begin(), line.end(), is_space));
        line.erase(std::find_if_not(line.rbegin(), line.rend(), is_space).base(), line.end());
        if (line.empty()) continue;
        int src = 0, dst = 0;
        char comma = 0;
        std::istringstream ss(line);
        if (!(ss >> src >> comma >> dst) || comma != ',')
            throw FormatError("pairs file " + path + ":" + std::to_string(lineno) +
                              ": expected 'src,dst', got '" + line + "'");
        if (result.pairs.count(src))
            throw FormatError("pairs file " + path + ": duplicate source class " +
                              std::to_string(src));
        result.pairs[src] = dst;
    }
    result.validate(256);
    return result;
}

void ConfusionPairs::validate(int num_classes) const {
    for (const auto& [src, dst] : pairs) {
        if (src == dst)
            throw InvalidArgument("confusion pair " + std::to_string(src) +
                                  "->" + std::to_string(dst) + " maps a class to itself");
        if (src < 0 || src >= num_classes || dst < 0 || dst >= num_classes)
            throw InvalidArgument("confusion pair " + std::to_string(src) + "->" +
                                  std::to_string(dst) + " out of range for C=" +
                                  std::to_string(num_classes));
    }
}

namespace {

constexpr double kPi = 3.14159265358979323846;

double quantize_u8(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return static_cast<double>(std::lrint(v * 255.0)) / 255.0;
}

std::size_t round_half_up(double x) {
    return static_cast<std::size_t>(std::llround(x));
}

} // namespace

Dataset generate_toy_dataset(int num_classes, int per_class, int height, int width,
                             double variation, std::uint64_t seed, Split split) {
    if (num_classes < 2)
        throw InvalidArgument("num_classes must be >= 2, got " + std::to_string(num_classes));
    if (per_class < 1)
        throw InvalidArgument("per_class must be >= 1, got " + std::to_string(per_class));
    if (height < 8 || width < 8)
        throw InvalidArgument("image dimensions must be >= 8px, got " +
                              std::to_string(height) + "x" + std::to_string(width));
    if (variation < 0.0 || variation > 1.0)
        throw InvalidArgument("variation must be in [0,1]");

    Dataset d;
    d.num_classes = num_classes;
    d.height = height;
    d.width = width;
    d.split_tag = split;
    d.samples.reserve(static_cast<std::size_t>(num_classes) * per_class);

    Rng rng(mix_seed({seed, 0x746F79ull /* "toy" */,
                      split == Split::train ? 0ull : 1ull}));

    const double cx0 = (width - 1) / 2.0;
    const double cy0 = (height - 1) / 2.0;
    const double bar_half_width = 0.065 * std::min(height, width);
    const double blob_radius = 0.055 * std::min(height, width);
    const double blob_orbit = 0.30 * std::min(height, width);
    const double angle_gap = kPi / num_classes;

    std::uint32_t next_id = 0;
    for (int c = 0; c < num_classes; ++c) {
        const double bar_angle = angle_gap * c;        // line orientation, period pi
        const double blob_angle = 2.0 * kPi * c / num_classes; // full-circle position
        for (int j = 0; j < per_class; ++j) {
            // Per-sample perturbation. Draw counts are independent of
            // `variation` so seed streams line up across settings.
            const double jitter = variation * rng.uniform(-0.65, 0.65) * angle_gap;
            const double dx = variation * rng.uniform(-4.0, 4.0);
            const double dy = variation * rng.uniform(-4.0, 4.0);
            const double sigma = 0.16 * variation;

            const double a = bar_angle + jitter;
            const double nx = -std::sin(a), ny = std::cos(a); // bar normal
            const double cx = cx0 + dx, cy = cy0 + dy;
            const double bx = cx + blob_orbit * std::cos(blob_angle + jitter);
            const double by = cy + blob_orbit * std::sin(blob_angle + jitter);

            Sample s;
            s.image = Image(height, width);
            s.true_label = c;
            s.train_label = c;
            s.id = next_id++;
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x) {
                    const double bar_d = std::abs((x - cx) * nx + (y - cy) * ny);
                    double v = 0.80 * std::clamp(bar_half_width + 1.0 - bar_d, 0.0, 1.0);
                    const double blob_d = std::hypot(x - bx, y - by);
                    v += 0.95 * std::clamp(blob_radius + 1.0 - blob_d, 0.0, 1.0);
                    v += sigma * rng.normal();
                    s.image.at(y, x) = quantize_u8(v);
                }
            }
            d.samples.push_back(std::move(s));
        }
    }
    return d;
}

Dataset inject_symmetric_noise(const Dataset& d, double rate, std::uint64_t seed) {
    if (rate < 0.0 || rate > 1.0)
        throw InvalidArgument("noise rate must be in [0,1], got " + std::to_string(rate));
    if (d.split_tag != Split::train)
        throw InvalidArgument("noise injection requires a train split");

    Dataset out = d;
    const std::size_t n = d.size();
    const std::size_t count = round_half_up(rate * static_cast<double>(n));

    Rng rng(mix_seed({seed, 0x73796Dull /* "sym" */}));
    auto victims = rng.sample_without_replacement(static_cast<std::uint32_t>(n),
                                                 static_cast<std::uint32_t>(count));
    for (std::uint32_t idx : victims) {
        Sample& s = out.samples[idx];
        // uniform over the C-1 classes other than the true label
        int r = static_cast<int>(rng.uniform_below(d.num_classes - 1));
        s.train_label = r >= s.true_label ? r + 1 : r;
    }
    return out;
}

Dataset inject_asymmetric_noise(const Dataset& d, double rate,
                                const ConfusionPairs& pairs, std::uint64_t seed) {
    if (rate < 0.0 || rate > 1.0)
        throw InvalidArgument("noise rate must be in [0,1], got " + std::to_string(rate));
    if (d.split_tag != Split::train)
        throw InvalidArgument("noise injection requires a train split");
    pairs.validate(d.num_classes);

    Dataset out = d;
    Rng rng(mix_seed({seed, 0x6173796Dull /* "asym" */}));

    // std::map iterates sources in ascending order, so the draw sequence
    // is stable no matter how the pairs were supplied.
    for (const auto& [src, dst] : pairs.pairs) {
        std::vector<std::uint32_t> members;
        for (std::uint32_t i = 0; i < out.samples.size(); ++i)
            if (out.samples[i].true_label == src) members.push_back(i);
        const std::size_t count = round_half_up(rate * static_cast<double>(members.size()));
        auto picks = rng.sample_without_replacement(static_cast<std::uint32_t>(members.size()),
                                                    static_cast<std::uint32_t>(count));
        for (std::uint32_t p : picks) out.samples[members[p]].train_label = dst;
    }
    return out;
}

Dataset oversample_balance(const Dataset& d, std::uint64_t seed) {
    std::vector<std::vector<std::uint32_t>> by_class(d.num_classes);
    for (std::uint32_t i = 0; i < d.samples.size(); ++i)
        by_class[d.samples[i].train_label].push_back(i);

    std::size_t max_count = 0;
    for (int c = 0; c < d.num_classes; ++c) {
        if (by_class[c].empty())
            throw InvalidArgument("class " + std::to_string(c) +
                                  " has no samples; cannot oversample");
        max_count = std::max(max_count, by_class[c].size());
    }

    Dataset out = d;
    std::uint32_t next_id = 0;
    for (const auto& s : d.samples) next_id = std::max(next_id, s.id + 1);

    Rng rng(mix_seed({seed, 0x62616Cull /* "bal" */}));
    for (int c = 0; c < d.num_classes; ++c) {
        const auto& members = by_class[c];
        for (std::size_t need = max_count - members.size(); need > 0; --need) {
            Sample copy = d.samples[members[rng.uniform_below(members.size())]];
            copy.id = next_id++;
            out.samples.push_back(std::move(copy));
        }
    }
    return out;
}

namespace {

constexpr std::uint8_t kNcdsMagic[4] = {0x4E, 0x43, 0x44, 0x53}; // "NCDS"
constexpr std::uint8_t kNcdsVersion = 1;

void put_u32le(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xFF));
    buf.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    buf.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    buf.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string sidecar_path(const std::string& path) { return path + ".manifest"; }

} // namespace

void save_dataset(const Dataset& d, const std::string& path) {
    std::vector<std::uint8_t> buf;
    const std::size_t pixel_count = static_cast<std::size_t>(d.height) * d.width;
    buf.reserve(21 + d.size() * (6 + pixel_count) + 4);

    buf.insert(buf.end(), kNcdsMagic, kNcdsMagic + 4);
    buf.push_back(kNcdsVersion);
    put_u32le(buf, static_cast<std::uint32_t>(d.size()));
    put_u32le(buf, static_cast<std::uint32_t>(d.num_classes));
    put_u32le(buf, static_cast<std::uint32_t>(d.height));
    put_u32le(buf, static_cast<std::uint32_t>(d.width));

    for (const auto& s : d.samples) {
        put_u32le(buf, s.id);
        buf.push_back(static_cast<std::uint8_t>(s.true_label));
        buf.push_back(static_cast<std::uint8_t>(s.train_label));
        for (double p : s.image.pixels) {
            long byte = std::lrint(std::clamp(p, 0.0, 1.0) * 255.0);
            buf.push_back(static_cast<std::uint8_t>(byte));
        }
    }
    put_u32le(buf, crc32(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write: " + path);

    std::ofstream side(sidecar_path(path), std::ios::trunc);
    if (!side) throw IoError("cannot open for writing: " + sidecar_path(path));
    side << "split=" << split_name(d.split_tag) << "\n";
    if (!side) throw IoError("short write: " + sidecar_path(path));
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    in.close();

    if (buf.size() < 21)
        throw TruncationError(path + ": expected at least 21 header bytes, got " +
                              std::to_string(buf.size()));
    if (std::memcmp(buf.data(), kNcdsMagic, 4) != 0)
        throw FormatError(path + ": bad magic, not an NCDS file");
    if (buf[4] != kNcdsVersion)
        throw FormatError(path + ": unsupported NCDS version " + std::to_string(buf[4]));

    const std::uint32_t num_samples = get_u32le(buf.data() + 5);
    const std::uint32_t num_classes = get_u32le(buf.data() + 9);
    const std::uint32_t height = get_u32le(buf.data() + 13);
    const std::uint32_t width = get_u32le(buf.data() + 17);
    if (num_classes < 2 || num_classes > 255)
        throw FormatError(path + ": num_classes " + std::to_string(num_classes) +
                          " out of range");
    if (height < 1 || width < 1 || height > 65536 || width > 65536)
        throw FormatError(path + ": implausible image size " + std::to_string(height) +
                          "x" + std::to_string(width));

    const std::size_t pixel_count = static_cast<std::size_t>(height) * width;
    const std::size_t expected = 21 + static_cast<std::size_t>(num_samples) *
                                          (6 + pixel_count) + 4;
    if (buf.size() < expected)
        throw TruncationError(path + ": expected " + std::to_string(expected) +
                              " bytes, got " + std::to_string(buf.size()));
    if (buf.size() > expected)
        throw FormatError(path + ": " + std::to_string(buf.size() - expected) +
                          " trailing bytes after payload");

    const std::uint32_t stored_crc = get_u32le(buf.data() + expected - 4);
    const std::uint32_t actual_crc = crc32(buf.data(), expected - 4);
    if (stored_crc != actual_crc) {
        char msg[96];
        std::snprintf(msg, sizeof msg, "checksum mismatch: stored %08X, computed %08X",
                      stored_crc, actual_crc);
        throw ChecksumError(path + ": " + msg);
    }

    Dataset d;
    d.num_classes = static_cast<int>(num_classes);
    d.height = static_cast<int>(height);
    d.width = static_cast<int>(width);
    d.samples.reserve(num_samples);

    const std::uint8_t* p = buf.data() + 21;
    for (std::uint32_t i = 0; i < num_samples; ++i) {
        Sample s;
        s.id = get_u32le(p);
        s.true_label = p[4];
        s.train_label = p[5];
        if (s.true_label >= d.num_classes || s.train_label >= d.num_classes)
            throw FormatError(path + ": sample " + std::to_string(i) +
                              " has label outside [0," + std::to_string(num_classes) + ")");
        p += 6;
        s.image = Image(d.height, d.width);
        for (std::size_t k = 0; k < pixel_count; ++k)
            s.image.pixels[k] = static_cast<double>(p[k]) / 255.0;
        p += pixel_count;
        d.samples.push_back(std::move(s));
    }

    // Split tag from the sidecar.
    const std::string side = sidecar_path(path);
    std::ifstream sin(side);
    if (!sin) throw IoError("missing sidecar manifest: " + side);
    std::string line;
    bool found = false;
    while (std::getline(sin, line)) {
        if (line.rfind("split=", 0) == 0) {
            d.split_tag = split_from_name(line.substr(6));
            found = true;
            break;
        }
    }
    if (!found) throw FormatError(side + ": no split= line");
    return d;
}

std::uint32_t file_crc32(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char chunk[65536];
    std::uint32_t crc = 0;
    while (in.read(chunk, sizeof chunk) || in.gcount() > 0)
        crc = crc32_update(crc, chunk, static_cast<std::size_t>(in.gcount()));
    return crc;
}

std::uint32_t file_payload_crc32(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    if (buf.size() >= 4) {
        const std::uint32_t head = crc32(buf.data(), buf.size() - 4);
        if (get_u32le(buf.data() + buf.size() - 4) == head) return head;
    }
    return crc32(buf.data(), buf.size());
}

} // namespace ncct

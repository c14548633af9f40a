// ncct command-line front end.
//
// Subcommands: gen-data, inject-noise, train, eval, sweep-k, report.
// Exit codes: 0 success, 2 usage error, 3 numerical divergence, 4 I/O error.
//
// Every run writes a manifest in config-file syntax.  `meta.*` keys document
// the run (version, timestamps, checksums, outputs) and are ignored on load;
// the remaining keys reproduce the invocation, so
//   ncct <command> --config <manifest>
// replays the run from the manifest alone.  Precedence: flags > config file
// > built-in defaults.

#include "CLI11.hpp"
#include "ncct.h"

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace {

[[noreturn]] void usage_error(const std::string& msg) {
    std::cerr << "usage error: " << msg << "\n";
    std::exit(2);
}

[[noreturn]] void io_error(const std::string& msg) {
    std::cerr << "error: " << msg << "\n";
    std::exit(4);
}

[[noreturn]] void fail_status(ncct_status s) {
    std::cerr << "error: " << ncct_last_error() << "\n";
    switch (s) {
        case NCCT_ERR_INVALID_ARGUMENT: std::exit(2);
        case NCCT_ERR_DIVERGENCE: std::exit(3);
        default: std::exit(4); // I/O and file-format family
    }
}

void check(ncct_status s) {
    if (s != NCCT_OK) fail_status(s);
}

// RAII for C API handles and strings.
template <typename T, void (*Free)(T*)>
struct Handle {
    T* p = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    Handle(Handle&& other) noexcept : p(other.p) { other.p = nullptr; }
    ~Handle() {
        if (p) Free(p);
    }
    T** out() { return &p; }
    T* get() const { return p; }
};
using DatasetHandle = Handle<ncct_dataset, ncct_dataset_free>;
using ConfigHandle = Handle<ncct_train_config, ncct_config_free>;
using ResultHandle = Handle<ncct_train_result, ncct_result_free>;
using ModelHandle = Handle<ncct_model, ncct_model_free>;

struct CStr {
    char* p = nullptr;
    CStr() = default;
    CStr(const CStr&) = delete;
    CStr& operator=(const CStr&) = delete;
    ~CStr() { ncct_string_free(p); }
    char** out() { return &p; }
    std::string str() const { return p ? std::string(p) : std::string(); }
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct KV {
    std::string key, value;
    int line = 0;
};

// Flat `key = value` reader shared by config files and manifests.
// '#' starts a comment; blank lines are skipped; keys repeat freely.
std::vector<KV> read_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) io_error("cannot open config: " + path);
    std::vector<KV> entries;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string text = trim(line);
        if (text.empty()) continue;
        const std::size_t eq = text.find('=');
        if (eq == std::string::npos)
            io_error(path + ":" + std::to_string(number) + ": expected `key = value`");
        KV kv;
        kv.key = trim(text.substr(0, eq));
        kv.value = trim(text.substr(eq + 1));
        kv.line = number;
        if (kv.key.empty())
            io_error(path + ":" + std::to_string(number) + ": empty key");
        entries.push_back(std::move(kv));
    }
    return entries;
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        usage_error(key + ": not an integer: '" + value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        usage_error(key + ": not a number: '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        usage_error(key + ": not an unsigned integer: '" + value + "'");
    }
}

std::string iso_utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string file_crc_hex(const std::string& path) {
    std::uint32_t crc = 0;
    check(ncct_file_crc32(path.c_str(), &crc));
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08X", crc);
    return buf;
}

void write_file(const std::string& content, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) io_error("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) io_error("short write: " + path);
}

void make_dirs(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) io_error("cannot create directory " + dir + ": " + ec.message());
}

// Run manifest: meta.* documentation lines first, then the replay keys.
struct Manifest {
    std::vector<std::pair<std::string, std::string>> meta, keys;
    std::string started = iso_utc_now();

    void put_meta(const std::string& k, const std::string& v) { meta.emplace_back(k, v); }
    void put(const std::string& k, const std::string& v) { keys.emplace_back(k, v); }
    void input_crc(const std::string& name, const std::string& path) {
        put_meta("meta.input." + name + ".crc32", file_crc_hex(path));
    }
    void output(const std::string& name, const std::string& path) {
        put_meta("meta.output." + name, path);
    }

    void write(const std::string& command, const std::string& path) {
        std::ostringstream out;
        out << "# ncct run manifest; replay with: ncct " << command << " --config " << path
            << "\n";
        out << "meta.command = " << command << "\n";
        out << "meta.version = " << ncct_version() << "\n";
        out << "meta.started = " << started << "\n";
        out << "meta.finished = " << iso_utc_now() << "\n";
        for (const auto& [k, v] : meta) out << k << " = " << v << "\n";
        for (const auto& [k, v] : keys) out << k << " = " << v << "\n";
        write_file(out.str(), path);
    }
};

// Looks up one effective setting by rendering the config.
std::string cfg_value(const ncct_train_config* cfg, const std::string& key) {
    CStr text;
    check(ncct_config_render(cfg, text.out()));
    std::istringstream in(text.str());
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        if (trim(line.substr(0, eq)) == key) return trim(line.substr(eq + 1));
    }
    usage_error("config key not found: " + key);
}

DatasetHandle load_dataset_or_die(const std::string& path) {
    DatasetHandle d;
    check(ncct_dataset_load(path.c_str(), d.out()));
    return d;
}

/* ---- gen-data ------------------------------------------------------ */

struct GenOpts {
    std::string config, out, split = "train";
    int classes = 7, per_class = 500, size = 32;
    double variation = 0.3;
    std::uint64_t seed = 1;
    CLI::Option *o_out = nullptr, *o_split = nullptr, *o_classes = nullptr,
                *o_per_class = nullptr, *o_size = nullptr, *o_variation = nullptr,
                *o_seed = nullptr;
};

int run_gen_data(GenOpts& o) {
    if (!o.config.empty()) {
        for (const KV& kv : read_kv_file(o.config)) {
            if (kv.key.rfind("meta.", 0) == 0) continue;
            if (kv.key == "out") {
                if (!o.o_out->count()) o.out = kv.value;
            } else if (kv.key == "split") {
                if (!o.o_split->count()) o.split = kv.value;
            } else if (kv.key == "classes") {
                if (!o.o_classes->count()) o.classes = parse_int(kv.key, kv.value);
            } else if (kv.key == "per_class") {
                if (!o.o_per_class->count()) o.per_class = parse_int(kv.key, kv.value);
            } else if (kv.key == "size") {
                if (!o.o_size->count()) o.size = parse_int(kv.key, kv.value);
            } else if (kv.key == "variation") {
                if (!o.o_variation->count()) o.variation = parse_double(kv.key, kv.value);
            } else if (kv.key == "seed") {
                if (!o.o_seed->count()) o.seed = parse_u64(kv.key, kv.value);
            } else {
                usage_error(o.config + ":" + std::to_string(kv.line) + ": unknown key '" +
                            kv.key + "' for gen-data");
            }
        }
    }
    if (o.out.empty()) usage_error("gen-data requires -o/--out");
    if (o.split != "train" && o.split != "test")
        usage_error("--split must be train or test, got '" + o.split + "'");

    Manifest manifest;
    DatasetHandle d;
    check(ncct_dataset_generate(o.classes, o.per_class, o.size, o.size, o.variation, o.seed,
                                o.split == "test" ? 1 : 0, d.out()));
    check(ncct_dataset_save(d.get(), o.out.c_str()));

    manifest.output("dataset", o.out);
    manifest.output("sidecar", o.out + ".manifest");
    manifest.put_meta("meta.output.dataset.crc32", file_crc_hex(o.out));
    manifest.put("classes", std::to_string(o.classes));
    manifest.put("per_class", std::to_string(o.per_class));
    manifest.put("size", std::to_string(o.size));
    manifest.put("variation", std::to_string(o.variation));
    manifest.put("seed", std::to_string(o.seed));
    manifest.put("split", o.split);
    manifest.put("out", o.out);
    manifest.write("gen-data", o.out + ".run");

    std::cout << "wrote " << ncct_dataset_size(d.get()) << " samples ("
              << ncct_dataset_num_classes(d.get()) << " classes, "
              << ncct_dataset_height(d.get()) << "x" << ncct_dataset_width(d.get())
              << ") to " << o.out << "\n";
    return 0;
}

/* ---- inject-noise -------------------------------------------------- */

struct InjectOpts {
    std::string config, in, out, kind = "sym", pairs;
    double rate = 0.0;
    std::uint64_t seed = 1;
    CLI::Option *o_in = nullptr, *o_out = nullptr, *o_kind = nullptr, *o_rate = nullptr,
                *o_pairs = nullptr, *o_seed = nullptr;
};

int run_inject(InjectOpts& o) {
    if (!o.config.empty()) {
        for (const KV& kv : read_kv_file(o.config)) {
            if (kv.key.rfind("meta.", 0) == 0) continue;
            if (kv.key == "in") {
                if (!o.o_in->count()) o.in = kv.value;
            } else if (kv.key == "out") {
                if (!o.o_out->count()) o.out = kv.value;
            } else if (kv.key == "kind") {
                if (!o.o_kind->count()) o.kind = kv.value;
            } else if (kv.key == "rate") {
                if (!o.o_rate->count()) o.rate = parse_double(kv.key, kv.value);
            } else if (kv.key == "pairs") {
                if (!o.o_pairs->count()) o.pairs = kv.value;
            } else if (kv.key == "seed") {
                if (!o.o_seed->count()) o.seed = parse_u64(kv.key, kv.value);
            } else {
                usage_error(o.config + ":" + std::to_string(kv.line) + ": unknown key '" +
                            kv.key + "' for inject-noise");
            }
        }
    }
    if (o.in.empty()) usage_error("inject-noise requires -i/--in");
    if (o.out.empty()) usage_error("inject-noise requires -o/--out");
    if (o.kind != "sym" && o.kind != "asym")
        usage_error("--kind must be sym or asym, got '" + o.kind + "'");

    Manifest manifest;
    manifest.input_crc("dataset", o.in);
    DatasetHandle input = load_dataset_or_die(o.in);
    DatasetHandle noisy;
    if (o.kind == "sym") {
        check(ncct_dataset_inject_symmetric(input.get(), o.rate, o.seed, noisy.out()));
    } else {
        check(ncct_dataset_inject_asymmetric(input.get(), o.rate,
                                             o.pairs.empty() ? nullptr : o.pairs.c_str(),
                                             o.seed, noisy.out()));
    }
    check(ncct_dataset_save(noisy.get(), o.out.c_str()));

    manifest.output("dataset", o.out);
    manifest.output("sidecar", o.out + ".manifest");
    manifest.put_meta("meta.output.dataset.crc32", file_crc_hex(o.out));
    if (!o.pairs.empty()) manifest.input_crc("pairs", o.pairs);
    manifest.put("in", o.in);
    manifest.put("kind", o.kind);
    manifest.put("rate", std::to_string(o.rate));
    if (!o.pairs.empty()) manifest.put("pairs", o.pairs);
    manifest.put("seed", std::to_string(o.seed));
    manifest.put("out", o.out);
    manifest.write("inject-noise", o.out + ".run");

    std::printf("realized noise rate = %.3f\n", ncct_dataset_noise_rate(noisy.get()));
    std::cout << "wrote " << o.out << "\n";
    return 0;
}

/* ---- shared train-config plumbing ---------------------------------- */

// TrainConfig-backed flags shared by `train` and `sweep-k`.
struct ConfigFlags {
    std::string mode, optimizer, timing;
    int epochs = 0, warmup = 0, batch_size = 0, k = 0, threads = 0, checkpoint_every = 0;
    double lr_backbone = 0.0, lr_heads = 0.0;
    std::uint64_t seed = 0;
    CLI::Option *o_mode = nullptr, *o_optimizer = nullptr, *o_timing = nullptr,
                *o_epochs = nullptr, *o_warmup = nullptr, *o_batch_size = nullptr,
                *o_k = nullptr, *o_threads = nullptr, *o_checkpoint_every = nullptr,
                *o_lr_backbone = nullptr, *o_lr_heads = nullptr, *o_seed = nullptr;

    void add(CLI::App* cmd, bool with_mode_and_k) {
        if (with_mode_and_k) {
            o_mode = cmd->add_option("--mode", mode,
                                     "ncct | baseline_ce | pc_only | single_head_consistency");
            o_k = cmd->add_option("--k", k, "negatives kept per non-confident sample");
        }
        o_epochs = cmd->add_option("--epochs", epochs, "total training epochs");
        o_warmup = cmd->add_option("--warmup", warmup, "warm-up epochs (plain CE)");
        o_batch_size = cmd->add_option("--batch-size", batch_size, "mini-batch size");
        o_seed = cmd->add_option("--seed", seed, "RNG seed");
        o_optimizer = cmd->add_option("--optimizer", optimizer, "adam | sgd");
        o_lr_backbone = cmd->add_option("--lr-backbone", lr_backbone, "backbone learning rate");
        o_lr_heads = cmd->add_option("--lr-heads", lr_heads, "head learning rate");
        o_threads = cmd->add_option("--threads", threads,
                                    "worker threads (0 = honor NCCT_THREADS, default 1)");
        o_checkpoint_every = cmd->add_option("--checkpoint-every", checkpoint_every,
                                             "periodic checkpoint interval (0 = off)");
        o_timing = cmd->add_option("--timing", timing,
                                   "wall | off (off keeps metrics bit-reproducible)");
    }

    // Flags win over config-file entries, so they are applied last.
    void apply(ncct_train_config* cfg) const {
        if (o_mode && o_mode->count()) check(ncct_config_set(cfg, "mode", mode.c_str()));
        if (o_k && o_k->count())
            check(ncct_config_set(cfg, "k", std::to_string(k).c_str()));
        if (o_epochs->count())
            check(ncct_config_set(cfg, "epochs", std::to_string(epochs).c_str()));
        if (o_warmup->count())
            check(ncct_config_set(cfg, "warmup_epochs", std::to_string(warmup).c_str()));
        if (o_batch_size->count())
            check(ncct_config_set(cfg, "batch_size", std::to_string(batch_size).c_str()));
        if (o_seed->count())
            check(ncct_config_set(cfg, "seed", std::to_string(seed).c_str()));
        if (o_optimizer->count()) check(ncct_config_set(cfg, "optimizer", optimizer.c_str()));
        if (o_lr_backbone->count()) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.17g", lr_backbone);
            check(ncct_config_set(cfg, "lr_backbone", buf));
        }
        if (o_lr_heads->count()) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.17g", lr_heads);
            check(ncct_config_set(cfg, "lr_heads", buf));
        }
        if (o_threads->count())
            check(ncct_config_set(cfg, "threads", std::to_string(threads).c_str()));
        if (o_checkpoint_every->count())
            check(ncct_config_set(cfg, "checkpoint_every",
                                  std::to_string(checkpoint_every).c_str()));
        if (o_timing->count()) check(ncct_config_set(cfg, "timing", timing.c_str()));
    }
};

// Appends the effective config to the manifest, minus any keys the
// command treats as its own (e.g. sweep-k owns `mode` and `k`).
void manifest_config(Manifest& manifest, const ncct_train_config* cfg,
                     const std::vector<std::string>& skip = {}) {
    CStr text;
    check(ncct_config_render(cfg, text.out()));
    std::istringstream in(text.str());
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = trim(line.substr(0, eq));
        if (std::find(skip.begin(), skip.end(), key) != skip.end()) continue;
        manifest.put(key, trim(line.substr(eq + 1)));
    }
}

/* ---- train --------------------------------------------------------- */

struct TrainOpts {
    std::string config, train, test, out;
    ConfigFlags flags;
    CLI::Option *o_train = nullptr, *o_test = nullptr, *o_out = nullptr;
};

int run_train(TrainOpts& o) {
    ConfigHandle cfg;
    check(ncct_config_create(cfg.out()));

    if (!o.config.empty()) {
        for (const KV& kv : read_kv_file(o.config)) {
            if (kv.key.rfind("meta.", 0) == 0) continue;
            if (kv.key == "train") {
                if (!o.o_train->count()) o.train = kv.value;
            } else if (kv.key == "test") {
                if (!o.o_test->count()) o.test = kv.value;
            } else if (kv.key == "out") {
                if (!o.o_out->count()) o.out = kv.value;
            } else {
                check(ncct_config_set(cfg.get(), kv.key.c_str(), kv.value.c_str()));
            }
        }
    }
    o.flags.apply(cfg.get());
    if (o.train.empty()) usage_error("train requires --train <dataset>");
    if (o.test.empty()) usage_error("train requires --test <dataset>");
    if (o.out.empty()) usage_error("train requires -o/--out <directory>");

    Manifest manifest;
    manifest.input_crc("train", o.train);
    manifest.input_crc("test", o.test);

    DatasetHandle train_set = load_dataset_or_die(o.train);
    DatasetHandle test_set = load_dataset_or_die(o.test);
    make_dirs(o.out);

    const std::string metrics_path = o.out + "/metrics.csv";
    const std::string fractions_path = o.out + "/class_fractions.csv";
    const std::string checkpoint_path = o.out + "/model.ncpt";
    const std::string manifest_path = o.out + "/run.manifest";

    ResultHandle result;
    check(ncct_train(train_set.get(), test_set.get(), cfg.get(), nullptr, nullptr,
                     checkpoint_path.c_str(), result.out()));

    CStr metrics, fractions;
    check(ncct_result_metrics_csv(result.get(), metrics.out()));
    check(ncct_result_class_fractions_csv(result.get(), fractions.out()));
    write_file(metrics.str(), metrics_path);
    write_file(fractions.str(), fractions_path);
    check(ncct_result_save_checkpoint(result.get(), checkpoint_path.c_str()));

    manifest.output("metrics", metrics_path);
    manifest.output("class_fractions", fractions_path);
    manifest.output("checkpoint", checkpoint_path);
    const int every = parse_int("checkpoint_every", cfg_value(cfg.get(), "checkpoint_every"));
    if (every > 0)
        for (int e = every; e <= ncct_result_num_epochs(result.get()); e += every)
            manifest.output("checkpoint.e" + std::to_string(e),
                            checkpoint_path + ".e" + std::to_string(e));
    manifest.put("train", o.train);
    manifest.put("test", o.test);
    manifest.put("out", o.out);
    manifest_config(manifest, cfg.get());
    manifest.write("train", manifest_path);

    std::printf("epochs = %d\n", ncct_result_num_epochs(result.get()));
    std::printf("final accuracy = %.4f\n", ncct_result_final_acc(result.get()));
    std::printf("max accuracy = %.4f\n", ncct_result_max_acc(result.get()));
    std::printf("last5 mean = %.4f\n", ncct_result_last5_mean(result.get()));
    std::cout << "wrote " << metrics_path << "\n";
    std::cout << "wrote " << checkpoint_path << "\n";
    std::cout << "wrote " << manifest_path << "\n";
    return 0;
}

/* ---- eval ---------------------------------------------------------- */

struct EvalOpts {
    std::string config, model, data, out;
    CLI::Option *o_model = nullptr, *o_data = nullptr, *o_out = nullptr;
};

int run_eval(EvalOpts& o) {
    if (!o.config.empty()) {
        for (const KV& kv : read_kv_file(o.config)) {
            if (kv.key.rfind("meta.", 0) == 0) continue;
            if (kv.key == "model") {
                if (!o.o_model->count()) o.model = kv.value;
            } else if (kv.key == "data") {
                if (!o.o_data->count()) o.data = kv.value;
            } else if (kv.key == "out") {
                if (!o.o_out->count()) o.out = kv.value;
            } else {
                usage_error(o.config + ":" + std::to_string(kv.line) + ": unknown key '" +
                            kv.key + "' for eval");
            }
        }
    }
    if (o.model.empty()) usage_error("eval requires --model <checkpoint>");
    if (o.data.empty()) usage_error("eval requires --data <dataset>");

    Manifest manifest;
    manifest.input_crc("model", o.model);
    manifest.input_crc("data", o.data);

    ModelHandle model;
    check(ncct_model_load(o.model.c_str(), model.out()));
    DatasetHandle data = load_dataset_or_die(o.data);
    double acc = 0.0;
    check(ncct_model_evaluate(model.get(), data.get(), &acc));

    char line[64];
    std::snprintf(line, sizeof line, "accuracy = %.17g\n", acc);
    std::cout << line;

    if (!o.out.empty()) {
        make_dirs(o.out);
        const std::string acc_path = o.out + "/accuracy.txt";
        write_file(line, acc_path);
        manifest.output("accuracy", acc_path);
        manifest.put("model", o.model);
        manifest.put("data", o.data);
        manifest.put("out", o.out);
        manifest.write("eval", o.out + "/run.manifest");
        std::cout << "wrote " << acc_path << "\n";
    }
    return 0;
}

/* ---- sweep-k ------------------------------------------------------- */

struct SweepOpts {
    std::string config, test, out, kind = "sym";
    std::vector<std::string> trains, modes;
    std::vector<double> rates;
    std::vector<int> ks;
    ConfigFlags flags;
    CLI::Option *o_trains = nullptr, *o_test = nullptr, *o_out = nullptr, *o_kind = nullptr,
                *o_rates = nullptr, *o_ks = nullptr, *o_modes = nullptr;
};

int run_sweep(SweepOpts& o) {
    ConfigHandle cfg;
    check(ncct_config_create(cfg.out()));

    if (!o.config.empty()) {
        for (const KV& kv : read_kv_file(o.config)) {
            if (kv.key.rfind("meta.", 0) == 0) continue;
            if (kv.key == "train") {
                if (!o.o_trains->count()) o.trains.push_back(kv.value);
            } else if (kv.key == "rate") {
                if (!o.o_rates->count()) o.rates.push_back(parse_double(kv.key, kv.value));
            } else if (kv.key == "mode") {
                if (!o.o_modes->count()) o.modes.push_back(kv.value);
            } else if (kv.key == "ks") {
                if (!o.o_ks->count()) {
                    std::istringstream in(kv.value);
                    std::string item;
                    while (std::getline(in, item, ','))
                        o.ks.push_back(parse_int(kv.key, trim(item)));
                }
            } else if (kv.key == "test") {
                if (!o.o_test->count()) o.test = kv.value;
            } else if (kv.key == "out") {
                if (!o.o_out->count()) o.out = kv.value;
            } else if (kv.key == "kind") {
                if (!o.o_kind->count()) o.kind = kv.value;
            } else {
                check(ncct_config_set(cfg.get(), kv.key.c_str(), kv.value.c_str()));
            }
        }
    }
    o.flags.apply(cfg.get());
    if (o.modes.empty()) o.modes.push_back("ncct");
    if (o.trains.empty()) usage_error("sweep-k requires at least one --train <dataset>");
    if (o.test.empty()) usage_error("sweep-k requires --test <dataset>");
    if (o.out.empty()) usage_error("sweep-k requires -o/--out <directory>");
    if (o.ks.empty()) usage_error("sweep-k requires --ks (e.g. --ks 1,2,3)");
    if (o.rates.size() != o.trains.size())
        usage_error("need one --rate per --train (got " + std::to_string(o.rates.size()) +
                    " rates for " + std::to_string(o.trains.size()) + " datasets)");
    if (o.kind != "sym" && o.kind != "asym")
        usage_error("--kind must be sym or asym, got '" + o.kind + "'");

    Manifest manifest;
    for (std::size_t i = 0; i < o.trains.size(); ++i)
        manifest.input_crc("train." + std::to_string(i), o.trains[i]);
    manifest.input_crc("test", o.test);

    DatasetHandle test_set = load_dataset_or_die(o.test);
    make_dirs(o.out);

    std::string merged;
    for (std::size_t i = 0; i < o.trains.size(); ++i) {
        DatasetHandle train_set = load_dataset_or_die(o.trains[i]);
        for (const std::string& mode : o.modes) {
            check(ncct_config_set(cfg.get(), "mode", mode.c_str()));
            CStr csv, svg;
            check(ncct_sweep_k(train_set.get(), test_set.get(), cfg.get(), o.ks.data(),
                               o.ks.size(), o.kind.c_str(), o.rates[i], csv.out(),
                               svg.out()));
            std::string text = csv.str();
            if (!merged.empty()) {
                const std::size_t nl = text.find('\n');
                text = nl == std::string::npos ? "" : text.substr(nl + 1);
            }
            merged += text;
        }
    }

    const std::string csv_path = o.out + "/sweep.csv";
    const std::string svg_path = o.out + "/sweep.svg";
    write_file(merged, csv_path);
    CStr svg;
    check(ncct_sweep_csv_to_svg(csv_path.c_str(), svg.out()));
    write_file(svg.str(), svg_path);

    manifest.output("sweep_csv", csv_path);
    manifest.output("sweep_svg", svg_path);
    for (const std::string& t : o.trains) manifest.put("train", t);
    for (double r : o.rates) manifest.put("rate", std::to_string(r));
    manifest.put("test", o.test);
    manifest.put("kind", o.kind);
    std::ostringstream ks_line;
    for (std::size_t i = 0; i < o.ks.size(); ++i)
        ks_line << (i ? "," : "") << o.ks[i];
    manifest.put("ks", ks_line.str());
    for (const std::string& m : o.modes) manifest.put("mode", m);
    manifest.put("out", o.out);
    manifest_config(manifest, cfg.get(), {"mode", "k"});
    manifest.write("sweep-k", o.out + "/run.manifest");

    const std::size_t rows = o.trains.size() * o.modes.size() * o.ks.size();
    std::cout << "wrote " << csv_path << " (" << rows << " rows)\n";
    std::cout << "wrote " << svg_path << "\n";
    return 0;
}

/* ---- report -------------------------------------------------------- */

struct ReportOpts {
    std::string config, metrics, model, data, sweep, out;
    CLI::Option *o_metrics = nullptr, *o_model = nullptr, *o_data = nullptr,
                *o_sweep = nullptr, *o_out = nullptr;
};

int run_report(ReportOpts& o) {
    if (!o.config.empty()) {
        for (const KV& kv : read_kv_file(o.config)) {
            if (kv.key.rfind("meta.", 0) == 0) continue;
            if (kv.key == "metrics") {
                if (!o.o_metrics->count()) o.metrics = kv.value;
            } else if (kv.key == "model") {
                if (!o.o_model->count()) o.model = kv.value;
            } else if (kv.key == "data") {
                if (!o.o_data->count()) o.data = kv.value;
            } else if (kv.key == "sweep") {
                if (!o.o_sweep->count()) o.sweep = kv.value;
            } else if (kv.key == "out") {
                if (!o.o_out->count()) o.out = kv.value;
            } else {
                usage_error(o.config + ":" + std::to_string(kv.line) + ": unknown key '" +
                            kv.key + "' for report");
            }
        }
    }
    if (o.metrics.empty()) usage_error("report requires --metrics <csv>");
    if (o.model.empty()) usage_error("report requires --model <checkpoint>");
    if (o.data.empty()) usage_error("report requires --data <dataset>");
    if (o.out.empty()) usage_error("report requires -o/--out <directory>");

    Manifest manifest;
    manifest.input_crc("metrics", o.metrics);
    manifest.input_crc("model", o.model);
    manifest.input_crc("data", o.data);
    if (!o.sweep.empty()) manifest.input_crc("sweep", o.sweep);

    ModelHandle model;
    check(ncct_model_load(o.model.c_str(), model.out()));
    DatasetHandle data = load_dataset_or_die(o.data);
    make_dirs(o.out);

    CStr text, csv, curve;
    check(ncct_model_confusion_text(model.get(), data.get(), text.out()));
    check(ncct_model_confusion_csv(model.get(), data.get(), csv.out()));
    check(ncct_metrics_csv_to_svg(o.metrics.c_str(), curve.out()));

    const std::string text_path = o.out + "/confusion.txt";
    const std::string csv_path = o.out + "/confusion.csv";
    const std::string curve_path = o.out + "/accuracy.svg";
    write_file(text.str(), text_path);
    write_file(csv.str(), csv_path);
    write_file(curve.str(), curve_path);
    manifest.output("confusion_text", text_path);
    manifest.output("confusion_csv", csv_path);
    manifest.output("accuracy_svg", curve_path);

    if (!o.sweep.empty()) {
        CStr sweep_svg;
        check(ncct_sweep_csv_to_svg(o.sweep.c_str(), sweep_svg.out()));
        const std::string sweep_path = o.out + "/sweep.svg";
        write_file(sweep_svg.str(), sweep_path);
        manifest.output("sweep_svg", sweep_path);
    }

    manifest.put("metrics", o.metrics);
    manifest.put("model", o.model);
    manifest.put("data", o.data);
    if (!o.sweep.empty()) manifest.put("sweep", o.sweep);
    manifest.put("out", o.out);
    manifest.write("report", o.out + "/run.manifest");

    std::cout << text.str();
    std::cout << "wrote " << text_path << "\n";
    std::cout << "wrote " << csv_path << "\n";
    std::cout << "wrote " << curve_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"negative-class-consistency training toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", ncct_version());

    GenOpts gen;
    CLI::App* cmd_gen = app.add_subcommand("gen-data", "generate a toy dataset");
    cmd_gen->add_option("--config", gen.config, "config file or run manifest");
    gen.o_classes = cmd_gen->add_option("--classes", gen.classes, "number of classes (>= 2)");
    gen.o_per_class = cmd_gen->add_option("--per-class", gen.per_class, "samples per class");
    gen.o_size = cmd_gen->add_option("--size", gen.size, "image height and width (>= 10)");
    gen.o_variation = cmd_gen->add_option("--variation", gen.variation,
                                          "appearance variation in [0,1]");
    gen.o_seed = cmd_gen->add_option("--seed", gen.seed, "RNG seed");
    gen.o_split = cmd_gen->add_option("--split", gen.split, "train | test");
    gen.o_out = cmd_gen->add_option("-o,--out", gen.out, "output .ncds path");

    InjectOpts inject;
    CLI::App* cmd_inject = app.add_subcommand("inject-noise", "inject synthetic label noise");
    cmd_inject->add_option("--config", inject.config, "config file or run manifest");
    inject.o_in = cmd_inject->add_option("-i,--in", inject.in, "input .ncds path");
    inject.o_kind = cmd_inject->add_option("--kind", inject.kind, "sym | asym");
    inject.o_rate = cmd_inject->add_option("--rate", inject.rate, "noise rate in [0,1]");
    inject.o_pairs = cmd_inject->add_option("--pairs", inject.pairs,
                                            "asymmetric pairs file (lines `src,dst`)");
    inject.o_seed = cmd_inject->add_option("--seed", inject.seed, "RNG seed");
    inject.o_out = cmd_inject->add_option("-o,--out", inject.out, "output .ncds path");

    TrainOpts train;
    CLI::App* cmd_train = app.add_subcommand("train", "train a model");
    cmd_train->add_option("--config", train.config, "config file or run manifest");
    train.o_train = cmd_train->add_option("--train", train.train, "training .ncds path");
    train.o_test = cmd_train->add_option("--test", train.test, "test .ncds path");
    train.o_out = cmd_train->add_option("-o,--out", train.out, "output directory");
    train.flags.add(cmd_train, true);

    EvalOpts eval;
    CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    cmd_eval->add_option("--config", eval.config, "config file or run manifest");
    eval.o_model = cmd_eval->add_option("--model", eval.model, "checkpoint .ncpt path");
    eval.o_data = cmd_eval->add_option("--data", eval.data, "dataset .ncds path");
    eval.o_out = cmd_eval->add_option("-o,--out", eval.out, "optional output directory");

    SweepOpts sweep;
    CLI::App* cmd_sweep = app.add_subcommand("sweep-k", "train across k values");
    cmd_sweep->add_option("--config", sweep.config, "config file or run manifest");
    sweep.o_trains = cmd_sweep->add_option("--train", sweep.trains,
                                           "training .ncds path (repeatable)");
    sweep.o_rates = cmd_sweep->add_option("--rate", sweep.rates,
                                          "noise rate annotation, one per --train");
    sweep.o_test = cmd_sweep->add_option("--test", sweep.test, "test .ncds path");
    sweep.o_kind = cmd_sweep->add_option("--kind", sweep.kind, "noise kind annotation");
    sweep.o_ks = cmd_sweep->add_option("--ks", sweep.ks, "k values, e.g. 1,2,3")
                     ->delimiter(',');
    sweep.o_modes = cmd_sweep->add_option("--mode", sweep.modes,
                                          "training mode (repeatable; default ncct)");
    sweep.o_out = cmd_sweep->add_option("-o,--out", sweep.out, "output directory");
    sweep.flags.add(cmd_sweep, false);

    ReportOpts report;
    CLI::App* cmd_report = app.add_subcommand("report", "render run artifacts");
    cmd_report->add_option("--config", report.config, "config file or run manifest");
    report.o_metrics = cmd_report->add_option("--metrics", report.metrics, "metrics CSV path");
    report.o_model = cmd_report->add_option("--model", report.model, "checkpoint .ncpt path");
    report.o_data = cmd_report->add_option("--data", report.data, "dataset .ncds path");
    report.o_sweep = cmd_report->add_option("--sweep", report.sweep, "sweep CSV path");
    report.o_out = cmd_report->add_option("-o,--out", report.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help / --version
        app.exit(e);                                    // prints the message
        return 2;
    }

    if (cmd_gen->parsed()) return run_gen_data(gen);
    if (cmd_inject->parsed()) return run_inject(inject);
    if (cmd_train->parsed()) return run_train(train);
    if (cmd_eval->parsed()) return run_eval(eval);
    if (cmd_sweep->parsed()) return run_sweep(sweep);
    if (cmd_report->parsed()) return run_report(report);
    return 2;
}

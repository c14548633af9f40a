#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ncct/dataset.hpp"
#include "ncct/model.hpp"

namespace ncct {

// Training regimes.
//   ncct                    warm-up, then CE on confident + masked ncc
//                           consistency on non-confident samples
//   baseline_ce             CE on every sample, every epoch
//   pc_only                 CE on confident samples only; the rest are
//                           dropped from the step
//   single_head_consistency like ncct but without the ncc head: the
//                           consistency term runs through pcc with a
//                           bottom-k mask of the weak pcc probabilities
enum class Mode { ncct, baseline_ce, pc_only, single_head_consistency };

Mode mode_from_name(const std::string& name);
std::string mode_name(Mode m);

enum class OptimizerKind { adam, sgd };

OptimizerKind optimizer_from_name(const std::string& name);
std::string optimizer_name(OptimizerKind k);

struct TrainConfig {
    Mode mode = Mode::ncct;
    int epochs = 40;
    int warmup_epochs = 5; // epochs 1..warmup_epochs are plain CE on all samples
    int batch_size = 64;
    int k = 4; // negative classes kept by the consistency mask
    std::uint64_t seed = 1;
    OptimizerKind optimizer = OptimizerKind::adam;
    double lr_backbone = 1e-4;
    double lr_heads = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double sgd_momentum = 0.0;
    int conv1_channels = 16;
    int conv2_channels = 32;
    int checkpoint_every = 0; // snapshot cadence in epochs; 0 = none
    // Off by default so repeated runs of one manifest produce
    // byte-identical metrics; `timing = wall` opts into real epoch times.
    bool wall_timing = false;
    int threads = 0; // 0 -> $NCCT_THREADS if set, else 1

    void validate() const;
    int resolved_threads() const;
};

// One `key = value` assignment onto cfg. Keys: mode, epochs,
// warmup_epochs, batch_size, k, seed, optimizer, lr_backbone, lr_heads,
// adam_beta1, adam_beta2, adam_eps, conv1_channels, conv2_channels,
// timing (wall|off), threads. Unknown keys and bad values throw
// InvalidArgument.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

struct EpochStats {
    int epoch = 0; // 1-based
    double test_acc = 0.0;
    double loss_s = 0.0; // mean over the epoch's batches
    double loss_c = 0.0;
    double confident_fraction = 0.0;
    std::vector<double> class_confident_fraction; // by train label, 0 if absent
    double seconds = 0.0;
};

struct StepInfo {
    int epoch = 0; // 1-based
    int batch = 0; // 0-based within the epoch
    int batch_size = 0;
    int num_confident = 0;
    int num_non_confident = 0;
    double loss_s = 0.0;
    double loss_c = 0.0;
    double loss = 0.0;
    bool warmup = false;
};

using StepObserver = std::function<void(const StepInfo&)>;

// Runs after each epoch's evaluation with the parameters as they stand;
// hook point for periodic checkpoints.
using EpochObserver = std::function<void(const EpochStats&, const ModelParams&)>;

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> epochs;
    double max_test_acc = 0.0;
    double last5_mean = 0.0; // mean test accuracy of the final 5 epochs
    Matrix confusion;        // final model on the test set; true × predicted
};

// The epoch's visiting order: a seeded Fisher-Yates permutation of
// [0, n), independent of everything but (seed, epoch, n).
std::vector<std::uint32_t> shuffled_indices(std::uint64_t seed, int epoch, std::size_t n);

struct Metrics {
    double accuracy = 0.0; // trace/total of the confusion matrix
    Matrix confusion;      // true labels on rows, pcc argmax on columns
};

// pcc argmax (ties to the lowest class index) against the ground-truth
// labels, no augmentation.
Metrics evaluate_metrics(const ModelParams& params, const Dataset& data,
                         int batch_size = 256);
double evaluate(const ModelParams& params, const Dataset& data, int batch_size = 256);

// Full training run. Deterministic in (datasets, cfg); the observers,
// if set, see every optimization step / epoch. Throws DivergenceError
// with epoch and batch coordinates if the run goes non-finite.
TrainResult train(const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& cfg, const StepObserver& observer = {},
                  const EpochObserver& epoch_observer = {});

// Table-1-style ablation entry point: forces mode single_head_consistency.
TrainResult run_mode_single_head(const Dataset& train_set, const Dataset& test_set,
                                 const TrainConfig& cfg, const StepObserver& observer = {},
                                 const EpochObserver& epoch_observer = {});

struct SweepEntry {
    Mode mode = Mode::ncct;
    std::string noise_kind; // "none", "symmetric", "asymmetric"
    double noise_rate = 0.0;
    int k = 0;
    std::uint64_t seed = 0;
    double max_acc = 0.0;
    double last5_mean = 0.0;
};

// One full run per k, base config otherwise unchanged. noise_kind and
// noise_rate only annotate the entries.
std::vector<SweepEntry> sweep_k(const Dataset& train_set, const Dataset& test_set,
                                const TrainConfig& base, const std::vector<int>& ks,
                                const std::string& noise_kind, double noise_rate);

} // namespace ncct

#include "ncct/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "ncct/augment.hpp"
#include "ncct/config.hpp"
#include "ncct/error.hpp"
#include "ncct/losses.hpp"
#include "ncct/rng.hpp"
#include "ncct/selection.hpp"

namespace ncct {

Mode mode_from_name(const std::string& name) {
    if (name == "ncct") return Mode::ncct;
    if (name == "baseline_ce") return Mode::baseline_ce;
    if (name == "pc_only") return Mode::pc_only;
    if (name == "single_head_consistency") return Mode::single_head_consistency;
    throw InvalidArgument("unknown mode '" + name +
                          "' (expected ncct, baseline_ce, pc_only, "
                          "single_head_consistency)");
}

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::ncct: return "ncct";
        case Mode::baseline_ce: return "baseline_ce";
        case Mode::pc_only: return "pc_only";
        case Mode::single_head_consistency: return "single_head_consistency";
    }
    throw InvalidArgument("invalid mode value");
}

OptimizerKind optimizer_from_name(const std::string& name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "sgd") return OptimizerKind::sgd;
    throw InvalidArgument("unknown optimizer '" + name + "' (expected adam or sgd)");
}

std::string optimizer_name(OptimizerKind k) {
    return k == OptimizerKind::adam ? "adam" : "sgd";
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (warmup_epochs < 0) throw InvalidArgument("warmup_epochs must be >= 0");
    if (warmup_epochs > epochs)
        throw InvalidArgument("warmup_epochs (" + std::to_string(warmup_epochs) +
                              ") must not exceed epochs (" + std::to_string(epochs) + ")");
    if (batch_size < 2) throw InvalidArgument("batch_size must be >= 2");
    if (k < 1) throw InvalidArgument("k must be >= 1");
    if (lr_backbone <= 0.0 || lr_heads <= 0.0)
        throw InvalidArgument("learning rates must be positive");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
        throw InvalidArgument("adam betas must lie in [0, 1)");
    if (adam_eps <= 0.0) throw InvalidArgument("adam_eps must be positive");
    if (sgd_momentum < 0.0 || sgd_momentum >= 1.0)
        throw InvalidArgument("sgd_momentum must lie in [0, 1)");
    if (conv1_channels < 1 || conv2_channels < 1)
        throw InvalidArgument("conv channel counts must be >= 1");
    if (checkpoint_every < 0) throw InvalidArgument("checkpoint_every must be >= 0");
    if (threads < 0) throw InvalidArgument("threads must be >= 0");
}

int TrainConfig::resolved_threads() const {
    if (threads > 0) return threads;
    if (const char* env = std::getenv("NCCT_THREADS")) {
        const std::int64_t v = parse_int_value("NCCT_THREADS", env);
        if (v < 1) throw InvalidArgument("NCCT_THREADS must be >= 1");
        return static_cast<int>(v);
    }
    return 1;
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
    auto as_int = [&](int lo) {
        const std::int64_t v = parse_int_value(key, value);
        if (v < lo || v > 1'000'000'000)
            throw InvalidArgument(key + ": value " + value + " out of range");
        return static_cast<int>(v);
    };
    if (key == "mode") cfg.mode = mode_from_name(value);
    else if (key == "epochs") cfg.epochs = as_int(1);
    else if (key == "warmup_epochs") cfg.warmup_epochs = as_int(0);
    else if (key == "batch_size") cfg.batch_size = as_int(1);
    else if (key == "k") cfg.k = as_int(1);
    else if (key == "seed") cfg.seed = parse_u64_value(key, value);
    else if (key == "optimizer") cfg.optimizer = optimizer_from_name(value);
    else if (key == "lr_backbone") cfg.lr_backbone = parse_double_value(key, value);
    else if (key == "lr_heads") cfg.lr_heads = parse_double_value(key, value);
    else if (key == "adam_beta1") cfg.adam_beta1 = parse_double_value(key, value);
    else if (key == "adam_beta2") cfg.adam_beta2 = parse_double_value(key, value);
    else if (key == "adam_eps") cfg.adam_eps = parse_double_value(key, value);
    else if (key == "sgd_momentum") cfg.sgd_momentum = parse_double_value(key, value);
    else if (key == "conv1_channels") cfg.conv1_channels = as_int(1);
    else if (key == "conv2_channels") cfg.conv2_channels = as_int(1);
    else if (key == "checkpoint_every") cfg.checkpoint_every = as_int(0);
    else if (key == "threads") cfg.threads = as_int(0);
    else if (key == "timing") {
        if (value == "wall") cfg.wall_timing = true;
        else if (value == "off") cfg.wall_timing = false;
        else throw InvalidArgument("timing: expected wall or off, got '" + value + "'");
    } else {
        throw InvalidArgument("unknown training setting '" + key + "'");
    }
}

std::vector<std::uint32_t> shuffled_indices(std::uint64_t seed, int epoch, std::size_t n) {
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    Rng rng(mix_seed({seed, 0x73687566ull /* "shuf" */, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(idx);
    return idx;
}

Metrics evaluate_metrics(const ModelParams& params, const Dataset& data, int batch_size) {
    if (data.size() == 0) throw InvalidArgument("cannot evaluate on an empty dataset");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    const int C = params.arch.num_classes;
    Metrics metrics;
    metrics.confusion = Matrix(C, C);
    std::vector<Image> batch;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t end = std::min(data.size(), start + batch_size);
        batch.clear();
        for (std::size_t i = start; i < end; ++i) batch.push_back(data.samples[i].image);
        const PredictionBundle bundle = forward(params, batch, {});
        for (std::size_t i = start; i < end; ++i) {
            const double* row = bundle.p_w_p.row(static_cast<int>(i - start));
            int best = 0;
            for (int c = 1; c < C; ++c)
                if (row[c] > row[best]) best = c;
            const int truth = data.samples[i].true_label;
            if (truth < 0 || truth >= C)
                throw InvalidArgument("true label " + std::to_string(truth) +
                                      " outside the model's " + std::to_string(C) +
                                      " classes");
            metrics.confusion.at(truth, best) += 1.0;
        }
    }
    double trace = 0.0;
    for (int c = 0; c < C; ++c) trace += metrics.confusion.at(c, c);
    metrics.accuracy = trace / static_cast<double>(data.size());
    return metrics;
}

double evaluate(const ModelParams& params, const Dataset& data, int batch_size) {
    return evaluate_metrics(params, data, batch_size).accuracy;
}

TrainResult train(const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& cfg, const StepObserver& observer,
                  const EpochObserver& epoch_observer) {
    cfg.validate();
    if (train_set.size() == 0) throw InvalidArgument("empty training set");
    if (train_set.num_classes < 2)
        throw InvalidArgument("training set must carry >= 2 classes");
    if (test_set.num_classes != train_set.num_classes ||
        test_set.height != train_set.height || test_set.width != train_set.width)
        throw InvalidArgument("train/test sets disagree on classes or image shape");
    if (cfg.k > train_set.num_classes)
        throw InvalidArgument("k = " + std::to_string(cfg.k) + " exceeds the class count " +
                              std::to_string(train_set.num_classes));

    ArchConfig arch;
    arch.conv1_channels = cfg.conv1_channels;
    arch.conv2_channels = cfg.conv2_channels;
    arch.num_classes = train_set.num_classes;
    ModelParams params = init_params(arch, cfg.seed);
    const ParamLayout layout = params.layout();
    const int threads = cfg.resolved_threads();

    std::vector<double> adam_m, adam_v, sgd_vel;
    if (cfg.optimizer == OptimizerKind::adam) {
        adam_m.assign(layout.total, 0.0);
        adam_v.assign(layout.total, 0.0);
    } else if (cfg.sgd_momentum > 0.0) {
        sgd_vel.assign(layout.total, 0.0);
    }
    std::int64_t step = 0;

    const std::size_t n = train_set.size();
    const int C = train_set.num_classes;
    const bool mode_has_consistency =
        cfg.mode == Mode::ncct || cfg.mode == Mode::single_head_consistency;

    TrainResult result;
    result.epochs.reserve(cfg.epochs);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        const std::vector<std::uint32_t> order = shuffled_indices(cfg.seed, epoch, n);
        const bool warm = epoch <= cfg.warmup_epochs;
        const bool wants_consistency = !warm && mode_has_consistency;
        const bool wants_partition = !warm && cfg.mode != Mode::baseline_ce;

        double sum_ls = 0.0, sum_lc = 0.0;
        int batches = 0;
        std::vector<std::int64_t> class_total(C, 0), class_conf(C, 0);
        std::int64_t conf_total = 0, sample_total = 0;

        for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batches) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            const int bs = static_cast<int>(end - start);

            std::vector<int> labels(bs);
            std::vector<Image> weak, strong;
            weak.reserve(bs);
            if (wants_consistency) strong.reserve(bs);
            for (int j = 0; j < bs; ++j) {
                const Sample& s = train_set.samples[order[start + j]];
                labels[j] = s.train_label;
                const AugmentStream stream{cfg.seed, static_cast<std::uint64_t>(epoch), s.id};
                weak.push_back(weak_augment(s.image, stream));
                if (wants_consistency) strong.push_back(strong_augment(s.image, stream));
            }

            const BatchEvaluation eval(params, weak, strong);
            const PredictionBundle& bundle = eval.bundle();

            LossPlan plan;
            plan.labels = labels;
            plan.supervised.assign(bs, 0);
            plan.consistency.assign(bs, 0);
            int n_conf = bs, n_nc = 0;

            for (int j = 0; j < bs; ++j) ++class_total[labels[j]];

            if (!wants_partition) {
                // warm-up and baseline: plain CE on everything
                std::fill(plan.supervised.begin(), plan.supervised.end(), 1);
                for (int j = 0; j < bs; ++j) ++class_conf[labels[j]];
                conf_total += bs;
            } else {
                const ThresholdVector tv = compute_thresholds(bundle.p_w_p, labels);
                const BatchPartition part = partition_batch(bundle.p_w_p, labels, tv);
                n_conf = static_cast<int>(part.confident.size());
                n_nc = static_cast<int>(part.non_confident.size());
                for (int i : part.confident) {
                    plan.supervised[i] = 1;
                    ++class_conf[labels[i]];
                }
                conf_total += n_conf;
                if (wants_consistency && n_nc > 0) {
                    for (int i : part.non_confident) plan.consistency[i] = 1;
                    if (cfg.mode == Mode::ncct) {
                        plan.head = ConsistencyHead::ncc;
                        plan.mask = topk_mask(bundle.p_w_n, cfg.k).mask;
                        plan.target = bundle.p_w_n; // copy: fixed target, no gradient
                    } else {
                        plan.head = ConsistencyHead::pcc;
                        plan.mask = bottomk_mask(bundle.p_w_p, cfg.k).mask;
                        plan.target = bundle.p_w_p;
                    }
                }
            }
            sample_total += bs;

            GradientReport grad;
            try {
                grad = backward(params, eval, plan, threads);
            } catch (const DivergenceError& ex) {
                throw DivergenceError("epoch " + std::to_string(epoch) + ", batch " +
                                      std::to_string(batches) + ": " + ex.what());
            }

            ++step;
            if (cfg.optimizer == OptimizerKind::adam) {
                const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
                const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
                for (std::size_t i = 0; i < layout.total; ++i) {
                    const double g = grad.grads[i];
                    adam_m[i] = cfg.adam_beta1 * adam_m[i] + (1.0 - cfg.adam_beta1) * g;
                    adam_v[i] = cfg.adam_beta2 * adam_v[i] + (1.0 - cfg.adam_beta2) * g * g;
                    const double lr = i < layout.backbone_size ? cfg.lr_backbone : cfg.lr_heads;
                    params.values[i] -=
                        lr * (adam_m[i] / bc1) / (std::sqrt(adam_v[i] / bc2) + cfg.adam_eps);
                }
            } else if (cfg.sgd_momentum > 0.0) {
                for (std::size_t i = 0; i < layout.total; ++i) {
                    const double lr = i < layout.backbone_size ? cfg.lr_backbone : cfg.lr_heads;
                    sgd_vel[i] = cfg.sgd_momentum * sgd_vel[i] + grad.grads[i];
                    params.values[i] -= lr * sgd_vel[i];
                }
            } else {
                for (std::size_t i = 0; i < layout.total; ++i) {
                    const double lr = i < layout.backbone_size ? cfg.lr_backbone : cfg.lr_heads;
                    params.values[i] -= lr * grad.grads[i];
                }
            }
            if (!params.all_finite())
                throw DivergenceError("epoch " + std::to_string(epoch) + ", batch " +
                                      std::to_string(batches) +
                                      ": non-finite parameter after update");

            sum_ls += grad.loss_s;
            sum_lc += grad.loss_c;

            if (observer) {
                StepInfo info;
                info.epoch = epoch;
                info.batch = batches;
                info.batch_size = bs;
                info.num_confident = n_conf;
                info.num_non_confident = n_nc;
                info.loss_s = grad.loss_s;
                info.loss_c = grad.loss_c;
                info.loss = grad.loss;
                info.warmup = warm;
                observer(info);
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.loss_s = sum_ls / batches;
        stats.loss_c = sum_lc / batches;
        stats.confident_fraction =
            static_cast<double>(conf_total) / static_cast<double>(sample_total);
        stats.class_confident_fraction.resize(C, 0.0);
        for (int c = 0; c < C; ++c)
            if (class_total[c] > 0)
                stats.class_confident_fraction[c] =
                    static_cast<double>(class_conf[c]) / static_cast<double>(class_total[c]);
        Metrics metrics = evaluate_metrics(params, test_set);
        stats.test_acc = metrics.accuracy;
        if (cfg.wall_timing) {
            const auto elapsed = std::chrono::steady_clock::now() - epoch_start;
            stats.seconds = std::chrono::duration<double>(elapsed).count();
        }
        result.epochs.push_back(std::move(stats));
        if (epoch == cfg.epochs) result.confusion = std::move(metrics.confusion);
        if (epoch_observer) epoch_observer(result.epochs.back(), params);
    }

    result.params = std::move(params);
    for (const EpochStats& s : result.epochs)
        result.max_test_acc = std::max(result.max_test_acc, s.test_acc);
    const std::size_t tail = std::min<std::size_t>(5, result.epochs.size());
    double tail_sum = 0.0;
    for (std::size_t i = result.epochs.size() - tail; i < result.epochs.size(); ++i)
        tail_sum += result.epochs[i].test_acc;
    result.last5_mean = tail_sum / static_cast<double>(tail);
    return result;
}

std::vector<SweepEntry> sweep_k(const Dataset& train_set, const Dataset& test_set,
                                const TrainConfig& base, const std::vector<int>& ks,
                                const std::string& noise_kind, double noise_rate) {
    if (ks.empty()) throw InvalidArgument("sweep needs at least one k");
    std::vector<SweepEntry> entries;
    entries.reserve(ks.size());
    for (int k : ks) {
        TrainConfig cfg = base;
        cfg.k = k;
        const TrainResult r = train(train_set, test_set, cfg);
        SweepEntry e;
        e.mode = cfg.mode;
        e.noise_kind = noise_kind;
        e.noise_rate = noise_rate;
        e.k = k;
        e.seed = cfg.seed;
        e.max_acc = r.max_test_acc;
        e.last5_mean = r.last5_mean;
        entries.push_back(std::move(e));
    }
    return entries;
}

TrainResult run_mode_single_head(const Dataset& train_set, const Dataset& test_set,
                                 const TrainConfig& base, const StepObserver& observer,
                                 const EpochObserver& epoch_observer) {
    TrainConfig cfg = base;
    cfg.mode = Mode::single_head_consistency;
    return train(train_set, test_set, cfg, observer, epoch_observer);
}

} // namespace ncct

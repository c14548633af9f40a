#include "ncct.h"

#include <cstring>
#include <new>
#include <string>

#include "ncct/config.hpp"
#include "ncct/dataset.hpp"
#include "ncct/error.hpp"
#include "ncct/model.hpp"
#include "ncct/report.hpp"
#include "ncct/trainer.hpp"

// Opaque handle definitions. Each is a thin box around the C++ type so
// the C surface never exposes layout.
struct ncct_dataset {
    ncct::Dataset data;
};
struct ncct_train_config {
    ncct::TrainConfig cfg;
};
struct ncct_train_result {
    ncct::TrainResult result;
};
struct ncct_model {
    ncct::ModelParams params;
};

namespace {

thread_local std::string g_last_error;

ncct_status fail(ncct_status s, const char* what) {
    g_last_error = what;
    return s;
}

// Runs `fn`, translating the exception taxonomy onto status codes.
template <typename Fn>
ncct_status guarded(Fn&& fn) {
    try {
        fn();
        return NCCT_OK;
    } catch (const ncct::InvalidArgument& e) {
        return fail(NCCT_ERR_INVALID_ARGUMENT, e.what());
    } catch (const ncct::TruncationError& e) {
        return fail(NCCT_ERR_TRUNCATED, e.what());
    } catch (const ncct::ChecksumError& e) {
        return fail(NCCT_ERR_CHECKSUM, e.what());
    } catch (const ncct::FormatError& e) {
        return fail(NCCT_ERR_FORMAT, e.what());
    } catch (const ncct::IoError& e) {
        return fail(NCCT_ERR_IO, e.what());
    } catch (const ncct::DivergenceError& e) {
        return fail(NCCT_ERR_DIVERGENCE, e.what());
    } catch (const std::bad_alloc&) {
        return fail(NCCT_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(NCCT_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(NCCT_ERR_INTERNAL, "unknown error");
    }
}

ncct_status require(bool ok, const char* what) {
    return ok ? NCCT_OK : fail(NCCT_ERR_INVALID_ARGUMENT, what);
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

} // namespace

extern "C" {

const char* ncct_last_error(void) { return g_last_error.c_str(); }

const char* ncct_version(void) { return "0.1.0"; }

ncct_status ncct_file_crc32(const char* path, uint32_t* out) {
    if (ncct_status s = require(path && out, "path and out must not be NULL")) return s;
    return guarded([&] { *out = ncct::file_payload_crc32(path); });
}

void ncct_string_free(char* s) { delete[] s; }

/* ---- datasets ------------------------------------------------------ */

ncct_status ncct_dataset_generate(int num_classes, int per_class, int height, int width,
                                  double variation, uint64_t seed, int test_split,
                                  ncct_dataset** out) {
    if (ncct_status s = require(out != nullptr, "out must not be NULL")) return s;
    return guarded([&] {
        auto d = std::make_unique<ncct_dataset>();
        d->data = ncct::generate_toy_dataset(
            num_classes, per_class, height, width, variation, seed,
            test_split ? ncct::Split::test : ncct::Split::train);
        *out = d.release();
    });
}

ncct_status ncct_dataset_load(const char* path, ncct_dataset** out) {
    if (ncct_status s = require(path && out, "path and out must not be NULL")) return s;
    return guarded([&] {
        auto d = std::make_unique<ncct_dataset>();
        d->data = ncct::load_dataset(path);
        *out = d.release();
    });
}

ncct_status ncct_dataset_save(const ncct_dataset* d, const char* path) {
    if (ncct_status s = require(d && path, "dataset and path must not be NULL")) return s;
    return guarded([&] { ncct::save_dataset(d->data, path); });
}

ncct_status ncct_dataset_inject_symmetric(const ncct_dataset* d, double rate,
                                          uint64_t seed, ncct_dataset** out) {
    if (ncct_status s = require(d && out, "dataset and out must not be NULL")) return s;
    return guarded([&] {
        auto r = std::make_unique<ncct_dataset>();
        r->data = ncct::inject_symmetric_noise(d->data, rate, seed);
        *out = r.release();
    });
}

ncct_status ncct_dataset_inject_asymmetric(const ncct_dataset* d, double rate,
                                           const char* pairs_path, uint64_t seed,
                                           ncct_dataset** out) {
    if (ncct_status s = require(d && out, "dataset and out must not be NULL")) return s;
    return guarded([&] {
        const ncct::ConfusionPairs pairs = pairs_path
                                               ? ncct::ConfusionPairs::from_file(pairs_path)
                                               : ncct::ConfusionPairs::default_pairs();
        auto r = std::make_unique<ncct_dataset>();
        r->data = ncct::inject_asymmetric_noise(d->data, rate, pairs, seed);
        *out = r.release();
    });
}

ncct_status ncct_dataset_oversample(const ncct_dataset* d, uint64_t seed,
                                    ncct_dataset** out) {
    if (ncct_status s = require(d && out, "dataset and out must not be NULL")) return s;
    return guarded([&] {
        auto r = std::make_unique<ncct_dataset>();
        r->data = ncct::oversample_balance(d->data, seed);
        *out = r.release();
    });
}

void ncct_dataset_free(ncct_dataset* d) { delete d; }

size_t ncct_dataset_size(const ncct_dataset* d) { return d ? d->data.size() : 0; }
int ncct_dataset_num_classes(const ncct_dataset* d) { return d ? d->data.num_classes : 0; }
int ncct_dataset_height(const ncct_dataset* d) { return d ? d->data.height : 0; }
int ncct_dataset_width(const ncct_dataset* d) { return d ? d->data.width : 0; }
double ncct_dataset_noise_rate(const ncct_dataset* d) {
    return d ? d->data.noise_rate() : 0.0;
}

/* ---- training configuration ---------------------------------------- */

ncct_status ncct_config_create(ncct_train_config** out) {
    if (ncct_status s = require(out != nullptr, "out must not be NULL")) return s;
    return guarded([&] { *out = new ncct_train_config(); });
}

ncct_status ncct_config_set(ncct_train_config* cfg, const char* key, const char* value) {
    if (ncct_status s = require(cfg && key && value, "cfg, key and value must not be NULL"))
        return s;
    return guarded([&] { ncct::apply_setting(cfg->cfg, key, value); });
}

ncct_status ncct_config_load_file(ncct_train_config* cfg, const char* path) {
    if (ncct_status s = require(cfg && path, "cfg and path must not be NULL")) return s;
    return guarded([&] {
        for (const auto& e : ncct::parse_config_file(path)) {
            if (e.key.rfind("meta.", 0) == 0) continue; // manifest bookkeeping
            ncct::apply_setting(cfg->cfg, e.key, e.value);
        }
    });
}

ncct_status ncct_config_render(const ncct_train_config* cfg, char** out) {
    if (ncct_status s = require(cfg && out, "cfg and out must not be NULL")) return s;
    return guarded([&] {
        const ncct::TrainConfig& c = cfg->cfg;
        std::vector<ncct::ConfigEntry> entries = {
            {"mode", ncct::mode_name(c.mode), 0},
            {"epochs", std::to_string(c.epochs), 0},
            {"warmup_epochs", std::to_string(c.warmup_epochs), 0},
            {"batch_size", std::to_string(c.batch_size), 0},
            {"k", std::to_string(c.k), 0},
            {"seed", std::to_string(c.seed), 0},
            {"optimizer", ncct::optimizer_name(c.optimizer), 0},
            {"lr_backbone", ncct::format_double(c.lr_backbone), 0},
            {"lr_heads", ncct::format_double(c.lr_heads), 0},
            {"adam_beta1", ncct::format_double(c.adam_beta1), 0},
            {"adam_beta2", ncct::format_double(c.adam_beta2), 0},
            {"adam_eps", ncct::format_double(c.adam_eps), 0},
            {"sgd_momentum", ncct::format_double(c.sgd_momentum), 0},
            {"conv1_channels", std::to_string(c.conv1_channels), 0},
            {"conv2_channels", std::to_string(c.conv2_channels), 0},
            {"checkpoint_every", std::to_string(c.checkpoint_every), 0},
            {"timing", c.wall_timing ? "wall" : "off", 0},
            {"threads", std::to_string(c.threads), 0},
        };
        *out = dup_string(ncct::format_config(entries));
    });
}

void ncct_config_free(ncct_train_config* cfg) { delete cfg; }

/* ---- training ------------------------------------------------------ */

ncct_status ncct_train(const ncct_dataset* train_set, const ncct_dataset* test_set,
                       const ncct_train_config* cfg, ncct_step_callback callback,
                       void* user, const char* checkpoint_path, ncct_train_result** out) {
    if (ncct_status s =
            require(train_set && test_set && cfg && out,
                    "train_set, test_set, cfg and out must not be NULL"))
        return s;
    return guarded([&] {
        ncct::StepObserver observer;
        if (callback) {
            observer = [callback, user](const ncct::StepInfo& info) {
                ncct_step_info c;
                c.epoch = info.epoch;
                c.batch = info.batch;
                c.batch_size = info.batch_size;
                c.num_confident = info.num_confident;
                c.num_non_confident = info.num_non_confident;
                c.loss_s = info.loss_s;
                c.loss_c = info.loss_c;
                c.loss = info.loss;
                c.warmup = info.warmup ? 1 : 0;
                callback(&c, user);
            };
        }
        ncct::EpochObserver epoch_observer;
        if (checkpoint_path && cfg->cfg.checkpoint_every > 0) {
            const std::string base = checkpoint_path;
            const int every = cfg->cfg.checkpoint_every;
            epoch_observer = [base, every](const ncct::EpochStats& stats,
                                           const ncct::ModelParams& params) {
                if (stats.epoch % every == 0)
                    ncct::save_checkpoint(params, base + ".e" + std::to_string(stats.epoch));
            };
        }
        auto r = std::make_unique<ncct_train_result>();
        r->result =
            ncct::train(train_set->data, test_set->data, cfg->cfg, observer, epoch_observer);
        *out = r.release();
    });
}

int ncct_result_num_epochs(const ncct_train_result* r) {
    return r ? static_cast<int>(r->result.epochs.size()) : 0;
}

double ncct_result_max_acc(const ncct_train_result* r) {
    return r ? r->result.max_test_acc : 0.0;
}

double ncct_result_last5_mean(const ncct_train_result* r) {
    return r ? r->result.last5_mean : 0.0;
}

double ncct_result_final_acc(const ncct_train_result* r) {
    if (!r || r->result.epochs.empty()) return 0.0;
    return r->result.epochs.back().test_acc;
}

ncct_status ncct_result_metrics_csv(const ncct_train_result* r, char** out) {
    if (ncct_status s = require(r && out, "result and out must not be NULL")) return s;
    return guarded([&] { *out = dup_string(ncct::metrics_csv(r->result.epochs)); });
}

ncct_status ncct_result_class_fractions_csv(const ncct_train_result* r, char** out) {
    if (ncct_status s = require(r && out, "result and out must not be NULL")) return s;
    return guarded([&] { *out = dup_string(ncct::class_fractions_csv(r->result.epochs)); });
}

ncct_status ncct_result_accuracy_svg(const ncct_train_result* r, char** out) {
    if (ncct_status s = require(r && out, "result and out must not be NULL")) return s;
    return guarded([&] { *out = dup_string(ncct::accuracy_svg(r->result.epochs)); });
}

ncct_status ncct_result_save_checkpoint(const ncct_train_result* r, const char* path) {
    if (ncct_status s = require(r && path, "result and path must not be NULL")) return s;
    return guarded([&] { ncct::save_checkpoint(r->result.params, path); });
}

void ncct_result_free(ncct_train_result* r) { delete r; }

/* ---- trained models ------------------------------------------------ */

ncct_status ncct_model_load(const char* path, ncct_model** out) {
    if (ncct_status s = require(path && out, "path and out must not be NULL")) return s;
    return guarded([&] {
        auto m = std::make_unique<ncct_model>();
        m->params = ncct::load_checkpoint(path);
        *out = m.release();
    });
}

void ncct_model_free(ncct_model* m) { delete m; }

ncct_status ncct_model_evaluate(const ncct_model* m, const ncct_dataset* d, double* acc) {
    if (ncct_status s = require(m && d && acc, "model, dataset and acc must not be NULL"))
        return s;
    return guarded([&] { *acc = ncct::evaluate(m->params, d->data); });
}

ncct_status ncct_model_confusion_text(const ncct_model* m, const ncct_dataset* d,
                                      char** out) {
    if (ncct_status s = require(m && d && out, "model, dataset and out must not be NULL"))
        return s;
    return guarded([&] {
        *out = dup_string(
            ncct::confusion_text(ncct::evaluate_metrics(m->params, d->data).confusion));
    });
}

ncct_status ncct_model_confusion_csv(const ncct_model* m, const ncct_dataset* d,
                                     char** out) {
    if (ncct_status s = require(m && d && out, "model, dataset and out must not be NULL"))
        return s;
    return guarded([&] {
        *out = dup_string(
            ncct::confusion_csv(ncct::evaluate_metrics(m->params, d->data).confusion));
    });
}

/* ---- experiments and reports --------------------------------------- */

ncct_status ncct_sweep_k(const ncct_dataset* train_set, const ncct_dataset* test_set,
                         const ncct_train_config* base, const int* ks, size_t num_ks,
                         const char* noise_kind, double noise_rate, char** csv_out,
                         char** svg_out) {
    if (ncct_status s = require(train_set && test_set && base && ks && num_ks > 0 &&
                                    noise_kind && csv_out && svg_out,
                                "all sweep arguments must be provided"))
        return s;
    return guarded([&] {
        const std::vector<int> k_list(ks, ks + num_ks);
        const auto entries = ncct::sweep_k(train_set->data, test_set->data, base->cfg,
                                           k_list, noise_kind, noise_rate);
        *csv_out = dup_string(ncct::sweep_csv(entries));
        *svg_out = dup_string(ncct::sweep_svg(entries));
    });
}

ncct_status ncct_metrics_csv_to_svg(const char* csv_path, char** svg_out) {
    if (ncct_status s = require(csv_path && svg_out, "csv_path and svg_out must not be NULL"))
        return s;
    return guarded([&] {
        *svg_out = dup_string(ncct::accuracy_svg(ncct::read_metrics_csv(csv_path)));
    });
}

ncct_status ncct_sweep_csv_to_svg(const char* csv_path, char** svg_out) {
    if (ncct_status s = require(csv_path && svg_out, "csv_path and svg_out must not be NULL"))
        return s;
    return guarded([&] {
        *svg_out = dup_string(ncct::sweep_svg(ncct::read_sweep_csv(csv_path)));
    });
}

} // extern "C"

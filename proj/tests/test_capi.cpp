#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ncct.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "ncct_test_capi";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

struct StringBox {
    char* s = nullptr;
    ~StringBox() { ncct_string_free(s); }
    std::string view() const { return s ? s : ""; }
};

// Tiny train/test pair shared across cases.
struct Corpus {
    ncct_dataset* train = nullptr;
    ncct_dataset* test = nullptr;
    Corpus() {
        REQUIRE(ncct_dataset_generate(3, 6, 12, 12, 0.4, 17, 0, &train) == NCCT_OK);
        REQUIRE(ncct_dataset_generate(3, 3, 12, 12, 0.4, 17, 1, &test) == NCCT_OK);
    }
    ~Corpus() {
        ncct_dataset_free(train);
        ncct_dataset_free(test);
    }
};

ncct_train_config* tiny_config() {
    ncct_train_config* cfg = nullptr;
    REQUIRE(ncct_config_create(&cfg) == NCCT_OK);
    REQUIRE(ncct_config_set(cfg, "epochs", "2") == NCCT_OK);
    REQUIRE(ncct_config_set(cfg, "warmup_epochs", "1") == NCCT_OK);
    REQUIRE(ncct_config_set(cfg, "batch_size", "6") == NCCT_OK);
    REQUIRE(ncct_config_set(cfg, "k", "2") == NCCT_OK);
    REQUIRE(ncct_config_set(cfg, "conv1_channels", "2") == NCCT_OK);
    REQUIRE(ncct_config_set(cfg, "conv2_channels", "3") == NCCT_OK);
    REQUIRE(ncct_config_set(cfg, "seed", "5") == NCCT_OK);
    return cfg;
}

} // namespace

TEST_CASE("version and null-argument contract") {
    CHECK(std::string(ncct_version()) == "0.1.0");
    CHECK(ncct_dataset_generate(3, 2, 12, 12, 0.1, 1, 0, nullptr) ==
          NCCT_ERR_INVALID_ARGUMENT);
    CHECK(std::string(ncct_last_error()).find("NULL") != std::string::npos);
    CHECK(ncct_dataset_load(nullptr, nullptr) == NCCT_ERR_INVALID_ARGUMENT);
    uint32_t crc = 0;
    CHECK(ncct_file_crc32(nullptr, &crc) == NCCT_ERR_INVALID_ARGUMENT);
    ncct_string_free(nullptr); // must be a no-op
    ncct_dataset_free(nullptr);
    ncct_config_free(nullptr);
    ncct_result_free(nullptr);
    ncct_model_free(nullptr);
}

TEST_CASE("dataset generation, accessors and persistence") {
    Corpus c;
    CHECK(ncct_dataset_size(c.train) == 18);
    CHECK(ncct_dataset_num_classes(c.train) == 3);
    CHECK(ncct_dataset_height(c.train) == 12);
    CHECK(ncct_dataset_width(c.train) == 12);
    CHECK(ncct_dataset_noise_rate(c.train) == 0.0);

    const fs::path p = scratch_dir() / "corpus.ncds";
    REQUIRE(ncct_dataset_save(c.train, p.string().c_str()) == NCCT_OK);
    ncct_dataset* back = nullptr;
    REQUIRE(ncct_dataset_load(p.string().c_str(), &back) == NCCT_OK);
    CHECK(ncct_dataset_size(back) == 18);
    ncct_dataset_free(back);

    uint32_t crc = 0;
    REQUIRE(ncct_file_crc32(p.string().c_str(), &crc) == NCCT_OK);
    CHECK(crc != 0x2144DF1Cu); // payload view, not the constant residue
}

TEST_CASE("error taxonomy maps onto distinct status codes") {
    // invalid argument
    ncct_dataset* d = nullptr;
    CHECK(ncct_dataset_generate(1, 2, 12, 12, 0.1, 1, 0, &d) == NCCT_ERR_INVALID_ARGUMENT);
    CHECK(std::string(ncct_last_error()).find("num_classes") != std::string::npos);

    // io: missing file
    CHECK(ncct_dataset_load((scratch_dir() / "ghost.ncds").string().c_str(), &d) ==
          NCCT_ERR_IO);

    Corpus c;
    const fs::path p = scratch_dir() / "victim.ncds";
    REQUIRE(ncct_dataset_save(c.train, p.string().c_str()) == NCCT_OK);
    std::ifstream in(p, std::ios::binary);
    std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
    in.close();

    // truncation
    {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(buf.data(), 40);
    }
    CHECK(ncct_dataset_load(p.string().c_str(), &d) == NCCT_ERR_TRUNCATED);

    // checksum
    {
        std::vector<char> bad = buf;
        bad[80] ^= 0x10;
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    }
    CHECK(ncct_dataset_load(p.string().c_str(), &d) == NCCT_ERR_CHECKSUM);

    // format
    {
        std::vector<char> bad = buf;
        bad[0] = 'Z';
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    }
    CHECK(ncct_dataset_load(p.string().c_str(), &d) == NCCT_ERR_FORMAT);
}

TEST_CASE("noise injection over the C surface") {
    Corpus c;
    ncct_dataset* noisy = nullptr;
    REQUIRE(ncct_dataset_inject_symmetric(c.train, 0.5, 3, &noisy) == NCCT_OK);
    CHECK(ncct_dataset_noise_rate(noisy) == 0.5); // round(0.5*18)/18 exactly
    ncct_dataset_free(noisy);

    CHECK(ncct_dataset_inject_symmetric(c.train, 1.5, 3, &noisy) ==
          NCCT_ERR_INVALID_ARGUMENT);

    // built-in pairs only fit C = 7; a 3-class set must reject them
    CHECK(ncct_dataset_inject_asymmetric(c.train, 0.2, nullptr, 3, &noisy) ==
          NCCT_ERR_INVALID_ARGUMENT);

    const fs::path pairs = scratch_dir() / "pairs.txt";
    { std::ofstream out(pairs); out << "0,1\n2,0\n"; }
    REQUIRE(ncct_dataset_inject_asymmetric(c.train, 0.5, pairs.string().c_str(), 3,
                                           &noisy) == NCCT_OK);
    CHECK(ncct_dataset_noise_rate(noisy) > 0.0);
    ncct_dataset_free(noisy);

    ncct_dataset* balanced = nullptr;
    REQUIRE(ncct_dataset_oversample(c.train, 1, &balanced) == NCCT_OK);
    CHECK(ncct_dataset_size(balanced) == 18); // already balanced
    ncct_dataset_free(balanced);
}

TEST_CASE("config set, file load and render") {
    ncct_train_config* cfg = tiny_config();
    CHECK(ncct_config_set(cfg, "mode", "flip_a_coin") == NCCT_ERR_INVALID_ARGUMENT);
    CHECK(ncct_config_set(cfg, "no_such_key", "1") == NCCT_ERR_INVALID_ARGUMENT);

    StringBox rendered;
    REQUIRE(ncct_config_render(cfg, &rendered.s) == NCCT_OK);
    const std::string text = rendered.view();
    CHECK(text.find("mode = ncct") != std::string::npos);
    CHECK(text.find("epochs = 2") != std::string::npos);
    CHECK(text.find("k = 2") != std::string::npos);
    CHECK(text.find("timing = off") != std::string::npos);

    // a rendered config reloads onto defaults verbatim
    const fs::path p = scratch_dir() / "cfg.txt";
    { std::ofstream out(p); out << text; }
    ncct_train_config* cfg2 = nullptr;
    REQUIRE(ncct_config_create(&cfg2) == NCCT_OK);
    REQUIRE(ncct_config_load_file(cfg2, p.string().c_str()) == NCCT_OK);
    StringBox rendered2;
    REQUIRE(ncct_config_render(cfg2, &rendered2.s) == NCCT_OK);
    CHECK(rendered2.view() == text);

    // meta.* keys are manifest bookkeeping, skipped on load
    {
        std::ofstream out(p, std::ios::app);
        out << "meta.command = train\nmeta.version = 9\n";
    }
    CHECK(ncct_config_load_file(cfg2, p.string().c_str()) == NCCT_OK);
    // but a genuinely unknown key still fails with its line
    { std::ofstream out(p, std::ios::app); out << "volume = 11\n"; }
    CHECK(ncct_config_load_file(cfg2, p.string().c_str()) == NCCT_ERR_INVALID_ARGUMENT);

    ncct_config_free(cfg);
    ncct_config_free(cfg2);
}

TEST_CASE("training produces results, artifacts and checkpoints") {
    Corpus c;
    ncct_train_config* cfg = tiny_config();
    REQUIRE(ncct_config_set(cfg, "checkpoint_every", "1") == NCCT_OK);

    struct Trace {
        int steps = 0;
        int warm_steps = 0;
    } trace;
    auto cb = [](const ncct_step_info* info, void* user) {
        Trace* t = static_cast<Trace*>(user);
        t->steps++;
        if (info->warmup) t->warm_steps++;
    };

    const fs::path ckpt = scratch_dir() / "model.ncpt";
    ncct_train_result* result = nullptr;
    REQUIRE(ncct_train(c.train, c.test, cfg, cb, &trace, ckpt.string().c_str(),
                       &result) == NCCT_OK);

    CHECK(trace.steps == 2 * 3); // 2 epochs x ceil(18/6) batches
    CHECK(trace.warm_steps == 3);
    CHECK(ncct_result_num_epochs(result) == 2);
    CHECK(ncct_result_max_acc(result) >= ncct_result_final_acc(result));
    CHECK(ncct_result_last5_mean(result) >= 0.0);

    StringBox metrics, fractions, svg;
    REQUIRE(ncct_result_metrics_csv(result, &metrics.s) == NCCT_OK);
    CHECK(metrics.view().rfind("epoch,test_acc", 0) == 0);
    REQUIRE(ncct_result_class_fractions_csv(result, &fractions.s) == NCCT_OK);
    CHECK(fractions.view().rfind("epoch,class", 0) == 0);
    REQUIRE(ncct_result_accuracy_svg(result, &svg.s) == NCCT_OK);
    CHECK(svg.view().rfind("<svg", 0) == 0);

    // periodic snapshots from checkpoint_every = 1
    CHECK(fs::exists(ckpt.string() + ".e1"));
    CHECK(fs::exists(ckpt.string() + ".e2"));

    REQUIRE(ncct_result_save_checkpoint(result, ckpt.string().c_str()) == NCCT_OK);
    ncct_result_free(result);

    ncct_model* model = nullptr;
    REQUIRE(ncct_model_load(ckpt.string().c_str(), &model) == NCCT_OK);
    double acc = -1.0;
    REQUIRE(ncct_model_evaluate(model, c.test, &acc) == NCCT_OK);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);

    StringBox cm_text, cm_csv;
    REQUIRE(ncct_model_confusion_text(model, c.test, &cm_text.s) == NCCT_OK);
    CHECK(cm_text.view().rfind("true\\pred", 0) == 0);
    REQUIRE(ncct_model_confusion_csv(model, c.test, &cm_csv.s) == NCCT_OK);
    CHECK(cm_csv.view().rfind("true_label", 0) == 0);

    ncct_model_free(model);
    ncct_config_free(cfg);
}

TEST_CASE("training rejects mismatched inputs with INVALID_ARGUMENT") {
    Corpus c;
    ncct_train_config* cfg = tiny_config();
    ncct_dataset* wrong = nullptr;
    REQUIRE(ncct_dataset_generate(4, 2, 12, 12, 0.4, 1, 1, &wrong) == NCCT_OK);
    ncct_train_result* result = nullptr;
    CHECK(ncct_train(c.train, wrong, cfg, nullptr, nullptr, nullptr, &result) ==
          NCCT_ERR_INVALID_ARGUMENT);
    ncct_dataset_free(wrong);
    ncct_config_free(cfg);
}

TEST_CASE("divergent training reports NCCT_ERR_DIVERGENCE") {
    Corpus c;
    ncct_train_config* cfg = tiny_config();
    REQUIRE(ncct_config_set(cfg, "optimizer", "sgd") == NCCT_OK);
    REQUIRE(ncct_config_set(cfg, "lr_backbone", "inf") == NCCT_OK);
    REQUIRE(ncct_config_set(cfg, "lr_heads", "inf") == NCCT_OK);
    ncct_train_result* result = nullptr;
    CHECK(ncct_train(c.train, c.test, cfg, nullptr, nullptr, nullptr, &result) ==
          NCCT_ERR_DIVERGENCE);
    CHECK(std::string(ncct_last_error()).find("epoch") != std::string::npos);
    ncct_config_free(cfg);
}

TEST_CASE("sweep over the C surface emits CSV and SVG together") {
    Corpus c;
    ncct_train_config* cfg = tiny_config();
    const int ks[] = {1, 2};
    StringBox csv, svg;
    REQUIRE(ncct_sweep_k(c.train, c.test, cfg, ks, 2, "symmetric", 0.4, &csv.s,
                         &svg.s) == NCCT_OK);
    CHECK(csv.view().rfind("mode,noise_kind,noise_rate,k,seed,max_acc,last5_mean\n", 0) ==
          0);
    CHECK(csv.view().find("ncct,symmetric,") != std::string::npos);
    CHECK(svg.view().rfind("<svg", 0) == 0);

    const fs::path sweep_path = scratch_dir() / "sweep.csv";
    { std::ofstream out(sweep_path, std::ios::binary); out << csv.view(); }
    StringBox svg2;
    REQUIRE(ncct_sweep_csv_to_svg(sweep_path.string().c_str(), &svg2.s) == NCCT_OK);
    CHECK(svg2.view() == svg.view());

    CHECK(ncct_sweep_k(c.train, c.test, cfg, nullptr, 0, "none", 0.0, &csv.s, &svg.s) ==
          NCCT_ERR_INVALID_ARGUMENT);
    ncct_config_free(cfg);
}

TEST_CASE("metrics CSV converts to an accuracy SVG") {
    const fs::path p = scratch_dir() / "metrics_in.csv";
    {
        std::ofstream out(p, std::ios::binary);
        out << "epoch,test_acc,L_s,L_c,confident_frac,seconds\n"
            << "1,0.25,1.2,0.1,0.5,0\n"
            << "2,0.5,0.9,0.2,0.6,0\n";
    }
    StringBox svg;
    REQUIRE(ncct_metrics_csv_to_svg(p.string().c_str(), &svg.s) == NCCT_OK);
    CHECK(svg.view().find("<polyline") != std::string::npos);
    CHECK(ncct_metrics_csv_to_svg((scratch_dir() / "ghost.csv").string().c_str(),
                                  &svg.s) == NCCT_ERR_IO);
}

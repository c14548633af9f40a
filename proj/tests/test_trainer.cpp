#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "ncct/dataset.hpp"
#include "ncct/error.hpp"
#include "ncct/trainer.hpp"

using namespace ncct;

namespace {

// Tiny but class-separable corpus; shared across cases to amortize generation.
const Dataset& toy_train() {
    static Dataset d = generate_toy_dataset(3, 8, 12, 12, 0.4, 301);
    return d;
}
const Dataset& toy_test() {
    static Dataset d = generate_toy_dataset(3, 4, 12, 12, 0.4, 301, Split::test);
    return d;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.warmup_epochs = 1;
    cfg.batch_size = 8;
    cfg.k = 2;
    cfg.seed = 11;
    cfg.conv1_channels = 2;
    cfg.conv2_channels = 3;
    return cfg;
}

std::vector<double> step_losses(const Dataset& tr, const Dataset& te, TrainConfig cfg) {
    std::vector<double> out;
    train(tr, te, cfg, [&](const StepInfo& s) {
        out.push_back(s.loss);
        out.push_back(s.loss_s);
        out.push_back(s.loss_c);
    });
    return out;
}

} // namespace

TEST_CASE("config validation rejects each bad field") {
    auto bad = [](auto&& poke) {
        TrainConfig cfg = tiny_config();
        poke(cfg);
        CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    };
    bad([](TrainConfig& c) { c.epochs = 0; });
    bad([](TrainConfig& c) { c.warmup_epochs = -1; });
    bad([](TrainConfig& c) { c.warmup_epochs = c.epochs + 1; });
    bad([](TrainConfig& c) { c.batch_size = 1; });
    bad([](TrainConfig& c) { c.k = 0; });
    bad([](TrainConfig& c) { c.lr_backbone = 0.0; });
    bad([](TrainConfig& c) { c.lr_heads = -1.0; });
    bad([](TrainConfig& c) { c.adam_beta1 = 1.0; });
    bad([](TrainConfig& c) { c.adam_beta2 = -0.1; });
    bad([](TrainConfig& c) { c.adam_eps = 0.0; });
    bad([](TrainConfig& c) { c.sgd_momentum = 1.0; });
    bad([](TrainConfig& c) { c.conv1_channels = 0; });
    bad([](TrainConfig& c) { c.conv2_channels = 0; });
    bad([](TrainConfig& c) { c.checkpoint_every = -1; });
    bad([](TrainConfig& c) { c.threads = -2; });
    CHECK_NOTHROW(tiny_config().validate());
}

TEST_CASE("apply_setting maps every config key") {
    TrainConfig cfg;
    apply_setting(cfg, "mode", "pc_only");
    apply_setting(cfg, "epochs", "12");
    apply_setting(cfg, "warmup_epochs", "2");
    apply_setting(cfg, "batch_size", "32");
    apply_setting(cfg, "k", "5");
    apply_setting(cfg, "seed", "987654321987");
    apply_setting(cfg, "optimizer", "sgd");
    apply_setting(cfg, "lr_backbone", "0.01");
    apply_setting(cfg, "lr_heads", "0.02");
    apply_setting(cfg, "adam_beta1", "0.8");
    apply_setting(cfg, "adam_beta2", "0.95");
    apply_setting(cfg, "adam_eps", "1e-9");
    apply_setting(cfg, "sgd_momentum", "0.9");
    apply_setting(cfg, "conv1_channels", "4");
    apply_setting(cfg, "conv2_channels", "6");
    apply_setting(cfg, "checkpoint_every", "10");
    apply_setting(cfg, "threads", "2");
    apply_setting(cfg, "timing", "wall");

    CHECK(cfg.mode == Mode::pc_only);
    CHECK(cfg.epochs == 12);
    CHECK(cfg.warmup_epochs == 2);
    CHECK(cfg.batch_size == 32);
    CHECK(cfg.k == 5);
    CHECK(cfg.seed == 987654321987ull);
    CHECK(cfg.optimizer == OptimizerKind::sgd);
    CHECK(cfg.lr_backbone == 0.01);
    CHECK(cfg.lr_heads == 0.02);
    CHECK(cfg.adam_beta1 == 0.8);
    CHECK(cfg.adam_beta2 == 0.95);
    CHECK(cfg.adam_eps == 1e-9);
    CHECK(cfg.sgd_momentum == 0.9);
    CHECK(cfg.conv1_channels == 4);
    CHECK(cfg.conv2_channels == 6);
    CHECK(cfg.checkpoint_every == 10);
    CHECK(cfg.threads == 2);
    CHECK(cfg.wall_timing);
    apply_setting(cfg, "timing", "off");
    CHECK(!cfg.wall_timing);

    CHECK_THROWS_AS(apply_setting(cfg, "learning_rate", "0.1"), InvalidArgument);
    CHECK_THROWS_AS(apply_setting(cfg, "epochs", "many"), InvalidArgument);
    CHECK_THROWS_AS(apply_setting(cfg, "epochs", "0"), InvalidArgument);
    CHECK_THROWS_AS(apply_setting(cfg, "mode", "co_teaching"), InvalidArgument);
    CHECK_THROWS_AS(apply_setting(cfg, "timing", "cpu"), InvalidArgument);
}

TEST_CASE("mode and optimizer names round-trip") {
    for (Mode m : {Mode::ncct, Mode::baseline_ce, Mode::pc_only,
                   Mode::single_head_consistency})
        CHECK(mode_from_name(mode_name(m)) == m);
    CHECK_THROWS_AS(mode_from_name("dividemix"), InvalidArgument);
    for (OptimizerKind k : {OptimizerKind::adam, OptimizerKind::sgd})
        CHECK(optimizer_from_name(optimizer_name(k)) == k);
}

TEST_CASE("resolved_threads prefers the explicit setting over the environment") {
    TrainConfig cfg;
    cfg.threads = 3;
    CHECK(cfg.resolved_threads() == 3);
    cfg.threads = 0;
    ::setenv("NCCT_THREADS", "5", 1);
    CHECK(cfg.resolved_threads() == 5);
    ::setenv("NCCT_THREADS", "0", 1);
    CHECK_THROWS_AS(cfg.resolved_threads(), InvalidArgument);
    ::unsetenv("NCCT_THREADS");
    CHECK(cfg.resolved_threads() == 1);
}

TEST_CASE("shuffled_indices is a seeded permutation") {
    const auto idx = shuffled_indices(5, 2, 100);
    REQUIRE(idx.size() == 100);
    std::set<std::uint32_t> seen(idx.begin(), idx.end());
    CHECK(seen.size() == 100);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 99);

    CHECK(shuffled_indices(5, 2, 100) == idx);    // deterministic
    CHECK(shuffled_indices(5, 3, 100) != idx);    // epoch matters
    CHECK(shuffled_indices(6, 2, 100) != idx);    // seed matters
}

TEST_CASE("evaluation breaks prediction ties toward the lower class") {
    ArchConfig arch;
    arch.conv1_channels = 1;
    arch.conv2_channels = 2;
    arch.num_classes = 3;
    ModelParams zero = init_params(arch, 1);
    std::fill(zero.values.begin(), zero.values.end(), 0.0); // all logits equal

    const Metrics m = evaluate_metrics(zero, toy_test());
    for (int t = 0; t < 3; ++t) {
        CHECK(m.confusion.at(t, 0) == 4.0); // everything lands on class 0
        CHECK(m.confusion.at(t, 1) == 0.0);
        CHECK(m.confusion.at(t, 2) == 0.0);
    }
    CHECK(m.accuracy == doctest::Approx(4.0 / 12.0));
}

TEST_CASE("confusion matrix totals match the dataset size") {
    ArchConfig arch;
    arch.conv1_channels = 2;
    arch.conv2_channels = 3;
    arch.num_classes = 3;
    const ModelParams params = init_params(arch, 77);
    const Metrics m = evaluate_metrics(params, toy_test(), 5); // ragged batches
    double total = 0.0, trace = 0.0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) total += m.confusion.at(r, c);
    for (int c = 0; c < 3; ++c) trace += m.confusion.at(c, c);
    CHECK(total == 12.0);
    CHECK(m.accuracy == trace / 12.0);
    CHECK(evaluate(params, toy_test(), 5) == m.accuracy);
}

TEST_CASE("warm-up steps are bit-identical across modes") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 2;
    cfg.warmup_epochs = 2; // every epoch stays in warm-up
    cfg.seed = 404;

    std::vector<std::vector<double>> traces;
    for (Mode m : {Mode::ncct, Mode::baseline_ce, Mode::pc_only,
                   Mode::single_head_consistency}) {
        cfg.mode = m;
        traces.push_back(step_losses(toy_train(), toy_test(), cfg));
    }
    REQUIRE(!traces[0].empty());
    for (std::size_t i = 1; i < traces.size(); ++i) CHECK(traces[i] == traces[0]);
}

TEST_CASE("modes diverge once selection starts") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 2;
    cfg.warmup_epochs = 1;
    cfg.mode = Mode::ncct;
    const auto a = step_losses(toy_train(), toy_test(), cfg);
    cfg.mode = Mode::baseline_ce;
    const auto b = step_losses(toy_train(), toy_test(), cfg);
    REQUIRE(a.size() == b.size());
    CHECK(a != b);
}

TEST_CASE("pc_only never touches the ncc head") {
    TrainConfig cfg = tiny_config();
    cfg.mode = Mode::pc_only;
    const TrainResult r = train(toy_train(), toy_test(), cfg);

    ArchConfig arch;
    arch.conv1_channels = cfg.conv1_channels;
    arch.conv2_channels = cfg.conv2_channels;
    arch.num_classes = 3;
    const ModelParams fresh = init_params(arch, cfg.seed);
    const ParamLayout l = fresh.layout();

    for (std::size_t i = l.ncc_w; i < l.total; ++i)
        CHECK(r.params.values[i] == fresh.values[i]); // bitwise frozen
    bool pcc_moved = false;
    for (std::size_t i = l.pcc_w; i < l.ncc_w && !pcc_moved; ++i)
        pcc_moved = r.params.values[i] != fresh.values[i];
    CHECK(pcc_moved);
    bool backbone_moved = false;
    for (std::size_t i = 0; i < l.backbone_size && !backbone_moved; ++i)
        backbone_moved = r.params.values[i] != fresh.values[i];
    CHECK(backbone_moved);
}

TEST_CASE("training is deterministic and thread-count independent") {
    TrainConfig cfg = tiny_config();
    cfg.mode = Mode::ncct;
    const TrainResult a = train(toy_train(), toy_test(), cfg);
    const TrainResult b = train(toy_train(), toy_test(), cfg);
    cfg.threads = 3;
    const TrainResult c = train(toy_train(), toy_test(), cfg);

    CHECK(a.params.values == b.params.values);
    CHECK(a.params.values == c.params.values);
    REQUIRE(a.epochs.size() == b.epochs.size());
    for (std::size_t i = 0; i < a.epochs.size(); ++i) {
        CHECK(a.epochs[i].test_acc == b.epochs[i].test_acc);
        CHECK(a.epochs[i].loss_s == b.epochs[i].loss_s);
        CHECK(a.epochs[i].loss_c == b.epochs[i].loss_c);
        CHECK(a.epochs[i].test_acc == c.epochs[i].test_acc);
        CHECK(a.epochs[i].seconds == 0.0); // timing off by default
    }
}

TEST_CASE("epoch summaries carry consistent bookkeeping") {
    TrainConfig cfg = tiny_config();
    cfg.mode = Mode::ncct;
    int epoch_calls = 0;
    const TrainResult r =
        train(toy_train(), toy_test(), cfg, {},
              [&](const EpochStats& s, const ModelParams& p) {
                  ++epoch_calls;
                  CHECK(s.epoch == epoch_calls);
                  CHECK(p.all_finite());
              });
    CHECK(epoch_calls == cfg.epochs);
    REQUIRE(static_cast<int>(r.epochs.size()) == cfg.epochs);

    double best = 0.0, tail = 0.0;
    for (const EpochStats& s : r.epochs) {
        best = std::max(best, s.test_acc);
        CHECK(s.confident_fraction >= 0.0);
        CHECK(s.confident_fraction <= 1.0);
        REQUIRE(s.class_confident_fraction.size() == 3);
        tail += s.test_acc; // epochs == 3 < 5, so the tail mean covers everything
    }
    CHECK(r.max_test_acc == best);
    CHECK(r.last5_mean == doctest::Approx(tail / 3.0).epsilon(1e-15));
    CHECK(r.confusion.rows == 3);
    CHECK(r.confusion.cols == 3);
}

TEST_CASE("run_mode_single_head forces the ablation mode") {
    TrainConfig cfg = tiny_config();
    cfg.mode = Mode::baseline_ce; // deliberately wrong; must be overridden
    bool saw_consistency = false;
    run_mode_single_head(toy_train(), toy_test(), cfg, [&](const StepInfo& s) {
        if (!s.warmup && s.loss_c != 0.0) saw_consistency = true;
    });
    CHECK(saw_consistency);

    // and the ncc head must stay untouched, same as pc_only
    const TrainResult r = run_mode_single_head(toy_train(), toy_test(), cfg);
    ArchConfig arch;
    arch.conv1_channels = cfg.conv1_channels;
    arch.conv2_channels = cfg.conv2_channels;
    arch.num_classes = 3;
    const ModelParams fresh = init_params(arch, cfg.seed);
    const ParamLayout l = fresh.layout();
    for (std::size_t i = l.ncc_w; i < l.total; ++i)
        CHECK(r.params.values[i] == fresh.values[i]);
}

TEST_CASE("incompatible train/test sets are rejected") {
    TrainConfig cfg = tiny_config();
    Dataset other_c = generate_toy_dataset(4, 2, 12, 12, 0.4, 1, Split::test);
    CHECK_THROWS_AS(train(toy_train(), other_c, cfg), InvalidArgument);
    Dataset other_shape = generate_toy_dataset(3, 2, 14, 14, 0.4, 1, Split::test);
    CHECK_THROWS_AS(train(toy_train(), other_shape, cfg), InvalidArgument);
    cfg.k = 4; // exceeds C = 3
    CHECK_THROWS_AS(train(toy_train(), toy_test(), cfg), InvalidArgument);
}

TEST_CASE("runaway updates raise a divergence error with coordinates") {
    TrainConfig cfg = tiny_config();
    cfg.optimizer = OptimizerKind::sgd;
    cfg.lr_backbone = cfg.lr_heads = std::numeric_limits<double>::infinity();
    try {
        train(toy_train(), toy_test(), cfg);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& ex) {
        CHECK(std::string(ex.what()).find("epoch 1") != std::string::npos);
    }
}

TEST_CASE("sweep_k labels each entry and varies only k") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 2;
    cfg.warmup_epochs = 1;
    const auto entries = sweep_k(toy_train(), toy_test(), cfg, {1, 2, 3}, "symmetric", 0.4);
    REQUIRE(entries.size() == 3);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        CHECK(entries[i].k == static_cast<int>(i + 1));
        CHECK(entries[i].mode == cfg.mode);
        CHECK(entries[i].noise_kind == "symmetric");
        CHECK(entries[i].noise_rate == 0.4);
        CHECK(entries[i].seed == cfg.seed);
        CHECK(entries[i].max_acc >= entries[i].last5_mean - 1e-12);
    }
    CHECK_THROWS_AS(sweep_k(toy_train(), toy_test(), cfg, {}, "none", 0.0), InvalidArgument);
}

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "doctest.h"
#include "stepwise/training.hpp"

using namespace stepwise;

namespace {

const ParityInstance kInst4{4, {1, 3}};

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.m = 8;
    cfg.iters = 50;
    cfg.eta = 0.05;
    cfg.seed = 11;
    cfg.eval_every = 25;
    return cfg;
}

std::vector<DatasetExample> self_labeled_val(const RnnParams& p, int d, int n,
                                             std::uint64_t seed) {
    // label each input with the model's own decode: accuracy is 1 by design
    SeededRng rng(seed);
    std::vector<DatasetExample> out;
    for (int i = 0; i < n; ++i) {
        DatasetExample e;
        e.x = random_bits(d, rng);
        const DecodedSequence dec = greedy_decode(p, e.x, sequence_length(d));
        SupervisedSequence s;
        s.input_len = d;
        s.z = e.x;                     // d = 4: single scored position, z = x
        s.targets = {dec.final_label};
        s.final_label = dec.final_label;
        s.final_pos = d;
        e.seq = std::move(s);
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace

// ----- scalars and validation -----

TEST_CASE("default_eta is exactly 1/(m sqrt(n))") {
    CHECK(default_eta(100, 10000) == 1e-4);
    CHECK(default_eta(4, 16) == 1.0 / 16.0);
    CHECK_THROWS_AS(default_eta(0, 10), std::invalid_argument);
    CHECK_THROWS_AS(default_eta(10, 0), std::invalid_argument);
}

TEST_CASE("eta resolution: negative means default, zero means zero") {
    TrainConfig cfg;
    cfg.m = 100;
    cfg.iters = 10000;
    CHECK(cfg.eta == -1.0);
    CHECK(cfg.resolved_eta() == 1e-4);
    cfg.eta = 0.0;
    CHECK(cfg.resolved_eta() == 0.0);
    cfg.eta = 0.5;
    CHECK(cfg.resolved_eta() == 0.5);
}

TEST_CASE("config validation") {
    const SequenceTask task = parity_task(kInst4, true);
    auto expect_throw = [&](auto mutate) {
        TrainConfig cfg = small_config();
        mutate(cfg);
        CHECK_THROWS_AS(train(cfg, task, {}), std::invalid_argument);
    };
    expect_throw([](TrainConfig& c) { c.m = 0; });
    expect_throw([](TrainConfig& c) { c.iters = 0; });
    expect_throw([](TrainConfig& c) { c.sigma = -0.1; });
    expect_throw([](TrainConfig& c) { c.eval_every = 0; });
    expect_throw([](TrainConfig& c) { c.gd_sample = 0; });
    expect_throw([](TrainConfig& c) { c.stop_accuracy = 0.4; });
    expect_throw([](TrainConfig& c) { c.eta = std::numeric_limits<double>::infinity(); });
    TrainConfig cfg = small_config();
    CHECK_THROWS_AS(train(cfg, SequenceTask{}, {}), std::invalid_argument);
    cfg.mode = TrainMode::FpGd;
    CHECK_THROWS_AS(sgd_train(cfg, task, {}), std::invalid_argument);
}

// ----- update rules -----

TEST_CASE("eta = 0 leaves the weights bit-exactly at init") {
    TrainConfig cfg = small_config();
    cfg.eta = 0.0;
    cfg.iters = 5;
    const TrainResult r = train(cfg, parity_task(kInst4, true), {});
    SeededRng init_rng = SeededRng(cfg.seed).derive(0);
    CHECK(r.params == init_params(cfg.m, init_rng));
}

TEST_CASE("one sgd step applies W -= eta * grad of the drawn example") {
    TrainConfig cfg = small_config();
    cfg.iters = 1;
    cfg.eval_every = 1;
    const SequenceTask task = parity_task(kInst4, true);
    const TrainResult r = train(cfg, task, {});

    SeededRng root(cfg.seed);
    SeededRng init_rng = root.derive(0);
    SeededRng data_rng = root.derive(1);
    RnnParams expect = init_params(cfg.m, init_rng);
    const auto x = random_bits(4, data_rng);   // online regime redraws the stream
    const Matrix g = grad_w(expect, task.unroll(x));
    for (std::size_t i = 0; i < expect.W.size(); ++i)
        expect.W.data()[i] -= cfg.eta * g.data()[i];
    CHECK(r.params == expect);
}

TEST_CASE("all-weights scope also moves the frozen tensors") {
    TrainConfig cfg = small_config();
    cfg.iters = 1;
    cfg.eval_every = 1;
    cfg.scope = TrainScope::AllWeights;
    const SequenceTask task = parity_task(kInst4, true);
    const TrainResult r = train(cfg, task, {});

    SeededRng root(cfg.seed);
    SeededRng init_rng = root.derive(0);
    SeededRng data_rng = root.derive(1);
    RnnParams expect = init_params(cfg.m, init_rng);
    const Gradients g = grad_all(expect, task.unroll(random_bits(4, data_rng)));
    for (std::size_t i = 0; i < expect.W.size(); ++i)
        expect.W.data()[i] -= cfg.eta * g.W.data()[i];
    for (std::size_t i = 0; i < expect.A.size(); ++i)
        expect.A.data()[i] -= cfg.eta * g.A.data()[i];
    for (std::size_t i = 0; i < expect.B.size(); ++i) expect.B[i] -= cfg.eta * g.B[i];
    for (std::size_t i = 0; i < expect.M0.size(); ++i) expect.M0[i] -= cfg.eta * g.M0[i];
    CHECK(r.params == expect);
}

TEST_CASE("w-only training never touches the frozen checksum") {
    TrainConfig cfg = small_config();
    cfg.eval_every = 10;
    const TrainResult r = train(cfg, parity_task(kInst4, true), {});
    SeededRng init_rng = SeededRng(cfg.seed).derive(0);
    const std::uint64_t crc = frozen_checksum(init_params(cfg.m, init_rng));
    REQUIRE(!r.log.records.empty());
    for (const auto& rec : r.log.records) CHECK(rec.frozen_crc == crc);
    CHECK(frozen_checksum(r.params) == crc);
}

TEST_CASE("training is deterministic given the seed") {
    TrainConfig cfg = small_config();
    cfg.mode = TrainMode::FpSgd;
    cfg.sigma = 0.01;
    const SequenceTask task = parity_task(kInst4, true);
    const TrainResult a = train(cfg, task, {});
    const TrainResult b = train(cfg, task, {});
    CHECK(a.params == b.params);
    REQUIRE(a.log.records.size() == b.log.records.size());
    for (std::size_t i = 0; i < a.log.records.size(); ++i) {
        CHECK(a.log.records[i].step == b.log.records[i].step);
        CHECK(a.log.records[i].train_loss == b.log.records[i].train_loss);
    }
}

// ----- precision modes -----

TEST_CASE("fp_perturb stays inside the sigma ball") {
    SeededRng rng(151);
    Matrix g(4, 4);
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = rng.gauss();
    const Matrix out = fp_perturb(g, 0.25, rng, NoiseModel::Uniform);
    bool moved = false;
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(std::abs(out.data()[i] - g.data()[i]) <= 0.25);
        moved = moved || out.data()[i] != g.data()[i];
    }
    CHECK(moved);
    CHECK(fp_perturb(g, 0.25, rng, NoiseModel::None) == g);
    CHECK_THROWS_AS(fp_perturb(g, -1.0, rng, NoiseModel::Uniform), std::invalid_argument);
}

TEST_CASE("sigma = 0 is exact and consumes no randomness") {
    SeededRng a(157), b(157);
    Matrix g(3, 3, 1.5);
    CHECK(fp_perturb(g, 0.0, a, NoiseModel::Uniform) == g);
    CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("fp-sgd at sigma = 0 is bit-identical to sgd") {
    TrainConfig cfg = small_config();
    const SequenceTask task = parity_task(kInst4, true);
    const TrainResult plain = train(cfg, task, {});
    cfg.mode = TrainMode::FpSgd;
    cfg.sigma = 0.0;
    const TrainResult fp = train(cfg, task, {});
    CHECK(plain.params == fp.params);
}

TEST_CASE("fp-gd on an enumerable task takes the exact mean-gradient step") {
    TrainConfig cfg = small_config();
    cfg.mode = TrainMode::FpGd;
    cfg.iters = 1;
    cfg.eval_every = 1;
    const SequenceTask task = parity_task(kInst4, true);
    const TrainResult r = train(cfg, task, {});

    SeededRng init_rng = SeededRng(cfg.seed).derive(0);
    RnnParams expect = init_params(cfg.m, init_rng);
    const Matrix g = mean_grad_w(expect, task, enumerate_inputs(4));
    for (std::size_t i = 0; i < expect.W.size(); ++i)
        expect.W.data()[i] -= cfg.eta * g.data()[i];
    CHECK(r.params.W == expect.W);
    REQUIRE(r.log.records.size() == 1);
    CHECK(r.log.records[0].gd_batch == 16);
}

TEST_CASE("enumerate_inputs is LSB-first integer order") {
    const auto xs = enumerate_inputs(3);
    REQUIRE(xs.size() == 8);
    CHECK(xs[0] == std::vector<std::uint8_t>{0, 0, 0});
    CHECK(xs[1] == std::vector<std::uint8_t>{1, 0, 0});
    CHECK(xs[5] == std::vector<std::uint8_t>{1, 0, 1});
    CHECK(xs[7] == std::vector<std::uint8_t>{1, 1, 1});
    CHECK_THROWS_AS(enumerate_inputs(0), std::invalid_argument);
    CHECK_THROWS_AS(enumerate_inputs(13), std::invalid_argument);
}

TEST_CASE("mean_grad_w degenerates to the single-example gradient") {
    SeededRng rng(163);
    const RnnParams p = init_params(8, rng);
    const SequenceTask task = parity_task(kInst4, true);
    const auto x = random_bits(4, rng);
    const Matrix single = grad_w(p, task.unroll(x));
    CHECK(mean_grad_w(p, task, {x}) == single);
    CHECK_THROWS_AS(mean_grad_w(p, task, {}), std::invalid_argument);
}

// ----- logging and schedules -----

TEST_CASE("checkpoint cadence hits every eval_every and the final step") {
    TrainConfig cfg = small_config();
    cfg.iters = 10;
    cfg.eval_every = 4;
    const TrainResult r = train(cfg, parity_task(kInst4, true), {});
    std::vector<std::uint64_t> steps;
    for (const auto& rec : r.log.records) steps.push_back(rec.step);
    CHECK(steps == std::vector<std::uint64_t>{4, 8, 10});

    cfg.iters = 8;
    const TrainResult even = train(cfg, parity_task(kInst4, true), {});
    steps.clear();
    for (const auto& rec : even.log.records) steps.push_back(rec.step);
    CHECK(steps == std::vector<std::uint64_t>{4, 8});   // no duplicate final record
}

TEST_CASE("stop_accuracy ends training at the first passing checkpoint") {
    TrainConfig cfg = small_config();
    cfg.eta = 0.0;            // model never moves, so its self-labels stay perfect
    cfg.iters = 1000;
    cfg.eval_every = 10;
    cfg.stop_accuracy = 0.95;
    SeededRng init_rng = SeededRng(cfg.seed).derive(0);
    const RnnParams frozen = init_params(cfg.m, init_rng);
    DataSource data;
    data.validation = self_labeled_val(frozen, 4, 16, 167);
    const TrainResult r = train(cfg, parity_task(kInst4, true), data);
    REQUIRE(r.log.records.size() == 1);
    CHECK(r.log.records[0].step == 10);
    CHECK(r.log.records[0].ar_accuracy == 1.0);
}

TEST_CASE("train log round trips through its jsonl file") {
    TrainConfig cfg = small_config();
    cfg.eval_every = 10;
    SeededRng init_rng = SeededRng(cfg.seed).derive(0);
    DataSource data;
    data.validation = self_labeled_val(init_params(cfg.m, init_rng), 4, 8, 173);
    const TrainResult r = train(cfg, parity_task(kInst4, true), data);

    const std::string path = "training_test_log.jsonl";
    save_trainlog(path, r.log);
    const TrainLog back = load_trainlog(path);
    REQUIRE(back.records.size() == r.log.records.size());
    for (std::size_t i = 0; i < back.records.size(); ++i) {
        const TrainRecord &a = r.log.records[i], &b = back.records[i];
        CHECK(a.step == b.step);
        CHECK(a.train_loss == b.train_loss);
        CHECK(a.train_loss_avg == b.train_loss_avg);
        CHECK(a.tf_losses == b.tf_losses);
        CHECK(a.ar_accuracy == b.ar_accuracy);
        CHECK(a.union_bound_slack == b.union_bound_slack);
        CHECK(a.frozen_crc == b.frozen_crc);
        CHECK(a.gd_batch == b.gd_batch);
        CHECK(a.wall_ms == b.wall_ms);
    }
    std::filesystem::remove(path);
}

TEST_CASE("train log loader rejects foreign and out-of-order files") {
    const std::string path = "training_test_bad.jsonl";
    {
        std::ofstream out(path);
        out << R"({"v":1,"kind":"something"})" << '\n';
    }
    CHECK_THROWS(load_trainlog(path));
    {
        std::ofstream out(path);
        out << R"({"v":1,"kind":"trainlog"})" << '\n';
        const char* rec =
            R"({"step":5,"train_loss":0.1,"train_loss_avg":0.1,"tf_losses":[],)"
            R"("ar_accuracy":0.5,"union_bound_slack":0.0,"frozen_crc":1,"gd_batch":0,"wall_ms":1.0})";
        out << rec << '\n' << rec << '\n';   // duplicate step
    }
    CHECK_THROWS(load_trainlog(path));
    std::filesystem::remove(path);
    CHECK_THROWS(load_trainlog("training_test_missing.jsonl"));
}

TEST_CASE("iterations_to_threshold scans the recorded accuracies") {
    TrainLog log;
    auto add = [&](std::uint64_t step, double acc) {
        TrainRecord r;
        r.step = step;
        r.ar_accuracy = acc;
        log.records.push_back(r);
    };
    add(100, 0.50);
    add(200, 0.70);
    add(300, 0.96);
    CHECK(iterations_to_threshold(log, 0.60) == 200);
    CHECK(iterations_to_threshold(log, 0.95) == 300);
    CHECK(!iterations_to_threshold(log, 0.99).has_value());
    CHECK_THROWS_AS(iterations_to_threshold(log, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(iterations_to_threshold(log, 1.5), std::invalid_argument);
}

// ----- failure and learning smoke -----

TEST_CASE("divergence raises TrainAbort with the failing state attached") {
    // long sequences + a step size well past the stable band blow up within
    // a few iterations; an absurdly large eta would instead kill every relu
    // and park the dynamics at a finite fixed point
    TrainConfig cfg;
    cfg.m = 32;
    cfg.iters = 200;
    cfg.eta = 2.0;
    cfg.seed = 11;
    cfg.eval_every = 100;
    SeededRng rng(181);
    const ParityInstance inst = sample_subset(16, rng);
    bool caught = false;
    try {
        train(cfg, parity_task(inst, true), {});
    } catch (const TrainAbort& e) {
        caught = true;
        CHECK(e.state.seed == cfg.seed);
        CHECK(e.state.step >= 1);
        CHECK(e.state.params.m == cfg.m);
        CHECK(std::string(e.what()).find("diverged") != std::string::npos);
    }
    CHECK(caught);
}

TEST_CASE("a small supervised parity task is learnable end to end") {
    TrainConfig cfg;
    cfg.m = 32;
    cfg.iters = 4000;
    cfg.eta = 0.05;
    cfg.seed = 3;
    cfg.eval_every = 250;
    cfg.stop_accuracy = 0.99;
    SeededRng rng(179);
    const ParityInstance inst = sample_subset(4, rng);
    DataSource data;
    for (int i = 0; i < 64; ++i) {
        DatasetExample e;
        e.x = random_bits(4, rng);
        e.seq = train_sequence(e.x, inst);
        data.validation.push_back(std::move(e));
    }
    const TrainResult r = train(cfg, parity_task(inst, true), data);
    REQUIRE(!r.log.records.empty());
    CHECK(r.log.records.back().ar_accuracy >= 0.9);
    for (const auto& rec : r.log.records) CHECK(rec.union_bound_slack >= 0.0);
}

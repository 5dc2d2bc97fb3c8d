// Hot-path timings: the dense kernels, one forward/backward pass, and a
// whole training step, across the hidden widths the experiments use.

#include <benchmark/benchmark.h>

#include "stepwise/rnn.hpp"
#include "stepwise/training.hpp"

using namespace stepwise;

namespace {

RnnParams make_params(int m) {
    SeededRng rng(7);
    return init_params(m, rng);
}

SupervisedSequence make_sequence(int d) {
    SeededRng rng(11);
    const ParityInstance inst = sample_subset(d, rng);
    return train_sequence(random_bits(d, rng), inst);
}

}  // namespace

// ----- kernels -----

static void BM_matvec(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    SeededRng rng(3);
    const Matrix w = gauss_init(static_cast<std::size_t>(m), static_cast<std::size_t>(m),
                                2.0 / m, rng);
    Vec x(static_cast<std::size_t>(m));
    for (auto& v : x) v = rng.gauss();
    for (auto _ : state) benchmark::DoNotOptimize(matvec(w, x));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_matvec)->RangeMultiplier(2)->Range(32, 256)->Complexity(benchmark::oNSquared);

// ----- model passes -----

static void BM_forward(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    const RnnParams p = make_params(m);
    const SupervisedSequence s = make_sequence(16);   // T = 22
    for (auto _ : state) benchmark::DoNotOptimize(forward(p, s.z));
}
BENCHMARK(BM_forward)->RangeMultiplier(2)->Range(32, 256);

static void BM_grad_w(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    const RnnParams p = make_params(m);
    const SupervisedSequence s = make_sequence(16);
    for (auto _ : state) benchmark::DoNotOptimize(grad_w(p, s));
}
BENCHMARK(BM_grad_w)->RangeMultiplier(2)->Range(32, 256);

static void BM_grad_all(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    const RnnParams p = make_params(m);
    const SupervisedSequence s = make_sequence(16);
    for (auto _ : state) benchmark::DoNotOptimize(grad_all(p, s));
}
BENCHMARK(BM_grad_all)->RangeMultiplier(2)->Range(32, 256);

// ----- a whole online training step, as the sweep runs it -----

static void BM_sgd_steps(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    SeededRng rng(13);
    const ParityInstance inst = sample_subset(16, rng);
    const SequenceTask task = parity_task(inst, true);
    TrainConfig cfg;
    cfg.m = m;
    cfg.iters = 32;              // amortizes the per-call weight init
    cfg.eta = 0.005;
    cfg.scope = TrainScope::AllWeights;
    cfg.eval_every = 1u << 30;   // no validation inside the loop
    for (auto _ : state) benchmark::DoNotOptimize(train(cfg, task, {}));
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_sgd_steps)->RangeMultiplier(2)->Range(64, 128);

BENCHMARK_MAIN();

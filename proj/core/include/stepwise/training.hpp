#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stepwise/circuit.hpp"
#include "stepwise/evaluation.hpp"
#include "stepwise/parity.hpp"
#include "stepwise/rnn.hpp"

namespace stepwise {

// ----- configuration -----

enum class TrainMode { Sgd, FpSgd, FpGd };
enum class TrainScope { WOnly, AllWeights };
enum class NoiseModel { Uniform, None };

const char* train_mode_name(TrainMode m);
const char* train_scope_name(TrainScope s);
const char* noise_model_name(NoiseModel n);

// exactly 1/(m*sqrt(n))
double default_eta(int m, std::uint64_t n);

struct TrainConfig {
    int m = 32;                   // hidden width
    std::uint64_t iters = 1000;   // iteration budget n
    double eta = -1.0;            // learning rate; negative means 1/(m*sqrt(n)),
                                  // an explicit 0 trains with no-op updates
    double sigma = 0.0;           // precision radius for the FP modes
    TrainMode mode = TrainMode::Sgd;
    TrainScope scope = TrainScope::WOnly;
    NoiseModel noise = NoiseModel::Uniform;
    std::uint64_t seed = 1;
    std::uint64_t eval_every = 100;   // checkpoint cadence (also logs at the last step)
    std::uint64_t gd_sample = 2048;   // FP_GD batch when 2^d > 4096 (else full enumeration)
    double stop_accuracy = 0.0;       // > 0: stop once validation accuracy reaches it

    double resolved_eta() const { return eta < 0.0 ? default_eta(m, iters) : eta; }
};

// ----- task plumbing -----

// A task is its input width plus the rule that unrolls one raw input into
// a supervised sequence.
struct SequenceTask {
    int d = 0;
    std::function<SupervisedSequence(const std::vector<std::uint8_t>&)> unroll;
};

SequenceTask parity_task(const ParityInstance& inst, bool supervision);
// circuit must already be fan-in reduced
SequenceTask circuit_task(const Circuit& binary);

// Training examples. An empty train set means "sample a fresh uniform x
// every step" (the online regime); otherwise steps draw uniformly from the
// fixed set. The validation set is scored at every checkpoint.
struct DataSource {
    std::vector<DatasetExample> train;
    std::vector<DatasetExample> validation;
};

// ----- logs -----

struct TrainRecord {
    std::uint64_t step = 0;          // iterations completed when recorded
    double train_loss = 0.0;         // loss of the latest example/batch, pre-update
    double train_loss_avg = 0.0;     // running mean of train_loss over all steps
    Vec tf_losses;                   // validation teacher-forced zero-one per position
    double ar_accuracy = 0.0;        // validation autoregressive accuracy
    double union_bound_slack = 0.0;  // validation slack, always >= 0
    std::uint64_t frozen_crc = 0;    // checksum over A, B, M0
    std::uint64_t gd_batch = 0;      // FP_GD: inputs per step (0 in the SGD modes)
    double wall_ms = 0.0;            // elapsed; the only nondeterministic field
};

struct TrainLog {
    int version = 1;
    std::vector<TrainRecord> records;
};

void save_trainlog(const std::string& path, const TrainLog& log);
TrainLog load_trainlog(const std::string& path);

// first recorded step whose validation accuracy reaches threshold;
// threshold must sit in (0.5, 1]
std::optional<std::uint64_t> iterations_to_threshold(const TrainLog& log, double threshold);

// ----- training -----

// thrown when a loss or gradient goes non-finite; carries the state at the
// failing step so the caller can drop a diagnostic checkpoint
struct TrainAbort : std::runtime_error {
    Checkpoint state;
    TrainAbort(const std::string& msg, Checkpoint c)
        : std::runtime_error(msg), state(std::move(c)) {}
};

struct TrainResult {
    RnnParams params;
    TrainLog log;
};

// plain SGD with teacher forcing; updates W only or everything per scope
TrainResult sgd_train(const TrainConfig& cfg, const SequenceTask& task, const DataSource& data);

// SGD with each W gradient passed through fp_perturb
TrainResult fp_sgd_train(const TrainConfig& cfg, const SequenceTask& task, const DataSource& data);

// full-gradient descent on E_x[loss]: exact enumeration of all 2^d inputs
// when 2^d <= 4096, otherwise a fresh cfg.gd_sample-input batch per step
TrainResult fp_gd_train(const TrainConfig& cfg, const SequenceTask& task, const DataSource& data);

// dispatch on cfg.mode
TrainResult train(const TrainConfig& cfg, const SequenceTask& task, const DataSource& data);

// Returns a matrix whose elementwise distance from grad is at most sigma:
// i.i.d. uniform noise on [-sigma, sigma], or grad itself under NONE.
// sigma = 0 returns grad bit-exactly and consumes no randomness.
Matrix fp_perturb(const Matrix& grad, double sigma, SeededRng& rng, NoiseModel model);

// all 2^d inputs in integer order, bit i of the integer driving x_{i+1};
// rejected above 2^d = 4096
std::vector<std::vector<std::uint8_t>> enumerate_inputs(int d);

// mean W gradient of the unrolled loss over the given inputs, accumulated
// in input order (the FP_GD step direction)
Matrix mean_grad_w(const RnnParams& p, const SequenceTask& task,
                   const std::vector<std::vector<std::uint8_t>>& xs);

}  // namespace stepwise

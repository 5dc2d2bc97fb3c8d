#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stepwise/circuit.hpp"
#include "stepwise/evaluation.hpp"
#include "stepwise/parity.hpp"
#include "stepwise/training.hpp"

namespace stepwise {

// ----- run configuration -----

enum class TaskKind { Parity, Circuit };

// Everything one run needs. Round-trips losslessly through JSON; the
// training seed doubles as the master seed for subset choice and dataset
// sampling (independent derived streams).
struct ExperimentConfig {
    TaskKind task = TaskKind::Parity;
    int d = 8;                       // parity width (ignored for circuits)
    std::vector<int> subset;         // empty: sampled from the master seed
    std::string circuit_file;        // TaskKind::Circuit only
    bool supervision = true;         // off: answer-only sequences (length d+1)
    std::uint64_t train_size = 0;    // 0: sample a fresh example every step
    std::uint64_t val_size = 0;      // 0: min(1024, train/8), at least 64
    std::uint64_t test_size = 0;     // 0: same default as val_size
    std::string out_dir = "run-out";
    TrainConfig training;
};

std::string experiment_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const std::string& text);
ExperimentConfig load_experiment(const std::string& path);
void save_experiment(const std::string& path, const ExperimentConfig& cfg);

// FNV-1a over the canonical JSON form, as 16 hex digits
std::string config_digest(const ExperimentConfig& cfg);

// flag-value parsers shared with the command line; throw on bad input
TrainMode parse_train_mode(const std::string& s);
TrainScope parse_train_scope(const std::string& s);
NoiseModel parse_noise_model(const std::string& s);
bool parse_on_off(const std::string& s);
TaskKind parse_task_kind(const std::string& s);
const char* task_kind_name(TaskKind k);

// ----- resolved task -----

struct ResolvedTask {
    TaskKind kind = TaskKind::Parity;
    ParityInstance instance;     // parity runs
    Circuit reduced;             // circuit runs, already fan-in reduced
    SequenceTask task;           // supervision already applied
    FeedbackLayout layout = FeedbackLayout::Immediate;   // for dataset files
};

ResolvedTask resolve_task(const ExperimentConfig& cfg);

// ----- run records -----

struct RunRecord {
    std::string digest;          // config digest
    std::uint64_t seed = 0;
    int d = 0;
    bool supervision = true;
    std::string mode;            // sgd / fp-sgd / fp-gd
    std::string scope;           // w-only / all
    std::uint64_t steps_run = 0;
    double test_accuracy = 0.0;
    std::optional<std::uint64_t> iters_to_60;   // first checkpoint >= 60% validation
    std::optional<std::uint64_t> grok_steps;    // steps from >= 60% to >= 95%
};

std::string run_record_to_json(const RunRecord& r);
RunRecord run_record_from_json(const std::string& text);
RunRecord load_run_record(const std::string& path);

// both thresholds read from one log
RunRecord make_run_record(const ExperimentConfig& cfg, const TrainLog& log,
                          double test_accuracy);

// ----- commands -----
// These return normally on success and throw on failure; the binary maps
// exceptions to exit codes. All artifact writes are temp-file + rename.

struct SplitPaths {
    std::string train, validation, test;
};
SplitPaths dataset_paths(const std::string& dir);

struct GeneratedData {
    std::vector<DatasetExample> train, validation, test;
};

// Draws validation and test on distinct inputs (never sharing an x with
// any other split) and training examples from the remaining pool; errors
// when 2^d cannot accommodate the distinct draws plus one training input.
GeneratedData generate_data(const ExperimentConfig& cfg, const ResolvedTask& rt);

// write train/validation/test files plus the resolved config
void cmd_gen(const ExperimentConfig& cfg);

// run one training cell end to end; artifacts: config.json, datasets,
// model.ckpt, trainlog.jsonl, run.json (abort.ckpt on divergence)
RunRecord cmd_train(const ExperimentConfig& cfg);

struct SweepSpec {
    std::vector<int> ds;
    std::vector<bool> supervision;        // e.g. {true, false}
    std::vector<std::uint64_t> seeds;
    ExperimentConfig base;                // shared knobs; cell fields overridden
    std::string out_dir;
};

// one cell per (d, supervision, seed), run on a bounded worker pool;
// failures are recorded in the CSV and do not stop the sweep. Writes
// runs.csv (one row per cell) and summary.csv (per-(d, supervision)
// aggregates, mean +/- 2 * sample stddev over seeds).
void cmd_sweep(const SweepSpec& spec);

// rebuild both CSVs from the stored run.json + trainlog.jsonl artifacts,
// recomputing thresholds from the logs
void cmd_report(const std::string& sweep_dir);

// parse + reduce a circuit; print it, its topological order, and (when
// bits are given) the unrolled supervision sequence
void cmd_compile(const std::string& circuit_path, const std::string& bits, std::ostream& out);

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;    // measured values
};

// fast oracle suite (gate polynomials, decorrelation, guessing error,
// gradient check, union bound, mode degeneracy); level >= 1 adds the
// slower variance-decay demo
std::vector<CheckResult> verify_checks(unsigned level);

// prints one line per check; returns the number of failures
int cmd_verify(std::ostream& out, unsigned level);

// ----- gradient checking -----

struct GradCheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped = 0;     // coordinates near a ReLU kink
};

// BPTT dL/dW vs central finite differences on `coords` random W entries.
// A coordinate is skipped when any pre-activation of the perturbed
// passes sits within kink_margin of zero.
GradCheckResult grad_w_check(const RnnParams& p, const SupervisedSequence& s, int coords,
                             SeededRng& rng, double eps, double kink_margin);

// write-temp-rename so readers never observe a half-written file
void atomic_write_text(const std::string& path, const std::string& text);

}  // namespace stepwise

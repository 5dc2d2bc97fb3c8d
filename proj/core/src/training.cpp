#include "stepwise/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace stepwise {

namespace {

using Clock = std::chrono::steady_clock;

void validate_config(const TrainConfig& cfg, const SequenceTask& task) {
    if (cfg.m < 1) throw std::invalid_argument("train: width must be >= 1");
    if (cfg.iters < 1) throw std::invalid_argument("train: need at least one iteration");
    if (cfg.sigma < 0.0) throw std::invalid_argument("train: sigma must be >= 0");
    if (cfg.eval_every < 1) throw std::invalid_argument("train: eval_every must be >= 1");
    if (cfg.gd_sample < 1) throw std::invalid_argument("train: gd_sample must be >= 1");
    if (cfg.stop_accuracy != 0.0 && (cfg.stop_accuracy <= 0.5 || cfg.stop_accuracy > 1.0))
        throw std::invalid_argument("train: stop_accuracy must sit in (0.5, 1]");
    if (task.d < 1 || !task.unroll) throw std::invalid_argument("train: task is not set up");
    if (!std::isfinite(cfg.resolved_eta()) || cfg.resolved_eta() < 0.0)
        throw std::invalid_argument("train: eta must be finite and >= 0");
}

DatasetExample draw_example(const SequenceTask& task, const std::vector<DatasetExample>& train,
                            SeededRng& data_rng) {
    if (train.empty()) {
        DatasetExample ex;
        ex.x = random_bits(task.d, data_rng);
        ex.seq = task.unroll(ex.x);
        return ex;
    }
    return train[static_cast<std::size_t>(data_rng.below(train.size()))];
}

void check_finite(double loss, const Matrix& g, const RnnParams& p, const TrainConfig& cfg,
                  std::uint64_t step) {
    if (std::isfinite(loss) && all_finite(g)) return;
    throw TrainAbort("training diverged at step " + std::to_string(step), {p, cfg.seed, step});
}

void axpy(Matrix& dst, double scale, const Matrix& g) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += scale * g.data()[i];
}

void axpy(Vec& dst, double scale, const Vec& g) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * g[i];
}

Gradients mean_grad_all(const RnnParams& p, const SequenceTask& task,
                        const std::vector<std::vector<std::uint8_t>>& xs) {
    Gradients acc{Matrix(p.W.rows(), p.W.cols()), Matrix(p.A.rows(), p.A.cols()),
                  Vec(p.B.size(), 0.0), Vec(p.M0.size(), 0.0)};
    for (const auto& x : xs) {
        const Gradients g = grad_all(p, task.unroll(x));
        axpy(acc.W, 1.0, g.W);
        axpy(acc.A, 1.0, g.A);
        axpy(acc.B, 1.0, g.B);
        axpy(acc.M0, 1.0, g.M0);
    }
    const double inv = 1.0 / static_cast<double>(xs.size());
    for (std::size_t i = 0; i < acc.W.size(); ++i) acc.W.data()[i] *= inv;
    for (std::size_t i = 0; i < acc.A.size(); ++i) acc.A.data()[i] *= inv;
    for (double& v : acc.B) v *= inv;
    for (double& v : acc.M0) v *= inv;
    return acc;
}

// one update from the already-averaged loss/gradient pair; FP modes pass
// the W gradient through the precision ball first (W only — the frozen
// tensors' gradients, when trained, stay exact)
void apply_update(RnnParams& p, const SequenceTask& task,
                  const std::vector<std::vector<std::uint8_t>>& xs, double eta,
                  const TrainConfig& cfg, bool perturb, SeededRng& noise_rng, double& loss_out,
                  std::uint64_t step) {
    double loss = 0.0;
    for (const auto& x : xs) loss += example_loss(p, task.unroll(x));
    loss /= static_cast<double>(xs.size());

    if (cfg.scope == TrainScope::WOnly) {
        Matrix g = xs.size() == 1 ? grad_w(p, task.unroll(xs.front())) : mean_grad_w(p, task, xs);
        check_finite(loss, g, p, cfg, step);
        if (perturb) g = fp_perturb(g, cfg.sigma, noise_rng, cfg.noise);
        axpy(p.W, -eta, g);
    } else {
        Gradients g = xs.size() == 1 ? grad_all(p, task.unroll(xs.front()))
                                     : mean_grad_all(p, task, xs);
        check_finite(loss, g.W, p, cfg, step);
        if (!all_finite(g.A) || !all_finite(g.B) || !all_finite(g.M0))
            throw TrainAbort("training diverged at step " + std::to_string(step),
                             {p, cfg.seed, step});
        if (perturb) g.W = fp_perturb(g.W, cfg.sigma, noise_rng, cfg.noise);
        axpy(p.W, -eta, g.W);
        axpy(p.A, -eta, g.A);
        axpy(p.B, -eta, g.B);
        axpy(p.M0, -eta, g.M0);
    }
    loss_out = loss;
}

// The same update applied to a fixed example drawn from a dataset — the
// dataset already carries the unrolled sequence, so skip task.unroll.
void apply_example(RnnParams& p, const SupervisedSequence& seq, double eta,
                   const TrainConfig& cfg, bool perturb, SeededRng& noise_rng, double& loss_out,
                   std::uint64_t step) {
    const double loss = example_loss(p, seq);
    if (cfg.scope == TrainScope::WOnly) {
        Matrix g = grad_w(p, seq);
        check_finite(loss, g, p, cfg, step);
        if (perturb) g = fp_perturb(g, cfg.sigma, noise_rng, cfg.noise);
        axpy(p.W, -eta, g);
    } else {
        Gradients g = grad_all(p, seq);
        check_finite(loss, g.W, p, cfg, step);
        if (!all_finite(g.A) || !all_finite(g.B) || !all_finite(g.M0))
            throw TrainAbort("training diverged at step " + std::to_string(step),
                             {p, cfg.seed, step});
        if (perturb) g.W = fp_perturb(g.W, cfg.sigma, noise_rng, cfg.noise);
        axpy(p.W, -eta, g.W);
        axpy(p.A, -eta, g.A);
        axpy(p.B, -eta, g.B);
        axpy(p.M0, -eta, g.M0);
    }
    loss_out = loss;
}

TrainResult run_training(const TrainConfig& cfg, const SequenceTask& task, const DataSource& data,
                         TrainMode mode) {
    validate_config(cfg, task);

    SeededRng root(cfg.seed);
    SeededRng init_rng = root.derive(0);
    SeededRng data_rng = root.derive(1);
    SeededRng noise_rng = root.derive(2);

    RnnParams p = init_params(cfg.m, init_rng);
    const double eta = cfg.resolved_eta();
    const bool perturb = mode != TrainMode::Sgd;

    std::vector<std::vector<std::uint8_t>> enumerated;
    if (mode == TrainMode::FpGd && task.d <= 12) enumerated = enumerate_inputs(task.d);

    TrainLog log;
    double loss_sum = 0.0;
    const auto t0 = Clock::now();
    bool stop = false;
    for (std::uint64_t step = 1; step <= cfg.iters && !stop; ++step) {
        double loss = 0.0;
        std::uint64_t batch = 0;
        if (mode == TrainMode::FpGd) {
            const std::vector<std::vector<std::uint8_t>>* xs = &enumerated;
            std::vector<std::vector<std::uint8_t>> sampled;
            if (enumerated.empty()) {
                sampled.reserve(cfg.gd_sample);
                for (std::uint64_t i = 0; i < cfg.gd_sample; ++i)
                    sampled.push_back(random_bits(task.d, data_rng));
                xs = &sampled;
            }
            batch = xs->size();
            apply_update(p, task, *xs, eta, cfg, perturb, noise_rng, loss, step);
        } else {
            const DatasetExample ex = draw_example(task, data.train, data_rng);
            apply_example(p, ex.seq, eta, cfg, perturb, noise_rng, loss, step);
        }
        loss_sum += loss;

        if (step % cfg.eval_every == 0 || step == cfg.iters) {
            TrainRecord r;
            r.step = step;
            r.train_loss = loss;
            r.train_loss_avg = loss_sum / static_cast<double>(step);
            r.frozen_crc = frozen_checksum(p);
            r.gd_batch = batch;
            if (!data.validation.empty()) {
                const EvalReport rep = evaluate(p, data.validation);
                r.tf_losses = rep.tf_losses;
                r.ar_accuracy = rep.accuracy;
                r.union_bound_slack = rep.union_bound_slack;
                if (cfg.stop_accuracy > 0.0 && rep.accuracy >= cfg.stop_accuracy) stop = true;
            }
            r.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
            log.records.push_back(std::move(r));
        }
    }
    return {std::move(p), std::move(log)};
}

}  // namespace

// ----- names / scalars -----

const char* train_mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::Sgd: return "sgd";
        case TrainMode::FpSgd: return "fp-sgd";
        case TrainMode::FpGd: return "fp-gd";
    }
    return "?";
}

const char* train_scope_name(TrainScope s) {
    return s == TrainScope::WOnly ? "w-only" : "all";
}

const char* noise_model_name(NoiseModel n) {
    return n == NoiseModel::Uniform ? "uniform" : "none";
}

double default_eta(int m, std::uint64_t n) {
    if (m < 1 || n < 1) throw std::invalid_argument("default_eta: m, n must be >= 1");
    return 1.0 / (static_cast<double>(m) * std::sqrt(static_cast<double>(n)));
}

// ----- tasks -----

SequenceTask parity_task(const ParityInstance& inst, bool supervision) {
    validate_dims(inst.d);
    SequenceTask t;
    t.d = inst.d;
    if (supervision)
        t.unroll = [inst](const std::vector<std::uint8_t>& x) { return train_sequence(x, inst); };
    else
        t.unroll = [inst](const std::vector<std::uint8_t>& x) {
            return answer_only_sequence(x, inst);
        };
    return t;
}

SequenceTask circuit_task(const Circuit& binary) {
    SequenceTask t;
    t.d = binary.num_inputs();
    t.unroll = [c = binary](const std::vector<std::uint8_t>& x) {
        return supervision_sequence(c, x);
    };
    return t;
}

// ----- perturbation / batches -----

Matrix fp_perturb(const Matrix& grad, double sigma, SeededRng& rng, NoiseModel model) {
    if (sigma < 0.0) throw std::invalid_argument("fp_perturb: sigma must be >= 0");
    if (sigma == 0.0 || model == NoiseModel::None) return grad;
    Matrix out = grad;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += rng.uniform(-sigma, sigma);
    return out;
}

std::vector<std::vector<std::uint8_t>> enumerate_inputs(int d) {
    if (d < 1 || d > 12) throw std::invalid_argument("enumerate_inputs: need 1 <= d <= 12");
    const std::uint32_t total = std::uint32_t{1} << d;
    std::vector<std::vector<std::uint8_t>> xs;
    xs.reserve(total);
    for (std::uint32_t v = 0; v < total; ++v) {
        std::vector<std::uint8_t> x(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = (v >> i) & 1u;
        xs.push_back(std::move(x));
    }
    return xs;
}

Matrix mean_grad_w(const RnnParams& p, const SequenceTask& task,
                   const std::vector<std::vector<std::uint8_t>>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean_grad_w: empty batch");
    Matrix acc(p.W.rows(), p.W.cols());
    for (const auto& x : xs) axpy(acc, 1.0, grad_w(p, task.unroll(x)));
    const double inv = 1.0 / static_cast<double>(xs.size());
    for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] *= inv;
    return acc;
}

// ----- entry points -----

TrainResult sgd_train(const TrainConfig& cfg, const SequenceTask& task, const DataSource& data) {
    if (cfg.mode != TrainMode::Sgd) throw std::invalid_argument("sgd_train: config mode mismatch");
    return run_training(cfg, task, data, TrainMode::Sgd);
}

TrainResult fp_sgd_train(const TrainConfig& cfg, const SequenceTask& task,
                         const DataSource& data) {
    if (cfg.mode != TrainMode::FpSgd)
        throw std::invalid_argument("fp_sgd_train: config mode mismatch");
    return run_training(cfg, task, data, TrainMode::FpSgd);
}

TrainResult fp_gd_train(const TrainConfig& cfg, const SequenceTask& task, const DataSource& data) {
    if (cfg.mode != TrainMode::FpGd)
        throw std::invalid_argument("fp_gd_train: config mode mismatch");
    return run_training(cfg, task, data, TrainMode::FpGd);
}

TrainResult train(const TrainConfig& cfg, const SequenceTask& task, const DataSource& data) {
    switch (cfg.mode) {
        case TrainMode::Sgd: return sgd_train(cfg, task, data);
        case TrainMode::FpSgd: return fp_sgd_train(cfg, task, data);
        case TrainMode::FpGd: return fp_gd_train(cfg, task, data);
    }
    throw std::invalid_argument("train: unknown mode");
}

// ----- log files -----
// Line-delimited: a {"v":1,"kind":"trainlog"} header, then one object per
// record.

void save_trainlog(const std::string& path, const TrainLog& log) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    nlohmann::json header = {{"v", log.version}, {"kind", "trainlog"}};
    out << header.dump() << '\n';
    for (const TrainRecord& r : log.records) {
        nlohmann::json j = {{"step", r.step},
                            {"train_loss", r.train_loss},
                            {"train_loss_avg", r.train_loss_avg},
                            {"tf_losses", r.tf_losses},
                            {"ar_accuracy", r.ar_accuracy},
                            {"union_bound_slack", r.union_bound_slack},
                            {"frozen_crc", r.frozen_crc},
                            {"gd_batch", r.gd_batch},
                            {"wall_ms", r.wall_ms}};
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("short write to " + path);
}

TrainLog load_trainlog(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty log");
    const nlohmann::json header = nlohmann::json::parse(line);
    if (header.value("kind", "") != "trainlog" || header.value("v", 0) != 1)
        throw std::runtime_error(path + ": not a version-1 train log");

    TrainLog log;
    log.version = 1;
    std::uint64_t prev = 0;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        TrainRecord r;
        r.step = j.at("step").get<std::uint64_t>();
        r.train_loss = j.at("train_loss").get<double>();
        r.train_loss_avg = j.at("train_loss_avg").get<double>();
        r.tf_losses = j.at("tf_losses").get<Vec>();
        r.ar_accuracy = j.at("ar_accuracy").get<double>();
        r.union_bound_slack = j.at("union_bound_slack").get<double>();
        r.frozen_crc = j.at("frozen_crc").get<std::uint64_t>();
        r.gd_batch = j.at("gd_batch").get<std::uint64_t>();
        r.wall_ms = j.at("wall_ms").get<double>();
        if (r.step <= prev)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": steps must increase");
        prev = r.step;
        log.records.push_back(std::move(r));
    }
    return log;
}

std::optional<std::uint64_t> iterations_to_threshold(const TrainLog& log, double threshold) {
    if (threshold <= 0.5 || threshold > 1.0)
        throw std::invalid_argument("iterations_to_threshold: threshold must sit in (0.5, 1]");
    for (const TrainRecord& r : log.records)
        if (r.ar_accuracy >= threshold) return r.step;
    return std::nullopt;
}

}  // namespace stepwise

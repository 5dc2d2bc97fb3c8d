#include "stepwise/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_set>

#include "json.hpp"
#include "stepwise/theory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace stepwise {

// ----- small helpers -----

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string fmt_sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json training_to_json(const TrainConfig& t) {
    return {{"m", t.m},
            {"iters", t.iters},
            {"eta", t.eta},
            {"sigma", t.sigma},
            {"mode", train_mode_name(t.mode)},
            {"scope", train_scope_name(t.scope)},
            {"noise", noise_model_name(t.noise)},
            {"seed", t.seed},
            {"eval_every", t.eval_every},
            {"gd_sample", t.gd_sample},
            {"stop_accuracy", t.stop_accuracy}};
}

TrainConfig training_from_json(const json& j) {
    TrainConfig t;
    t.m = j.at("m").get<int>();
    t.iters = j.at("iters").get<std::uint64_t>();
    t.eta = j.at("eta").get<double>();
    t.sigma = j.at("sigma").get<double>();
    t.mode = parse_train_mode(j.at("mode").get<std::string>());
    t.scope = parse_train_scope(j.at("scope").get<std::string>());
    t.noise = parse_noise_model(j.at("noise").get<std::string>());
    t.seed = j.at("seed").get<std::uint64_t>();
    t.eval_every = j.at("eval_every").get<std::uint64_t>();
    t.gd_sample = j.at("gd_sample").get<std::uint64_t>();
    t.stop_accuracy = j.at("stop_accuracy").get<double>();
    return t;
}

json experiment_to_json_obj(const ExperimentConfig& c) {
    return {{"task", task_kind_name(c.task)},
            {"d", c.d},
            {"subset", c.subset},
            {"circuit_file", c.circuit_file},
            {"supervision", c.supervision},
            {"train_size", c.train_size},
            {"val_size", c.val_size},
            {"test_size", c.test_size},
            {"out_dir", c.out_dir},
            {"training", training_to_json(c.training)}};
}

}  // namespace

// ----- config serialization -----

std::string experiment_to_json(const ExperimentConfig& cfg) {
    return experiment_to_json_obj(cfg).dump(2) + "\n";
}

ExperimentConfig experiment_from_json(const std::string& text) {
    const json j = json::parse(text);
    ExperimentConfig c;
    c.task = parse_task_kind(j.at("task").get<std::string>());
    c.d = j.at("d").get<int>();
    c.subset = j.at("subset").get<std::vector<int>>();
    c.circuit_file = j.at("circuit_file").get<std::string>();
    c.supervision = j.at("supervision").get<bool>();
    c.train_size = j.at("train_size").get<std::uint64_t>();
    c.val_size = j.at("val_size").get<std::uint64_t>();
    c.test_size = j.at("test_size").get<std::uint64_t>();
    c.out_dir = j.at("out_dir").get<std::string>();
    c.training = training_from_json(j.at("training"));
    return c;
}

ExperimentConfig load_experiment(const std::string& path) {
    return experiment_from_json(slurp(path));
}

void save_experiment(const std::string& path, const ExperimentConfig& cfg) {
    atomic_write_text(path, experiment_to_json(cfg));
}

std::string config_digest(const ExperimentConfig& cfg) {
    // location-independent identity: the output directory is not part of
    // what the run computes
    json j = experiment_to_json_obj(cfg);
    j.erase("out_dir");
    return hex16(fnv1a(j.dump()));
}

// ----- enum parsing -----

TrainMode parse_train_mode(const std::string& s) {
    if (s == "sgd") return TrainMode::Sgd;
    if (s == "fp-sgd") return TrainMode::FpSgd;
    if (s == "fp-gd") return TrainMode::FpGd;
    throw std::invalid_argument("unknown mode '" + s + "' (sgd | fp-sgd | fp-gd)");
}

TrainScope parse_train_scope(const std::string& s) {
    if (s == "w-only") return TrainScope::WOnly;
    if (s == "all") return TrainScope::AllWeights;
    throw std::invalid_argument("unknown scope '" + s + "' (w-only | all)");
}

NoiseModel parse_noise_model(const std::string& s) {
    if (s == "uniform") return NoiseModel::Uniform;
    if (s == "none") return NoiseModel::None;
    throw std::invalid_argument("unknown noise model '" + s + "' (uniform | none)");
}

bool parse_on_off(const std::string& s) {
    if (s == "on") return true;
    if (s == "off") return false;
    throw std::invalid_argument("expected 'on' or 'off', got '" + s + "'");
}

TaskKind parse_task_kind(const std::string& s) {
    if (s == "parity") return TaskKind::Parity;
    if (s == "circuit") return TaskKind::Circuit;
    throw std::invalid_argument("unknown task '" + s + "' (parity | circuit)");
}

const char* task_kind_name(TaskKind k) {
    return k == TaskKind::Parity ? "parity" : "circuit";
}

// ----- task resolution -----

ResolvedTask resolve_task(const ExperimentConfig& cfg) {
    ResolvedTask rt;
    rt.kind = cfg.task;
    if (cfg.task == TaskKind::Parity) {
        rt.instance.d = cfg.d;
        if (cfg.subset.empty()) {
            SeededRng sub = SeededRng(cfg.training.seed).derive(10);
            rt.instance = sample_subset(cfg.d, sub);
        } else {
            rt.instance.subset = cfg.subset;
            // cheap full validation of d/subset
            tree_targets(std::vector<std::uint8_t>(static_cast<std::size_t>(cfg.d), 0),
                         rt.instance);
        }
        rt.task = parity_task(rt.instance, cfg.supervision);
        rt.layout = cfg.supervision ? FeedbackLayout::Immediate : FeedbackLayout::Delayed;
        return rt;
    }

    if (cfg.circuit_file.empty())
        throw std::invalid_argument("circuit task needs a circuit file");
    rt.reduced = fanin_reduce(parse_circuit(slurp(cfg.circuit_file)));
    rt.layout = FeedbackLayout::Delayed;
    if (cfg.supervision) {
        rt.task = circuit_task(rt.reduced);
    } else {
        rt.task.d = rt.reduced.num_inputs();
        rt.task.unroll = [c = rt.reduced](const std::vector<std::uint8_t>& x) {
            const CircuitEval ev = eval_circuit(c, x);
            SupervisedSequence s;
            s.input_len = static_cast<int>(x.size());
            s.z = x;
            s.z.push_back(0);
            s.targets = {bit_to_label(ev.output)};
            s.final_label = s.targets.front();
            s.final_pos = s.T();
            return s;
        };
    }
    return rt;
}

// ----- run records -----

namespace {

json run_record_to_json_obj(const RunRecord& r) {
    json j = {{"digest", r.digest},
              {"seed", r.seed},
              {"d", r.d},
              {"supervision", r.supervision},
              {"mode", r.mode},
              {"scope", r.scope},
              {"steps_run", r.steps_run},
              {"test_accuracy", r.test_accuracy}};
    j["iters_to_60"] = r.iters_to_60 ? json(*r.iters_to_60) : json(nullptr);
    j["grok_steps"] = r.grok_steps ? json(*r.grok_steps) : json(nullptr);
    return j;
}

}  // namespace

std::string run_record_to_json(const RunRecord& r) {
    return run_record_to_json_obj(r).dump(2) + "\n";
}

RunRecord run_record_from_json(const std::string& text) {
    const json j = json::parse(text);
    RunRecord r;
    r.digest = j.at("digest").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.d = j.at("d").get<int>();
    r.supervision = j.at("supervision").get<bool>();
    r.mode = j.at("mode").get<std::string>();
    r.scope = j.at("scope").get<std::string>();
    r.steps_run = j.at("steps_run").get<std::uint64_t>();
    r.test_accuracy = j.at("test_accuracy").get<double>();
    if (!j.at("iters_to_60").is_null()) r.iters_to_60 = j.at("iters_to_60").get<std::uint64_t>();
    if (!j.at("grok_steps").is_null()) r.grok_steps = j.at("grok_steps").get<std::uint64_t>();
    return r;
}

RunRecord load_run_record(const std::string& path) { return run_record_from_json(slurp(path)); }

RunRecord make_run_record(const ExperimentConfig& cfg, const TrainLog& log,
                          double test_accuracy) {
    if (log.records.empty()) throw std::invalid_argument("make_run_record: empty log");
    RunRecord r;
    r.digest = config_digest(cfg);
    r.seed = cfg.training.seed;
    r.d = cfg.d;
    r.supervision = cfg.supervision;
    r.mode = train_mode_name(cfg.training.mode);
    r.scope = train_scope_name(cfg.training.scope);
    r.steps_run = log.records.back().step;
    r.test_accuracy = test_accuracy;
    r.iters_to_60 = iterations_to_threshold(log, 0.60);
    const auto first95 = iterations_to_threshold(log, 0.95);
    if (r.iters_to_60 && first95) r.grok_steps = *first95 - *r.iters_to_60;
    return r;
}

// ----- dataset generation -----

SplitPaths dataset_paths(const std::string& dir) {
    return {dir + "/train.tsv", dir + "/validation.tsv", dir + "/test.tsv"};
}

namespace {

std::vector<std::uint8_t> bits_of(std::uint64_t v, int d) {
    std::vector<std::uint8_t> x(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = (v >> i) & 1u;
    return x;
}

}  // namespace

GeneratedData generate_data(const ExperimentConfig& cfg, const ResolvedTask& rt) {
    const int d = rt.task.d;
    if (d < 1 || d > 62) throw std::invalid_argument("generate_data: need 1 <= d <= 62");
    const std::uint64_t space = std::uint64_t{1} << d;

    const std::uint64_t train_n = cfg.train_size;
    const std::uint64_t base = train_n ? std::max<std::uint64_t>(64, train_n / 8) : 256;
    const std::uint64_t val_n = cfg.val_size ? cfg.val_size : std::min<std::uint64_t>(1024, base);
    const std::uint64_t test_n = cfg.test_size ? cfg.test_size : val_n;

    // validation/test occupy distinct inputs; training draws from what is
    // left, so the splits never share an x
    const std::uint64_t distinct = val_n + test_n;
    const std::uint64_t reserve = train_n ? 1 : 0;
    if (distinct + reserve > space)
        throw std::invalid_argument(
            "generate_data: requested sizes exceed 2^d distinct inputs (need " +
            std::to_string(distinct + reserve) + " of " + std::to_string(space) + ")");

    SeededRng rng = SeededRng(cfg.training.seed).derive(11);
    GeneratedData out;
    const auto unroll = [&](std::vector<std::uint8_t> x) {
        DatasetExample ex;
        ex.seq = rt.task.unroll(x);
        ex.x = std::move(x);
        return ex;
    };

    if (d <= 20) {
        // partial shuffle of the full enumeration picks the distinct block
        std::vector<std::uint32_t> pool(static_cast<std::size_t>(space));
        for (std::uint64_t v = 0; v < space; ++v) pool[static_cast<std::size_t>(v)] = static_cast<std::uint32_t>(v);
        for (std::uint64_t i = 0; i < distinct; ++i) {
            const std::uint64_t j = i + rng.below(space - i);
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        }
        for (std::uint64_t i = 0; i < val_n; ++i)
            out.validation.push_back(unroll(bits_of(pool[static_cast<std::size_t>(i)], d)));
        for (std::uint64_t i = 0; i < test_n; ++i)
            out.test.push_back(unroll(bits_of(pool[static_cast<std::size_t>(val_n + i)], d)));
        const std::uint64_t rest = space - distinct;
        for (std::uint64_t i = 0; i < train_n; ++i) {
            const std::uint32_t v = pool[static_cast<std::size_t>(distinct + rng.below(rest))];
            out.train.push_back(unroll(bits_of(v, d)));
        }
        return out;
    }

    // large d: rejection sampling; collisions are vanishingly rare
    std::unordered_set<std::uint64_t> held;
    auto draw_distinct = [&]() {
        while (true) {
            const std::uint64_t v = rng.next_u64() & (space - 1);
            if (held.insert(v).second) return v;
        }
    };
    for (std::uint64_t i = 0; i < val_n; ++i) out.validation.push_back(unroll(bits_of(draw_distinct(), d)));
    for (std::uint64_t i = 0; i < test_n; ++i) out.test.push_back(unroll(bits_of(draw_distinct(), d)));
    for (std::uint64_t i = 0; i < train_n; ++i) {
        std::uint64_t v;
        do v = rng.next_u64() & (space - 1);
        while (held.count(v));
        out.train.push_back(unroll(bits_of(v, d)));
    }
    return out;
}

// ----- artifacts -----

void atomic_write_text(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << text;
        if (!out) throw std::runtime_error("short write to " + tmp);
    }
    fs::rename(tmp, path);
}

namespace {

void atomic_save_dataset(const std::string& path, const std::vector<DatasetExample>& ex) {
    std::ostringstream ss;
    write_dataset(ss, ex);
    atomic_write_text(path, ss.str());
}

void atomic_save_checkpoint(const std::string& path, const Checkpoint& c) {
    const std::string tmp = path + ".tmp";
    save_checkpoint(tmp, c);
    fs::rename(tmp, path);
}

void atomic_save_trainlog(const std::string& path, const TrainLog& log) {
    const std::string tmp = path + ".tmp";
    save_trainlog(tmp, log);
    fs::rename(tmp, path);
}

ExperimentConfig resolved_copy(const ExperimentConfig& cfg, const ResolvedTask& rt) {
    ExperimentConfig r = cfg;
    if (rt.kind == TaskKind::Parity) {
        r.subset = rt.instance.subset;
    } else {
        r.d = rt.task.d;
    }
    return r;
}

// dataset lines can only carry traces whose answer is the last target
void check_line_representable(const GeneratedData& data) {
    const auto check = [](const std::vector<DatasetExample>& v, const char* split) {
        if (!v.empty() && v.front().seq.final_pos != v.front().seq.T())
            throw std::runtime_error(std::string("cannot write ") + split +
                                     " split: the answer is not the last target (reorder the "
                                     "circuit so the output gate comes last)");
    };
    check(data.train, "train");
    check(data.validation, "validation");
    check(data.test, "test");
}

}  // namespace

void cmd_gen(const ExperimentConfig& cfg) {
    const ResolvedTask rt = resolve_task(cfg);
    const GeneratedData data = generate_data(cfg, rt);
    check_line_representable(data);

    fs::create_directories(cfg.out_dir);
    const SplitPaths paths = dataset_paths(cfg.out_dir);
    if (!data.train.empty()) atomic_save_dataset(paths.train, data.train);
    atomic_save_dataset(paths.validation, data.validation);
    atomic_save_dataset(paths.test, data.test);
    save_experiment(cfg.out_dir + "/config.json", resolved_copy(cfg, rt));
}

RunRecord cmd_train(const ExperimentConfig& cfg) {
    const ResolvedTask rt = resolve_task(cfg);
    const ExperimentConfig resolved = resolved_copy(cfg, rt);
    fs::create_directories(cfg.out_dir);
    const SplitPaths paths = dataset_paths(cfg.out_dir);

    DataSource src;
    std::vector<DatasetExample> test;
    const bool train_ok = cfg.train_size == 0 || fs::exists(paths.train);
    if (train_ok && fs::exists(paths.validation) && fs::exists(paths.test)) {
        if (cfg.train_size > 0) src.train = load_dataset(paths.train, rt.layout);
        src.validation = load_dataset(paths.validation, rt.layout);
        test = load_dataset(paths.test, rt.layout);
    } else {
        GeneratedData data = generate_data(cfg, rt);
        check_line_representable(data);
        if (!data.train.empty()) atomic_save_dataset(paths.train, data.train);
        atomic_save_dataset(paths.validation, data.validation);
        atomic_save_dataset(paths.test, data.test);
        src.train = std::move(data.train);
        src.validation = std::move(data.validation);
        test = std::move(data.test);
    }
    save_experiment(cfg.out_dir + "/config.json", resolved);

    TrainResult res;
    try {
        res = train(resolved.training, rt.task, src);
    } catch (const TrainAbort& abort) {
        atomic_save_checkpoint(cfg.out_dir + "/abort.ckpt", abort.state);
        throw;
    }

    const double test_acc = evaluate(res.params, test).accuracy;
    atomic_save_checkpoint(cfg.out_dir + "/model.ckpt",
                           {res.params, resolved.training.seed, res.log.records.back().step});
    atomic_save_trainlog(cfg.out_dir + "/trainlog.jsonl", res.log);

    RunRecord rec = make_run_record(resolved, res.log, test_acc);
    rec.d = rt.task.d;
    atomic_write_text(cfg.out_dir + "/run.json", run_record_to_json(rec));
    return rec;
}

// ----- sweep + report -----

namespace {

struct CellOutcome {
    int d = 0;
    bool supervision = true;
    std::uint64_t seed = 0;
    std::string status = "ok";   // or the failure reason
    RunRecord rec;
    bool ok = false;
};

std::string sanitize(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

std::string cell_name(int d, bool sup, std::uint64_t seed) {
    return "d" + std::to_string(d) + (sup ? "_on_s" : "_off_s") + std::to_string(seed);
}

std::string build_runs_csv(const std::vector<CellOutcome>& cells) {
    std::string out =
        "d,supervision,seed,mode,scope,status,steps,iters_to_60,grok_steps,test_accuracy,"
        "config_digest\n";
    for (const CellOutcome& c : cells) {
        out += std::to_string(c.d);
        out += c.supervision ? ",on," : ",off,";
        out += std::to_string(c.seed);
        if (c.ok) {
            out += ',' + c.rec.mode + ',' + c.rec.scope + ",ok," + std::to_string(c.rec.steps_run);
            out += ',';
            if (c.rec.iters_to_60) out += std::to_string(*c.rec.iters_to_60);
            out += ',';
            if (c.rec.grok_steps) out += std::to_string(*c.rec.grok_steps);
            out += ',' + fmt6(c.rec.test_accuracy) + ',' + c.rec.digest;
        } else {
            out += ",,," + sanitize(c.status) + ",,,,,";
        }
        out += '\n';
    }
    return out;
}

struct Aggregate {
    int d = 0;
    bool supervision = true;
    std::vector<const CellOutcome*> cells;
};

// mean and 2 * Bessel-corrected standard deviation
std::pair<double, double> mean_2sd(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, 2.0 * std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::string build_summary_csv(const std::vector<CellOutcome>& cells) {
    std::vector<Aggregate> groups;
    for (const CellOutcome& c : cells) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const Aggregate& g) {
            return g.d == c.d && g.supervision == c.supervision;
        });
        if (it == groups.end()) {
            groups.push_back({c.d, c.supervision, {}});
            it = groups.end() - 1;
        }
        it->cells.push_back(&c);
    }

    std::string out =
        "d,supervision,cells,ok,mode,scope,acc_mean,acc_2sd,crossed_60,iters60_mean,"
        "iters60_2sd\n";
    for (const Aggregate& g : groups) {
        std::vector<double> accs, iters;
        std::string mode, scope;
        std::size_t ok = 0;
        for (const CellOutcome* c : g.cells) {
            if (!c->ok) continue;
            ++ok;
            accs.push_back(c->rec.test_accuracy);
            if (c->rec.iters_to_60) iters.push_back(static_cast<double>(*c->rec.iters_to_60));
            if (mode.empty()) {
                mode = c->rec.mode;
                scope = c->rec.scope;
            }
        }
        out += std::to_string(g.d);
        out += g.supervision ? ",on," : ",off,";
        out += std::to_string(g.cells.size()) + ',' + std::to_string(ok) + ',' + mode + ',' +
               scope + ',';
        if (!accs.empty()) {
            const auto [m, sd] = mean_2sd(accs);
            out += fmt6(m) + ',' + fmt6(sd);
        } else {
            out += ',';
        }
        out += ',' + std::to_string(iters.size()) + ',';
        if (!iters.empty()) {
            const auto [m, sd] = mean_2sd(iters);
            out += fmt6(m) + ',' + fmt6(sd);
        } else {
            out += ',';
        }
        out += '\n';
    }
    return out;
}

}  // namespace

void cmd_sweep(const SweepSpec& spec) {
    if (spec.ds.empty() || spec.supervision.empty() || spec.seeds.empty())
        throw std::invalid_argument("sweep: every grid axis needs at least one value");
    if (spec.out_dir.empty()) throw std::invalid_argument("sweep: output directory required");

    std::vector<CellOutcome> cells;
    for (int d : spec.ds)
        for (bool sup : spec.supervision)
            for (std::uint64_t seed : spec.seeds) {
                CellOutcome c;
                c.d = d;
                c.supervision = sup;
                c.seed = seed;
                cells.push_back(c);
            }

    fs::create_directories(spec.out_dir);
    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            CellOutcome& c = cells[i];
            ExperimentConfig cfg = spec.base;
            cfg.d = c.d;
            cfg.supervision = c.supervision;
            cfg.subset.clear();   // re-derived per (d, seed) so paired runs share it
            cfg.training.seed = c.seed;
            cfg.out_dir = spec.out_dir + "/" + cell_name(c.d, c.supervision, c.seed);
            try {
                c.rec = cmd_train(cfg);
                c.ok = true;
            } catch (const std::exception& e) {
                c.status = e.what();
            }
        }
    };

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned workers =
        static_cast<unsigned>(std::min<std::size_t>(hw, cells.size()));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    atomic_write_text(spec.out_dir + "/runs.csv", build_runs_csv(cells));
    atomic_write_text(spec.out_dir + "/summary.csv", build_summary_csv(cells));
}

void cmd_report(const std::string& sweep_dir) {
    std::vector<CellOutcome> cells;
    for (const auto& entry : fs::directory_iterator(sweep_dir)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        // expected form: d<d>_<on|off>_s<seed>
        int d = 0;
        std::uint64_t seed = 0;
        bool sup = false;
        {
            if (name.size() < 6 || name[0] != 'd') continue;
            std::size_t p = 1;
            while (p < name.size() && std::isdigit(static_cast<unsigned char>(name[p]))) ++p;
            if (p == 1) continue;
            d = std::stoi(name.substr(1, p - 1));
            if (name.compare(p, 5, "_on_s") == 0) {
                sup = true;
                p += 5;
            } else if (name.compare(p, 6, "_off_s") == 0) {
                sup = false;
                p += 6;
            } else {
                continue;
            }
            if (p >= name.size()) continue;
            seed = std::stoull(name.substr(p));
        }

        CellOutcome c;
        c.d = d;
        c.supervision = sup;
        c.seed = seed;
        const std::string run_path = entry.path().string() + "/run.json";
        const std::string log_path = entry.path().string() + "/trainlog.jsonl";
        if (!fs::exists(run_path)) {
            c.status = "incomplete";
            cells.push_back(c);
            continue;
        }
        c.rec = load_run_record(run_path);
        // every reported number must be recomputable from the stored log
        const TrainLog log = load_trainlog(log_path);
        const auto to60 = iterations_to_threshold(log, 0.60);
        const auto to95 = iterations_to_threshold(log, 0.95);
        std::optional<std::uint64_t> grok;
        if (to60 && to95) grok = *to95 - *to60;
        if (to60 != c.rec.iters_to_60 || grok != c.rec.grok_steps ||
            log.records.back().step != c.rec.steps_run)
            throw std::runtime_error(name + ": run.json disagrees with its train log");
        c.ok = true;
        cells.push_back(c);
    }
    if (cells.empty()) throw std::runtime_error("report: no run directories under " + sweep_dir);

    std::sort(cells.begin(), cells.end(), [](const CellOutcome& a, const CellOutcome& b) {
        if (a.d != b.d) return a.d < b.d;
        if (a.supervision != b.supervision) return a.supervision > b.supervision;  // on first
        return a.seed < b.seed;
    });
    atomic_write_text(sweep_dir + "/runs.csv", build_runs_csv(cells));
    atomic_write_text(sweep_dir + "/summary.csv", build_summary_csv(cells));
}

// ----- compile -----

void cmd_compile(const std::string& circuit_path, const std::string& bits, std::ostream& out) {
    const Circuit parsed = parse_circuit(slurp(circuit_path));
    const Circuit reduced = fanin_reduce(parsed);
    out << format_circuit(reduced);
    out << "# topological order:";
    for (const auto& id : topo_sort(reduced)) out << ' ' << id;
    out << '\n';

    if (bits.empty()) return;
    std::vector<std::uint8_t> x;
    x.reserve(bits.size());
    for (char c : bits) {
        if (c != '0' && c != '1')
            throw std::invalid_argument(std::string("input bits must be 0/1, got '") + c + "'");
        x.push_back(c == '1' ? 1 : 0);
    }
    const CompiledTrace tr = compile_circuit(parsed, x);
    out << "z:";
    for (auto b : tr.seq.z) out << ' ' << int(b);
    out << "\ntargets:";
    for (int y : tr.seq.targets) out << (y > 0 ? " +1" : " -1");
    out << "\nfinal: " << (tr.seq.final_label > 0 ? "+1" : "-1") << " at position "
        << tr.seq.final_pos << '\n';
}

// ----- gradient check -----

GradCheckResult grad_w_check(const RnnParams& p, const SupervisedSequence& s, int coords,
                             SeededRng& rng, double eps, double kink_margin) {
    if (coords < 1) throw std::invalid_argument("grad_w_check: need at least one coordinate");
    if (!(eps > 0.0)) throw std::invalid_argument("grad_w_check: eps must be > 0");

    const Matrix analytic = grad_w(p, s);
    const std::size_t m = static_cast<std::size_t>(p.m);
    const std::size_t K = s.targets.size();

    RnnParams probe = p;
    GradCheckResult res;
    for (int c = 0; c < coords; ++c) {
        const std::size_t i = static_cast<std::size_t>(rng.below(m));
        const std::size_t j = static_cast<std::size_t>(rng.below(m));
        const double orig = probe.W.at(i, j);

        bool kink = false;
        double loss[2] = {0.0, 0.0};
        for (int side = 0; side < 2; ++side) {
            probe.W.at(i, j) = orig + (side == 0 ? eps : -eps);
            const ForwardTrace tr = forward(probe, s.z);
            for (const Vec& pre : tr.pre)
                for (double v : pre)
                    if (std::abs(v) <= kink_margin) kink = true;
            loss[side] = sequence_loss(s.targets,
                                       std::span<const double>(tr.logits).last(K));
        }
        probe.W.at(i, j) = orig;
        if (kink) {
            ++res.skipped;
            continue;
        }

        const double fd = (loss[0] - loss[1]) / (2.0 * eps);
        const double an = analytic.at(i, j);
        double rel = 0.0;
        if (std::abs(an) > 1e-12 || std::abs(fd) > 1e-12)
            rel = std::abs(fd - an) / std::max({std::abs(an), std::abs(fd), 1e-10});
        res.max_rel_err = std::max(res.max_rel_err, rel);
        ++res.checked;
    }
    return res;
}

// ----- verification suite -----

namespace {

CheckResult check_gate_polys() {
    const PolyGate g2 = two_bit_parity_poly();
    const double r2 = std::sqrt(2.0);
    double node_err = 0.0;
    node_err = std::max(node_err, std::abs(g2.eval_inner(r2) - 1.0));
    node_err = std::max(node_err, std::abs(g2.eval_inner(1.0 / r2) + 1.0));
    node_err = std::max(node_err, std::abs(g2.eval_inner(0.0) - 1.0));

    double table_err = 0.0;
    bool rounded_ok = true;
    for (int bits = 0; bits < 4; ++bits) {
        const std::vector<std::uint8_t> in = {static_cast<std::uint8_t>(bits & 1),
                                              static_cast<std::uint8_t>((bits >> 1) & 1)};
        const int want = ((in[0] ^ in[1]) != 0) ? -1 : +1;  // +1 when the bits agree
        const double got = g2.eval_bits(in);
        table_err = std::max(table_err, std::abs(got - want));
        if ((got > 0 ? +1 : -1) != want) rounded_ok = false;
    }

    // every two-input truth table
    double interp_err = 0.0;
    for (int tbl = 0; tbl < 16 && rounded_ok; ++tbl) {
        GateTable t;
        t.fan_in = 2;
        t.outputs.resize(4);
        for (int idx = 0; idx < 4; ++idx) t.outputs[idx] = ((tbl >> idx) & 1) ? +1.0 : -1.0;
        const PolyGate g = lagrange_gate_poly(t);
        for (int idx = 0; idx < 4; ++idx) {
            const std::vector<std::uint8_t> in = {static_cast<std::uint8_t>(idx & 1),
                                                  static_cast<std::uint8_t>((idx >> 1) & 1)};
            const double got = g.eval_bits(in);
            interp_err = std::max(interp_err, std::abs(got - t.outputs[idx]));
            if ((got > 0 ? +1.0 : -1.0) != t.outputs[idx]) rounded_ok = false;
        }
    }

    // a few random three-input tables
    SeededRng rng(416);
    for (int rep = 0; rep < 5 && rounded_ok; ++rep) {
        GateTable t;
        t.fan_in = 3;
        t.outputs.resize(8);
        for (auto& v : t.outputs) v = rng.below(2) ? +1.0 : -1.0;
        const PolyGate g = lagrange_gate_poly(t);
        for (int idx = 0; idx < 8; ++idx) {
            std::vector<std::uint8_t> in(3);
            for (int b = 0; b < 3; ++b) in[b] = (idx >> b) & 1;
            const double got = g.eval_bits(in);
            interp_err = std::max(interp_err, std::abs(got - t.outputs[idx]));
            if ((got > 0 ? +1.0 : -1.0) != t.outputs[idx]) rounded_ok = false;
        }
    }

    const bool pass = node_err < 1e-12 && table_err < 1e-9 && interp_err < 1e-9 && rounded_ok;
    return {"gate-polynomials", pass,
            "node residual " + fmt_sci(node_err) + ", interpolation error " +
                fmt_sci(std::max(table_err, interp_err))};
}

CheckResult check_decorrelation() {
    SeededRng rng(1202);
    double worst = 0.0;
    for (int rep = 0; rep < 25; ++rep) {
        const int d = 4 + 2 * static_cast<int>(rng.below(4));  // 4, 6, 8, 10
        const auto all = all_half_subsets(d);
        const std::size_t a = static_cast<std::size_t>(rng.below(all.size()));
        std::size_t b = static_cast<std::size_t>(rng.below(all.size() - 1));
        if (b >= a) ++b;
        worst = std::max(worst, std::abs(parity_correlation(all[a], all[b], d)));
    }

    bool guess_ok = true;
    for (int d : {4, 6}) {
        const double closed = guess_error(1.0, binomial(d, d / 2));
        if (guess_error_empirical(d) != closed) guess_ok = false;
    }
    const double g4 = guess_error(1.0, binomial(4, 2));
    const bool pass = worst == 0.0 && guess_ok && g4 == 5.0 / 12.0;
    return {"decorrelation+guessing", pass,
            "max |corr| " + fmt_sci(worst) + ", guess(d=4) " + fmt6(g4)};
}

CheckResult check_gradients() {
    SeededRng rng(2026);
    double worst = 0.0;
    int checked = 0;
    for (int rep = 0; rep < 4; ++rep) {
        SeededRng init = rng.derive(100 + static_cast<std::uint64_t>(rep));
        const RnnParams p = init_params(16, init);
        const ParityInstance inst = sample_subset(8, rng);
        const auto x = random_bits(8, rng);
        const auto res = grad_w_check(p, train_sequence(x, inst), 25, rng, 1e-5, 1e-6);
        worst = std::max(worst, res.max_rel_err);
        checked += res.checked;
    }
    return {"gradient-check", worst < 1e-4 && checked > 0,
            "max rel err " + fmt_sci(worst) + " over " + std::to_string(checked) + " coords"};
}

CheckResult check_union_bound() {
    SeededRng rng(777);
    SeededRng init = rng.derive(1);
    const RnnParams p = init_params(16, init);

    std::vector<DatasetExample> ex;
    const ParityInstance inst = sample_subset(8, rng);
    for (int i = 0; i < 200; ++i) {
        DatasetExample e;
        e.x = random_bits(8, rng);
        e.seq = train_sequence(e.x, inst);
        ex.push_back(std::move(e));
    }
    const UnionBoundReport sup = union_bound_check(p, ex);

    std::vector<DatasetExample> ao;
    for (int i = 0; i < 100; ++i) {
        DatasetExample e;
        e.x = random_bits(8, rng);
        e.seq = answer_only_sequence(e.x, inst);
        ao.push_back(std::move(e));
    }
    const UnionBoundReport ans = union_bound_check(p, ao);

    const Circuit circ = parity_as_circuit(inst);
    const Circuit red = fanin_reduce(circ);
    std::vector<DatasetExample> ct;
    for (int i = 0; i < 50; ++i) {
        DatasetExample e;
        e.x = random_bits(8, rng);
        e.seq = supervision_sequence(red, e.x);
        ct.push_back(std::move(e));
    }
    const UnionBoundReport tr = union_bound_check(p, ct);

    const bool pass = sup.violations == 0 && ans.violations == 0 && tr.violations == 0 &&
                      sup.agreement_failures == 0 && ans.agreement_failures == 0 &&
                      tr.agreement_failures == 0 && sup.min_slack >= 0;
    return {"union-bound", pass,
            "violations " + std::to_string(sup.violations + ans.violations + tr.violations) +
                ", min slack " + std::to_string(std::min({sup.min_slack, ans.min_slack, tr.min_slack}))};
}

CheckResult check_mode_degeneracy() {
    ParityInstance inst;
    inst.d = 4;
    inst.subset = {1, 3};
    const SequenceTask task = parity_task(inst, true);
    DataSource src;  // online sampling

    TrainConfig cfg;
    cfg.m = 8;
    cfg.iters = 200;
    cfg.eta = 0.05;
    cfg.seed = 5;
    cfg.eval_every = 100;
    cfg.mode = TrainMode::Sgd;
    const TrainResult a = sgd_train(cfg, task, src);
    cfg.mode = TrainMode::FpSgd;
    cfg.sigma = 0.0;
    const TrainResult b = fp_sgd_train(cfg, task, src);
    const bool sgd_eq = a.params == b.params;

    // one full-gradient step against the direct mean
    TrainConfig gd = cfg;
    gd.mode = TrainMode::FpGd;
    gd.iters = 1;
    gd.eval_every = 1;
    const TrainResult c = fp_gd_train(gd, task, src);
    SeededRng init = SeededRng(gd.seed).derive(0);
    RnnParams expect = init_params(gd.m, init);
    const Matrix g = mean_grad_w(expect, task, enumerate_inputs(4));
    for (std::size_t i = 0; i < expect.W.size(); ++i) expect.W.data()[i] += -gd.eta * g.data()[i];
    const bool gd_eq = c.params.W == expect.W;

    return {"mode-degeneracy", sgd_eq && gd_eq,
            std::string("fp-sgd(0)==sgd: ") + (sgd_eq ? "yes" : "NO") +
                ", fp-gd step == mean oracle: " + (gd_eq ? "yes" : "NO")};
}

CheckResult check_variance_decay() {
    SeededRng rng(31);
    SeededRng init = rng.derive(9);
    const RnnParams p = init_params(16, init);
    std::vector<double> scaled;
    std::string detail;
    for (int d : {4, 6, 8}) {
        SeededRng sub = rng.derive(static_cast<std::uint64_t>(d));
        // M grows with the class so input-sampling noise (~1/M) stays small
        // next to the across-hypothesis signal (~1/|H|)
        const auto H = static_cast<std::size_t>(binomial(d, d / 2));
        const VarianceReport rep = variance_estimate(p, d, 32, 64 * H, sub);
        const double s = rep.estimate * static_cast<double>(rep.class_size);
        scaled.push_back(s);
        detail += (detail.empty() ? "scaled " : ", ") + fmt_sci(s);
    }
    const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
    const bool pass = *lo > 0.0 && *hi / *lo < 10.0;
    return {"variance-decay", pass, detail + " (ratio " + fmt_sci(*hi / *lo) + ")"};
}

}  // namespace

std::vector<CheckResult> verify_checks(unsigned level) {
    std::vector<CheckResult> out;
    out.push_back(check_gate_polys());
    out.push_back(check_decorrelation());
    out.push_back(check_gradients());
    out.push_back(check_union_bound());
    out.push_back(check_mode_degeneracy());
    if (level >= 1) out.push_back(check_variance_decay());
    return out;
}

int cmd_verify(std::ostream& out, unsigned level) {
    int failures = 0;
    for (const CheckResult& c : verify_checks(level)) {
        out << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.detail << '\n';
        if (!c.pass) ++failures;
    }
    return failures;
}

}  // namespace stepwise

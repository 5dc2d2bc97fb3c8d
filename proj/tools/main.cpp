// command line front end: gen / train / sweep / verify / compile / report
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stepwise/experiment.hpp"

using namespace stepwise;

namespace {

// ----- shared config flags -----

// gen/train take the full set; sweep owns --d / --supervision / --seed as
// grid axes, so those are skipped there
struct ConfigFlags {
    std::string config_path;
    std::string task;
    int d = 8;
    std::vector<int> subset;
    std::string circuit;
    std::string supervision = "on";
    std::uint64_t train_size = 0, val_size = 0, test_size = 0;
    int m = 32;
    double eta = 0.0;
    std::uint64_t iters = 1000;
    double sigma = 0.0;
    std::string mode = "sgd", scope = "w-only", noise = "uniform";
    std::uint64_t seed = 1;
    std::uint64_t eval_every = 100, gd_sample = 2048;
    double stop = 0.0;
    std::string out;

    CLI::App* cmd = nullptr;
    bool grid = false;

    void attach(CLI::App* sub, bool grid_axes_elsewhere) {
        cmd = sub;
        grid = grid_axes_elsewhere;
        sub->add_option("--config", config_path, "experiment config JSON; flags override it");
        sub->add_option("--task", task, "parity | circuit");
        sub->add_option("--circuit", circuit, "circuit description file (implies --task circuit)");
        if (!grid) {
            sub->add_option("--d", d, "parity width (d/2 must be a power of two)");
            sub->add_option("--subset", subset, "fix the parity subset (1-based indices)");
            sub->add_option("--supervision", supervision, "on | off");
            sub->add_option("--seed", seed, "master seed");
        }
        sub->add_option("--train-size", train_size,
                        "training examples; 0 draws a fresh example every step");
        sub->add_option("--val-size", val_size, "validation examples (0 = default)");
        sub->add_option("--test-size", test_size, "test examples (0 = default)");
        sub->add_option("--m", m, "hidden width");
        sub->add_option("--eta", eta, "learning rate; negative means 1/(m*sqrt(iters))");
        sub->add_option("--iters", iters, "iteration budget");
        sub->add_option("--sigma", sigma, "finite-precision radius for the fp modes");
        sub->add_option("--mode", mode, "sgd | fp-sgd | fp-gd");
        sub->add_option("--scope", scope, "w-only | all");
        sub->add_option("--noise", noise, "uniform | none");
        sub->add_option("--eval-every", eval_every, "checkpoint cadence in steps");
        sub->add_option("--gd-sample", gd_sample, "fp-gd batch size when 2^d > 4096");
        sub->add_option("--stop-accuracy", stop, "stop once validation accuracy reaches this");
        sub->add_option("--out", out, "output directory");
    }

    ExperimentConfig build() const {
        ExperimentConfig cfg;
        if (cmd->count("--config")) cfg = load_experiment(config_path);
        if (cmd->count("--task")) cfg.task = parse_task_kind(task);
        if (cmd->count("--circuit")) {
            cfg.circuit_file = circuit;
            if (!cmd->count("--task")) cfg.task = TaskKind::Circuit;
        }
        if (!grid) {
            if (cmd->count("--d")) cfg.d = d;
            if (cmd->count("--subset")) cfg.subset = subset;
            if (cmd->count("--supervision")) cfg.supervision = parse_on_off(supervision);
            if (cmd->count("--seed")) cfg.training.seed = seed;
        }
        if (cmd->count("--train-size")) cfg.train_size = train_size;
        if (cmd->count("--val-size")) cfg.val_size = val_size;
        if (cmd->count("--test-size")) cfg.test_size = test_size;
        if (cmd->count("--out")) cfg.out_dir = out;

        TrainConfig& t = cfg.training;
        if (cmd->count("--m")) t.m = m;
        if (cmd->count("--eta")) t.eta = eta;
        if (cmd->count("--iters")) t.iters = iters;
        if (cmd->count("--sigma")) t.sigma = sigma;
        if (cmd->count("--mode")) t.mode = parse_train_mode(mode);
        if (cmd->count("--scope")) t.scope = parse_train_scope(scope);
        if (cmd->count("--noise")) t.noise = parse_noise_model(noise);
        if (cmd->count("--eval-every")) t.eval_every = eval_every;
        if (cmd->count("--gd-sample")) t.gd_sample = gd_sample;
        if (cmd->count("--stop-accuracy")) t.stop_accuracy = stop;
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"step-supervised sequence learning laboratory"};
    app.require_subcommand(1);

    ConfigFlags gen_f, train_f, sweep_f;
    CLI::App* gen = app.add_subcommand("gen", "generate dataset splits and a resolved config");
    gen_f.attach(gen, false);
    CLI::App* train = app.add_subcommand("train", "train one model and record its artifacts");
    train_f.attach(train, false);

    CLI::App* sweep = app.add_subcommand("sweep", "train a (d, supervision, seed) grid");
    std::vector<int> sweep_ds{8};
    std::string sweep_sup = "both";
    std::vector<std::uint64_t> sweep_seeds{1, 2, 3};
    sweep->add_option("--d", sweep_ds, "grid widths");
    sweep->add_option("--supervision", sweep_sup, "on | off | both");
    sweep->add_option("--seed", sweep_seeds, "grid seeds");
    sweep_f.attach(sweep, true);

    CLI::App* verify = app.add_subcommand("verify", "run the built-in verification suite");
    unsigned level = 0;
    std::string verify_out;
    verify->add_option("--level", level, "0 = fast checks, 1 adds the slower ones");
    verify->add_option("--out", verify_out, "also write the report to this file");

    CLI::App* compile = app.add_subcommand("compile", "reduce a circuit and show its trace");
    std::string circ_path, bits, compile_out;
    compile->add_option("file", circ_path, "circuit description file")->required();
    compile->add_option("--bits", bits, "input assignment, e.g. 1011");
    compile->add_option("--out", compile_out, "write here instead of stdout");

    CLI::App* report = app.add_subcommand("report", "rebuild sweep CSVs from run artifacts");
    std::string report_dir;
    report->add_option("dir", report_dir, "sweep output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;   // anything but help is a usage error
    }

    try {
        if (*gen) {
            const ExperimentConfig cfg = gen_f.build();
            cmd_gen(cfg);
            std::cout << "wrote splits and config.json under " << cfg.out_dir << "\n";
        } else if (*train) {
            const ExperimentConfig cfg = train_f.build();
            const RunRecord rec = cmd_train(cfg);
            std::cout << "test accuracy " << rec.test_accuracy << " after " << rec.steps_run
                      << " steps; artifacts under " << cfg.out_dir << "\n";
        } else if (*sweep) {
            SweepSpec spec;
            spec.base = sweep_f.build();
            spec.ds = sweep_ds;
            spec.seeds = sweep_seeds;
            if (sweep_sup == "both")
                spec.supervision = {true, false};
            else
                spec.supervision = {parse_on_off(sweep_sup)};
            spec.out_dir = spec.base.out_dir;
            cmd_sweep(spec);
            std::cout << "wrote " << spec.out_dir << "/runs.csv and " << spec.out_dir
                      << "/summary.csv\n";
        } else if (*verify) {
            std::ostringstream ss;
            const int failures = cmd_verify(ss, level);
            std::cout << ss.str();
            if (!verify_out.empty()) atomic_write_text(verify_out, ss.str());
            return failures > 0 ? 2 : 0;
        } else if (*compile) {
            if (compile_out.empty()) {
                cmd_compile(circ_path, bits, std::cout);
            } else {
                std::ostringstream ss;
                cmd_compile(circ_path, bits, ss);
                atomic_write_text(compile_out, ss.str());
                std::cout << "wrote " << compile_out << "\n";
            }
        } else if (*report) {
            cmd_report(report_dir);
            std::cout << "rebuilt " << report_dir << "/runs.csv and " << report_dir
                      << "/summary.csv\n";
        }
    } catch (const TrainAbort& e) {
        std::cerr << "abort: " << e.what() << "\n";
        return 3;
    } catch (const CircuitError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

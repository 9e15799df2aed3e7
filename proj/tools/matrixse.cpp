// Command-line driver: train, evaluate, benchmark, generate data and run the
// flatten ablation. Configuration comes from a flat key=value file overridden
// by flags; every run echoes its effective config into the output directory.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "mse/checkpoint.hpp"
#include "mse/sudoku.hpp"
#include "mse/train.hpp"

namespace fs = std::filesystem;
using namespace mse;

namespace {

// Collects flag values as config overrides so precedence is flags > file > defaults.
struct FlagOverlay {
    CLI::App* cmd;
    std::vector<std::pair<std::string, CLI::Option*>> opts;
    std::vector<std::shared_ptr<std::string>> storage;

    void add(const std::string& key, const std::string& flag, const std::string& help) {
        auto holder = std::make_shared<std::string>();
        storage.push_back(holder);
        opts.emplace_back(key, cmd->add_option(flag, *holder, help));
    }

    void apply(KvConfig& kv) const {
        for (size_t i = 0; i < opts.size(); ++i)
            if (opts[i].second->count() > 0) kv.set(opts[i].first, *storage[i]);
    }
};

FlagOverlay train_flags(CLI::App* cmd) {
    FlagOverlay f{cmd, {}, {}};
    f.add("task", "--task", "task name (transpose, rotate90, xor, square_mod2, "
                            "component_labeling, transitivity, triangle_finding, sudoku)");
    f.add("maps", "--maps", "feature maps m");
    f.add("blocks", "--blocks", "number of Benes blocks");
    f.add("flatten", "--flatten", "zorder or raster");
    f.add("max_train_size", "--max-size", "largest training size (power of two)");
    f.add("eval_sizes", "--eval-sizes", "comma-separated evaluation sizes");
    f.add("steps", "--steps", "training steps");
    f.add("batch_size", "--batch", "batch size");
    f.add("learning_rate", "--lr", "learning rate");
    f.add("seed", "--seed", "RNG seed");
    f.add("recurrent_steps", "--recurrent-steps", "block-stack passes per example");
    f.add("eval_recurrent_steps", "--eval-recurrent-steps", "passes at evaluation time");
    f.add("data", "--data", "dataset file (sudoku CSV)");
    f.add("metrics_every", "--metrics-every", "steps between metrics records");
    f.add("checkpoint_every", "--ckpt-every", "steps between checkpoints");
    f.add("early_stop_patience", "--patience", "early-stop patience in steps (0 = off)");
    f.add("eval_every", "--eval-every", "steps between in-training evaluations");
    f.add("eval_instances", "--eval-instances", "instances per evaluation size");
    f.add("target_acc", "--target-acc", "stop once trained sizes reach this accuracy");
    f.add("out_dir", "--out", "output directory");
    return f;
}

TrainConfig resolve_config(const std::string& config_path, const FlagOverlay& flags) {
    KvConfig kv;
    if (!config_path.empty()) kv = KvConfig::parse_file(config_path);
    flags.apply(kv);
    return TrainConfig::from_kv(kv);
}

void echo_config(const TrainConfig& cfg) {
    if (cfg.out_dir.empty()) return;
    fs::create_directories(cfg.out_dir);
    std::ofstream echo(cfg.out_dir + "/config.txt");
    echo << cfg.to_kv().serialize();
}

std::vector<EvalRow> final_eval(const TrainConfig& cfg, Trainer& tr) {
    Predictor predict = model_predictor(tr.params(), cfg.effective_eval_recurrent());
    if (task_from_name(cfg.task) == TaskId::sudoku) {
        std::vector<TaskInstance> insts;
        const auto& ds = tr.dataset();
        for (size_t i = 0; i < ds.size() && (int)i < cfg.eval_instances; ++i)
            insts.push_back(sudoku_instance(ds[i]));
        return {evaluate_instances(predict, insts)};
    }
    return evaluate_generated(predict, task_from_name(cfg.task), cfg.eval_sizes,
                              cfg.eval_instances, mix_seed(cfg.seed, 0xe7a1));
}

void write_accuracy(const TrainConfig& cfg, const std::vector<EvalRow>& rows,
                    const std::string& filename = "accuracy.md") {
    std::string table = accuracy_markdown(cfg.task, rows, cfg.max_train_size);
    std::cout << table;
    if (!cfg.out_dir.empty()) {
        std::ofstream out(cfg.out_dir + "/" + filename);
        out << table;
    }
}

int cmd_train(const std::string& config_path, const FlagOverlay& flags) {
    TrainConfig cfg = resolve_config(config_path, flags);
    echo_config(cfg);
    Trainer tr(cfg);
    tr.run();
    tr.save_latest();
    std::cout << "trained " << tr.step() << " steps, final loss " << tr.last_loss()
              << (tr.early_stopped() ? " (early stop)" : "")
              << (tr.target_reached() ? " (target accuracy reached)" : "") << "\n";
    write_accuracy(cfg, final_eval(cfg, tr));
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& sizes_csv, int instances,
             int recurrent_override, const std::string& out_dir) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    TrainConfig cfg = TrainConfig::from_kv(ck.config);
    if (!sizes_csv.empty()) cfg.eval_sizes = parse_int_list(sizes_csv);
    if (instances > 0) cfg.eval_instances = instances;
    if (recurrent_override > 0) cfg.eval_recurrent_steps = recurrent_override;
    cfg.out_dir = out_dir;
    echo_config(cfg);

    ModelParams<float> params = build_params(cfg);
    RAdam<float> opt((float)cfg.learning_rate);
    restore_state(ck, params, opt);

    Predictor predict = model_predictor(params, cfg.effective_eval_recurrent());
    std::vector<EvalRow> rows;
    if (task_from_name(cfg.task) == TaskId::sudoku) {
        if (cfg.data.empty()) throw DataError("sudoku evaluation needs data=<csv>");
        auto ds = sudoku_load(cfg.data);
        std::vector<TaskInstance> insts;
        for (size_t i = 0; i < ds.size() && (int)i < cfg.eval_instances; ++i)
            insts.push_back(sudoku_instance(ds[i]));
        rows.push_back(evaluate_instances(predict, insts));
    } else {
        rows = evaluate_generated(predict, task_from_name(cfg.task), cfg.eval_sizes,
                                  cfg.eval_instances, mix_seed(cfg.seed, 0xe7a1));
    }
    write_accuracy(cfg, rows);
    return 0;
}

int cmd_bench(const std::string& config_path, const FlagOverlay& flags,
              const std::string& sizes_csv, int steps, int warmup) {
    TrainConfig cfg = resolve_config(config_path, flags);
    std::vector<int> sizes =
        sizes_csv.empty() ? std::vector<int>{16, 32, 64, 128, 256} : parse_int_list(sizes_csv);
    echo_config(cfg);
    auto rows = benchmark_speed(cfg, sizes, steps, warmup);
    std::ostringstream os;
    os << "| size | train ms/step | inference ms/step |\n|---|---|---|\n";
    os.precision(3);
    os << std::fixed;
    for (const auto& r : rows)
        os << "| " << r.size << " | " << r.train_ms << " | " << r.infer_ms << " |\n";
    os << "\nlog-log slope of train step time vs size: " << loglog_slope(rows) << "\n";
    std::cout << os.str();
    if (!cfg.out_dir.empty()) {
        std::ofstream out(cfg.out_dir + "/bench.md");
        out << os.str();
    }
    return 0;
}

int cmd_gen(const std::string& task_name, int size, int count, uint64_t seed,
            const std::string& out_path) {
    TaskId task = task_from_name(task_name);
    if (task == TaskId::sudoku) {
        if (out_path.empty()) throw ConfigError("gen --task sudoku requires --out file");
        sudoku_save(out_path, sudoku_generate(count, seed));
        std::cout << "wrote " << count << " puzzles to " << out_path << "\n";
        return 0;
    }
    std::ofstream file;
    std::ostream* os = &std::cout;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw DataError("cannot write '" + out_path + "'");
        os = &file;
    }
    for (int i = 0; i < count; ++i)
        write_instance(*os, generate(task, size, mix_seed(seed, (uint64_t)i)));
    return 0;
}

int cmd_ablate(const std::string& config_path, const FlagOverlay& flags) {
    TrainConfig base = resolve_config(config_path, flags);
    if (base.out_dir.empty()) throw ConfigError("ablate requires --out");
    echo_config(base);

    std::vector<std::pair<std::string, std::vector<EvalRow>>> results;
    for (const std::string kind : {"zorder", "raster"}) {
        TrainConfig cfg = base;
        cfg.flatten = kind;
        cfg.out_dir = base.out_dir + "/" + kind;
        echo_config(cfg);
        Trainer tr(cfg);
        tr.run();
        tr.save_latest();
        auto rows = final_eval(cfg, tr);
        write_accuracy(cfg, rows);
        results.emplace_back(kind, rows);
    }

    // comparison at the first size beyond training
    std::ostringstream os;
    os << "Flatten ablation on " << base.task << " (trained to " << base.max_train_size
       << ").\n\n| flatten |";
    for (const auto& r : results[0].second) os << " " << r.size << " |";
    os << "\n|---|";
    for (size_t i = 0; i < results[0].second.size(); ++i) os << "---|";
    os << "\n";
    os.precision(4);
    os << std::fixed;
    for (const auto& [kind, rows] : results) {
        os << "| " << kind << " |";
        for (const auto& r : rows) os << " " << r.per_element << " |";
        os << "\n";
    }
    for (const auto& r : results[0].second) {
        if (r.size > base.max_train_size) {
            double z = r.per_element;
            double ra = 0;
            for (const auto& rr : results[1].second)
                if (rr.size == r.size) ra = rr.per_element;
            os << "\nfirst untrained size " << r.size << ": zorder " << z << " vs raster "
               << ra << " (margin " << z - ra << ")\n";
            break;
        }
    }
    std::cout << os.str();
    std::ofstream out(base.out_dir + "/comparison.md");
    out << os.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Matrix Shuffle-Exchange network: training and evaluation harness"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, sizes_csv, out_dir, task_name = "transpose",
                             gen_out;
    int instances = 0, recurrent_override = 0, bench_steps = 300, bench_warmup = 10;
    int gen_size = 8, gen_count = 1;
    uint64_t gen_seed = 1;

    CLI::App* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", config_path, "key=value config file");
    FlagOverlay train_overlay = train_flags(train);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
    eval->add_option("--sizes", sizes_csv, "comma-separated sizes");
    eval->add_option("--instances", instances, "instances per size");
    eval->add_option("--recurrent-steps", recurrent_override, "evaluation passes");
    eval->add_option("--out", out_dir, "output directory");

    CLI::App* bench = app.add_subcommand("bench", "speed benchmark");
    bench->add_option("--config", config_path, "key=value config file");
    bench->add_option("--sizes", sizes_csv, "comma-separated sizes");
    bench->add_option("--bench-steps", bench_steps, "timed steps per size");
    bench->add_option("--warmup", bench_warmup, "untimed warmup steps");
    FlagOverlay bench_overlay = train_flags(bench);

    CLI::App* gen = app.add_subcommand("gen", "generate task instances");
    gen->add_option("--task", task_name, "task name")->required();
    gen->add_option("--size", gen_size, "instance size");
    gen->add_option("--count", gen_count, "number of instances");
    gen->add_option("--seed", gen_seed, "RNG seed");
    gen->add_option("--out", gen_out, "output file (stdout if omitted)");

    CLI::App* ablate = app.add_subcommand("ablate", "train zorder vs raster and compare");
    ablate->add_option("--config", config_path, "key=value config file");
    FlagOverlay ablate_overlay = train_flags(ablate);

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(config_path, train_overlay);
        if (eval->parsed())
            return cmd_eval(ckpt_path, sizes_csv, instances, recurrent_override, out_dir);
        if (bench->parsed())
            return cmd_bench(config_path, bench_overlay, sizes_csv, bench_steps,
                             bench_warmup);
        if (gen->parsed()) return cmd_gen(task_name, gen_size, gen_count, gen_seed, gen_out);
        if (ablate->parsed()) return cmd_ablate(config_path, ablate_overlay);
        return 1;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

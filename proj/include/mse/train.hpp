#pragma once

#include <cstdint>
#include <iosfwd>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mse/checkpoint.hpp"
#include "mse/config.hpp"
#include "mse/model.hpp"
#include "mse/radam.hpp"
#include "mse/sudoku.hpp"
#include "mse/tasks.hpp"

namespace mse {

struct TrainConfig {
    std::string task = "transpose";
    int maps = 96;
    int blocks = 2;
    std::string flatten = "zorder";
    int max_train_size = 16;
    std::vector<int> eval_sizes{4, 8, 16, 32};
    int64_t steps = 10000;
    int batch_size = 32;
    double learning_rate = 1e-4;
    uint64_t seed = 1;
    int recurrent_steps = 1;       // >1 enables the recurrent mode (sudoku: 10)
    int eval_recurrent_steps = 0;  // 0 means: same as recurrent_steps (sudoku: 30)
    std::string data;              // dataset file for sudoku
    int metrics_every = 100;
    int64_t checkpoint_every = 10000;
    int64_t early_stop_patience = 0;  // steps without smoothed-loss improvement
    int eval_every = 0;               // 0: evaluate only when the caller asks
    int eval_instances = 100;
    double target_acc = 0.0;  // stop once trained sizes reach this per-element accuracy
    std::string out_dir;

    // Rejects unknown keys; flags > file > defaults is realized by layering.
    static TrainConfig from_kv(const KvConfig& kv);
    KvConfig to_kv() const;

    int effective_eval_recurrent() const {
        return eval_recurrent_steps > 0 ? eval_recurrent_steps : recurrent_steps;
    }
};

FlattenKind flatten_from_name(const std::string& name);

// {4, 8, ..., max_train_size}
std::vector<int> curriculum_sizes(int max_train_size);

// Sampling weights over size ranks: concentrated on the smallest size at
// progress 0, flattening to uniform by progress 1.
std::vector<double> curriculum_weights(size_t n_sizes, double progress);

ModelParams<float> build_params(const TrainConfig& cfg);

// Deterministic per-step derivation of batch content from (seed, step).
std::vector<TaskInstance> make_training_batch(const TrainConfig& cfg,
                                              const std::vector<SudokuPuzzle>& dataset,
                                              int64_t step);

// ---- trainer -------------------------------------------------------------------

class Trainer {
public:
    explicit Trainer(TrainConfig cfg);
    Trainer(TrainConfig cfg, const Checkpoint& resume);
    ~Trainer();

    // Advances to the given absolute step (capped by cfg.steps); returns the
    // step actually reached. Stops early on the patience rule or target
    // accuracy; throws NumericError when the loss turns non-finite.
    int64_t run_until(int64_t until_step);
    int64_t run() { return run_until(cfg_.steps); }

    int64_t step() const { return step_; }
    bool early_stopped() const { return early_stopped_; }
    bool target_reached() const { return target_reached_; }
    double last_loss() const { return last_loss_; }

    ModelParams<float>& params() { return params_; }
    const TrainConfig& config() const { return cfg_; }
    const std::vector<SudokuPuzzle>& dataset() const { return dataset_; }

    Checkpoint make_checkpoint();
    void save_latest();  // out_dir/checkpoint_latest.ckpt

private:
    void train_one_step(int64_t step, const std::vector<TaskInstance>& batch);
    void periodic_eval(int64_t step);

    TrainConfig cfg_;
    TaskId task_;
    ModelParams<float> params_;
    RAdam<float> opt_;
    std::vector<SudokuPuzzle> dataset_;
    int64_t step_ = 0;
    double last_loss_ = 0.0;
    double last_step_ms_ = 0.0;
    bool early_stopped_ = false;
    bool target_reached_ = false;
    // early-stop bookkeeping: moving average over a 1000-step window
    std::vector<double> loss_window_;
    double best_avg_ = 0.0;
    int64_t best_avg_step_ = 0;
    std::unique_ptr<std::ofstream> metrics_;
};

// ---- evaluation ------------------------------------------------------------------

struct EvalRow {
    int size = 0;
    int instances = 0;
    double per_element = 0.0;
    double per_instance = 0.0;
};

// Maps instances to predicted padded grids (argmax decode of the model head,
// or any other rule: the oracle predictor echoes targets as a harness
// self-test).
using Predictor =
    std::function<std::vector<std::vector<int>>(const std::vector<const TaskInstance*>&)>;

Predictor model_predictor(const ModelParams<float>& params, int recurrent_steps,
                          int batch_limit = 16);
Predictor oracle_predictor();

EvalRow evaluate_instances(const Predictor& predict,
                           const std::vector<TaskInstance>& instances);

// Fresh instances per size under a fixed evaluation seed stream.
std::vector<EvalRow> evaluate_generated(const Predictor& predict, TaskId task,
                                        const std::vector<int>& sizes, int per_size,
                                        uint64_t eval_seed);

// Accuracy table split into train and generalization sizes.
std::string accuracy_markdown(const std::string& task, const std::vector<EvalRow>& rows,
                              int max_train_size);

// ---- speed benchmark ---------------------------------------------------------------

struct BenchRow {
    int size = 0;
    double train_ms = 0.0;
    double infer_ms = 0.0;
    int steps = 0;
};

// Single-instance batches; wall-clock averages over `steps` timed steps after
// `warmup` untimed ones, for forward-only and forward+backward+update.
std::vector<BenchRow> benchmark_speed(const TrainConfig& cfg, const std::vector<int>& sizes,
                                      int steps = 300, int warmup = 10);

// Least-squares slope of log(train_ms) against log(size).
double loglog_slope(const std::vector<BenchRow>& rows);

// Deterministic stream splitting for seeds.
uint64_t mix_seed(uint64_t a, uint64_t b);

}  // namespace mse

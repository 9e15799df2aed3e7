#include "mse/train.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace mse {

using json = nlohmann::json;

uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t x = a ^ (0x9e3779b97f4a7c15ULL * (b + 0x9e3779b97f4a7c15ULL));
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

FlattenKind flatten_from_name(const std::string& name) {
    if (name == "zorder") return FlattenKind::zorder;
    if (name == "raster") return FlattenKind::raster;
    throw ConfigError("flatten must be 'zorder' or 'raster', got '" + name + "'");
}

// ---- config ----------------------------------------------------------------------

namespace {

const char* kKnownKeys[] = {
    "task",           "maps",          "blocks",       "flatten",
    "max_train_size", "eval_sizes",    "steps",        "batch_size",
    "learning_rate",  "seed",          "recurrent_steps", "eval_recurrent_steps",
    "data",           "metrics_every", "checkpoint_every", "early_stop_patience",
    "eval_every",     "eval_instances", "target_acc",  "out_dir",
    "opt_step",  // written by checkpoints
};

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
    for (const auto& [key, value] : kv.items()) {
        (void)value;
        bool known = false;
        for (const char* k : kKnownKeys) known = known || key == k;
        if (!known) throw ConfigError("unknown config key '" + key + "'");
    }
    TrainConfig c;
    c.task = config_str(kv, "task", c.task);
    task_from_name(c.task);  // validate
    c.maps = (int)config_int(kv, "maps", c.maps);
    c.blocks = (int)config_int(kv, "blocks", c.blocks);
    c.flatten = config_str(kv, "flatten", c.flatten);
    flatten_from_name(c.flatten);  // validate
    c.max_train_size = (int)config_int(kv, "max_train_size", c.max_train_size);
    if (kv.has("eval_sizes")) c.eval_sizes = parse_int_list(*kv.find("eval_sizes"));
    c.steps = config_int(kv, "steps", c.steps);
    c.batch_size = (int)config_int(kv, "batch_size", c.batch_size);
    c.learning_rate = config_double(kv, "learning_rate", c.learning_rate);
    c.seed = (uint64_t)config_int(kv, "seed", (int64_t)c.seed);
    c.recurrent_steps = (int)config_int(kv, "recurrent_steps", c.recurrent_steps);
    c.eval_recurrent_steps =
        (int)config_int(kv, "eval_recurrent_steps", c.eval_recurrent_steps);
    c.data = config_str(kv, "data", c.data);
    c.metrics_every = (int)config_int(kv, "metrics_every", c.metrics_every);
    c.checkpoint_every = config_int(kv, "checkpoint_every", c.checkpoint_every);
    c.early_stop_patience = config_int(kv, "early_stop_patience", c.early_stop_patience);
    c.eval_every = (int)config_int(kv, "eval_every", c.eval_every);
    c.eval_instances = (int)config_int(kv, "eval_instances", c.eval_instances);
    c.target_acc = config_double(kv, "target_acc", c.target_acc);
    c.out_dir = config_str(kv, "out_dir", c.out_dir);
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (c.maps < 1 || c.blocks < 1) throw ConfigError("maps and blocks must be >= 1");
    if (c.recurrent_steps < 1) throw ConfigError("recurrent_steps must be >= 1");
    return c;
}

KvConfig TrainConfig::to_kv() const {
    KvConfig kv;
    kv.set("task", task);
    kv.set("maps", std::to_string(maps));
    kv.set("blocks", std::to_string(blocks));
    kv.set("flatten", flatten);
    kv.set("max_train_size", std::to_string(max_train_size));
    kv.set("eval_sizes", join_ints(eval_sizes));
    kv.set("steps", std::to_string(steps));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("learning_rate", fmt_double(learning_rate));
    kv.set("seed", std::to_string(seed));
    kv.set("recurrent_steps", std::to_string(recurrent_steps));
    kv.set("eval_recurrent_steps", std::to_string(eval_recurrent_steps));
    kv.set("data", data);
    kv.set("metrics_every", std::to_string(metrics_every));
    kv.set("checkpoint_every", std::to_string(checkpoint_every));
    kv.set("early_stop_patience", std::to_string(early_stop_patience));
    kv.set("eval_every", std::to_string(eval_every));
    kv.set("eval_instances", std::to_string(eval_instances));
    kv.set("target_acc", fmt_double(target_acc));
    kv.set("out_dir", out_dir);
    return kv;
}

// ---- curriculum -------------------------------------------------------------------

std::vector<int> curriculum_sizes(int max_train_size) {
    if (max_train_size < 4) throw ConfigError("max_train_size must be >= 4");
    std::vector<int> sizes;
    for (int s = 4; s <= max_train_size; s *= 2) sizes.push_back(s);
    if (sizes.back() != max_train_size)
        throw ConfigError("max_train_size must be a power of two, got " +
                          std::to_string(max_train_size));
    return sizes;
}

std::vector<double> curriculum_weights(size_t n_sizes, double progress) {
    // Sharpness 3 concentrates >= 95% of the mass on the smallest size at the
    // start; by progress 1 every rank has weight 1 (uniform).
    std::vector<double> w(n_sizes);
    for (size_t r = 0; r < n_sizes; ++r)
        w[r] = std::exp(-3.0 * std::max(0.0, (double)r - progress * (double)n_sizes));
    return w;
}

ModelParams<float> build_params(const TrainConfig& cfg) {
    const TaskInfo& info = task_info(task_from_name(cfg.task));
    return init_params<float>(cfg.maps, cfg.blocks, info.vocab_in, info.vocab_out,
                              cfg.seed, flatten_from_name(cfg.flatten));
}

std::vector<TaskInstance> make_training_batch(const TrainConfig& cfg,
                                              const std::vector<SudokuPuzzle>& dataset,
                                              int64_t step) {
    const TaskId task = task_from_name(cfg.task);
    std::mt19937_64 rng(mix_seed(cfg.seed, (uint64_t)step));
    std::vector<TaskInstance> batch;
    batch.reserve(cfg.batch_size);
    if (task == TaskId::sudoku) {
        if (dataset.empty()) throw DataError("sudoku training requires a dataset");
        std::uniform_int_distribution<size_t> pick(0, dataset.size() - 1);
        for (int i = 0; i < cfg.batch_size; ++i)
            batch.push_back(sudoku_instance(sudoku_augment(dataset[pick(rng)], rng)));
        return batch;
    }
    const std::vector<int> sizes = curriculum_sizes(cfg.max_train_size);
    const double progress =
        cfg.steps > 0 ? std::min(1.0, (double)step / (double)cfg.steps) : 1.0;
    const std::vector<double> weights = curriculum_weights(sizes.size(), progress);
    std::discrete_distribution<int> rank(weights.begin(), weights.end());
    for (int i = 0; i < cfg.batch_size; ++i) {
        int n = sizes[rank(rng)];
        batch.push_back(generate(task, n, mix_seed(mix_seed(cfg.seed, step), i)));
    }
    return batch;
}

// ---- batch prefetch ------------------------------------------------------------------

namespace {

// One producer thread keeps a bounded queue of upcoming batches; batches are a
// pure function of (seed, step) so timing never changes the stream.
class BatchPrefetcher {
public:
    BatchPrefetcher(std::function<std::vector<TaskInstance>(int64_t)> make, int64_t begin,
                    int64_t end, size_t capacity = 3)
        : make_(std::move(make)), next_(begin), end_(end), capacity_(capacity) {
        worker_ = std::thread([this] { this->produce(); });
    }

    ~BatchPrefetcher() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            stop_ = true;
        }
        cv_space_.notify_all();
        worker_.join();
    }

    std::vector<TaskInstance> pop() {
        std::unique_lock<std::mutex> lock(mu_);
        cv_data_.wait(lock, [this] { return !queue_.empty(); });
        auto batch = std::move(queue_.front());
        queue_.pop_front();
        cv_space_.notify_one();
        return batch;
    }

private:
    void produce() {
        for (int64_t s = next_; s < end_; ++s) {
            auto batch = make_(s);
            std::unique_lock<std::mutex> lock(mu_);
            cv_space_.wait(lock, [this] { return queue_.size() < capacity_ || stop_; });
            if (stop_) return;
            queue_.push_back(std::move(batch));
            cv_data_.notify_one();
        }
    }

    std::function<std::vector<TaskInstance>(int64_t)> make_;
    int64_t next_, end_;
    size_t capacity_;
    std::deque<std::vector<TaskInstance>> queue_;
    std::mutex mu_;
    std::condition_variable cv_data_, cv_space_;
    bool stop_ = false;
    std::thread worker_;
};

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

// ---- trainer --------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), task_(task_from_name(cfg_.task)) {
    params_ = build_params(cfg_);
    opt_ = RAdam<float>((float)cfg_.learning_rate);
    std::vector<int64_t> sizes;
    for (Param<float>* p : params_.all()) sizes.push_back((int64_t)p->value.size());
    opt_.bind(sizes);
    if (task_ == TaskId::sudoku) {
        if (cfg_.data.empty()) throw ConfigError("sudoku training requires data=<csv path>");
        dataset_ = sudoku_load(cfg_.data);
    } else {
        curriculum_sizes(cfg_.max_train_size);  // validates
    }
    if (!cfg_.out_dir.empty()) {
        std::filesystem::create_directories(cfg_.out_dir);
        metrics_ = std::make_unique<std::ofstream>(cfg_.out_dir + "/metrics.jsonl",
                                                   std::ios::app);
        std::ofstream echo(cfg_.out_dir + "/config.txt");
        echo << cfg_.to_kv().serialize();
    }
}

Trainer::Trainer(TrainConfig cfg, const Checkpoint& resume) : Trainer(std::move(cfg)) {
    TrainConfig ck_cfg = TrainConfig::from_kv(resume.config);
    if (ck_cfg.task != cfg_.task || ck_cfg.maps != cfg_.maps ||
        ck_cfg.blocks != cfg_.blocks || ck_cfg.flatten != cfg_.flatten)
        throw DataError("checkpoint was trained with task=" + ck_cfg.task + " maps=" +
                        std::to_string(ck_cfg.maps) + " blocks=" +
                        std::to_string(ck_cfg.blocks) + " flatten=" + ck_cfg.flatten +
                        ", which does not match the requested configuration");
    restore_state(resume, params_, opt_);
    step_ = resume.step;
}

Trainer::~Trainer() = default;

Checkpoint Trainer::make_checkpoint() {
    return snapshot_state(cfg_.to_kv(), params_, opt_, step_);
}

void Trainer::save_latest() {
    if (cfg_.out_dir.empty()) return;
    Checkpoint ck = make_checkpoint();
    save_checkpoint(cfg_.out_dir + "/checkpoint_latest.ckpt", ck);
}

int64_t Trainer::run_until(int64_t until_step) {
    const int64_t end = std::min(until_step, cfg_.steps);
    if (step_ >= end) return step_;
    BatchPrefetcher feed([this](int64_t s) { return make_training_batch(cfg_, dataset_, s); },
                         step_, end);
    while (step_ < end && !early_stopped_ && !target_reached_) {
        auto batch = feed.pop();
        const double t0 = now_ms();
        train_one_step(step_, batch);
        last_step_ms_ = now_ms() - t0;
        ++step_;

        if (!std::isfinite(last_loss_)) {
            // keep the last good checkpoint on disk untouched
            throw NumericError("non-finite loss at step " + std::to_string(step_ - 1) +
                               "; training aborted, last checkpoint retained");
        }
        if (metrics_ && cfg_.metrics_every > 0 && step_ % cfg_.metrics_every == 0) {
            json j{{"step", step_},
                   {"task", cfg_.task},
                   {"loss", last_loss_},
                   {"ms_per_step", last_step_ms_}};
            *metrics_ << j.dump() << "\n";
            metrics_->flush();
        }
        if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0) save_latest();
        if (cfg_.eval_every > 0 && step_ % cfg_.eval_every == 0) periodic_eval(step_);

        // early stopping on a 1000-step moving average of the loss
        if (cfg_.early_stop_patience > 0) {
            loss_window_.push_back(last_loss_);
            if ((int64_t)loss_window_.size() > 1000)
                loss_window_.erase(loss_window_.begin());
            double avg = 0;
            for (double v : loss_window_) avg += v;
            avg /= (double)loss_window_.size();
            if (best_avg_step_ == 0 || avg < best_avg_) {
                best_avg_ = avg;
                best_avg_step_ = step_;
            } else if (step_ - best_avg_step_ >= cfg_.early_stop_patience) {
                early_stopped_ = true;
            }
        }
    }
    save_latest();
    return step_;
}

void Trainer::train_one_step(int64_t step, const std::vector<TaskInstance>& batch) {
    (void)step;
    auto all = params_.all();
    std::vector<std::vector<float>> accum(all.size());
    for (size_t i = 0; i < all.size(); ++i) accum[i].assign(all[i]->value.size(), 0.0f);

    // group same-sized instances into one graph
    std::map<int, std::vector<const TaskInstance*>> by_k;
    for (const TaskInstance& inst : batch) by_k[inst.k].push_back(&inst);

    double total_loss = 0.0;
    for (auto& [k, group] : by_k) {
        std::vector<const std::vector<int>*> grids;
        std::vector<int> labels;
        std::vector<uint8_t> mask;
        for (const TaskInstance* inst : group) {
            grids.push_back(&inst->input);
            labels.insert(labels.end(), inst->target.begin(), inst->target.end());
            mask.insert(mask.end(), inst->mask.begin(), inst->mask.end());
        }
        Graph<float> g;
        ParamBinder<float> bind(g);
        int loss;
        if (cfg_.recurrent_steps > 1) {
            auto per_step = recurrent_logits(g, bind, params_, grids, k,
                                             cfg_.recurrent_steps);
            loss = g.softmax_xent(per_step[0], labels, mask);
            for (size_t t = 1; t < per_step.size(); ++t)
                loss = g.add(loss, g.softmax_xent(per_step[t], labels, mask));
        } else {
            int logits = forward_logits(g, bind, params_, grids, k);
            loss = g.softmax_xent(logits, labels, mask);
        }
        const float frac = (float)group.size() / (float)batch.size();
        g.backward(g.scale_const(loss, frac));
        total_loss += (double)g.value(loss)[0] * frac;
        for (size_t i = 0; i < all.size(); ++i) {
            auto gr = bind.grad_of(*all[i]);
            if (gr.empty()) continue;
            float* dst = accum[i].data();
            for (size_t t = 0; t < gr.size(); ++t) dst[t] += gr[t];
        }
    }
    last_loss_ = total_loss;

    std::vector<std::vector<float>*> ws;
    std::vector<const std::vector<float>*> gs;
    for (size_t i = 0; i < all.size(); ++i) {
        ws.push_back(&all[i]->value);
        gs.push_back(&accum[i]);
    }
    if (!opt_.step(ws, gs) && metrics_) {
        json j{{"step", step}, {"task", cfg_.task}, {"event", "nonfinite_gradient_step_skipped"}};
        *metrics_ << j.dump() << "\n";
        metrics_->flush();
    }
}

void Trainer::periodic_eval(int64_t step) {
    Predictor predict = model_predictor(params_, cfg_.effective_eval_recurrent());
    const int per_size = std::max(4, std::min(cfg_.eval_instances, 24));
    std::vector<EvalRow> rows;
    if (task_ == TaskId::sudoku) {
        std::vector<TaskInstance> insts;
        for (size_t i = 0; i < dataset_.size() && i < 24; ++i)
            insts.push_back(sudoku_instance(dataset_[i]));
        rows.push_back(evaluate_instances(predict, insts));
    } else {
        rows = evaluate_generated(predict, task_, cfg_.eval_sizes, per_size,
                                  mix_seed(cfg_.seed, 0xe7a1));
    }
    bool all_trained_ok = true;
    for (const EvalRow& r : rows) {
        if (metrics_) {
            json j{{"step", step},
                   {"task", cfg_.task},
                   {"size", r.size},
                   {"per_element_acc", r.per_element},
                   {"per_instance_acc", r.per_instance}};
            *metrics_ << j.dump() << "\n";
            metrics_->flush();
        }
        if (r.size <= cfg_.max_train_size || task_ == TaskId::sudoku)
            all_trained_ok = all_trained_ok && r.per_element >= cfg_.target_acc;
    }
    if (cfg_.target_acc > 0 && all_trained_ok) target_reached_ = true;
}

// ---- evaluation -------------------------------------------------------------------------

Predictor model_predictor(const ModelParams<float>& params, int recurrent_steps,
                          int batch_limit) {
    return [&params, recurrent_steps,
            batch_limit](const std::vector<const TaskInstance*>& batch) {
        std::vector<std::vector<int>> out(batch.size());
        size_t i = 0;
        while (i < batch.size()) {
            const int k = batch[i]->k;
            std::vector<const std::vector<int>*> grids;
            std::vector<size_t> slots;
            size_t j = i;
            while (j < batch.size() && (int)grids.size() < batch_limit &&
                   batch[j]->k == k) {
                grids.push_back(&batch[j]->input);
                slots.push_back(j);
                ++j;
            }
            Graph<float> g;
            ParamBinder<float> bind(g, /*trainable=*/false);
            int logits;
            if (recurrent_steps > 1) {
                auto per_step = recurrent_logits(g, bind, params, grids, k, recurrent_steps);
                logits = per_step.back();
            } else {
                logits = forward_logits(g, bind, params, grids, k);
            }
            auto decoded = decode_argmax(g, logits, (int)grids.size());
            for (size_t t = 0; t < slots.size(); ++t) out[slots[t]] = std::move(decoded[t]);
            i = j;
        }
        return out;
    };
}

Predictor oracle_predictor() {
    return [](const std::vector<const TaskInstance*>& batch) {
        std::vector<std::vector<int>> out;
        out.reserve(batch.size());
        for (const TaskInstance* inst : batch) out.push_back(inst->target);
        return out;
    };
}

EvalRow evaluate_instances(const Predictor& predict,
                           const std::vector<TaskInstance>& instances) {
    EvalRow row;
    if (instances.empty()) return row;
    row.size = instances.front().n;
    row.instances = (int)instances.size();
    std::vector<const TaskInstance*> ptrs;
    ptrs.reserve(instances.size());
    for (const TaskInstance& t : instances) ptrs.push_back(&t);
    auto preds = predict(ptrs);

    int64_t cells = 0, correct = 0;
    int whole = 0;
    for (size_t i = 0; i < instances.size(); ++i) {
        const TaskInstance& inst = instances[i];
        bool all_ok = true;
        for (int64_t c = 0; c < inst.cells(); ++c) {
            if (!inst.mask[c]) continue;
            ++cells;
            if (preds[i][c] == inst.target[c])
                ++correct;
            else
                all_ok = false;
        }
        whole += all_ok;
    }
    row.per_element = cells ? (double)correct / (double)cells : 0.0;
    row.per_instance = (double)whole / (double)instances.size();
    return row;
}

std::vector<EvalRow> evaluate_generated(const Predictor& predict, TaskId task,
                                        const std::vector<int>& sizes, int per_size,
                                        uint64_t eval_seed) {
    std::vector<EvalRow> rows;
    for (int n : sizes) {
        std::vector<TaskInstance> insts;
        insts.reserve(per_size);
        for (int i = 0; i < per_size; ++i)
            insts.push_back(generate(task, n, mix_seed(mix_seed(eval_seed, n), i)));
        rows.push_back(evaluate_instances(predict, insts));
    }
    return rows;
}

std::string accuracy_markdown(const std::string& task, const std::vector<EvalRow>& rows,
                              int max_train_size) {
    std::ostringstream os;
    os << "Test accuracy for " << task << " (trained on sizes up to " << max_train_size
       << ").\n\n";
    os << "| metric |";
    for (const EvalRow& r : rows)
        os << (r.size <= max_train_size ? " train " : " gen ") << r.size << " |";
    os << "\n|---|";
    for (size_t i = 0; i < rows.size(); ++i) os << "---|";
    os << "\n| per-element |";
    os.precision(4);
    os << std::fixed;
    for (const EvalRow& r : rows) os << " " << r.per_element << " |";
    os << "\n| per-instance |";
    for (const EvalRow& r : rows) os << " " << r.per_instance << " |";
    os << "\n";
    return os.str();
}

// ---- speed benchmark ----------------------------------------------------------------------

std::vector<BenchRow> benchmark_speed(const TrainConfig& cfg, const std::vector<int>& sizes,
                                      int steps, int warmup) {
    const TaskId task = task_from_name(cfg.task);
    std::vector<BenchRow> rows;
    for (int n : sizes) {
        std::vector<TaskInstance> insts;
        for (int i = 0; i < steps + warmup; ++i)
            insts.push_back(generate(task, n, mix_seed(0xbe9c4, (uint64_t)(n * 100000 + i))));

        ModelParams<float> params = build_params(cfg);
        RAdam<float> opt((float)cfg.learning_rate);
        auto all = params.all();
        std::vector<int64_t> psizes;
        for (Param<float>* p : all) psizes.push_back((int64_t)p->value.size());
        opt.bind(psizes);

        BenchRow row;
        row.size = n;
        row.steps = steps;

        // full training step: forward, loss, backward, optimizer update
        double train_acc = 0;
        for (int i = 0; i < steps + warmup; ++i) {
            const TaskInstance& inst = insts[i];
            const double t0 = now_ms();
            {
                Graph<float> g;
                ParamBinder<float> bind(g);
                std::vector<const std::vector<int>*> grids{&inst.input};
                int logits = forward_logits(g, bind, params, grids, inst.k);
                int loss = g.softmax_xent(logits, inst.target, inst.mask);
                g.backward(loss);
                std::vector<std::vector<float>*> ws;
                std::vector<const std::vector<float>*> gs;
                std::vector<std::vector<float>> grads(all.size());
                for (size_t p = 0; p < all.size(); ++p) {
                    auto gr = bind.grad_of(*all[p]);
                    grads[p].assign(gr.begin(), gr.end());
                    if (grads[p].empty()) grads[p].assign(all[p]->value.size(), 0.0f);
                    ws.push_back(&all[p]->value);
                    gs.push_back(&grads[p]);
                }
                opt.step(ws, gs);
            }
            if (i >= warmup) train_acc += now_ms() - t0;
        }
        row.train_ms = train_acc / steps;

        // inference: forward only
        double infer_acc = 0;
        for (int i = 0; i < steps + warmup; ++i) {
            const TaskInstance& inst = insts[i];
            const double t0 = now_ms();
            {
                Graph<float> g;
                ParamBinder<float> bind(g, /*trainable=*/false);
                std::vector<const std::vector<int>*> grids{&inst.input};
                (void)forward_logits(g, bind, params, grids, inst.k);
            }
            if (i >= warmup) infer_acc += now_ms() - t0;
        }
        row.infer_ms = infer_acc / steps;
        rows.push_back(row);
    }
    return rows;
}

double loglog_slope(const std::vector<BenchRow>& rows) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = (double)rows.size();
    for (const BenchRow& r : rows) {
        double x = std::log((double)r.size), y = std::log(r.train_ms);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace mse

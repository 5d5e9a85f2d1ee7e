#ifndef EDNO_TRAINER_HPP
#define EDNO_TRAINER_HPP

#include <algorithm>
#include <filesystem>
#include <random>
#include <thread>

#include "edno/adam.hpp"
#include "edno/csv.hpp"
#include "edno/dataset.hpp"
#include "edno/kvconfig.hpp"
#include "edno/losses.hpp"
#include "edno/metrics.hpp"
#include "edno/model.hpp"

namespace edno {

struct RunConfig {
    EdnoConfig net;
    std::string dataset_dir;
    std::string out_dir;
    uint64_t seed = 0;
    int epochs = 200;     // desk-scale default; the original-scale preset is 1050
    int batch_size = 8;
    int eval_cadence = 10; // epochs between validation passes
    AdamConfig adam;

    // optional stop conditions (0 = off); used by the overfit protocol
    int max_steps = 0;
    double stop_train_psnr = 0;
    int psnr_check_every = 50; // steps between train-PSNR probes when stopping on PSNR
};

// ---------------------------------------------------------------------------
// config <-> key=value text
// ---------------------------------------------------------------------------

inline KvMap edno_config_kv(const EdnoConfig& c) {
    KvMap kv;
    kv["channels"] = std::to_string(c.channels);
    kv["iterations"] = std::to_string(c.iterations);
    kv["scale"] = fmt_num(c.scale);
    kv["bands"] = std::to_string(c.bands);
    kv["loss_weight"] = fmt_num(c.loss_weight);
    kv["vanilla_fno"] = c.vanilla_fno ? "1" : "0";
    kv["phase_only"] = c.phase_only ? "1" : "0";
    kv["magnitude_only"] = c.magnitude_only ? "1" : "0";
    kv["no_depthwise"] = c.no_depthwise ? "1" : "0";
    return kv;
}

inline EdnoConfig edno_config_from_kv(const KvMap& kv) {
    EdnoConfig c;
    c.channels = int(kv_int(kv, "channels", c.channels));
    c.iterations = int(kv_int(kv, "iterations", c.iterations));
    c.scale = kv_double(kv, "scale", c.scale);
    c.bands = int(kv_int(kv, "bands", c.bands));
    c.loss_weight = kv_double(kv, "loss_weight", c.loss_weight);
    c.vanilla_fno = kv_bool(kv, "vanilla_fno", false);
    c.phase_only = kv_bool(kv, "phase_only", false);
    c.magnitude_only = kv_bool(kv, "magnitude_only", false);
    c.no_depthwise = kv_bool(kv, "no_depthwise", false);
    c.validate();
    return c;
}

inline RunConfig run_config_from_kv(const KvMap& kv) {
    RunConfig r;
    r.net = edno_config_from_kv(kv);
    r.seed = uint64_t(kv_int(kv, "seed", 0));
    r.epochs = int(kv_int(kv, "epochs", r.epochs));
    r.batch_size = int(kv_int(kv, "batch_size", r.batch_size));
    r.eval_cadence = int(kv_int(kv, "eval_cadence", r.eval_cadence));
    r.adam.lr = kv_double(kv, "lr", r.adam.lr);
    r.adam.beta1 = kv_double(kv, "beta1", r.adam.beta1);
    r.adam.beta2 = kv_double(kv, "beta2", r.adam.beta2);
    r.adam.eps = kv_double(kv, "adam_eps", r.adam.eps);
    r.max_steps = int(kv_int(kv, "max_steps", 0));
    r.stop_train_psnr = kv_double(kv, "stop_train_psnr", 0);
    r.psnr_check_every = int(kv_int(kv, "psnr_check_every", r.psnr_check_every));
    return r;
}

inline KvMap run_config_kv(const RunConfig& r) {
    KvMap kv = edno_config_kv(r.net);
    kv["seed"] = std::to_string(r.seed);
    kv["epochs"] = std::to_string(r.epochs);
    kv["batch_size"] = std::to_string(r.batch_size);
    kv["eval_cadence"] = std::to_string(r.eval_cadence);
    kv["lr"] = fmt_num(r.adam.lr);
    kv["beta1"] = fmt_num(r.adam.beta1);
    kv["beta2"] = fmt_num(r.adam.beta2);
    kv["adam_eps"] = fmt_num(r.adam.eps);
    kv["max_steps"] = std::to_string(r.max_steps);
    kv["stop_train_psnr"] = fmt_num(r.stop_train_psnr);
    kv["checkpoint_rule"] = "best_val_psnr";
    return kv;
}

// ---------------------------------------------------------------------------
// checkpoints: parameter blocks plus a '__config__' text record (one f32
// code point per byte, since the container carries only f32/f64 payloads)
// ---------------------------------------------------------------------------

template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params,
                     const EdnoConfig& cfg, const KvMap& extra = {}) {
    KvMap kv = edno_config_kv(cfg);
    for (const auto& [k, v] : extra) kv.emplace(k, v);
    const std::string text = serialize_kv(kv);
    std::vector<float> codes(text.size());
    for (size_t i = 0; i < text.size(); ++i) codes[i] = float(uint8_t(text[i]));
    std::vector<TensorRecord> records;
    records.push_back(
        TensorRecord::from_data("__config__", {int64_t(codes.size())}, codes.data()));
    for (const auto& [key, block] : params.blocks())
        records.push_back(TensorRecord::from_block(key, block));
    write_tensor_file(path, records);
}

template <typename T>
std::pair<EdnoConfig, ParamStore<T>> load_checkpoint(const std::string& path) {
    const auto records = read_tensor_file(path);
    const TensorRecord* hdr = find_record(records, "__config__");
    if (!hdr) throw IoError("checkpoint " + path + ": missing __config__ record");
    const std::vector<float> codes = hdr->as_f32();
    std::string text(codes.size(), '\0');
    for (size_t i = 0; i < codes.size(); ++i) text[i] = char(uint8_t(codes[i]));
    const EdnoConfig cfg = edno_config_from_kv(parse_kv(text));

    ParamStore<T> params;
    for (const auto& spec : param_layout(cfg)) {
        const TensorRecord* r = find_record(records, spec.key);
        if (!r) throw IoError("checkpoint " + path + ": missing block " + spec.key);
        if (r->dims != spec.dims)
            throw IoError("checkpoint " + path + ": block " + spec.key + " has wrong dims");
        Block<T>& b = params.add(spec.key, spec.dims);
        b.v = r->template to_vector<T>();
    }
    return {cfg, params};
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

template <typename T>
struct TrainResult {
    std::string checkpoint_path, log_path;
    int steps = 0;
    double final_train_loss = 0;
    double best_val_psnr = std::numeric_limits<double>::quiet_NaN();
    double last_train_psnr = std::numeric_limits<double>::quiet_NaN();
    EdnoConfig cfg;
    ParamStore<T> params; // the checkpointed (best-val) parameters
};

namespace traindetail {

// On a non-finite loss, name the blocks that went bad before aborting.
template <typename T>
[[noreturn]] void nan_abort(int step, const ParamStore<T>& params, const GradStore<T>* grads) {
    std::string bad;
    auto scan = [&bad](const std::string& key, const std::vector<T>& v, const char* what) {
        for (T x : v)
            if (!std::isfinite(double(x))) {
                bad += std::string(" ") + key + "(" + what + ")";
                return;
            }
    };
    for (const auto& [k, b] : params.blocks()) scan(k, b.v, "param");
    if (grads)
        for (const auto& [k, b] : grads->blocks()) scan(k, b.v, "grad");
    if (bad.empty()) bad = " (all parameter blocks finite; loss path produced the non-finite value)";
    throw NumericError("non-finite loss at step " + std::to_string(step) +
                       "; offending blocks:" + bad);
}

template <typename T>
double mean_train_psnr(const EdnoModel<T>& model, const ParamStore<T>& params,
                       const std::vector<SamplePair<T>>& samples) {
    double acc = 0;
    for (const auto& s : samples) acc += psnr(model.predict(s, params), *s.gt);
    return acc / double(samples.size());
}

} // namespace traindetail

/// Epoch loop over seeded shuffled batches; per-sample gradients are summed
/// in batch order, averaged, and fed to Adam. Keeps the parameters with the
/// best validation PSNR (final parameters when there is no val split).
template <typename T>
TrainResult<T> train(const RunConfig& run) {
    run.net.validate();
    if (run.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    std::filesystem::create_directories(run.out_dir);

    const Split<T> tr = load_split<T>(run.dataset_dir, "train");
    const Split<T> va = load_split<T>(run.dataset_dir, "val");
    if (tr.samples.empty()) throw ConfigError("train: empty train split in " + run.dataset_dir);
    for (const auto& s : tr.samples)
        if (!s.gt) throw ConfigError("train: sample without ground truth");

    const EdnoModel<T> model(run.net);
    ParamStore<T> params = init_params<T>(run.net, run.seed);
    AdamState<T> opt(params, run.adam);
    std::mt19937_64 shuffle_rng(run.seed ^ 0x5bf03635ULL);

    TrainResult<T> result;
    result.cfg = run.net;
    result.log_path = run.out_dir + "/log.csv";
    result.checkpoint_path = run.out_dir + "/checkpoint.edt";

    CsvWriter log(result.log_path);
    log.comment(serialize_kv(run_config_kv(run)));
    log.row({"epoch", "steps", "train_loss", "val_psnr", "train_psnr"});

    ParamStore<T> best_params = params;
    double best_val = -1e30;
    bool have_val_best = false;
    int steps = 0;
    bool stop = false;

    std::vector<size_t> order(tr.samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < run.epochs && !stop; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0;
        int epoch_batches = 0;
        double probe_psnr = std::numeric_limits<double>::quiet_NaN();

        for (size_t b0 = 0; b0 < order.size() && !stop; b0 += size_t(run.batch_size)) {
            const size_t bend = std::min(order.size(), b0 + size_t(run.batch_size));
            const int bn = int(bend - b0);

            // samples run concurrently; gradients are reduced afterwards in
            // batch order, so the result is identical for any worker count
            const size_t bns = size_t(bn);
            std::vector<GradStore<T>> sample_grads(bns);
            std::vector<double> sample_loss(bns, 0.0);
            std::vector<std::exception_ptr> sample_err(bns);
            auto run_sample = [&](int i) {
                try {
                    const SamplePair<T>& s = tr.samples[order[b0 + size_t(i)]];
                    Tape<T> tape(&params);
                    const ValueId out = model.forward(tape, s);
                    const ValueId loss = loss_total(tape, out, tape.constant(*s.gt),
                                                    T(run.net.loss_weight));
                    sample_loss[size_t(i)] = double(tape.value(loss).v[0]);
                    sample_grads[size_t(i)] = tape.backward(loss);
                } catch (...) {
                    sample_err[size_t(i)] = std::current_exception();
                }
            };
            const unsigned workers = std::max(
                1u, std::min(std::thread::hardware_concurrency(), unsigned(bn)));
            if (workers <= 1) {
                for (int i = 0; i < bn; ++i) run_sample(i);
            } else {
                std::vector<std::thread> pool;
                pool.reserve(workers);
                for (unsigned w = 0; w < workers; ++w)
                    pool.emplace_back([&, w] {
                        for (int i = int(w); i < bn; i += int(workers)) run_sample(i);
                    });
                for (auto& th : pool) th.join();
            }
            for (const auto& err : sample_err)
                if (err) std::rethrow_exception(err);

            GradStore<T> batch_grads(params);
            double batch_loss = 0;
            for (int i = 0; i < bn; ++i) {
                if (!std::isfinite(sample_loss[size_t(i)]))
                    traindetail::nan_abort<T>(steps, params, &sample_grads[size_t(i)]);
                batch_loss += sample_loss[size_t(i)];
                batch_grads.accumulate(sample_grads[size_t(i)]);
            }
            batch_loss /= bn;
            if (!std::isfinite(batch_loss))
                traindetail::nan_abort<T>(steps, params, &batch_grads);
            batch_grads.scale(T(1.0 / bn));
            adam_step(params, batch_grads, opt);
            ++steps;
            epoch_loss += batch_loss;
            ++epoch_batches;

            if (run.stop_train_psnr > 0 && run.psnr_check_every > 0 &&
                steps % run.psnr_check_every == 0) {
                probe_psnr = traindetail::mean_train_psnr(model, params, tr.samples);
                result.last_train_psnr = probe_psnr;
                if (probe_psnr >= run.stop_train_psnr) stop = true;
            }
            if (run.max_steps > 0 && steps >= run.max_steps) stop = true;
        }

        epoch_loss /= std::max(1, epoch_batches);
        result.final_train_loss = epoch_loss;

        double val_psnr = std::numeric_limits<double>::quiet_NaN();
        const bool do_val = !va.samples.empty() &&
                            (epoch % std::max(1, run.eval_cadence) == 0 ||
                             epoch == run.epochs - 1 || stop);
        if (do_val) {
            val_psnr = traindetail::mean_train_psnr(model, params, va.samples);
            if (val_psnr > best_val) {
                best_val = val_psnr;
                best_params = params;
                have_val_best = true;
            }
        }
        log.row({std::to_string(epoch), std::to_string(steps), fmt_num(epoch_loss),
                 std::isnan(val_psnr) ? "" : fmt_num(val_psnr),
                 std::isnan(probe_psnr) ? "" : fmt_num(probe_psnr)});
    }

    result.steps = steps;
    result.best_val_psnr = have_val_best ? best_val : std::numeric_limits<double>::quiet_NaN();
    result.params = have_val_best ? best_params : params;
    save_checkpoint(result.checkpoint_path, result.params, run.net,
                    run_config_kv(run));
    log.flush();
    return result;
}

} // namespace edno

#endif

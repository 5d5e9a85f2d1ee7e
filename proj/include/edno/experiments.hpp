#ifndef EDNO_EXPERIMENTS_HPP
#define EDNO_EXPERIMENTS_HPP

#include "edno/grad_check.hpp"
#include "edno/trainer.hpp"

// The desk-scale experiment surface behind the CLI: evaluation with the full
// metric suite, architectural ablations, the iteration-count sweep, zero-shot
// scale generalization against a bicubic baseline, and jitter robustness.

namespace edno {

struct EvalRow {
    std::string id;
    double scale = 0;
    MetricReport rep;
};

inline const std::vector<std::string>& metrics_csv_columns() {
    static const std::vector<std::string> cols = {"sample_id", "scale",    "psnr", "ssim",
                                                  "q2n",       "sam_deg",  "ergas",
                                                  "d_lambda",  "d_s",      "qnr"};
    return cols;
}

inline std::vector<std::string> metrics_csv_cells(const std::string& id, double scale,
                                                  const MetricReport& r) {
    auto opt = [](double v) { return std::isnan(v) ? std::string() : fmt_num(v); };
    return {id,          fmt_num(scale), opt(r.psnr),     opt(r.ssim), opt(r.q2n),
            opt(std::isnan(r.sam) ? r.sam : r.sam_deg()), opt(r.ergas),
            fmt_num(r.d_lambda), fmt_num(r.d_s), fmt_num(r.qnr)};
}

/// Field-wise mean; reference fields are averaged over rows that have them.
inline MetricReport mean_report(const std::vector<EvalRow>& rows) {
    MetricReport m;
    int nref = 0;
    double psnr = 0, ssim = 0, q2n = 0, sam = 0, ergas = 0;
    for (const auto& r : rows) {
        if (r.rep.has_reference) {
            ++nref;
            psnr += r.rep.psnr;
            ssim += r.rep.ssim;
            q2n += r.rep.q2n;
            sam += r.rep.sam;
            ergas += r.rep.ergas;
        }
        m.d_lambda += r.rep.d_lambda;
        m.d_s += r.rep.d_s;
    }
    if (nref) {
        m.has_reference = true;
        m.psnr = psnr / nref;
        m.ssim = ssim / nref;
        m.q2n = q2n / nref;
        m.sam = sam / nref;
        m.ergas = ergas / nref;
    }
    if (!rows.empty()) {
        m.d_lambda /= double(rows.size());
        m.d_s /= double(rows.size());
    }
    m.qnr = qnr(m.d_lambda, m.d_s);
    return m;
}

template <typename T>
std::vector<EvalRow> evaluate_split(const EdnoModel<T>& model, const ParamStore<T>& params,
                                    const Split<T>& split) {
    std::vector<EvalRow> rows;
    rows.reserve(split.samples.size());
    for (size_t i = 0; i < split.samples.size(); ++i) {
        const SamplePair<T>& s = split.samples[i];
        const Grid<T> fused = model.predict(s, params);
        rows.push_back({split.ids[i], s.scale, evaluate_sample(fused, s)});
    }
    return rows;
}

inline void write_metrics_csv(const std::string& path, const std::vector<EvalRow>& rows,
                              const KvMap& header) {
    CsvWriter csv(path);
    if (!header.empty()) csv.comment(serialize_kv(header));
    csv.row(metrics_csv_columns());
    for (const auto& r : rows) csv.row(metrics_csv_cells(r.id, r.scale, r.rep));
    const MetricReport m = mean_report(rows);
    csv.row(metrics_csv_cells("mean", rows.empty() ? 0 : rows.front().scale, m));
}

/// Load a checkpoint and evaluate one split. Reference metrics appear for
/// samples with ground truth; the QNR family is always present.
template <typename T>
std::vector<EvalRow> evaluate_checkpoint(const std::string& checkpoint_path,
                                         const std::string& dataset_dir,
                                         const std::string& split_name,
                                         const std::string& out_csv, bool with_gt = true) {
    auto [cfg, params] = load_checkpoint<T>(checkpoint_path);
    const EdnoModel<T> model(cfg);
    const Split<T> split = load_split<T>(dataset_dir, split_name, with_gt);
    if (split.samples.empty())
        throw ConfigError("evaluate: split '" + split_name + "' is empty");
    auto rows = evaluate_split(model, params, split);
    KvMap hdr = edno_config_kv(cfg);
    hdr["checkpoint"] = checkpoint_path;
    hdr["split"] = split_name;
    write_metrics_csv(out_csv, rows, hdr);
    return rows;
}

// ---------------------------------------------------------------------------
// ablations
// ---------------------------------------------------------------------------

struct AblateRow {
    std::string variant;
    int64_t params = 0;
    MetricReport mean;
    std::string checkpoint_path;
};

inline std::vector<EdnoConfig> ablation_configs(const EdnoConfig& base) {
    EdnoConfig full = base;
    full.vanilla_fno = full.phase_only = full.magnitude_only = full.no_depthwise = false;
    EdnoConfig c1 = full, c2 = full, c3 = full, c4 = full;
    c1.vanilla_fno = true;
    c2.phase_only = true;
    c3.magnitude_only = true;
    c4.no_depthwise = true;
    return {full, c1, c2, c3, c4};
}

/// mode "configs": the full model and the four architectural variants.
/// mode "t_sweep": iterations in {2, 3, 4, 5}. Each variant trains with the
/// same seed and data and is evaluated on the test split.
template <typename T>
std::vector<AblateRow> ablate(RunConfig run, const std::string& mode,
                              const std::string& out_csv) {
    std::vector<EdnoConfig> variants;
    std::vector<std::string> names;
    if (mode == "configs") {
        for (const EdnoConfig& c : ablation_configs(run.net)) {
            variants.push_back(c);
            names.push_back(c.variant_name());
        }
    } else if (mode == "t_sweep") {
        for (int t : {2, 3, 4, 5}) {
            EdnoConfig c = run.net;
            c.iterations = t;
            variants.push_back(c);
            names.push_back("T" + std::to_string(t));
        }
    } else {
        throw ConfigError("ablate: unknown mode '" + mode + "' (configs|t_sweep)");
    }

    const std::string base_out = run.out_dir;
    std::vector<AblateRow> rows;
    const Split<T> test = load_split<T>(run.dataset_dir, "test");
    for (size_t i = 0; i < variants.size(); ++i) {
        RunConfig vr = run;
        vr.net = variants[i];
        vr.out_dir = base_out + "/" + names[i];
        const TrainResult<T> res = train<T>(vr);
        const EdnoModel<T> model(vr.net);
        const auto eval_rows = evaluate_split(model, res.params, test);
        AblateRow row;
        row.variant = names[i];
        row.params = param_count(vr.net);
        row.mean = mean_report(eval_rows);
        row.checkpoint_path = res.checkpoint_path;
        rows.push_back(std::move(row));
    }

    CsvWriter csv(out_csv);
    KvMap hdr = run_config_kv(run);
    hdr["mode"] = mode;
    csv.comment(serialize_kv(hdr));
    csv.row({"variant", "params", "psnr", "ssim", "q2n", "sam_deg", "ergas", "d_lambda",
             "d_s", "qnr"});
    for (const auto& r : rows) {
        auto cells = metrics_csv_cells(r.variant, 0, r.mean);
        cells[1] = std::to_string(r.params); // scale column becomes the count
        csv.row(cells);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// zero-shot scale sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    std::string method; // "model" or "bicubic"
    double scale = 0;
    MetricReport mean;
};

/// Evaluate one fixed checkpoint at several ratios against freshly degraded
/// test data, next to a bicubic upsampling baseline.
template <typename T>
std::vector<SweepRow> scale_sweep(const std::string& checkpoint_path,
                                  const std::string& dataset_dir,
                                  const std::vector<double>& scales,
                                  const std::string& out_csv) {
    auto [cfg, params] = load_checkpoint<T>(checkpoint_path);
    const EdnoModel<T> model(cfg);
    const Split<T> test = load_split<T>(dataset_dir, "test");
    if (test.samples.empty()) throw ConfigError("scale_sweep: empty test split");

    std::vector<SweepRow> out;
    for (double s : scales) {
        std::vector<EvalRow> model_rows, base_rows;
        for (size_t i = 0; i < test.samples.size(); ++i) {
            const Grid<T>& gt = *test.samples[i].gt;
            const SamplePair<T> pair = wald_degrade(gt, s);
            const Grid<T> fused = model.predict(pair, params);
            model_rows.push_back({test.ids[i], pair.scale, evaluate_sample(fused, pair)});
            Grid<T> cubic = bicubic_resize(pair.lrms, gt.h, gt.w);
            for (auto& x : cubic.v) x = std::clamp(x, T(0), T(1));
            base_rows.push_back({test.ids[i], pair.scale, evaluate_sample(cubic, pair)});
        }
        out.push_back({"model", s, mean_report(model_rows)});
        out.push_back({"bicubic", s, mean_report(base_rows)});
    }

    CsvWriter csv(out_csv);
    KvMap hdr = edno_config_kv(cfg);
    hdr["checkpoint"] = checkpoint_path;
    csv.comment(serialize_kv(hdr));
    csv.row({"method", "scale", "psnr", "ssim", "q2n", "sam_deg", "ergas", "d_lambda",
             "d_s", "qnr"});
    for (const auto& r : out) csv.row(metrics_csv_cells(r.method, r.scale, r.mean));
    return out;
}

// ---------------------------------------------------------------------------
// jitter robustness
// ---------------------------------------------------------------------------

struct JitterRow {
    std::string id;
    double psnr_base = 0, psnr_jitter = 0;
    std::string errmap_path;
};

/// Re-evaluate the test split with PAN resampled by the given fraction, and
/// dump per-sample absolute-error grids for inspection.
template <typename T>
std::vector<JitterRow> jitter_test(const std::string& checkpoint_path,
                                   const std::string& dataset_dir, double jitter,
                                   const std::string& out_dir) {
    auto [cfg, params] = load_checkpoint<T>(checkpoint_path);
    const EdnoModel<T> model(cfg);
    const Split<T> test = load_split<T>(dataset_dir, "test");
    if (test.samples.empty()) throw ConfigError("jitter_test: empty test split");
    std::filesystem::create_directories(out_dir);

    std::vector<JitterRow> rows;
    CsvWriter csv(out_dir + "/jitter.csv");
    KvMap hdr = edno_config_kv(cfg);
    hdr["jitter"] = fmt_num(jitter);
    csv.comment(serialize_kv(hdr));
    csv.row({"sample_id", "psnr_base", "psnr_jitter", "psnr_drop", "errmap"});
    for (size_t i = 0; i < test.samples.size(); ++i) {
        const SamplePair<T>& s = test.samples[i];
        const SamplePair<T> js = jitter_scale(s, jitter);
        const Grid<T> base = model.predict(s, params);
        const Grid<T> jit = model.predict(js, params);
        JitterRow row;
        row.id = test.ids[i];
        row.psnr_base = psnr(base, *s.gt);
        row.psnr_jitter = psnr(jit, *s.gt);
        Grid<T> err(jit.h, jit.w, jit.c);
        for (size_t k = 0; k < err.size(); ++k)
            err.v[k] = std::abs(jit.v[k] - s.gt->v[k]);
        row.errmap_path = out_dir + "/errmap_" + test.ids[i] + ".edt";
        write_tensor_file(row.errmap_path, {TensorRecord::from_grid("abs_error", err)});
        csv.row({row.id, fmt_num(row.psnr_base), fmt_num(row.psnr_jitter),
                 fmt_num(row.psnr_base - row.psnr_jitter), row.errmap_path});
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// canned gradient-check suite (double precision)
// ---------------------------------------------------------------------------

struct GradcheckOutcome {
    bool pass = true;
    std::string text;
};

namespace expdetail {

inline Grid<double> random_grid(std::mt19937_64& rng, int h, int w, int c, double lo,
                                double hi) {
    Grid<double> g(h, w, c);
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& x : g.v) x = d(rng);
    return g;
}

// Move every block (biases included) off the zero-init point: exactly-zero
// biases park ReLU inputs exactly on the kink, where one-sided differences
// measure the clamp instead of the derivative.
template <typename T>
void jitter_params(ParamStore<T>& ps, std::mt19937_64& rng, double amp) {
    std::uniform_real_distribution<double> d(-amp, amp);
    for (auto& [k, b] : ps.blocks())
        for (auto& v : b.v) v += T(d(rng));
}

} // namespace expdetail

/// Per-module finite-difference checks: a quadratic toy problem, the phase
/// interaction alone, and the full pipeline loss on a small config.
inline GradcheckOutcome run_gradcheck_suite(uint64_t seed = 7) {
    using T = double;
    GradcheckOutcome out;
    std::mt19937_64 rng(seed);
    auto note = [&out](const std::string& name, const GradCheckReport& r) {
        out.pass = out.pass && r.pass;
        out.text += name + ": max rel err " + fmt_num(r.max_rel_err) +
                    (r.pass ? "  [ok]\n" : "  [FAIL]\n");
    };

    { // quadratic toy: loss = mean((w*x - y)^2)
        ParamStore<T> ps;
        ps.add("w", {1, 1}).v[0] = 0.7;
        const Grid<T> x = expdetail::random_grid(rng, 4, 4, 1, -1, 1);
        Grid<T> y = x;
        for (auto& v : y.v) v *= 1.9;
        auto f = [&](Tape<T>& t, const ParamStore<T>&) {
            ValueId d = t.sub(t.conv1x1(t.constant(x), "w"), t.constant(y));
            return t.mean(t.mul(d, d));
        };
        note("quadratic toy", grad_check<T>(f, ps, 1e-5, 1e-9));
    }

    { // EFIM alone
        EdnoConfig cfg;
        cfg.channels = 6;
        cfg.iterations = 1;
        cfg.bands = 4;
        ParamStore<T> ps = init_params<T>(cfg, seed + 1);
        const EdnoModel<T> model(cfg);
        const Grid<T> pp = expdetail::random_grid(rng, 8, 8, 6, -3, 3);
        const Grid<T> pz = expdetail::random_grid(rng, 8, 8, 6, -3, 3);
        auto f = [&](Tape<T>& t, const ParamStore<T>&) {
            return t.mean(t.abs(model.efim(t, t.constant(pp), t.constant(pz), 0)));
        };
        note("efim", grad_check<T>(f, ps, 1e-4, 1e-6));
    }

    { // full pipeline loss, C=8 T=2 16x16 B=4
        EdnoConfig cfg;
        cfg.channels = 8;
        cfg.iterations = 2;
        cfg.bands = 4;
        ParamStore<T> ps = init_params<T>(cfg, seed + 2);
        expdetail::jitter_params(ps, rng, 0.05);
        const EdnoModel<T> model(cfg);
        SceneSpec spec;
        spec.seed = seed + 3;
        spec.height = spec.width = 16;
        spec.bands = 4;
        const Grid<T> gt = generate_scene<T>(spec);
        const SamplePair<T> sample = wald_degrade(gt, 4.0);
        auto f = [&](Tape<T>& t, const ParamStore<T>&) {
            const ValueId o = model.forward(t, sample);
            return loss_total(t, o, t.constant(*sample.gt), T(cfg.loss_weight));
        };
        // step 1e-5: at 1e-3 the differences straddle ReLU and l1 kinks and
        // measure those instead of the derivative
        note("full pipeline", grad_check<T>(f, ps, 1e-5, 1e-5));
    }
    return out;
}

} // namespace edno

#endif

// Command-line surface for the pansharpening operator: dataset generation,
// training, fusion, evaluation, ablations, the zero-shot scale sweep, jitter
// robustness, and the finite-difference gradient check.
//
// Exit codes: 0 success, 2 validation failure, 3 numerical abort.

#include <CLI11.hpp>
#include <iostream>

#include "edno/experiments.hpp"

namespace {

using namespace edno;

struct CommonArgs {
    std::string config_path;
    std::string out = "out";
    uint64_t seed = 0;
    bool seed_set = false;
    std::string precision = "f32";
};

RunConfig make_run_config(const CommonArgs& common, const std::string& dataset_dir) {
    KvMap kv;
    if (!common.config_path.empty()) kv = load_kv_file(common.config_path);
    RunConfig run = run_config_from_kv(kv);
    run.dataset_dir = dataset_dir;
    run.out_dir = common.out;
    if (common.seed_set) run.seed = common.seed;
    return run;
}

template <typename T>
int cmd_train(const CommonArgs& common, const std::string& data, int epochs_override) {
    RunConfig run = make_run_config(common, data);
    if (epochs_override > 0) run.epochs = epochs_override;
    const TrainResult<T> res = train<T>(run);
    std::cout << "trained " << res.steps << " steps, final train loss "
              << fmt_num(res.final_train_loss);
    if (!std::isnan(res.best_val_psnr))
        std::cout << ", best val PSNR " << fmt_num(res.best_val_psnr) << " dB";
    std::cout << "\ncheckpoint: " << res.checkpoint_path << "\nlog: " << res.log_path
              << std::endl;
    return 0;
}

template <typename T>
int cmd_fuse(const CommonArgs& common, const std::string& checkpoint,
             const std::string& input, const std::string& output) {
    auto [cfg, params] = load_checkpoint<T>(checkpoint);
    const EdnoModel<T> model(cfg);
    const auto records = read_tensor_file(input);
    const TensorRecord* lr = find_record(records, "lrms");
    const TensorRecord* pan = find_record(records, "pan");
    if (!lr || !pan) throw IoError("fuse: input needs 'lrms' and 'pan' records");
    SamplePair<T> s;
    s.lrms = lr->to_grid<T>();
    s.pan = pan->to_grid<T>();
    s.scale = double(s.pan.h) / double(s.lrms.h);
    if (const TensorRecord* gt = find_record(records, "gt")) s.gt = gt->to_grid<T>();
    const Grid<T> fused = model.predict(s, params);
    write_tensor_file(output, {TensorRecord::from_grid("fused", fused)});
    if (s.gt)
        std::cout << "PSNR vs gt: " << fmt_num(psnr(fused, *s.gt)) << " dB" << std::endl;
    std::cout << "wrote " << output << std::endl;
    return 0;
}

std::vector<double> parse_scales(const std::string& csv) {
    std::vector<double> out;
    std::string tok;
    std::istringstream is(csv);
    while (std::getline(is, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stod(tok));
    }
    if (out.empty()) throw ConfigError("scale-sweep: no scales given");
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"frequency-domain pansharpening operator"};
    app.require_subcommand(1);

    CommonArgs common;
    app.add_option("--config", common.config_path, "key=value config file")
        ->configurable(false);
    app.add_option("--out", common.out, "output directory or file");
    auto* seed_opt = app.add_option("--seed", common.seed, "RNG seed");
    app.add_option("--precision", common.precision, "f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    edno::DatasetGenConfig gen_cfg;
    gen->add_option("--train", gen_cfg.n_train, "train scenes");
    gen->add_option("--val", gen_cfg.n_val, "val scenes");
    gen->add_option("--test", gen_cfg.n_test, "test scenes");
    gen->add_option("--size", gen_cfg.hr_size, "HR scene size");
    gen->add_option("--bands", gen_cfg.bands, "spectral bands");
    gen->add_option("--ratio", gen_cfg.ratio, "PAN/LR resolution ratio");

    // train
    auto* tr = app.add_subcommand("train", "train on a dataset");
    std::string data_dir;
    int epochs_override = 0;
    tr->add_option("--data", data_dir, "dataset directory")->required();
    tr->add_option("--epochs", epochs_override, "override epoch count");

    // fuse
    auto* fu = app.add_subcommand("fuse", "fuse one (pan, lrms) pair");
    std::string ckpt, fuse_in, fuse_out = "fused.edt";
    fu->add_option("--checkpoint", ckpt, "checkpoint file")->required();
    fu->add_option("--input", fuse_in, "tensor file with lrms + pan records")->required();
    fu->add_option("--output", fuse_out, "output tensor file");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "metric suite on one split");
    std::string ev_ckpt, ev_data, ev_split = "test";
    bool ev_no_gt = false;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--split", ev_split, "train|val|test");
    ev->add_flag("--no-gt", ev_no_gt, "withhold ground truth (QNR family only)");

    // ablate
    auto* ab = app.add_subcommand("ablate", "architectural or T ablations");
    std::string ab_mode = "configs", ab_data;
    int ab_epochs = 0;
    ab->add_option("--mode", ab_mode)->check(CLI::IsMember({"configs", "t_sweep"}));
    ab->add_option("--data", ab_data)->required();
    ab->add_option("--epochs", ab_epochs, "override epoch count");

    // scale-sweep
    auto* sw = app.add_subcommand("scale-sweep", "zero-shot evaluation across ratios");
    std::string sw_ckpt, sw_data, sw_scales = "2,3,4,6,8,10";
    sw->add_option("--checkpoint", sw_ckpt)->required();
    sw->add_option("--data", sw_data)->required();
    sw->add_option("--scales", sw_scales, "comma-separated ratios");

    // jitter
    auto* ji = app.add_subcommand("jitter", "PAN scale-jitter robustness");
    std::string ji_ckpt, ji_data;
    double ji_pct = 5.0;
    ji->add_option("--checkpoint", ji_ckpt)->required();
    ji->add_option("--data", ji_data)->required();
    ji->add_option("--pct", ji_pct, "jitter percentage");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    common.seed_set = seed_opt->count() > 0;

    const bool f64 = common.precision == "f64";
    try {
        if (gen->parsed()) {
            if (common.seed_set) gen_cfg.seed = common.seed;
            const auto manifest = edno::generate_dataset(common.out, gen_cfg);
            std::cout << "wrote " << manifest.size() << " scenes under " << common.out
                      << std::endl;
            return 0;
        }
        if (tr->parsed())
            return f64 ? cmd_train<double>(common, data_dir, epochs_override)
                       : cmd_train<float>(common, data_dir, epochs_override);
        if (fu->parsed())
            return f64 ? cmd_fuse<double>(common, ckpt, fuse_in, fuse_out)
                       : cmd_fuse<float>(common, ckpt, fuse_in, fuse_out);
        if (ev->parsed()) {
            const std::string out_csv =
                common.out + "/metrics_" + ev_split + ".csv";
            std::filesystem::create_directories(common.out);
            const auto rows = f64 ? edno::evaluate_checkpoint<double>(ev_ckpt, ev_data,
                                                                      ev_split, out_csv,
                                                                      !ev_no_gt)
                                  : edno::evaluate_checkpoint<float>(ev_ckpt, ev_data,
                                                                     ev_split, out_csv,
                                                                     !ev_no_gt);
            const edno::MetricReport mean = edno::mean_report(rows);
            if (mean.has_reference)
                std::cout << "mean PSNR " << edno::fmt_num(mean.psnr) << " dB, SSIM "
                          << edno::fmt_num(mean.ssim) << std::endl;
            std::cout << "mean QNR " << edno::fmt_num(mean.qnr) << "\nwrote " << out_csv
                      << std::endl;
            return 0;
        }
        if (ab->parsed()) {
            edno::RunConfig run = make_run_config(common, ab_data);
            if (ab_epochs > 0) run.epochs = ab_epochs;
            const std::string out_csv = common.out + "/ablate_" + ab_mode + ".csv";
            std::filesystem::create_directories(common.out);
            const auto rows = f64 ? edno::ablate<double>(run, ab_mode, out_csv)
                                  : edno::ablate<float>(run, ab_mode, out_csv);
            for (const auto& r : rows)
                std::cout << r.variant << ": " << r.params << " params, PSNR "
                          << edno::fmt_num(r.mean.psnr) << " dB" << std::endl;
            std::cout << "wrote " << out_csv << std::endl;
            return 0;
        }
        if (sw->parsed()) {
            std::filesystem::create_directories(common.out);
            const std::string out_csv = common.out + "/scale_sweep.csv";
            const auto scales = parse_scales(sw_scales);
            const auto rows = f64 ? edno::scale_sweep<double>(sw_ckpt, sw_data, scales,
                                                              out_csv)
                                  : edno::scale_sweep<float>(sw_ckpt, sw_data, scales,
                                                             out_csv);
            for (const auto& r : rows)
                std::cout << r.method << " x" << edno::fmt_num(r.scale) << ": PSNR "
                          << edno::fmt_num(r.mean.psnr) << " dB" << std::endl;
            std::cout << "wrote " << out_csv << std::endl;
            return 0;
        }
        if (ji->parsed()) {
            const auto rows = f64 ? edno::jitter_test<double>(ji_ckpt, ji_data,
                                                              ji_pct / 100.0, common.out)
                                  : edno::jitter_test<float>(ji_ckpt, ji_data,
                                                             ji_pct / 100.0, common.out);
            double drop = 0;
            for (const auto& r : rows) drop += r.psnr_base - r.psnr_jitter;
            std::cout << "mean PSNR drop under " << edno::fmt_num(ji_pct)
                      << "% jitter: " << edno::fmt_num(drop / double(rows.size()))
                      << " dB\nwrote " << common.out << "/jitter.csv" << std::endl;
            return 0;
        }
        if (gc->parsed()) {
            const auto res = edno::run_gradcheck_suite(common.seed_set ? common.seed : 7);
            std::cout << res.text;
            return res.pass ? 0 : 2;
        }
    } catch (const edno::NumericError& e) {
        std::cerr << "numerical abort: " << e.what() << std::endl;
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    return 2;
}

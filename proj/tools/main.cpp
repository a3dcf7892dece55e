#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "respnet/baselines.hpp"
#include "respnet/metrics.hpp"
#include "respnet/model.hpp"
#include "respnet/signalio.hpp"
#include "respnet/trainer.hpp"

extern "C" void openblas_set_num_threads(int);

namespace fs = std::filesystem;
using namespace respnet;

namespace {

struct GlobalFlags {
    uint64_t seed = 0;
    std::string preset = "desk";
    int threads = 1;
};

void require_parent_dir(const std::string& path) {
    const fs::path p = fs::path(path).parent_path();
    if (!p.empty() && !fs::exists(p))
        throw IoError("output directory does not exist: " + p.string());
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

int cmd_synth(const GlobalFlags& g, const std::string& out_dir, int n, SynthConfig base,
              double resp_min, double resp_max) {
    base.validate();
    if (n < 1) throw InvalidConfig("synth: --n must be at least 1");
    if (!(resp_min > 0) || resp_max < resp_min)
        throw InvalidConfig("synth: bad respiration rate range");
    if (!fs::exists(out_dir)) fs::create_directories(out_dir);

    std::mt19937_64 rng(g.seed);
    auto uniform = [&](double lo, double hi) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    };
    std::vector<RecordMeta> metas;
    for (int i = 0; i < n; ++i) {
        SynthConfig cfg = base;
        cfg.seed = g.seed * 1000003ULL + static_cast<uint64_t>(i);
        cfg.resp_rate_bpm = resp_min == resp_max ? resp_min : uniform(resp_min, resp_max);
        char id[32];
        std::snprintf(id, sizeof(id), "synth%04d", i);
        SignalRecord rec = synth_record(cfg, id);
        RecordMeta meta;
        meta.record_id = id;
        meta.csv_path = std::string(id) + ".csv";
        meta.fs_ppg = rec.fs_ppg;
        meta.fs_resp = rec.fs_resp;
        meta.modality = Modality::synthetic;
        write_record(rec, (fs::path(out_dir) / meta.csv_path).string());
        metas.push_back(meta);
    }
    write_manifest(metas, (fs::path(out_dir) / "manifest.json").string());
    std::cout << n << " records written to " << out_dir << "\n";
    return 0;
}

int cmd_prepare(const GlobalFlags& g, const std::string& manifest_path,
                const std::string& out_path, double train_frac,
                const std::string& split_by) {
    require_parent_dir(out_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<Window> windows;
    for (const RecordMeta& meta : read_manifest(manifest_path)) {
        SignalRecord rec = load_record((base / meta.csv_path).string(), meta);
        for (auto& [x, y] : make_windows(rec)) {
            Window w;
            w.record_id = meta.record_id;
            w.x = std::move(x);
            w.y = std::move(y);
            windows.push_back(std::move(w));
        }
    }
    const SplitMode mode =
        split_by == "record" ? SplitMode::by_record : SplitMode::by_window;
    WindowedDataset ds = split_train_test(std::move(windows), train_frac, g.seed, mode);
    write_windowed(ds, out_path);
    std::cout << ds.windows.size() << " windows, " << ds.train_indices().size()
              << " train, " << ds.test_indices().size() << " test\n";
    return 0;
}

int cmd_train(const GlobalFlags& g, const std::string& data_path,
              const std::string& ckpt_path, const std::string& resume_path,
              const std::string& loss_log, int epochs, int batch, double lr,
              double momentum, int checkpoint_every, bool eval_test) {
    require_parent_dir(ckpt_path);
    WindowedDataset ds = read_windowed(data_path);

    TrainConfig cfg = TrainConfig::preset(g.preset);
    if (epochs > 0) cfg.epochs = epochs;
    if (batch > 0) cfg.batch_size = batch;
    if (lr >= 0) cfg.lr = lr;
    if (momentum >= 0) cfg.momentum = momentum;
    cfg.seed = g.seed;
    cfg.eval_test = eval_test;
    cfg.checkpoint_every = checkpoint_every;
    cfg.checkpoint_path = ckpt_path;
    cfg.loss_log_path = loss_log;

    ModelParams params = [&] {
        if (!resume_path.empty()) return load_checkpoint(resume_path);
        ModelConfig mc;
        mc.input_length = ds.window_len;
        mc.seed = g.seed;
        return build_model(mc);
    }();
    std::cout << "model parameters: " << trainable_parameter_count(params) << "\n";
    TrainHistory h = train(params, ds, cfg);
    const auto& last = h.epochs.back();
    std::cout << "epoch " << last.epoch << " train_loss " << fmt(last.train_loss);
    if (!std::isnan(last.test_loss)) std::cout << " test_loss " << fmt(last.test_loss);
    std::cout << " wall_s " << fmt(last.wall_s) << "\n";
    std::cout << "checkpoint written to " << ckpt_path << "\n";
    return 0;
}

int cmd_predict(const std::string& data_path, const std::string& ckpt_path,
                const std::string& out_path) {
    require_parent_dir(out_path);
    WindowedDataset ds = read_windowed(data_path);
    ModelParams params = load_checkpoint(ckpt_path);
    std::vector<std::vector<double>> xs;
    for (const auto& w : ds.windows) xs.push_back(w.x);
    std::vector<std::vector<double>> preds = predict(params, xs);
    for (size_t i = 0; i < preds.size(); ++i) ds.windows[i].y = std::move(preds[i]);
    write_windowed(ds, out_path);
    std::cout << ds.windows.size() << " predictions written to " << out_path << "\n";
    return 0;
}

int cmd_baseline(const std::string& manifest_path, const std::string& method,
                 const std::string& out_dir, double out_fs) {
    if (method != "wam" && method != "wfm")
        throw InvalidConfig("baseline: --method must be wam or wfm");
    if (!fs::exists(out_dir)) fs::create_directories(out_dir);
    const fs::path base = fs::path(manifest_path).parent_path();
    for (const RecordMeta& meta : read_manifest(manifest_path)) {
        SignalRecord rec = load_record((base / meta.csv_path).string(), meta);
        BeatSeries beats = detect_beats(rec);
        std::vector<double> wave = method == "wam"
                                       ? extract_wam(beats, out_fs, rec.duration_s())
                                       : extract_wfm(beats, out_fs, rec.duration_s());
        const std::string out =
            (fs::path(out_dir) / (meta.record_id + "_" + method + ".csv")).string();
        std::ofstream os(out);
        if (!os) throw IoError("cannot write " + out);
        os << "t_s," << method << "\n";
        for (size_t i = 0; i < wave.size(); ++i)
            os << fmt(static_cast<double>(i) / out_fs) << "," << fmt(wave[i]) << "\n";
    }
    std::cout << method << " waveforms written to " << out_dir << "\n";
    return 0;
}

// Per test window: run the classical extractor on the raw window and score it
// against the downsampled reference. Windows where no usable beat sequence
// exists are excluded, mirroring the degenerate-window rule.
EvalReport evaluate_baseline(const WindowedDataset& ds, const std::string& method,
                             const std::string& dataset_id, double eval_fs) {
    const std::vector<size_t> test_idx = ds.test_indices();
    if (test_idx.empty()) throw EmptyEvaluation("evaluate: empty test split");
    std::vector<std::vector<double>> preds, refs;
    int64_t undetectable = 0;
    for (size_t i : test_idx) {
        const Window& w = ds.windows[i];
        SignalRecord rec;
        rec.record_id = w.record_id;
        rec.ppg = w.x;
        rec.fs_ppg = ds.fs;
        rec.resp = w.y;
        rec.fs_resp = ds.fs;
        try {
            BeatSeries beats = detect_beats(rec);
            std::vector<double> wave = method == "wam"
                                           ? extract_wam(beats, eval_fs, rec.duration_s())
                                           : extract_wfm(beats, eval_fs, rec.duration_s());
            preds.push_back(std::move(wave));
            refs.push_back(downsample_for_eval(w.y, ds.fs, eval_fs));
        } catch (const NoBeats&) {
            ++undetectable;
        } catch (const TooFewBeats&) {
            ++undetectable;
        }
    }
    if (preds.empty()) throw EmptyEvaluation("evaluate: no window had detectable beats");
    EvalReport r = evaluate_method(preds, refs, eval_fs, method, dataset_id);
    r.n_excluded += undetectable;
    return r;
}

int cmd_evaluate(const std::string& data_path, const std::string& method,
                 const std::string& ckpt_path, const std::string& dataset_id,
                 const std::string& out_csv, double eval_fs) {
    WindowedDataset ds = read_windowed(data_path);
    EvalReport report = [&] {
        if (method == "respnet") {
            if (ckpt_path.empty())
                throw InvalidConfig("evaluate: --method respnet needs --checkpoint");
            return evaluate_checkpoint(ckpt_path, ds, dataset_id, eval_fs);
        }
        if (method == "wam" || method == "wfm")
            return evaluate_baseline(ds, method, dataset_id, eval_fs);
        throw InvalidConfig("evaluate: --method must be respnet, wam, or wfm");
    }();
    if (!out_csv.empty()) {
        require_parent_dir(out_csv);
        std::ofstream os(out_csv);
        if (!os) throw IoError("cannot write " + out_csv);
        os << report_csv_header() << "\n" << report_csv_row(report) << "\n";
    }
    std::vector<EvalReport> one{report};
    std::cout << report_table(one);
    return 0;
}

void write_svg(const std::string& path, double fs, std::span<const double> ppg,
               std::span<const double> ref, std::span<const double> pred) {
    const int w = 960, h = 360, pad = 30;
    const int lane_h = (h - 2 * pad) / 2;
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    auto polyline = [&](std::span<const double> x, int lane, const char* color) {
        double lo = x[0], hi = x[0];
        for (double v : x) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double span = hi > lo ? hi - lo : 1.0;
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
        for (size_t i = 0; i < x.size(); ++i) {
            const double px =
                pad + (w - 2.0 * pad) * static_cast<double>(i) / static_cast<double>(x.size() - 1);
            const double py = pad + lane * lane_h + lane_h * (1.0 - (x[i] - lo) / span);
            os << fmt(px) << "," << fmt(py) << " ";
        }
        os << "\"/>\n";
    };
    polyline(ppg, 0, "#444444");
    polyline(ref, 1, "#1f77b4");
    polyline(pred, 1, "#d62728");
    os << "<text x=\"" << pad << "\" y=\"" << pad - 10 << "\" font-size=\"12\">PPG ("
       << fmt(fs) << " Hz)</text>\n"
       << "<text x=\"" << pad << "\" y=\"" << pad + lane_h + 14
       << "\" font-size=\"12\">reference (blue) / prediction (red)</text>\n</svg>\n";
}

int cmd_plot(const std::string& data_path, const std::string& ckpt_path, int window,
             const std::string& out_prefix) {
    require_parent_dir(out_prefix + ".csv");
    WindowedDataset ds = read_windowed(data_path);
    const std::vector<size_t> test_idx = ds.test_indices();
    if (window < 0 || static_cast<size_t>(window) >= test_idx.size())
        throw WindowOutOfRange("plot: test window " + std::to_string(window) +
                               " out of range (n_test = " + std::to_string(test_idx.size()) +
                               ")");
    const Window& w = ds.windows[test_idx[static_cast<size_t>(window)]];
    ModelParams params = load_checkpoint(ckpt_path);
    std::vector<double> pred = predict(params, {w.x})[0];

    const std::string csv = out_prefix + ".csv";
    std::ofstream os(csv);
    if (!os) throw IoError("cannot write " + csv);
    os << "t_s,ppg,resp_ref,resp_pred\n";
    for (size_t i = 0; i < w.x.size(); ++i)
        os << fmt(static_cast<double>(i) / ds.fs) << "," << fmt(w.x[i]) << ","
           << fmt(w.y[i]) << "," << fmt(pred[i]) << "\n";
    write_svg(out_prefix + ".svg", ds.fs, w.x, w.y, pred);
    std::cout << csv << "\n" << out_prefix << ".svg\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PPG-to-respiration waveform extraction toolkit"};
    app.require_subcommand(1);

    GlobalFlags g;
    app.add_option("--seed", g.seed, "global RNG seed");
    app.add_option("--preset", g.preset, "training preset: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--threads", g.threads, "BLAS thread count");

    auto* synth = app.add_subcommand("synth", "generate synthetic records");
    std::string synth_out = "data";
    int synth_n = 10;
    SynthConfig synth_cfg;
    double resp_min = 15, resp_max = 15;
    synth->add_option("--out-dir", synth_out, "output directory");
    synth->add_option("--n", synth_n, "number of records");
    synth->add_option("--duration", synth_cfg.duration_s, "record length in seconds");
    synth->add_option("--fs", synth_cfg.fs, "sampling rate");
    synth->add_option("--hr", synth_cfg.heart_rate_bpm, "heart rate, bpm");
    synth->add_option("--resp-min", resp_min, "lowest respiration rate, breaths/min");
    synth->add_option("--resp-max", resp_max, "highest respiration rate, breaths/min");
    synth->add_option("--am", synth_cfg.am_depth, "amplitude modulation depth");
    synth->add_option("--fm", synth_cfg.fm_depth, "frequency modulation depth");
    synth->add_option("--bw", synth_cfg.bw_depth, "baseline wander depth");
    synth->add_option("--noise", synth_cfg.noise_std, "additive noise sigma");

    auto* prepare = app.add_subcommand("prepare", "window records into a dataset");
    std::string prep_manifest, prep_out = "dataset.rspw", split_by = "window";
    double train_frac = 0.8;
    prepare->add_option("--manifest", prep_manifest, "manifest JSON")->required();
    prepare->add_option("--out", prep_out, "output dataset file");
    prepare->add_option("--train-frac", train_frac, "train fraction");
    prepare->add_option("--split-by", split_by, "window or record")
        ->check(CLI::IsMember({"window", "record"}));

    auto* train_cmd = app.add_subcommand("train", "train the network");
    std::string train_data, train_ckpt = "model.rspn", train_resume, train_log;
    int epochs = 0, batch = 0, ckpt_every = 0;
    double lr = -1, momentum = -1;
    bool eval_test = false;
    train_cmd->add_option("--data", train_data, "dataset file")->required();
    train_cmd->add_option("--checkpoint", train_ckpt, "checkpoint output path");
    train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");
    train_cmd->add_option("--loss-log", train_log, "loss history CSV path");
    train_cmd->add_option("--epochs", epochs, "override preset epochs");
    train_cmd->add_option("--batch", batch, "override preset batch size");
    train_cmd->add_option("--lr", lr, "learning rate");
    train_cmd->add_option("--momentum", momentum, "momentum");
    train_cmd->add_option("--checkpoint-every", ckpt_every, "epochs between checkpoints");
    train_cmd->add_flag("--eval-test", eval_test, "log test loss each epoch");

    auto* predict_cmd = app.add_subcommand("predict", "run the network on a dataset");
    std::string pred_data, pred_ckpt, pred_out = "predictions.rspw";
    predict_cmd->add_option("--data", pred_data, "dataset file")->required();
    predict_cmd->add_option("--checkpoint", pred_ckpt, "model checkpoint")->required();
    predict_cmd->add_option("--out", pred_out, "output dataset with predicted y");

    auto* baseline_cmd = app.add_subcommand("baseline", "classical waveform extraction");
    std::string base_manifest, base_method = "wam", base_out = "baseline";
    double base_fs = 60.0;
    baseline_cmd->add_option("--manifest", base_manifest, "manifest JSON")->required();
    baseline_cmd->add_option("--method", base_method, "wam or wfm");
    baseline_cmd->add_option("--out-dir", base_out, "output directory");
    baseline_cmd->add_option("--fs", base_fs, "output sampling rate");

    auto* eval_cmd = app.add_subcommand("evaluate", "score a method on the test split");
    std::string eval_data, eval_method = "respnet", eval_ckpt, eval_name = "dataset",
                eval_out;
    double eval_fs = 60.0;
    eval_cmd->add_option("--data", eval_data, "dataset file")->required();
    eval_cmd->add_option("--method", eval_method, "respnet, wam, or wfm");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint (respnet)");
    eval_cmd->add_option("--dataset", eval_name, "dataset label for the report");
    eval_cmd->add_option("--out", eval_out, "report CSV path");
    eval_cmd->add_option("--fs", eval_fs, "evaluation sampling rate");

    auto* plot_cmd = app.add_subcommand("plot", "emit overlay data for a test window");
    std::string plot_data, plot_ckpt, plot_prefix = "window";
    int plot_window = 0;
    plot_cmd->add_option("--data", plot_data, "dataset file")->required();
    plot_cmd->add_option("--checkpoint", plot_ckpt, "model checkpoint")->required();
    plot_cmd->add_option("--window", plot_window, "test window index");
    plot_cmd->add_option("--out-prefix", plot_prefix, "output path prefix");

    CLI11_PARSE(app, argc, argv);
    openblas_set_num_threads(g.threads > 0 ? g.threads : 1);

    try {
        if (*synth)
            return cmd_synth(g, synth_out, synth_n, synth_cfg, resp_min, resp_max);
        if (*prepare) return cmd_prepare(g, prep_manifest, prep_out, train_frac, split_by);
        if (*train_cmd)
            return cmd_train(g, train_data, train_ckpt, train_resume, train_log, epochs,
                             batch, lr, momentum, ckpt_every, eval_test);
        if (*predict_cmd) return cmd_predict(pred_data, pred_ckpt, pred_out);
        if (*baseline_cmd)
            return cmd_baseline(base_manifest, base_method, base_out, base_fs);
        if (*eval_cmd)
            return cmd_evaluate(eval_data, eval_method, eval_ckpt, eval_name, eval_out,
                                eval_fs);
        if (*plot_cmd) return cmd_plot(plot_data, plot_ckpt, plot_window, plot_prefix);
    } catch (const Error& e) {
        std::cerr << "error[" << e.code() << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error[Internal]: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

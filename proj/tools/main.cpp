#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tpgst/checkpoint.hpp"
#include "tpgst/config.hpp"
#include "tpgst/errors.hpp"
#include "tpgst/eval.hpp"
#include "tpgst/gradcheck.hpp"
#include "tpgst/train.hpp"

namespace fs = std::filesystem;
using namespace tpgst;

namespace {

std::vector<int> parse_text(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw UsageError("--text: '" + item + "' is not a token id");
        }
    }
    if (out.empty()) throw UsageError("--text: empty token list");
    return out;
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
    const fs::path p(path);
    fs::path out = p.parent_path() / p.stem();
    return out.string() + suffix + p.extension().string();
}

void write_frames_record(const std::string& path, const std::vector<int>& text, int style_id,
                         int speaker_id, int channels, const std::vector<double>& frames) {
    SyntheticUtterance u;
    u.text = text;
    u.style_id = style_id;
    u.speaker_id = speaker_id;
    u.noise_flag = false;
    u.channels = channels;
    u.frames = frames;
    write_dataset({u}, path);
}

void write_tracks_csv(const std::string& path, const std::vector<double>& frames, int channels,
                      int n_frames, int noise_band) {
    ProsodyTracks t = compute_tracks(frames, channels, n_frames, noise_band);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot open " + path);
    out << "frame,pitch_proxy,voiced,energy\n";
    out.precision(17);
    for (int i = 0; i < n_frames; ++i) {
        out << i << "," << t.pitch[static_cast<std::size_t>(i)] << ","
            << (t.voiced[static_cast<std::size_t>(i)] ? 1 : 0) << ","
            << t.energy[static_cast<std::size_t>(i)] << "\n";
    }
}

struct EvalCheck {
    std::string name;
    bool pass = false;
    bool skipped = false;
    std::string detail;
};

int cmd_gen_data(const std::string& config_path, std::uint64_t seed, const std::string& out,
                 int count) {
    RunConfig rc = config_path.empty() ? default_run_config() : load_run_config(config_path);
    std::vector<SyntheticUtterance> data = make_dataset(rc.task, seed, count);
    write_dataset(data, out);
    write_hash_manifest(out);
    std::cout << "wrote " << out << " (" << count << " utterances), hash "
              << hash_hex(file_hash(out)) << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, std::string data_path, std::string out_dir,
              bool baseline) {
    RunConfig rc = config_path.empty() ? default_run_config() : load_run_config(config_path);
    if (data_path.empty()) data_path = rc.paths.data;
    if (out_dir.empty()) out_dir = rc.paths.out_dir;
    if (data_path.empty()) throw UsageError("--data is required (or paths.data in the config)");
    if (out_dir.empty()) throw UsageError("--out-dir is required (or paths.out_dir in the config)");
    if (baseline) rc.model.baseline_mode = true;

    verify_hash_manifest(data_path);
    std::vector<SyntheticUtterance> data = read_dataset(data_path);
    fs::create_directories(out_dir);

    Model model = Model::build(rc.task, rc.model);
    AdamState adam = AdamState::create(model.params, rc.model.lr, rc.model.beta1, rc.model.beta2,
                                       rc.model.adam_eps);
    const long interval = rc.train.checkpoint_interval;
    TrainLog log = train(model, data, rc.train, adam,
                         [&](long step, const Model& m, const AdamState& a) {
                             if (step % interval == 0 && step < rc.train.steps) {
                                 save_checkpoint(m, &a, out_dir + "/ckpt_step" +
                                                            std::to_string(step) + ".bin");
                             }
                         });
    save_checkpoint(model, &adam, out_dir + "/ckpt_final.bin");
    log.write_csv(out_dir + "/train_log.csv");
    if (!log.records.empty()) {
        std::cout << "trained " << log.records.size() << " steps, final l_total "
                  << log.records.back().l_total << "\n";
    }
    std::cout << "checkpoint " << out_dir << "/ckpt_final.bin\n";
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& mode_name, const std::string& text_csv,
              int speaker, const std::string& reference, int token_index, double scale,
              const std::string& out) {
    LoadedCheckpoint loaded = load_checkpoint(ckpt);
    const Model& m = loaded.model;

    InferRequest req;
    req.mode = parse_infer_mode(mode_name);
    req.text = parse_text(text_csv);
    req.speaker_id = speaker;
    req.token_scale = scale;

    std::vector<SyntheticUtterance> ref_data;
    if (req.mode == InferMode::Gst) {
        if (reference.empty()) throw UsageError("mode=gst requires --reference");
        ref_data = read_dataset(reference);
        if (ref_data.empty()) throw UsageError("--reference: no records in " + reference);
        req.reference_frames = &ref_data[0].frames;
        req.reference_len = ref_data[0].n_frames();
    }

    const int f = m.task.channels;
    const int l = m.task.frames_per_utterance;
    if (req.mode == InferMode::Token && token_index < 0) {
        // no index given: emit one output per token
        for (int i = 0; i < m.cfg.num_tokens; ++i) {
            req.token_index = i;
            const std::vector<double> frames = infer(m, req);
            const std::string path = with_suffix(out, "_token" + std::to_string(i));
            write_frames_record(path, req.text, i, speaker, f, frames);
            write_tracks_csv(path + ".tracks.csv", frames, f, l, m.task.noise_band_width);
            std::cout << "wrote " << path << "\n";
        }
        return 0;
    }
    req.token_index = token_index;
    const std::vector<double> frames = infer(m, req);
    write_frames_record(out, req.text, req.mode == InferMode::Token ? token_index : -1, speaker,
                        f, frames);
    write_tracks_csv(out + ".tracks.csv", frames, f, l, m.task.noise_band_width);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path,
             const std::string& train_data_path, const std::string& report_dir) {
    LoadedCheckpoint loaded = load_checkpoint(ckpt);
    const Model& m = loaded.model;
    if (m.cfg.baseline_mode) {
        throw UsageError("eval needs a style-pathway checkpoint; this one is baseline mode");
    }
    std::vector<SyntheticUtterance> data = read_dataset(data_path);
    std::vector<SyntheticUtterance> centroid_source =
        train_data_path.empty() ? data : read_dataset(train_data_path);
    fs::create_directories(report_dir);

    ModeReport report = compare_modes(m, data, centroid_source);
    report.write_csv(report_dir + "/mode_report.csv");

    // per-token synthesis tracks, one fixed text across all tokens
    {
        std::ofstream out(report_dir + "/token_tracks.csv", std::ios::binary);
        out << "token,frame,pitch_proxy,voiced,energy\n";
        out.precision(17);
        InferRequest req;
        req.mode = InferMode::Token;
        req.token_scale = 1.0;
        const int n_body = m.task.vocab_size - m.task.styles;
        for (int j = 0; j < 5; ++j) req.text.push_back(m.task.styles + (3 + 2 * j) % n_body);
        for (int i = 0; i < m.cfg.num_tokens; ++i) {
            req.token_index = i;
            const std::vector<double> frames = infer(m, req);
            ProsodyTracks t =
                compute_tracks(frames, m.task.channels, m.task.frames_per_utterance,
                               m.task.noise_band_width);
            for (int k = 0; k < m.task.frames_per_utterance; ++k) {
                out << i << "," << k << "," << t.pitch[static_cast<std::size_t>(k)] << ","
                    << (t.voiced[static_cast<std::size_t>(k)] ? 1 : 0) << ","
                    << t.energy[static_cast<std::size_t>(k)] << "\n";
            }
        }
    }

    std::vector<EvalCheck> checks;
    {
        EvalCheck c{"tpse_style_accuracy>=0.90", false, false, ""};
        const double acc =
            tpse_style_accuracy(m, data, style_embedding_centroids(m, centroid_source));
        c.pass = acc >= 0.90;
        c.detail = "accuracy=" + std::to_string(acc);
        checks.push_back(c);
    }
    {
        EvalCheck c{"pitch_variance_ratio>=1.2", false, false, ""};
        const double zero_med = median(report.column("zero", &ModeRow::pitch_var));
        const double tpcw_med = median(report.column("tpcw", &ModeRow::pitch_var));
        const double tpse_med = median(report.column("tpse", &ModeRow::pitch_var));
        c.pass = tpcw_med >= 1.2 * zero_med && tpse_med >= 1.2 * zero_med;
        c.detail = "zero=" + std::to_string(zero_med) + " tpcw=" + std::to_string(tpcw_med) +
                   " tpse=" + std::to_string(tpse_med);
        checks.push_back(c);
    }
    {
        EvalCheck c{"tpse_noise_power<=0.25*gst_noisy", false, false, ""};
        std::vector<bool> noisy(data.size(), false);
        int n_noisy = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            noisy[i] = data[i].noise_flag;
            n_noisy += data[i].noise_flag ? 1 : 0;
        }
        if (n_noisy == 0) {
            c.skipped = true;
            c.detail = "no noisy utterances in the evaluation set";
        } else {
            const double tpse_med = median(report.column_if("tpse", &ModeRow::noise_power, noisy));
            const double gst_med = median(report.column_if("gst", &ModeRow::noise_power, noisy));
            c.pass = tpse_med <= 0.25 * gst_med;
            c.detail = "tpse=" + std::to_string(tpse_med) + " gst=" + std::to_string(gst_med);
        }
        checks.push_back(c);
    }
    if (m.task.speakers >= 2) {
        EvalCheck c{"speaker_identity>=0.95_and_spearman>=0.8", false, false, ""};
        SpeakerIdentityResult r = speaker_identity_check(m);
        c.pass = r.accuracy >= 0.95 && r.min_pitch_spearman >= 0.8;
        c.detail = "accuracy=" + std::to_string(r.accuracy) +
                   " min_spearman=" + std::to_string(r.min_pitch_spearman);
        checks.push_back(c);
    }
    {
        const double kl = mean_tpcw_kl(m, data);
        const double ukl = mean_uniform_kl(m, data);
        EvalCheck c{"tpcw_kl (informational)", true, false,
                    "kl=" + std::to_string(kl) + " uniform_kl=" + std::to_string(ukl)};
        checks.push_back(c);
    }

    bool all_pass = true;
    std::ofstream summary(report_dir + "/summary.txt", std::ios::binary);
    for (const EvalCheck& c : checks) {
        std::string line;
        if (c.skipped) {
            line = "SKIP " + c.name + "  " + c.detail;
        } else {
            line = (c.pass ? "PASS " : "FAIL ") + c.name + "  " + c.detail;
            all_pass = all_pass && c.pass;
        }
        std::cout << line << "\n";
        summary << line << "\n";
    }
    std::cout << "report " << report_dir << "/mode_report.csv\n";
    return all_pass ? 0 : 1;
}

int cmd_gradcheck(const std::string& config_path, std::uint64_t seed, int max_coords,
                  const std::string& inject_fault) {
    RunConfig rc = config_path.empty() ? default_run_config() : load_run_config(config_path);
    if (!inject_fault.empty()) {
        if (inject_fault == "tanh") {
            debug::set_adjoint_fault(Unary::Tanh, true);
        } else if (inject_fault == "relu") {
            debug::set_adjoint_fault(Unary::Relu, true);
        } else if (inject_fault == "sigmoid") {
            debug::set_adjoint_fault(Unary::Sigmoid, true);
        } else if (inject_fault == "log") {
            debug::set_adjoint_fault(Unary::Log, true);
        } else if (inject_fault == "exp") {
            debug::set_adjoint_fault(Unary::Exp, true);
        } else {
            throw UsageError("--inject-fault: unknown op '" + inject_fault + "'");
        }
    }
    GradCheckReport report = run_gradcheck(rc.task, rc.model, seed, max_coords);
    std::cout << report.to_text();
    std::cout << (report.pass() ? "gradcheck: PASS" : "gradcheck: FAIL") << " (tolerance "
              << report.tolerance << ")\n";
    return report.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"styled-utterance reconstruction with text-predicted style tokens"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, out_dir, ckpt, mode, text_csv, reference;
    std::string train_data_path, report_dir, inject_fault;
    std::uint64_t seed = 1;
    int count = 512, speaker = 0, token_index = -1, max_coords = 8;
    double scale = 1.0;
    bool baseline = false;

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--config", config_path, "run config JSON");
    gen->add_option("--seed", seed, "generator seed")->required();
    gen->add_option("--out", out_path, "output JSON-lines path")->required();
    gen->add_option("--count", count, "number of utterances (default 512)");

    CLI::App* tr = app.add_subcommand("train", "train a model on a dataset");
    tr->add_option("--config", config_path, "run config JSON");
    tr->add_option("--data", data_path, "dataset path (hash manifest required)");
    tr->add_option("--out-dir", out_dir, "checkpoint/log directory");
    tr->add_flag("--baseline", baseline, "drop the style pathway (vanilla baseline)");

    CLI::App* inf = app.add_subcommand("infer", "synthesize frames from text");
    inf->add_option("--ckpt", ckpt, "checkpoint path")->required();
    inf->add_option("--mode", mode, "gst | tpcw | tpse | token | zero")->required();
    inf->add_option("--text", text_csv, "comma-separated token ids")->required();
    inf->add_option("--speaker", speaker, "speaker id (default 0)");
    inf->add_option("--reference", reference, "reference frames (dataset-format JSON line)");
    inf->add_option("--token-index", token_index, "token for mode=token; omit to emit all");
    inf->add_option("--scale", scale, "token embedding scale (default 1.0)");
    inf->add_option("--out", out_path, "output frames path")->required();

    CLI::App* ev = app.add_subcommand("eval", "mode comparison report and checks");
    ev->add_option("--ckpt", ckpt, "checkpoint path")->required();
    ev->add_option("--data", data_path, "held-out dataset")->required();
    ev->add_option("--train-data", train_data_path, "centroid source (default: --data)");
    ev->add_option("--report-dir", report_dir, "report directory")->required();

    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc->add_option("--config", config_path, "run config JSON");
    gc->add_option("--seed", seed, "check seed");
    gc->add_option("--max-coords", max_coords, "sampled coordinates per parameter");
    gc->add_option("--inject-fault", inject_fault, "corrupt a unary adjoint (test fixture)")
        ->group("");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_data(config_path, seed, out_path, count);
        if (tr->parsed()) return cmd_train(config_path, data_path, out_dir, baseline);
        if (inf->parsed()) {
            return cmd_infer(ckpt, mode, text_csv, speaker, reference, token_index, scale,
                             out_path);
        }
        if (ev->parsed()) return cmd_eval(ckpt, data_path, train_data_path, report_dir);
        if (gc->parsed()) return cmd_gradcheck(config_path, seed, max_coords, inject_fault);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

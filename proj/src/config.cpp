#include "tpgst/config.hpp"

#include <fstream>
#include <set>

#include "tpgst/errors.hpp"

namespace tpgst {

namespace {

using nlohmann::json;

// Reads known keys and rejects everything else with a path-qualified message.
class StrictObject {
  public:
    StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError(where_ + "." + key + ": wrong type");
        }
    }

    const json* sub(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw ConfigError(where_ + "." + it.key() + ": unknown key");
            }
        }
    }

  private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace

RunConfig default_run_config() {
    RunConfig c;
    c.task = default_task_config();
    return c;
}

json task_to_json(const TaskConfig& c) {
    json styles = json::array();
    for (const StyleParams& s : c.style_table) {
        styles.push_back({{"pitch_shift", s.pitch_shift},
                          {"amplitude", s.amplitude},
                          {"rate", s.rate}});
    }
    json bias = json::array();
    for (int s = 0; s < c.speakers; ++s) {
        json brow = json::array();
        for (int ch = 0; ch < c.channels; ++ch) {
            brow.push_back(c.speaker_bias[static_cast<std::size_t>(s * c.channels + ch)]);
        }
        bias.push_back(std::move(brow));
    }
    return json{{"vocab_size", c.vocab_size},
                {"styles", c.styles},
                {"speakers", c.speakers},
                {"channels", c.channels},
                {"frames_per_utterance", c.frames_per_utterance},
                {"frames_per_symbol", c.frames_per_symbol},
                {"cue_probability", c.cue_probability},
                {"noise_fraction", c.noise_fraction},
                {"noise_band_width", c.noise_band_width},
                {"noise_amplitude", c.noise_amplitude},
                {"style_table", std::move(styles)},
                {"speaker_bias", std::move(bias)}};
}

TaskConfig task_from_json(const json& j, const std::string& where) {
    TaskConfig base = default_task_config();
    StrictObject o(j, where);
    o.read("vocab_size", base.vocab_size);
    o.read("styles", base.styles);
    o.read("speakers", base.speakers);
    o.read("channels", base.channels);
    o.read("frames_per_utterance", base.frames_per_utterance);
    o.read("frames_per_symbol", base.frames_per_symbol);
    o.read("cue_probability", base.cue_probability);
    o.read("noise_fraction", base.noise_fraction);
    o.read("noise_band_width", base.noise_band_width);
    o.read("noise_amplitude", base.noise_amplitude);
    if (const json* styles = o.sub("style_table")) {
        if (!styles->is_array()) throw ConfigError(where + ".style_table: expected an array");
        base.style_table.clear();
        int i = 0;
        for (const json& s : *styles) {
            StrictObject so(s, where + ".style_table[" + std::to_string(i) + "]");
            StyleParams sp;
            so.read("pitch_shift", sp.pitch_shift);
            so.read("amplitude", sp.amplitude);
            so.read("rate", sp.rate);
            so.finish();
            base.style_table.push_back(sp);
            ++i;
        }
    } else if (base.styles != static_cast<int>(base.style_table.size())) {
        // styled count changed without an explicit table: no sensible default
        throw ConfigError(where + ".style_table: required when styles != " +
                          std::to_string(base.style_table.size()));
    }
    if (const json* bias = o.sub("speaker_bias")) {
        if (!bias->is_array()) throw ConfigError(where + ".speaker_bias: expected an array");
        base.speaker_bias.clear();
        for (const json& row : *bias) {
            if (!row.is_array()) {
                throw ConfigError(where + ".speaker_bias: expected an array of per-speaker rows");
            }
            for (const json& v : row) base.speaker_bias.push_back(v.get<double>());
        }
    } else if (base.speakers * base.channels != static_cast<int>(base.speaker_bias.size())) {
        // geometry changed: rebuild the default pattern at the new size
        base.speaker_bias.assign(static_cast<std::size_t>(base.speakers * base.channels), 0.0);
        for (int s = 0; s < base.speakers; ++s) {
            for (int k = 0; k < 3; ++k) {
                const int ch = (s + 8 * k) % std::max(1, base.channels - base.noise_band_width);
                base.speaker_bias[static_cast<std::size_t>(s * base.channels + ch)] = 0.08;
            }
        }
    }
    o.finish();
    try {
        base.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    return base;
}

json model_to_json(const ModelConfig& c) {
    return json{{"d_sym", c.d_sym},
                {"d_enc", c.d_enc},
                {"d_tf", c.d_tf},
                {"d_ref", c.d_ref},
                {"d_spk", c.d_spk},
                {"num_tokens", c.num_tokens},
                {"num_heads", c.num_heads},
                {"d_emb", c.d_emb},
                {"d_attn", c.d_attn},
                {"n_hidden", c.n_hidden},
                {"d_hid", c.d_hid},
                {"d_dec", c.d_dec},
                {"w_tpcw", c.w_tpcw},
                {"w_tpse", c.w_tpse},
                {"w_free_run", c.w_free_run},
                {"baseline_mode", c.baseline_mode},
                {"detach_text_features", c.detach_text_features},
                {"seed", c.seed},
                {"lr", c.lr},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"adam_eps", c.adam_eps}};
}

ModelConfig model_from_json(const json& j, const std::string& where) {
    ModelConfig c;
    StrictObject o(j, where);
    o.read("d_sym", c.d_sym);
    o.read("d_enc", c.d_enc);
    o.read("d_tf", c.d_tf);
    o.read("d_ref", c.d_ref);
    o.read("d_spk", c.d_spk);
    o.read("num_tokens", c.num_tokens);
    o.read("num_heads", c.num_heads);
    o.read("d_emb", c.d_emb);
    o.read("d_attn", c.d_attn);
    o.read("n_hidden", c.n_hidden);
    o.read("d_hid", c.d_hid);
    o.read("d_dec", c.d_dec);
    o.read("w_tpcw", c.w_tpcw);
    o.read("w_tpse", c.w_tpse);
    o.read("w_free_run", c.w_free_run);
    o.read("baseline_mode", c.baseline_mode);
    o.read("detach_text_features", c.detach_text_features);
    o.read("seed", c.seed);
    o.read("lr", c.lr);
    o.read("beta1", c.beta1);
    o.read("beta2", c.beta2);
    o.read("adam_eps", c.adam_eps);
    o.finish();
    return c;
}

json train_to_json(const TrainConfig& c) {
    return json{{"steps", c.steps},
                {"batch_size", c.batch_size},
                {"seed", c.seed},
                {"checkpoint_interval", c.checkpoint_interval},
                {"threads", c.threads},
                {"grad_clip", c.grad_clip}};
}

TrainConfig train_from_json(const json& j, const std::string& where) {
    TrainConfig c;
    StrictObject o(j, where);
    o.read("steps", c.steps);
    o.read("batch_size", c.batch_size);
    o.read("seed", c.seed);
    o.read("checkpoint_interval", c.checkpoint_interval);
    o.read("threads", c.threads);
    o.read("grad_clip", c.grad_clip);
    o.finish();
    try {
        c.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    return c;
}

json run_config_to_json(const RunConfig& c) {
    json paths = json::object();
    if (!c.paths.data.empty()) paths["data"] = c.paths.data;
    if (!c.paths.train_data.empty()) paths["train_data"] = c.paths.train_data;
    if (!c.paths.out_dir.empty()) paths["out_dir"] = c.paths.out_dir;
    if (!c.paths.report_dir.empty()) paths["report_dir"] = c.paths.report_dir;
    return json{{"task", task_to_json(c.task)},
                {"model", model_to_json(c.model)},
                {"train", train_to_json(c.train)},
                {"paths", std::move(paths)}};
}

RunConfig parse_run_config(const json& j) {
    RunConfig c = default_run_config();
    StrictObject o(j, "config");
    if (const json* t = o.sub("task")) c.task = task_from_json(*t, "task");
    if (const json* m = o.sub("model")) c.model = model_from_json(*m, "model");
    if (const json* t = o.sub("train")) c.train = train_from_json(*t, "train");
    if (const json* p = o.sub("paths")) {
        StrictObject po(*p, "paths");
        po.read("data", c.paths.data);
        po.read("train_data", c.paths.train_data);
        po.read("out_dir", c.paths.out_dir);
        po.read("report_dir", c.paths.report_dir);
        po.finish();
    }
    o.finish();
    try {
        c.model.validate(c.task);
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return parse_run_config(j);
}

}  // namespace tpgst

#include "tpgst/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "tpgst/config.hpp"
#include "tpgst/errors.hpp"

namespace tpgst {

namespace {

using nlohmann::json;

constexpr const char* kMagic = "tpgst-checkpoint-v1\n";

void write_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::ifstream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw IntegrityError("checkpoint: truncated header length");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw IntegrityError("checkpoint: truncated parameter payload");
}

}  // namespace

void save_checkpoint(const Model& m, const AdamState* adam, const std::string& path) {
    json header;
    header["format_version"] = 1;
    header["step"] = adam != nullptr ? adam->step : 0;
    header["task"] = task_to_json(m.task);
    header["model"] = model_to_json(m.cfg);
    json params = json::array();
    for (const auto& p : m.params) {
        params.push_back({{"name", p->name}, {"shape", p->shape}});
    }
    header["params"] = std::move(params);
    json aj;
    aj["present"] = adam != nullptr;
    if (adam != nullptr) {
        aj["lr"] = adam->lr;
        aj["beta1"] = adam->beta1;
        aj["beta2"] = adam->beta2;
        aj["eps"] = adam->eps;
        aj["step"] = adam->step;
    }
    header["adam"] = std::move(aj);
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("save_checkpoint: cannot open " + path);
    out.write(kMagic, static_cast<std::streamsize>(std::strlen(kMagic)));
    write_u64(out, hs.size());
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& p : m.params) write_doubles(out, p->value);
    if (adam != nullptr) {
        for (std::size_t i = 0; i < m.params.count(); ++i) write_doubles(out, adam->m[i]);
        for (std::size_t i = 0; i < m.params.count(); ++i) write_doubles(out, adam->v[i]);
    }
    if (!out) throw UsageError("save_checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("load_checkpoint: cannot open " + path);
    std::string magic(std::strlen(kMagic), '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (!in || magic != kMagic) {
        throw IntegrityError("checkpoint " + path + ": bad magic (wrong file or version)");
    }
    const std::uint64_t hlen = read_u64(in);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw IntegrityError("checkpoint " + path + ": truncated header");
    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw IntegrityError("checkpoint " + path + ": bad header: " + e.what());
    }
    if (header.value("format_version", 0) != 1) {
        throw IntegrityError("checkpoint " + path + ": unsupported format version");
    }

    TaskConfig task;
    ModelConfig cfg;
    try {
        task = task_from_json(header.at("task"), "task");
        cfg = model_from_json(header.at("model"), "model");
    } catch (const ConfigError& e) {
        throw IntegrityError("checkpoint " + path + ": " + e.what());
    }

    LoadedCheckpoint out{Model::build(task, cfg), nullptr, 0};
    out.step = header.value("step", 0L);

    const json& plist = header.at("params");
    if (plist.size() != out.model.params.count()) {
        throw IntegrityError("checkpoint " + path + ": header lists " +
                             std::to_string(plist.size()) + " parameters, model has " +
                             std::to_string(out.model.params.count()));
    }
    for (std::size_t i = 0; i < plist.size(); ++i) {
        const Parameter& p = out.model.params.at(i);
        const std::string name = plist[i].at("name").get<std::string>();
        const Shape shape = plist[i].at("shape").get<Shape>();
        if (name != p.name || shape != p.shape) {
            throw IntegrityError("checkpoint " + path + ": parameter " + std::to_string(i) +
                                 " is " + name + shape_str(shape) + ", model expects " + p.name +
                                 shape_str(p.shape));
        }
    }
    for (std::size_t i = 0; i < out.model.params.count(); ++i) {
        read_doubles(in, out.model.params.at(i).value);
    }

    const json& aj = header.at("adam");
    if (aj.value("present", false)) {
        auto adam = std::make_unique<AdamState>(
            AdamState::create(out.model.params, aj.at("lr").get<double>(),
                              aj.at("beta1").get<double>(), aj.at("beta2").get<double>(),
                              aj.at("eps").get<double>()));
        adam->step = aj.at("step").get<long>();
        for (std::size_t i = 0; i < out.model.params.count(); ++i) read_doubles(in, adam->m[i]);
        for (std::size_t i = 0; i < out.model.params.count(); ++i) read_doubles(in, adam->v[i]);
        out.adam = std::move(adam);
    }
    return out;
}

}  // namespace tpgst

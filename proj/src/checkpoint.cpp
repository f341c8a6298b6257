// SPDX-License-Identifier: Apache-2.0

#include "owlet/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian float32");

namespace owlet {

using nlohmann::json;

namespace {

struct GroupEntry {
    std::string name;
    Shape shape;
    std::int64_t offset;  // in floats from payload start
};

}  // namespace

void save_checkpoint(const std::string& path, MultimodalModel<float>& model,
                     const AdamW* optim, const CheckpointMeta& meta) {
    std::vector<std::pair<std::string, const Tensor<float>*>> params;
    model.visit_all([&](const std::string& name, Tensor<float>& t) {
        params.emplace_back(name, &t);
    });

    json groups = json::array();
    std::vector<const float*> buffers;
    std::vector<std::int64_t> counts;
    std::int64_t offset = 0;

    auto push = [&](const std::string& name, const Shape& shape, const float* data,
                    std::int64_t count) {
        json g;
        g["name"] = name;
        g["shape"] = shape;
        g["offset"] = offset;
        groups.push_back(std::move(g));
        buffers.push_back(data);
        counts.push_back(count);
        offset += count;
    };

    for (auto& [name, t] : params) push(name, t->shape(), t->data(), t->size());
    if (optim) {
        for (const AdamW::Slot& s : optim->slots()) {
            push("optim.m." + s.name, s.param->shape(), s.m.data(),
                 static_cast<std::int64_t>(s.m.size()));
            push("optim.v." + s.name, s.param->shape(), s.v.data(),
                 static_cast<std::int64_t>(s.v.size()));
        }
    }

    json manifest;
    manifest["step"] = meta.step;
    manifest["stage"] = meta.stage;
    manifest["config"] = meta.config_echo;
    manifest["optimizer"] = optim != nullptr;
    if (optim) manifest["optim_step"] = optim->step_count();
    manifest["groups"] = std::move(groups);
    const std::string text = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write checkpoint " + path);
    out.write(kCheckpointMagic, 4);
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint64_t mlen = text.size();
    out.write(reinterpret_cast<const char*>(&mlen), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (size_t i = 0; i < buffers.size(); ++i)
        out.write(reinterpret_cast<const char*>(buffers[i]),
                  static_cast<std::streamsize>(counts[i] * 4));
    if (!out) throw io_error("short write to checkpoint " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, MultimodalModel<float>& model,
                                 AdamW* optim, const json* expected_config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint " + path);

    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw format_error("checkpoint: bad magic in " + path);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (!in || version != kCheckpointVersion)
        throw format_error("checkpoint: unsupported version " + std::to_string(version) + " in " +
                           path);
    std::uint64_t mlen = 0;
    in.read(reinterpret_cast<char*>(&mlen), 8);
    if (!in || mlen == 0 || mlen > (1ull << 30))
        throw format_error("checkpoint: bad manifest length in " + path);
    std::string text(mlen, '\0');
    in.read(text.data(), static_cast<std::streamsize>(mlen));
    if (static_cast<std::uint64_t>(in.gcount()) != mlen)
        throw format_error("checkpoint: truncated manifest in " + path);

    json manifest;
    try {
        manifest = json::parse(text);
    } catch (const json::exception& e) {
        throw format_error("checkpoint: unparsable manifest in " + path + ": " + e.what());
    }

    LoadedCheckpoint result;
    result.step = manifest.value("step", std::int64_t(0));
    result.stage = manifest.value("stage", std::string());
    result.has_optimizer = manifest.value("optimizer", false);
    result.config_echo = manifest.value("config", json::object());

    if (expected_config && result.config_echo != *expected_config)
        throw config_error("checkpoint: config echo in " + path +
                           " does not match the current model configuration");
    if (optim && !result.has_optimizer)
        throw format_error("checkpoint: optimizer state requested but absent in " + path);

    std::vector<GroupEntry> entries;
    std::unordered_map<std::string, size_t> by_name;
    std::int64_t total = 0;
    for (const json& g : manifest.at("groups")) {
        GroupEntry e;
        e.name = g.at("name").get<std::string>();
        e.shape = g.at("shape").get<Shape>();
        e.offset = g.at("offset").get<std::int64_t>();
        if (!by_name.emplace(e.name, entries.size()).second)
            throw format_error("checkpoint: duplicate group " + e.name + " in " + path);
        total += shape_numel(e.shape);
        entries.push_back(std::move(e));
    }

    std::vector<float> payload(static_cast<size_t>(total));
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(total * 4));
    if (in.gcount() != static_cast<std::streamsize>(total * 4))
        throw format_error("checkpoint: truncated payload in " + path);

    auto fetch = [&](const std::string& name, const Shape& want) -> const float* {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw config_error("checkpoint: missing group " + name + " in " + path);
        const GroupEntry& e = entries[it->second];
        if (e.shape != want)
            throw config_error("checkpoint: group " + name + " has shape " + shape_str(e.shape) +
                               ", model expects " + shape_str(want));
        return payload.data() + e.offset;
    };

    model.visit_all([&](const std::string& name, Tensor<float>& t) {
        const float* src = fetch(name, t.shape());
        std::copy_n(src, t.size(), t.data());
    });

    if (optim) {
        for (AdamW::Slot& s : optim->slots()) {
            const float* m = fetch("optim.m." + s.name, s.param->shape());
            const float* v = fetch("optim.v." + s.name, s.param->shape());
            std::copy_n(m, s.m.size(), s.m.data());
            std::copy_n(v, s.v.size(), s.v.data());
        }
        optim->set_step_count(manifest.value("optim_step", std::int64_t(0)));
    }
    return result;
}

}  // namespace owlet

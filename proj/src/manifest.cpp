// SPDX-License-Identifier: Apache-2.0

#include "owlet/manifest.h"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "owlet/errors.h"

namespace owlet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string line_ctx(const std::string& path, int line_no) {
    return path + " line " + std::to_string(line_no);
}

Role parse_role(const std::string& s, const std::string& ctx) {
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw data_error("manifest: unknown role \"" + s + "\" at " + ctx);
}

}  // namespace

ManifestData load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest " + path);
    const fs::path base = fs::path(path).parent_path();

    ManifestData out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string ctx = line_ctx(path, line_no);

        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw data_error("manifest: invalid JSON at " + ctx + ": " + e.what());
        }
        if (!j.is_object()) throw data_error("manifest: record is not an object at " + ctx);

        const bool has_caption = j.contains("caption");
        const bool has_turns = j.contains("turns");
        if (has_caption == has_turns)
            throw data_error("manifest: record needs exactly one of {caption, turns} at " + ctx);

        try {
            if (has_caption) {
                if (!j.contains("image"))
                    throw data_error("missing \"image\"");
                CaptionRecord rec;
                rec.caption = j.at("caption").get<std::string>();
                if (rec.caption.empty()) throw data_error("empty caption");
                const std::string rel = j.at("image").get<std::string>();
                rec.image.path = (base / rel).string();
                rec.image.inline_image = read_image(rec.image.path);
                out.captions.push_back(std::move(rec));
            } else {
                ConversationRecord rec;
                for (const json& t : j.at("turns")) {
                    Turn turn;
                    turn.role = parse_role(t.at("role").get<std::string>(), ctx);
                    turn.text = t.at("text").get<std::string>();
                    rec.turns.push_back(std::move(turn));
                }
                if (j.contains("image") && !j.at("image").is_null()) {
                    ImageRef ref;
                    const std::string rel = j.at("image").get<std::string>();
                    ref.path = (base / rel).string();
                    ref.inline_image = read_image(ref.path);
                    rec.image = std::move(ref);
                    rec.modality = Modality::multimodal;
                } else {
                    rec.modality = Modality::text_only;
                }
                rec.validate();
                out.conversations.push_back(std::move(rec));
            }
        } catch (const json::exception& e) {
            throw data_error("manifest: bad record at " + ctx + ": " + e.what());
        } catch (const data_error& e) {
            throw data_error("manifest: bad record at " + ctx + ": " + e.what());
        } catch (const format_error& e) {
            throw data_error("manifest: bad image at " + ctx + ": " + e.what());
        }
    }
    return out;
}

namespace {

std::string store_image(const fs::path& dir, int index, const ImageRef& ref) {
    const fs::path images = dir / "images";
    fs::create_directories(images);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%06d.ppm", index);
    const fs::path full = images / name;
    write_ppm(full.string(), ref.load());
    return (fs::path("images") / name).string();
}

}  // namespace

void save_caption_manifest(const std::string& dir, const std::string& manifest_name,
                           const std::vector<CaptionRecord>& records) {
    fs::create_directories(dir);
    std::ofstream out(fs::path(dir) / manifest_name);
    if (!out) throw io_error("cannot write manifest in " + dir);
    int index = 0;
    for (const CaptionRecord& rec : records) {
        json j;
        j["image"] = store_image(dir, index++, rec.image);
        j["caption"] = rec.caption;
        out << j.dump() << "\n";
    }
    if (!out) throw io_error("short write to manifest in " + dir);
}

void save_conversation_manifest(const std::string& dir, const std::string& manifest_name,
                                const std::vector<ConversationRecord>& records) {
    fs::create_directories(dir);
    std::ofstream out(fs::path(dir) / manifest_name);
    if (!out) throw io_error("cannot write manifest in " + dir);
    int index = 0;
    for (const ConversationRecord& rec : records) {
        json j;
        json turns = json::array();
        for (const Turn& t : rec.turns) {
            turns.push_back({{"role", t.role == Role::user ? "user" : "assistant"},
                             {"text", t.text}});
        }
        j["turns"] = std::move(turns);
        if (rec.modality == Modality::multimodal)
            j["image"] = store_image(dir, index, *rec.image);
        out << j.dump() << "\n";
        ++index;
    }
    if (!out) throw io_error("short write to manifest in " + dir);
}

}  // namespace owlet

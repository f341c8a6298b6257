// SPDX-License-Identifier: Apache-2.0

#include "owlet/synth.h"

#include <cmath>

#include "owlet/errors.h"

namespace owlet::synth {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Tiny deterministic stream over (seed, index).
struct Draw {
    std::uint64_t state;
    Draw(std::uint64_t seed, std::uint64_t index, std::uint64_t stream)
        : state(splitmix64(seed ^ splitmix64(index * 0x2545f4914f6cdd1dull + stream))) {}
    std::uint64_t next() {
        state = splitmix64(state);
        return state;
    }
    int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
};

void check_grid(int grid) {
    if (grid != 2 && grid != 3)
        throw contract_error("synth: grid must be 2 or 3, got " + std::to_string(grid));
}

}  // namespace

const char* shape_name(ShapeKind s) {
    switch (s) {
        case ShapeKind::circle: return "circle";
        case ShapeKind::square: return "square";
        case ShapeKind::triangle: return "triangle";
    }
    return "?";
}

const char* color_name(Color c) {
    switch (c) {
        case Color::red: return "red";
        case Color::green: return "green";
        case Color::blue: return "blue";
    }
    return "?";
}

Scene scene_for(std::uint64_t seed, std::uint64_t index, int grid, int force_objects) {
    check_grid(grid);
    Draw d(seed, index, 0x5ce7e);
    Scene scene{grid, {}};
    const int count = force_objects > 0 ? force_objects : 1 + d.below(2);
    const int cells = grid * grid;
    int first_cell = -1;
    for (int i = 0; i < count; ++i) {
        int cell = d.below(cells);
        if (cell == first_cell) cell = (cell + 1) % cells;
        if (first_cell < 0) first_cell = cell;
        SceneObject obj;
        obj.shape = static_cast<ShapeKind>(d.below(3));
        obj.color = static_cast<Color>(d.below(3));
        obj.cell_x = cell % grid;
        obj.cell_y = cell / grid;
        scene.objects.push_back(obj);
    }
    return scene;
}

std::string caption_for(const Scene& scene) {
    auto phrase = [](const SceneObject& o) {
        return std::string("a ") + color_name(o.color) + " " + shape_name(o.shape);
    };
    if (scene.objects.size() == 1) return phrase(scene.objects[0]);
    if (scene.objects.size() == 2) {
        const SceneObject& a = scene.objects[0];
        const SceneObject& b = scene.objects[1];
        std::string rel;
        if (a.cell_y == b.cell_y) {
            rel = a.cell_x < b.cell_x ? "left of" : "right of";
        } else {
            rel = a.cell_y < b.cell_y ? "above" : "below";
        }
        return phrase(a) + " " + rel + " " + phrase(b);
    }
    throw contract_error("caption_for: scenes carry 1 or 2 objects");
}

ImageTensor render_scene(const Scene& scene, int image_size) {
    check_grid(scene.grid);
    if (image_size < scene.grid * 4)
        throw contract_error("render_scene: image_size too small for grid");
    ImageTensor img{image_size, image_size,
                    std::vector<float>(static_cast<size_t>(image_size) * image_size * 3, 0.0f)};
    const int cs = image_size / scene.grid;
    for (const SceneObject& o : scene.objects) {
        const int x0 = o.cell_x * cs, y0 = o.cell_y * cs;
        const float r = static_cast<float>(cs) * 0.35f;
        const float cx = static_cast<float>(x0) + static_cast<float>(cs) * 0.5f;
        const float cy = static_cast<float>(y0) + static_cast<float>(cs) * 0.5f;
        const int inset = std::max(1, static_cast<int>(std::lround(cs * 0.15)));
        const int channel = static_cast<int>(o.color);
        for (int y = y0; y < y0 + cs; ++y) {
            for (int x = x0; x < x0 + cs; ++x) {
                bool on = false;
                switch (o.shape) {
                    case ShapeKind::circle: {
                        const float dx = static_cast<float>(x) + 0.5f - cx;
                        const float dy = static_cast<float>(y) + 0.5f - cy;
                        on = dx * dx + dy * dy <= r * r;
                        break;
                    }
                    case ShapeKind::square:
                        on = x >= x0 + inset && x < x0 + cs - inset && y >= y0 + inset &&
                             y < y0 + cs - inset;
                        break;
                    case ShapeKind::triangle: {
                        if (y < y0 + inset || y >= y0 + cs - inset) break;
                        const float t = static_cast<float>(y - y0 - inset) /
                                        static_cast<float>(cs - 2 * inset);
                        const float half = t * static_cast<float>(cs - 2 * inset) * 0.5f;
                        const float dx = static_cast<float>(x) + 0.5f - cx;
                        on = dx >= -half && dx <= half;
                        break;
                    }
                }
                if (on) img.at(y, x, channel) = 1.0f;
            }
        }
    }
    return img;
}

std::vector<CaptionRecord> synth_shapes_dataset(std::uint64_t seed, int n, int grid,
                                                int image_size) {
    check_grid(grid);
    if (n < 1) throw contract_error("synth_shapes_dataset: n must be at least 1");
    std::vector<CaptionRecord> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Scene scene = scene_for(seed, static_cast<std::uint64_t>(i), grid);
        CaptionRecord rec;
        rec.image.inline_image = render_scene(scene, image_size);
        rec.caption = caption_for(scene);
        out.push_back(std::move(rec));
    }
    return out;
}

namespace {

struct TextTemplate {
    std::string question;
    std::string answer;
};

const char* kEchoWords[] = {"red",  "green", "blue", "circle", "square", "triangle",
                            "owl",  "moon",  "star", "sun",    "tree",   "fish"};

TextTemplate text_sample(Draw& d) {
    switch (d.below(3)) {
        case 0: {
            const std::string w = kEchoWords[d.below(12)];
            return {"say " + w, w};
        }
        case 1: {
            const std::string w = kEchoWords[d.below(12)];
            return {"repeat the word " + w, w};
        }
        default:
            return {"hello", "hi there"};
    }
}

}  // namespace

std::vector<InstructionSample> synth_instruction_samples(std::uint64_t seed, int n,
                                                         double text_mix, int grid,
                                                         int image_size) {
    check_grid(grid);
    if (n < 1) throw contract_error("synth_instruction_samples: n must be at least 1");
    if (text_mix < 0.0 || text_mix > 1.0)
        throw contract_error("synth_instruction_samples: text_mix must lie in [0,1]");

    std::vector<InstructionSample> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        // Exactly floor(n*text_mix) text-only records, interleaved.
        const bool text_only = std::floor((i + 1) * text_mix) > std::floor(i * text_mix);
        Draw d(seed, static_cast<std::uint64_t>(i), 0x1715);
        InstructionSample sample;
        if (text_only) {
            const TextTemplate t = text_sample(d);
            sample.record.modality = Modality::text_only;
            sample.record.turns = {{Role::user, t.question}, {Role::assistant, t.answer}};
        } else {
            const int kind = d.below(5);
            const int objects = kind == 4 ? 1 + d.below(2) : 1;
            const Scene scene = scene_for(seed ^ 0xabcdefull, static_cast<std::uint64_t>(i), grid,
                                          objects);
            const SceneObject& o = scene.objects[0];
            std::vector<Turn> turns;
            switch (kind) {
                case 0:
                    turns = {{Role::user, "what is in the image?"},
                             {Role::assistant, caption_for(scene)}};
                    break;
                case 1:
                    turns = {{Role::user, std::string("what color is the ") + shape_name(o.shape) + "?"},
                             {Role::assistant, color_name(o.color)}};
                    break;
                case 2:
                    turns = {{Role::user, std::string("what shape is the ") + color_name(o.color) +
                                              " object?"},
                             {Role::assistant, shape_name(o.shape)}};
                    break;
                case 3:
                    // two rounds: describe, then a follow-up reference
                    turns = {{Role::user, "what is in the image?"},
                             {Role::assistant, caption_for(scene)},
                             {Role::user, "what color is it?"},
                             {Role::assistant, color_name(o.color)}};
                    break;
                default:
                    turns = {{Role::user, "how many objects are in the image?"},
                             {Role::assistant, scene.objects.size() == 1 ? "one" : "two"}};
                    break;
            }
            sample.record.modality = Modality::multimodal;
            sample.record.turns = std::move(turns);
            ImageRef ref;
            ref.inline_image = render_scene(scene, image_size);
            sample.record.image = std::move(ref);
            sample.has_scene = true;
            sample.scene = scene;
        }
        sample.record.validate();
        out.push_back(std::move(sample));
    }
    return out;
}

std::vector<ConversationRecord> synth_instruction_dataset(std::uint64_t seed, int n,
                                                          double text_mix, int grid,
                                                          int image_size) {
    std::vector<ConversationRecord> out;
    for (auto& s : synth_instruction_samples(seed, n, text_mix, grid, image_size))
        out.push_back(std::move(s.record));
    return out;
}

std::vector<QaItem> qa_eval_set(std::uint64_t seed, int n, int grid, int image_size) {
    check_grid(grid);
    std::vector<QaItem> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Scene scene = scene_for(seed ^ 0xe7a1ull, static_cast<std::uint64_t>(i), grid, 1);
        QaItem item;
        item.scene = scene;
        item.image = render_scene(scene, image_size);
        item.question = "what is in the image?";
        item.answer = caption_for(scene);
        out.push_back(std::move(item));
    }
    return out;
}

}  // namespace owlet::synth

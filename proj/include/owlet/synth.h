// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "owlet/data.h"

namespace owlet::synth {

enum class ShapeKind { circle, square, triangle };
enum class Color { red, green, blue };

const char* shape_name(ShapeKind s);
const char* color_name(Color c);

struct SceneObject {
    ShapeKind shape;
    Color color;
    int cell_x;
    int cell_y;
};

struct Scene {
    int grid;
    std::vector<SceneObject> objects;
};

// Deterministic scene for (seed, index). force_objects: 0 draws 1 or 2,
// otherwise pins the object count.
Scene scene_for(std::uint64_t seed, std::uint64_t index, int grid, int force_objects = 0);

// Exhaustive deterministic description: "a red circle" or
// "a red circle above a blue square" (relation from cell layout, vertical
// wins on diagonals).
std::string caption_for(const Scene& scene);

// Crisp shapes on a black background; pixel values are exactly 0 or 1 so the
// 8-bit PPM round trip is lossless.
ImageTensor render_scene(const Scene& scene, int image_size);

std::vector<CaptionRecord> synth_shapes_dataset(std::uint64_t seed, int n, int grid,
                                                int image_size = 32);

// One instruction record plus the ground truth it was generated from.
struct InstructionSample {
    ConversationRecord record;
    bool has_scene = false;
    Scene scene{};  // meaningful for multimodal samples
};

// Mix of text-only echo/QA templates and image-grounded QA. A fraction
// text_mix of the n records is text-only, split deterministically.
std::vector<InstructionSample> synth_instruction_samples(std::uint64_t seed, int n,
                                                         double text_mix = 0.5, int grid = 2,
                                                         int image_size = 32);

std::vector<ConversationRecord> synth_instruction_dataset(std::uint64_t seed, int n,
                                                          double text_mix = 0.5, int grid = 2,
                                                          int image_size = 32);

// Held-out single-object QA items for exact-match evaluation.
struct QaItem {
    ImageTensor image;
    std::string question;
    std::string answer;
    Scene scene;
};

std::vector<QaItem> qa_eval_set(std::uint64_t seed, int n, int grid = 2, int image_size = 32);

}  // namespace owlet::synth

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "owlet/data.h"
#include "owlet/vocab.h"

namespace owlet {

// Frozen chat template strings. The rendered layout is
//   [<image>\n]  USER: {text}\n  ASSISTANT: {text}</s>  USER: ...
// with the loss mask set on assistant text tokens and their closing </s>.
namespace chat {
inline constexpr const char* kUserPrefix = "USER: ";
inline constexpr const char* kUserSuffix = "\n";
inline constexpr const char* kAssistantPrefix = "ASSISTANT: ";
inline constexpr const char* kImageSuffix = "\n";
}  // namespace chat

struct RenderedExample {
    std::vector<int> tokens;
    std::vector<std::uint8_t> loss_mask;       // 1 exactly on response tokens + their EOS
    std::optional<int> image_slot;             // index of the IMAGE placeholder
    std::optional<ImageTensor> image;          // pixels ride along for collation

    int length() const { return static_cast<int>(tokens.size()); }
};

// Renders a full conversation for training. Truncates from the right to
// max_len (the image slot sits at position 0 and survives). Throws
// empty_loss_error if no supervised token remains.
RenderedExample render_conversation(const ConversationRecord& rec, const Vocabulary& vocab,
                                    int max_len);

// Renders a generation prompt: history must end with a user turn; the
// trailing "ASSISTANT: " prefix is appended, nothing is masked.
RenderedExample render_prompt(const std::vector<Turn>& turns, const std::optional<ImageRef>& image,
                              const Vocabulary& vocab, int max_len);

// Right-padded batch. Loss mask is zero on padding; per-example image slots
// and pixels are preserved.
struct CollatedBatch {
    int rows = 0;
    int width = 0;
    std::vector<std::vector<int>> tokens;
    std::vector<std::vector<std::uint8_t>> loss_mask;
    std::vector<std::optional<int>> image_slot;
    std::vector<std::optional<ImageTensor>> images;
    std::vector<int> lengths;  // unpadded lengths
};

CollatedBatch collate(const std::vector<RenderedExample>& batch, int pad_id, int max_len);

}  // namespace owlet

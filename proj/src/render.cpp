// SPDX-License-Identifier: Apache-2.0

#include "owlet/render.h"

#include <algorithm>

#include "owlet/errors.h"

namespace owlet {

ImageTensor ImageRef::load() const {
    if (inline_image.has_value()) return *inline_image;
    if (!path.empty()) return read_image(path);
    throw contract_error("ImageRef: neither inline image nor path present");
}

void ConversationRecord::validate() const {
    if (turns.empty()) throw data_error("conversation: no turns");
    for (size_t i = 0; i < turns.size(); ++i) {
        const Role expect = (i % 2 == 0) ? Role::user : Role::assistant;
        if (turns[i].role != expect)
            throw data_error("conversation: roles must alternate starting with user (turn " +
                             std::to_string(i) + ")");
    }
    if (turns.back().role != Role::assistant)
        throw data_error("conversation: final turn must be assistant");
    const bool has_image = image.has_value() && !image->empty();
    if (modality == Modality::multimodal && !has_image)
        throw data_error("conversation: multimodal record without image");
    if (modality == Modality::text_only && has_image)
        throw data_error("conversation: text-only record carries an image");
}

namespace {

struct Assembly {
    std::vector<int> tokens;
    std::vector<std::uint8_t> mask;

    void text(const Vocabulary& vocab, const std::string& s, std::uint8_t m) {
        for (int id : vocab.encode(s)) {
            tokens.push_back(id);
            mask.push_back(m);
        }
    }
    void control(int id, std::uint8_t m) {
        tokens.push_back(id);
        mask.push_back(m);
    }
};

void assemble_history(Assembly& a, const std::vector<Turn>& turns, const Vocabulary& vocab) {
    for (const Turn& t : turns) {
        if (t.role == Role::user) {
            a.text(vocab, std::string(chat::kUserPrefix) + t.text + chat::kUserSuffix, 0);
        } else {
            a.text(vocab, chat::kAssistantPrefix, 0);
            a.text(vocab, t.text, 1);
            a.control(Vocabulary::kEos, 1);
        }
    }
}

}  // namespace

RenderedExample render_conversation(const ConversationRecord& rec, const Vocabulary& vocab,
                                    int max_len) {
    if (max_len < 1) throw contract_error("render_conversation: max_len must be positive");
    rec.validate();

    Assembly a;
    RenderedExample out;
    if (rec.modality == Modality::multimodal) {
        a.control(Vocabulary::kImage, 0);
        a.text(vocab, chat::kImageSuffix, 0);
        out.image_slot = 0;
        out.image = rec.image->load();
    }
    assemble_history(a, rec.turns, vocab);

    if (static_cast<int>(a.tokens.size()) > max_len) {
        a.tokens.resize(static_cast<size_t>(max_len));
        a.mask.resize(static_cast<size_t>(max_len));
    }
    if (std::find(a.mask.begin(), a.mask.end(), std::uint8_t(1)) == a.mask.end())
        throw empty_loss_error("render_conversation: no supervised tokens remain after rendering");

    out.tokens = std::move(a.tokens);
    out.loss_mask = std::move(a.mask);
    return out;
}

RenderedExample render_prompt(const std::vector<Turn>& turns, const std::optional<ImageRef>& image,
                              const Vocabulary& vocab, int max_len) {
    if (max_len < 1) throw contract_error("render_prompt: max_len must be positive");
    if (turns.empty() || turns.back().role != Role::user)
        throw contract_error("render_prompt: history must end with a user turn");

    Assembly a;
    RenderedExample out;
    if (image.has_value() && !image->empty()) {
        a.control(Vocabulary::kImage, 0);
        a.text(vocab, chat::kImageSuffix, 0);
        out.image_slot = 0;
        out.image = image->load();
    }
    assemble_history(a, turns, vocab);
    a.text(vocab, chat::kAssistantPrefix, 0);

    if (static_cast<int>(a.tokens.size()) > max_len)
        throw length_error("render_prompt: prompt of " + std::to_string(a.tokens.size()) +
                           " tokens exceeds max_len " + std::to_string(max_len));

    out.tokens = std::move(a.tokens);
    out.loss_mask = std::move(a.mask);
    return out;
}

CollatedBatch collate(const std::vector<RenderedExample>& batch, int pad_id, int max_len) {
    if (batch.empty()) throw contract_error("collate: empty batch");
    CollatedBatch out;
    out.rows = static_cast<int>(batch.size());
    for (const RenderedExample& ex : batch) {
        if (ex.length() > max_len)
            throw contract_error("collate: example of " + std::to_string(ex.length()) +
                                 " tokens exceeds max_len " + std::to_string(max_len) +
                                 " (render is responsible for truncation)");
        out.width = std::max(out.width, ex.length());
    }
    for (const RenderedExample& ex : batch) {
        std::vector<int> toks = ex.tokens;
        std::vector<std::uint8_t> mask = ex.loss_mask;
        toks.resize(static_cast<size_t>(out.width), pad_id);
        mask.resize(static_cast<size_t>(out.width), 0);
        out.tokens.push_back(std::move(toks));
        out.loss_mask.push_back(std::move(mask));
        out.image_slot.push_back(ex.image_slot);
        out.images.push_back(ex.image);
        out.lengths.push_back(ex.length());
    }
    return out;
}

}  // namespace owlet

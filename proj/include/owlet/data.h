// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "owlet/image.h"

namespace owlet {

// Image carried inline or by path; manifests resolve paths at load time.
struct ImageRef {
    std::optional<ImageTensor> inline_image;
    std::string path;

    ImageTensor load() const;
    bool empty() const { return !inline_image.has_value() && path.empty(); }
};

struct CaptionRecord {
    ImageRef image;
    std::string caption;
};

enum class Role { user, assistant };
enum class Modality { text_only, multimodal };

struct Turn {
    Role role;
    std::string text;
};

struct ConversationRecord {
    std::vector<Turn> turns;
    std::optional<ImageRef> image;
    Modality modality = Modality::text_only;

    // Roles strictly alternate starting with user, final turn is assistant,
    // image present iff multimodal. Throws data_error otherwise.
    void validate() const;
};

}  // namespace owlet

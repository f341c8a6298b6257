// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "owlet/data.h"

namespace owlet {

// Line-delimited records, one JSON object per line:
//   {"image": "rel/path.ppm", "caption": "..."}                caption record
//   {"turns": [{"role": "user", "text": "..."}, ...],
//    "image": "rel/path.ppm"?}                                 conversation
// Image paths resolve relative to the manifest location and are decoded at
// load time. Malformed lines raise data_error citing the line number.
struct ManifestData {
    std::vector<CaptionRecord> captions;
    std::vector<ConversationRecord> conversations;

    size_t total() const { return captions.size() + conversations.size(); }
};

ManifestData load_manifest(const std::string& path);

// Writers used by the synth-data subcommand: images land as PPM files under
// <dir>/images, the manifest references them relatively.
void save_caption_manifest(const std::string& dir, const std::string& manifest_name,
                           const std::vector<CaptionRecord>& records);
void save_conversation_manifest(const std::string& dir, const std::string& manifest_name,
                                const std::vector<ConversationRecord>& records);

}  // namespace owlet

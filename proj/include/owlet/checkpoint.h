// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: magic "MOWL", version, a structured-text manifest of
// named parameter groups, then a raw little-endian float32 payload. The
// save -> load round trip is bit-exact; loading against a model whose config
// echo differs fails loudly.
#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "owlet/adamw.h"
#include "owlet/model.h"

namespace owlet {

inline constexpr char kCheckpointMagic[4] = {'M', 'O', 'W', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::int64_t step = 0;
    std::string stage;
    nlohmann::json config_echo;  // model dims + lora layout
};

// Serializes all model parameter groups plus, when `optim` is given, its
// first/second-moment buffers and step counter.
void save_checkpoint(const std::string& path, MultimodalModel<float>& model,
                     const AdamW* optim, const CheckpointMeta& meta);

struct LoadedCheckpoint {
    std::int64_t step = 0;
    std::string stage;
    bool has_optimizer = false;
    nlohmann::json config_echo;
};

// Restores parameters into `model` (shapes and names must match exactly).
// When `optim` is non-null the optimizer state is restored too and must be
// present in the file. `expected_config`, when non-null, is compared against
// the stored config echo.
LoadedCheckpoint load_checkpoint(const std::string& path, MultimodalModel<float>& model,
                                 AdamW* optim, const nlohmann::json* expected_config);

}  // namespace owlet

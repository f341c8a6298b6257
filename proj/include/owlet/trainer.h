// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training: stage 1 trains the vision encoder and abstractor
// against captions with the LM base frozen; stage 2 freezes vision and the
// LM base and trains the abstractor plus LoRA adapters on mixed text-only
// and multimodal instruction batches accumulated into single optimizer
// steps.
#pragma once

#include <map>
#include <optional>

#include "owlet/adamw.h"
#include "owlet/checkpoint.h"
#include "owlet/model.h"
#include "owlet/schedule.h"
#include "owlet/synth.h"

namespace owlet {

// Declarative trainable/frozen assignment per parameter group.
struct FreezePlan {
    std::map<std::string, bool> trainable;

    static FreezePlan stage1() {
        return FreezePlan{{{"vision", true}, {"abstractor", true}, {"lm", false}, {"lora", false}}};
    }
    static FreezePlan stage2() {
        return FreezePlan{{{"vision", false}, {"abstractor", true}, {"lm", false}, {"lora", true}}};
    }

    void apply(MultimodalModel<float>& model) const;

    // Parameters of trainable groups, in deterministic visit order.
    std::vector<std::pair<std::string, Tensor<float>*>> trainable_params(
        MultimodalModel<float>& model) const;
};

struct MetricsRecord {
    std::int64_t step;
    std::string stage;
    double loss;
    double lr;
};

// Line-delimited {step, stage, loss, lr} records, optionally mirrored to a
// file. Appends flush per record.
class MetricsLog {
public:
    MetricsLog() = default;
    explicit MetricsLog(const std::string& path);
    void append(const MetricsRecord& rec);
    const std::vector<MetricsRecord>& records() const { return records_; }

private:
    std::string path_;
    std::vector<MetricsRecord> records_;
};

// Deterministic epoch-reshuffled batch selection: position p = step*batch+i
// maps into a permutation of the dataset seeded by (seed, epoch).
std::vector<size_t> batch_indices(std::uint64_t seed, size_t dataset_size, int batch_size,
                                  std::int64_t step);

// Accumulates gradients over all text and multimodal micro-batches with the
// loss scaled by 1/(n_text + n_mm), then applies exactly one optimizer step.
// Returns the mean loss over micro-batches. Gradients are zeroed on entry;
// an empty-loss error from any micro-batch aborts the step before the
// optimizer runs.
double accumulate_mixed(MultimodalModel<float>& model, AdamW& optim,
                        const std::vector<std::vector<RenderedExample>>& text_batches,
                        const std::vector<std::vector<RenderedExample>>& mm_batches, double lr);

struct TrainResult {
    std::vector<double> losses;  // one per step run
};

// Stage 1: captions rendered as single-turn conversations (empty prompt,
// caption as the response) through the shared template machinery.
class Stage1Runner {
public:
    Stage1Runner(MultimodalModel<float>& model, const std::vector<CaptionRecord>& data,
                 const Vocabulary& vocab, StageConfig cfg);

    double run_step(std::int64_t step);
    TrainResult run(std::int64_t from, std::int64_t to, MetricsLog* log);
    AdamW& optimizer() { return optim_; }
    const StageConfig& config() const { return cfg_; }

private:
    MultimodalModel<float>& model_;
    StageConfig cfg_;
    std::vector<RenderedExample> rendered_;
    AdamW optim_;
};

// Stage 2: joint instruction tuning over text-only and multimodal records.
// LoRA must already be attached.
class Stage2Runner {
public:
    Stage2Runner(MultimodalModel<float>& model, const std::vector<ConversationRecord>& text_data,
                 const std::vector<ConversationRecord>& mm_data, const Vocabulary& vocab,
                 StageConfig cfg);

    double run_step(std::int64_t step);
    TrainResult run(std::int64_t from, std::int64_t to, MetricsLog* log);
    AdamW& optimizer() { return optim_; }
    const StageConfig& config() const { return cfg_; }

private:
    std::vector<RenderedExample> gather(const std::vector<RenderedExample>& pool, int batch,
                                        std::uint64_t stream, std::int64_t step) const;

    MultimodalModel<float>& model_;
    StageConfig cfg_;
    std::vector<RenderedExample> text_;
    std::vector<RenderedExample> mm_;
    AdamW optim_;
};

// Convenience single-call stages.
TrainResult run_stage1(MultimodalModel<float>& model, const std::vector<CaptionRecord>& data,
                       const Vocabulary& vocab, const StageConfig& cfg, MetricsLog* log);
TrainResult run_stage2(MultimodalModel<float>& model,
                       const std::vector<ConversationRecord>& text_data,
                       const std::vector<ConversationRecord>& mm_data, const Vocabulary& vocab,
                       const StageConfig& cfg, MetricsLog* log);

// Greedy exact-match accuracy on held-out image QA.
double qa_exact_match(const MultimodalModel<float>& model, const Vocabulary& vocab,
                      const std::vector<synth::QaItem>& items, int max_len, int max_new = 48);

// Renders a caption record for stage 1: empty user turn, caption response.
RenderedExample render_caption_example(const CaptionRecord& rec, const Vocabulary& vocab,
                                       int max_len);

}  // namespace owlet

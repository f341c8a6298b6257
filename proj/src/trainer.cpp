// SPDX-License-Identifier: Apache-2.0

#include "owlet/trainer.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

namespace owlet {

void FreezePlan::apply(MultimodalModel<float>& model) const {
    for (const std::string& g : parameter_groups()) {
        auto it = trainable.find(g);
        const bool on = it != trainable.end() && it->second;
        model.visit_group(g, [on](const std::string&, Tensor<float>& t) {
            t.set_requires_grad(on);
            if (!on) t.zero_grad();
        });
    }
}

std::vector<std::pair<std::string, Tensor<float>*>> FreezePlan::trainable_params(
    MultimodalModel<float>& model) const {
    std::vector<std::pair<std::string, Tensor<float>*>> out;
    for (const std::string& g : parameter_groups()) {
        auto it = trainable.find(g);
        if (it == trainable.end() || !it->second) continue;
        model.visit_group(g, [&](const std::string& name, Tensor<float>& t) {
            out.emplace_back(name, &t);
        });
    }
    return out;
}

MetricsLog::MetricsLog(const std::string& path) : path_(path) {
    if (!path_.empty()) {
        std::ofstream out(path_, std::ios::trunc);
        if (!out) throw io_error("cannot open metrics log " + path_);
    }
}

void MetricsLog::append(const MetricsRecord& rec) {
    records_.push_back(rec);
    if (path_.empty()) return;
    nlohmann::json j;
    j["step"] = rec.step;
    j["stage"] = rec.stage;
    j["loss"] = rec.loss;
    j["lr"] = rec.lr;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw io_error("cannot append to metrics log " + path_);
    out << j.dump() << "\n";
}

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::vector<size_t> epoch_perm(std::uint64_t seed, size_t n, std::int64_t epoch) {
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), size_t(0));
    std::mt19937_64 rng(mix64(seed ^ mix64(static_cast<std::uint64_t>(epoch) + 1)));
    for (size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
    return perm;
}

}  // namespace

std::vector<size_t> batch_indices(std::uint64_t seed, size_t dataset_size, int batch_size,
                                  std::int64_t step) {
    if (dataset_size == 0) throw contract_error("batch_indices: empty dataset");
    std::vector<size_t> out;
    out.reserve(static_cast<size_t>(batch_size));
    std::int64_t epoch = -1;
    std::vector<size_t> perm;
    for (int i = 0; i < batch_size; ++i) {
        const std::int64_t pos = step * batch_size + i;
        const std::int64_t e = pos / static_cast<std::int64_t>(dataset_size);
        if (e != epoch) {
            epoch = e;
            perm = epoch_perm(seed, dataset_size, e);
        }
        out.push_back(perm[static_cast<size_t>(pos % static_cast<std::int64_t>(dataset_size))]);
    }
    return out;
}

namespace {

// Forward/backward one micro-batch; the per-example loss is scaled so the
// final accumulated gradient is the gradient of the mean loss over
// micro-batches (each itself a mean over its examples).
double micro_batch_backward(MultimodalModel<float>& model,
                            const std::vector<RenderedExample>& batch, double inv_micro_count) {
    double total = 0;
    const double w = inv_micro_count / static_cast<double>(batch.size());
    for (const RenderedExample& ex : batch) {
        Tape<float> tape;
        TapeScope<float> scope(tape);
        Tensor<float> loss = model.example_loss(ex);
        Tensor<float> scaled = scale(loss, w);
        // a loss that never touched a trainable parameter has zero gradient
        if (scaled.requires_grad()) tape.backward(scaled);
        total += static_cast<double>(loss.value());
    }
    return total / static_cast<double>(batch.size());
}

}  // namespace

double accumulate_mixed(MultimodalModel<float>& model, AdamW& optim,
                        const std::vector<std::vector<RenderedExample>>& text_batches,
                        const std::vector<std::vector<RenderedExample>>& mm_batches, double lr) {
    const size_t micro = text_batches.size() + mm_batches.size();
    if (micro == 0) throw contract_error("accumulate_mixed: need at least one micro-batch");
    for (const auto& b : text_batches)
        if (b.empty()) throw contract_error("accumulate_mixed: empty text micro-batch");
    for (const auto& b : mm_batches)
        if (b.empty()) throw contract_error("accumulate_mixed: empty multimodal micro-batch");

    optim.zero_grad();
    const double inv = 1.0 / static_cast<double>(micro);
    double loss_sum = 0;
    // text micro-batches first, then multimodal; order is irrelevant under
    // additive accumulation
    for (const auto& b : text_batches) loss_sum += micro_batch_backward(model, b, inv);
    for (const auto& b : mm_batches) loss_sum += micro_batch_backward(model, b, inv);
    optim.step(lr);
    return loss_sum * inv;
}

RenderedExample render_caption_example(const CaptionRecord& rec, const Vocabulary& vocab,
                                       int max_len) {
    ConversationRecord conv;
    conv.turns = {{Role::user, ""}, {Role::assistant, rec.caption}};
    conv.modality = Modality::multimodal;
    conv.image = rec.image;
    return render_conversation(conv, vocab, max_len);
}

Stage1Runner::Stage1Runner(MultimodalModel<float>& model, const std::vector<CaptionRecord>& data,
                           const Vocabulary& vocab, StageConfig cfg)
    : model_(model),
      cfg_(std::move(cfg)),
      optim_({}, AdamWConfig{}) {
    cfg_.validate();
    if (data.empty()) throw contract_error("stage1: empty caption dataset");
    rendered_.reserve(data.size());
    for (const CaptionRecord& rec : data)
        rendered_.push_back(render_caption_example(rec, vocab, cfg_.max_len));

    FreezePlan plan = FreezePlan::stage1();
    plan.apply(model_);
    optim_ = AdamW(plan.trainable_params(model_),
                   AdamWConfig{cfg_.beta1, cfg_.beta2, cfg_.eps, cfg_.weight_decay});
}

double Stage1Runner::run_step(std::int64_t step) {
    const double lr = lr_at(step, cfg_);
    std::vector<RenderedExample> batch;
    for (size_t idx : batch_indices(cfg_.seed, rendered_.size(), cfg_.batch_size, step))
        batch.push_back(rendered_[idx]);
    // collate keeps the batch contract honest; rows are trimmed back to
    // their unpadded lengths since padding carries no loss
    CollatedBatch cb = collate(batch, Vocabulary::kPad, cfg_.max_len);
    std::vector<RenderedExample> rows;
    rows.reserve(static_cast<size_t>(cb.rows));
    for (int r = 0; r < cb.rows; ++r) {
        RenderedExample ex;
        const size_t len = static_cast<size_t>(cb.lengths[static_cast<size_t>(r)]);
        ex.tokens.assign(cb.tokens[static_cast<size_t>(r)].begin(),
                         cb.tokens[static_cast<size_t>(r)].begin() + len);
        ex.loss_mask.assign(cb.loss_mask[static_cast<size_t>(r)].begin(),
                            cb.loss_mask[static_cast<size_t>(r)].begin() + len);
        ex.image_slot = cb.image_slot[static_cast<size_t>(r)];
        ex.image = cb.images[static_cast<size_t>(r)];
        rows.push_back(std::move(ex));
    }
    return accumulate_mixed(model_, optim_, {}, {rows}, lr);
}

TrainResult Stage1Runner::run(std::int64_t from, std::int64_t to, MetricsLog* log) {
    TrainResult result;
    for (std::int64_t step = from; step < to; ++step) {
        const double loss = run_step(step);
        result.losses.push_back(loss);
        if (log) log->append({step, cfg_.name, loss, lr_at(step, cfg_)});
    }
    return result;
}

Stage2Runner::Stage2Runner(MultimodalModel<float>& model,
                           const std::vector<ConversationRecord>& text_data,
                           const std::vector<ConversationRecord>& mm_data,
                           const Vocabulary& vocab, StageConfig cfg)
    : model_(model),
      cfg_(std::move(cfg)),
      optim_({}, AdamWConfig{}) {
    cfg_.validate();
    if (cfg_.text_accum > 0 && text_data.empty())
        throw contract_error("stage2: text micro-batches configured but no text data");
    if (cfg_.mm_accum > 0 && mm_data.empty())
        throw contract_error("stage2: multimodal micro-batches configured but no multimodal data");
    if (model_.lm.adapters.empty())
        throw contract_error("stage2: LoRA adapters must be attached before instruction tuning");

    for (const ConversationRecord& rec : text_data)
        text_.push_back(render_conversation(rec, vocab, cfg_.max_len));
    for (const ConversationRecord& rec : mm_data)
        mm_.push_back(render_conversation(rec, vocab, cfg_.max_len));

    FreezePlan plan = FreezePlan::stage2();
    plan.apply(model_);
    optim_ = AdamW(plan.trainable_params(model_),
                   AdamWConfig{cfg_.beta1, cfg_.beta2, cfg_.eps, cfg_.weight_decay});
}

std::vector<RenderedExample> Stage2Runner::gather(const std::vector<RenderedExample>& pool,
                                                  int batch, std::uint64_t stream,
                                                  std::int64_t step) const {
    std::vector<RenderedExample> out;
    for (size_t idx : batch_indices(cfg_.seed ^ stream, pool.size(), batch, step))
        out.push_back(pool[idx]);
    return out;
}

double Stage2Runner::run_step(std::int64_t step) {
    const double lr = lr_at(step, cfg_);
    std::vector<std::vector<RenderedExample>> text_batches, mm_batches;
    for (int i = 0; i < cfg_.text_accum; ++i)
        text_batches.push_back(gather(text_, cfg_.text_batch_size,
                                      0x7e87ull + static_cast<std::uint64_t>(i), step));
    for (int i = 0; i < cfg_.mm_accum; ++i)
        mm_batches.push_back(gather(mm_, cfg_.mm_batch_size,
                                    0x33ull + static_cast<std::uint64_t>(i), step));
    return accumulate_mixed(model_, optim_, text_batches, mm_batches, lr);
}

TrainResult Stage2Runner::run(std::int64_t from, std::int64_t to, MetricsLog* log) {
    TrainResult result;
    for (std::int64_t step = from; step < to; ++step) {
        const double loss = run_step(step);
        result.losses.push_back(loss);
        if (log) log->append({step, cfg_.name, loss, lr_at(step, cfg_)});
    }
    return result;
}

TrainResult run_stage1(MultimodalModel<float>& model, const std::vector<CaptionRecord>& data,
                       const Vocabulary& vocab, const StageConfig& cfg, MetricsLog* log) {
    Stage1Runner runner(model, data, vocab, cfg);
    return runner.run(0, cfg.total_steps, log);
}

TrainResult run_stage2(MultimodalModel<float>& model,
                       const std::vector<ConversationRecord>& text_data,
                       const std::vector<ConversationRecord>& mm_data, const Vocabulary& vocab,
                       const StageConfig& cfg, MetricsLog* log) {
    Stage2Runner runner(model, text_data, mm_data, vocab, cfg);
    return runner.run(0, cfg.total_steps, log);
}

double qa_exact_match(const MultimodalModel<float>& model, const Vocabulary& vocab,
                      const std::vector<synth::QaItem>& items, int max_len, int max_new) {
    if (items.empty()) throw contract_error("qa_exact_match: empty item set");
    int hits = 0;
    for (const synth::QaItem& item : items) {
        ImageRef ref;
        ref.inline_image = item.image;
        RenderedExample prompt =
            render_prompt({{Role::user, item.question}}, ref, vocab, max_len);
        DecodeConfig d;
        d.greedy = true;
        d.max_new = max_new;
        const std::vector<int> out = model.generate(prompt, d);
        if (vocab.decode(out) == item.answer) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(items.size());
}

}  // namespace owlet

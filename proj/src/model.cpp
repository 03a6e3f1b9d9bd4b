#include "ccnet/model.hpp"

namespace ccnet {

CcnetModel::CcnetModel(const ModelConfig& config, bool /*init*/) : config_(config) {
    Rng rng(derive_seed(config.seed, 0x1717));
    image_ = ImageExperts::create(params_, config.channels, config.intermediate_dim, config.d, rng);
    text_ = TextExperts::create(params_, config.word_dim, config.d, rng);
    comp_ = Composition::create(params_, config.d, config.fusion_rank, rng);
    corr_ = Correction::create(params_, config.d, config.share_diff_fc, rng);
}

CcnetModel::CcnetModel(const ModelConfig& config) : CcnetModel(config, true) {}

CcnetModel CcnetModel::from_checkpoint(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    auto need = [&](const std::string& name) -> const CheckpointTensor& {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) {
            throw DataError("checkpoint: not a model checkpoint, missing '" + name + "'");
        }
        return it->second;
    };
    ModelConfig config;
    const auto& characterize = need("experts.text.characterize");
    config.d = characterize.shape.at(1);
    config.channels = need("experts.image.e0.fc.weight").shape.at(1);
    config.intermediate_dim = need("experts.image.e1.fc.weight").shape.at(1);
    config.word_dim = need("experts.text.conv.kernel").shape.at(0);
    config.fusion_rank = 0;
    while (ckpt.tensors.count("composition.e0.fusion.u" + std::to_string(config.fusion_rank))) {
        ++config.fusion_rank;
    }
    config.share_diff_fc = ckpt.tensors.count("correction.diff_fc_ref.weight") == 0;
    CcnetModel model(config);
    apply_checkpoint(ckpt, model.params_);
    return model;
}

BankMatrices CcnetModel::image_banks(const std::vector<const PooledImage*>& images,
                                     const RunMode& mode) const {
    if (images.empty()) throw ContractError("image_banks: no images given");
    const std::int64_t n = static_cast<std::int64_t>(images.size());
    BankMatrices raw;
    for (int e = 0; e < kNumExperts; ++e) {
        const std::int64_t in = e == 1 ? config_.intermediate_dim : config_.channels;
        std::vector<double> values;
        values.reserve(static_cast<std::size_t>(n * in));
        for (const PooledImage* img : images) {
            const auto& vec = img->raw[e];
            if (static_cast<std::int64_t>(vec.size()) != in) {
                throw ShapeError("image_banks: pooled expert " + std::to_string(e) + " has " +
                                 std::to_string(vec.size()) + " values, expected " +
                                 std::to_string(in));
            }
            values.insert(values.end(), vec.begin(), vec.end());
        }
        raw[e] = Tensor::from_values({n, in}, std::move(values));
    }
    return image_.forward(raw, mode);
}

BankMatrices CcnetModel::caption_banks(const std::vector<std::vector<std::string>>& captions,
                                       const WordVectorTable& table, const RunMode& mode) const {
    if (captions.empty()) throw ContractError("caption_banks: no captions given");
    std::array<std::vector<TensorPtr>, kNumExperts> rows;
    for (const auto& tokens : captions) {
        CaptionEncoding enc = text_.encode(tokens, table, mode);
        for (int e = 0; e < kNumExperts; ++e) rows[e].push_back(enc.expert[e]);
    }
    BankMatrices out;
    for (int e = 0; e < kNumExperts; ++e) {
        out[e] = rows[e].size() == 1 ? rows[e][0] : ops::concat_rows(rows[e]);
    }
    return out;
}

BankMatrices CcnetModel::compose_banks(const BankMatrices& ref, const BankMatrices& text,
                                       const RunMode& mode) const {
    BankMatrices out;
    for (int e = 0; e < kNumExperts; ++e) out[e] = comp_.compose(ref[e], text[e], e, mode);
    return out;
}

TensorPtr CcnetModel::correction_scores(const BankMatrices& ref, const BankMatrices& candidates,
                                        const BankMatrices& text, const RunMode& mode) const {
    const std::int64_t n_q = ref[0]->rows();
    const std::int64_t n_c = candidates[0]->rows();
    if (text[0]->rows() != n_q) {
        throw ContractError("correction_scores: caption count " +
                            std::to_string(text[0]->rows()) + " does not match query count " +
                            std::to_string(n_q));
    }
    std::vector<std::int64_t> ref_idx, cand_idx;
    ref_idx.reserve(static_cast<std::size_t>(n_q * n_c));
    cand_idx.reserve(static_cast<std::size_t>(n_q * n_c));
    for (std::int64_t i = 0; i < n_q; ++i) {
        for (std::int64_t j = 0; j < n_c; ++j) {
            ref_idx.push_back(i);
            cand_idx.push_back(j);
        }
    }
    TensorPtr total;
    for (int e = 0; e < kNumExperts; ++e) {
        auto ref_rows = ops::gather_rows(ref[e], ref_idx);
        auto cand_rows = ops::gather_rows(candidates[e], cand_idx);
        auto d_e = corr_.difference_embed(ref_rows, cand_rows, mode);
        auto t_rows = ops::gather_rows(text[e], ref_idx);
        auto s = ops::rowdot(d_e, t_rows);
        total = total ? ops::add(total, s) : s;
    }
    return ops::reshape(total, {n_q, n_c});
}

ExpertBank CcnetModel::extract_image_experts(const std::vector<double>& spatial,
                                             const std::vector<double>& inter) const {
    return extract_image_experts(pool_image(spatial, inter, 7, 7, config_.channels,
                                            default_slice_regions()));
}

ExpertBank CcnetModel::extract_image_experts(const PooledImage& pooled) const {
    BankMatrices banks = image_banks({&pooled}, RunMode::inference());
    ExpertBank out;
    for (int e = 0; e < kNumExperts; ++e) {
        out.embedding[e] = ops::reshape(banks[e], {config_.d});
    }
    return out;
}

TensorPtr CcnetModel::encode_caption(const std::vector<std::string>& tokens,
                                     const WordVectorTable& table) const {
    return text_.encode_tokens(tokens, table);
}

CaptionEncoding CcnetModel::encode_caption_full(const std::vector<std::string>& tokens,
                                                const WordVectorTable& table) const {
    return text_.encode(tokens, table, RunMode::inference());
}

TensorPtr CcnetModel::compose_pair(const TensorPtr& x_ref, const TensorPtr& t, int expert) const {
    auto ref2 = ops::reshape(x_ref, {1, x_ref->size()});
    auto t2 = ops::reshape(t, {1, t->size()});
    return ops::reshape(comp_.compose(ref2, t2, expert, RunMode::inference()), {x_ref->size()});
}

DifferenceParts CcnetModel::difference_parts(const TensorPtr& x_ref,
                                             const TensorPtr& x_trg) const {
    if (x_ref->size() != x_trg->size()) {
        throw ShapeError("difference_embed: mismatched inputs " + x_ref->shape_str() + " vs " +
                         x_trg->shape_str());
    }
    auto ref2 = ops::reshape(x_ref, {1, x_ref->size()});
    auto trg2 = ops::reshape(x_trg, {1, x_trg->size()});
    const RunMode mode = RunMode::inference();
    DifferenceParts parts;
    auto h = ops::mul(trg2, ref2);
    parts.bar_trg = corr_.diff_fc(ops::concat_cols({h, trg2}));
    const Linear& ref_fc = corr_.shared ? corr_.diff_fc : corr_.diff_fc_ref;
    parts.bar_ref = ref_fc(ops::concat_cols({h, ref2}));
    parts.diff = ops::sub(parts.bar_trg, parts.bar_ref);
    auto z = ops::concat_cols({ref2, trg2, parts.diff});
    parts.d = ops::reshape(
        corr_.out_fc2(mode.apply_dropout(ops::relu(corr_.out_fc1(z)))), {x_ref->size()});
    return parts;
}

TensorPtr CcnetModel::difference_embed(const TensorPtr& x_ref, const TensorPtr& x_trg) const {
    return difference_parts(x_ref, x_trg).d;
}

TensorPtr score_composition(const std::vector<TensorPtr>& composed,
                            const std::vector<TensorPtr>& target) {
    if (composed.empty() || composed.size() != target.size()) {
        throw ContractError("score_composition: expert count mismatch, " +
                            std::to_string(composed.size()) + " vs " +
                            std::to_string(target.size()));
    }
    TensorPtr total;
    for (std::size_t e = 0; e < composed.size(); ++e) {
        auto s = ops::sum_all(ops::mul(composed[e], target[e]));
        total = total ? ops::add(total, s) : s;
    }
    return total;
}

TensorPtr score_correction(const std::vector<TensorPtr>& difference,
                           const std::vector<TensorPtr>& text) {
    if (difference.empty() || difference.size() != text.size()) {
        throw ContractError("score_correction: expert count mismatch, " +
                            std::to_string(difference.size()) + " vs " +
                            std::to_string(text.size()));
    }
    TensorPtr total;
    for (std::size_t e = 0; e < difference.size(); ++e) {
        auto s = ops::sum_all(ops::mul(difference[e], text[e]));
        total = total ? ops::add(total, s) : s;
    }
    return total;
}

std::vector<TensorPtr> bank_to_vector(const ExpertBank& bank) {
    return std::vector<TensorPtr>(bank.embedding.begin(), bank.embedding.end());
}

}  // namespace ccnet

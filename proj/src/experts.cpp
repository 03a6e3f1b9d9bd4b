#include "ccnet/experts.hpp"

namespace ccnet {

ImageExperts ImageExperts::create(ModelParams& params, std::int64_t channels,
                                  std::int64_t intermediate_dim, std::int64_t d, Rng& rng) {
    ImageExperts experts;
    for (int e = 0; e < kNumExperts; ++e) {
        const std::string prefix = "experts.image.e" + std::to_string(e);
        const std::int64_t in = e == 1 ? intermediate_dim : channels;
        experts.towers[e].fc = Linear::create(params, prefix + ".fc", in, d, rng);
        experts.towers[e].bn = BatchNorm::create(params, prefix + ".bn", d);
        experts.towers[e].cg = ContextGating::create(params, prefix + ".cg", d, rng);
    }
    return experts;
}

BankMatrices ImageExperts::forward(const BankMatrices& raw, const RunMode& mode) const {
    BankMatrices out;
    for (int e = 0; e < kNumExperts; ++e) {
        const Tower& tower = towers[e];
        auto h = mode.apply_dropout(ops::relu(tower.bn(tower.fc(raw[e]), mode)));
        out[e] = tower.cg(h);
    }
    return out;
}

TextExperts TextExperts::create(ModelParams& params, std::int64_t word_dim, std::int64_t d,
                                Rng& rng) {
    TextExperts experts;
    experts.conv = Conv1d::create(params, "experts.text.conv", word_dim, word_dim, 3, rng);
    experts.embed_fc = Linear::create(params, "experts.text.embed_fc", 2 * word_dim, d, rng);
    experts.characterize = params.add(
        "experts.text.characterize",
        Tensor::normal_init({kNumExperts, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
    experts.attn_fc1 = Linear::create(params, "experts.text.attn_fc1", d, d, rng);
    experts.attn_fc2 = Linear::create(params, "experts.text.attn_fc2", d, 1, rng);
    for (int e = 0; e < kNumExperts; ++e) {
        const std::string prefix = "experts.text.e" + std::to_string(e);
        experts.out_fc[e] = Linear::create(params, prefix + ".fc", d, d, rng);
        experts.out_cg[e] = ContextGating::create(params, prefix + ".cg", d, rng);
    }
    return experts;
}

TensorPtr TextExperts::encode_tokens(const std::vector<std::string>& tokens,
                                     const WordVectorTable& table) const {
    if (tokens.empty()) {
        throw ContractError("encode_caption: empty token list");
    }
    const std::int64_t l = static_cast<std::int64_t>(tokens.size());
    const std::int64_t word_dim = table.dim();
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(l * word_dim));
    for (const auto& token : tokens) {
        const auto vec = table.lookup(token);
        values.insert(values.end(), vec.begin(), vec.end());
    }
    auto raw = Tensor::from_values({l, word_dim}, std::move(values));
    auto conv_out = ops::conv1d_same(raw, conv.K, conv.b);
    return embed_fc(ops::concat_cols({conv_out, raw}));
}

TextExperts::Attended TextExperts::attend(const TensorPtr& w, int expert, const RunMode& mode,
                                          std::int64_t valid_len) const {
    if (expert < 0 || expert >= kNumExperts) {
        throw ContractError("attend: expert index " + std::to_string(expert) + " out of range");
    }
    if (w->rank() != 2 || w->cols() != characterize->cols()) {
        throw ShapeError("attend: caption embedding " + w->shape_str() +
                         " does not match characterize embedding " + characterize->shape_str());
    }
    const std::int64_t l = w->rows();
    auto m_e = ops::reshape(ops::gather_rows(characterize, {expert}), {characterize->cols()});
    auto scored = attn_fc2(mode.apply_dropout(ops::relu(attn_fc1(ops::mul_rowvec(w, m_e)))));
    auto logits = ops::reshape(scored, {1, l});
    if (valid_len >= 0 && valid_len < l) {
        if (valid_len == 0) throw ContractError("attend: caption has no valid tokens");
        auto mask = Tensor::zeros({1, l});
        for (std::int64_t i = valid_len; i < l; ++i) mask->value[i] = -1e9;
        logits = ops::add(logits, mask);
    }
    Attended out;
    out.alpha = ops::softmax(logits, 1);
    out.attended = ops::matmul(out.alpha, w);
    out.expert = out_cg[expert](out_fc[expert](out.attended));
    return out;
}

CaptionEncoding TextExperts::encode(const std::vector<std::string>& tokens,
                                    const WordVectorTable& table, const RunMode& mode) const {
    CaptionEncoding enc;
    enc.token_embeddings = encode_tokens(tokens, table);
    for (int e = 0; e < kNumExperts; ++e) {
        auto att = attend(enc.token_embeddings, e, mode);
        enc.attention[e] = att.alpha;
        enc.attended[e] = att.attended;
        enc.expert[e] = att.expert;
    }
    return enc;
}

}  // namespace ccnet

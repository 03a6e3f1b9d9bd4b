#pragma once

#include <array>

#include "ccnet/data_io.hpp"
#include "ccnet/features.hpp"
#include "ccnet/nn.hpp"

namespace ccnet {

// Seven embeddings of dimension D in fixed expert order:
// [global, intermediate, slice 1..5]. Reference and target images go
// through the same parameters.
struct ExpertBank {
    std::array<TensorPtr, kNumExperts> embedding;  // each (D)
};

// Everything produced while encoding one caption.
struct CaptionEncoding {
    TensorPtr token_embeddings;                      // w: (l x D)
    std::array<TensorPtr, kNumExperts> attention;    // alpha_e: (1 x l)
    std::array<TensorPtr, kNumExperts> attended;     // t*_e: (1 x D)
    std::array<TensorPtr, kNumExperts> expert;       // t_e: (1 x D)
};

// Per-expert image towers: expert-specific FC (C or C_i -> D), batch norm,
// ReLU, dropout, then context gating.
struct ImageExperts {
    struct Tower {
        Linear fc;
        BatchNorm bn;
        ContextGating cg;
    };
    std::array<Tower, kNumExperts> towers;

    static ImageExperts create(ModelParams& params, std::int64_t channels,
                               std::int64_t intermediate_dim, std::int64_t d, Rng& rng);

    // raw[e] is (n x C) for spatial experts and (n x C_i) for the
    // intermediate expert; output is (n x D) per expert.
    BankMatrices forward(const BankMatrices& raw, const RunMode& mode) const;
};

// Shared word encoder (conv1d + FC), per-expert characterize embeddings,
// a shared two-layer attention scorer, and per-expert output FC + gating.
struct TextExperts {
    Conv1d conv;          // word_dim -> word_dim, width 3
    Linear embed_fc;      // 2*word_dim -> D
    TensorPtr characterize;  // (E x D)
    Linear attn_fc1;      // D -> D
    Linear attn_fc2;      // D -> 1
    std::array<Linear, kNumExperts> out_fc;
    std::array<ContextGating, kNumExperts> out_cg;

    static TextExperts create(ModelParams& params, std::int64_t word_dim, std::int64_t d,
                              Rng& rng);

    // Eq-style word embedding: w = FC([Conv1d(w*) ; w*]) per token.
    TensorPtr encode_tokens(const std::vector<std::string>& tokens,
                            const WordVectorTable& table) const;

    // Attended pooling for one expert. `valid_len` < rows marks trailing
    // rows as padding; they receive an additive -1e9 mask before softmax.
    struct Attended {
        TensorPtr alpha;     // (1 x l)
        TensorPtr attended;  // t*_e (1 x D)
        TensorPtr expert;    // t_e (1 x D)
    };
    Attended attend(const TensorPtr& w, int expert, const RunMode& mode,
                    std::int64_t valid_len = -1) const;

    CaptionEncoding encode(const std::vector<std::string>& tokens, const WordVectorTable& table,
                           const RunMode& mode) const;
};

}  // namespace ccnet

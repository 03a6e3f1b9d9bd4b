#pragma once

#include <string>
#include <vector>

#include "ccnet/composition.hpp"
#include "ccnet/correction.hpp"
#include "ccnet/data_io.hpp"
#include "ccnet/experts.hpp"

namespace ccnet {

struct ModelConfig {
    std::int64_t d = 64;
    std::int64_t fusion_rank = 4;
    std::int64_t channels = 32;
    std::int64_t intermediate_dim = 32;
    std::int64_t word_dim = 300;
    bool share_diff_fc = true;
    std::uint64_t seed = 1;
};

// Pair-level outputs of the inverse pathway, exposed so the zero-difference
// and antisymmetry contracts can be observed directly.
struct DifferenceParts {
    TensorPtr bar_trg;
    TensorPtr bar_ref;
    TensorPtr diff;  // bar_trg - bar_ref
    TensorPtr d;     // final difference embedding
};

// Both networks over shared image/text experts.
class CcnetModel {
public:
    explicit CcnetModel(const ModelConfig& config);
    static CcnetModel from_checkpoint(const std::string& path);

    const ModelConfig& config() const { return config_; }
    ModelParams& params() { return params_; }
    const ModelParams& params() const { return params_; }
    const ImageExperts& image_experts() const { return image_; }
    const TextExperts& text_experts() const { return text_; }
    const Composition& composition() const { return comp_; }
    const Correction& correction() const { return corr_; }

    // --- batched pipelines -------------------------------------------------

    // One (n x D) matrix per expert for n pooled images.
    BankMatrices image_banks(const std::vector<const PooledImage*>& images,
                             const RunMode& mode) const;

    // One (n x D) matrix per expert for n merged captions.
    BankMatrices caption_banks(const std::vector<std::vector<std::string>>& captions,
                               const WordVectorTable& table, const RunMode& mode) const;

    // c_e per expert: composed (n x D) from reference banks and caption banks.
    BankMatrices compose_banks(const BankMatrices& ref, const BankMatrices& text,
                               const RunMode& mode) const;

    // Full correction score matrix s^c[i][j] over all (query i, candidate j)
    // pairs: ref/text row i against candidate row j.
    TensorPtr correction_scores(const BankMatrices& ref, const BankMatrices& candidates,
                                const BankMatrices& text, const RunMode& mode) const;

    // --- single-example views ----------------------------------------------

    ExpertBank extract_image_experts(const std::vector<double>& spatial,
                                     const std::vector<double>& inter) const;
    ExpertBank extract_image_experts(const PooledImage& pooled) const;
    TensorPtr encode_caption(const std::vector<std::string>& tokens,
                             const WordVectorTable& table) const;
    CaptionEncoding encode_caption_full(const std::vector<std::string>& tokens,
                                        const WordVectorTable& table) const;
    TensorPtr compose_pair(const TensorPtr& x_ref, const TensorPtr& t, int expert) const;
    DifferenceParts difference_parts(const TensorPtr& x_ref, const TensorPtr& x_trg) const;
    TensorPtr difference_embed(const TensorPtr& x_ref, const TensorPtr& x_trg) const;

private:
    CcnetModel(const ModelConfig& config, bool init);

    ModelConfig config_;
    ModelParams params_;
    ImageExperts image_;
    TextExperts text_;
    Composition comp_;
    Correction corr_;
};

// Scalar scores over single-example banks (vectors of rank-1 (D) tensors).
TensorPtr score_composition(const std::vector<TensorPtr>& composed,
                            const std::vector<TensorPtr>& target);
TensorPtr score_correction(const std::vector<TensorPtr>& difference,
                           const std::vector<TensorPtr>& text);

std::vector<TensorPtr> bank_to_vector(const ExpertBank& bank);

}  // namespace ccnet

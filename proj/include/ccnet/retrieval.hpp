#pragma once

#include <map>
#include <string>
#include <vector>

#include "ccnet/data_io.hpp"
#include "ccnet/model.hpp"

namespace ccnet {

// Probabilities aligned with a fixed candidate gallery (pre-ranking).
struct GalleryProbs {
    std::vector<std::string> gallery;
    std::vector<double> log_p;  // unnormalized log probabilities
};

// Candidates ordered by descending probability; ties broken by ascending
// candidate id. Probabilities are normalized.
struct RankedList {
    std::string query_id;
    std::vector<std::string> candidate_ids;
    std::vector<double> probabilities;

    // 0-based position of an id; throws when absent.
    std::size_t rank_of(const std::string& id) const;
};

std::vector<double> softmax_probabilities(const std::vector<double>& scores);
std::vector<double> log_softmax(const std::vector<double>& scores);

RankedList make_ranked(const std::string& query_id, const GalleryProbs& probs);

// p = p^r * p^c over one gallery, renormalized, then ranked.
RankedList combined_probability(const std::string& query_id,
                                const std::vector<std::string>& gallery,
                                const std::vector<double>& s_r, const std::vector<double>& s_c);

// Product pooling of per-model probabilities over one gallery (log domain).
GalleryProbs ensemble_combine(const std::vector<GalleryProbs>& per_model);

// Fraction of queries whose ground truth ranks in the top K.
double recall_at_k(const std::vector<RankedList>& ranked, const std::vector<std::string>& truths,
                   int k);

struct RecallReport {
    std::map<std::string, std::map<int, double>> per_category;  // category -> K -> recall
    double overall = 0.0;

    std::string to_text() const;
    std::string to_key_value() const;  // lines "dress.r10 0.123456" + "overall.avg ..."
};

void write_report(const RecallReport& report, const std::string& path);

enum class Scorer { kCcnet, kCompositionOnly, kCorrectionOnly };

struct EvalOptions {
    std::vector<int> ks = {10, 50};
    Scorer scorer = Scorer::kCcnet;
};

// Rank every query of the split against its category gallery (all images
// of that category in the store) with one or more models (product-pooled
// when several) and aggregate per-category Recall@K.
RecallReport evaluate(const std::vector<const CcnetModel*>& models, const FeatureStore& store,
                      const std::vector<TripletRecord>& split, const WordVectorTable& words,
                      const EvalOptions& options = {});

// Rank one ad-hoc query against the reference's category gallery.
RankedList retrieve_topk(const std::vector<const CcnetModel*>& models, const FeatureStore& store,
                         const WordVectorTable& words, const std::string& ref_id,
                         const std::string& caption_text, std::size_t topk,
                         Scorer scorer = Scorer::kCcnet);

}  // namespace ccnet

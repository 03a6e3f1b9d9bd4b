#include "ccnet/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ccnet {

std::vector<double> log_softmax(const std::vector<double>& scores) {
    if (scores.empty()) throw ContractError("log_softmax: empty score vector");
    const double mx = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double s : scores) sum += std::exp(s - mx);
    const double log_z = mx + std::log(sum);
    std::vector<double> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] - log_z;
    return out;
}

std::vector<double> softmax_probabilities(const std::vector<double>& scores) {
    std::vector<double> out = log_softmax(scores);
    for (double& v : out) v = std::exp(v);
    return out;
}

std::size_t RankedList::rank_of(const std::string& id) const {
    for (std::size_t i = 0; i < candidate_ids.size(); ++i) {
        if (candidate_ids[i] == id) return i;
    }
    throw ContractError("ranked list: id '" + id + "' not present in the gallery of query '" +
                        query_id + "'");
}

RankedList make_ranked(const std::string& query_id, const GalleryProbs& probs) {
    if (probs.gallery.size() != probs.log_p.size()) {
        throw ContractError("make_ranked: gallery and probability sizes differ");
    }
    std::vector<std::size_t> order(probs.gallery.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (probs.log_p[a] != probs.log_p[b]) return probs.log_p[a] > probs.log_p[b];
        return probs.gallery[a] < probs.gallery[b];
    });
    const std::vector<double> p = softmax_probabilities(probs.log_p);
    RankedList out;
    out.query_id = query_id;
    out.candidate_ids.reserve(order.size());
    out.probabilities.reserve(order.size());
    for (std::size_t i : order) {
        out.candidate_ids.push_back(probs.gallery[i]);
        out.probabilities.push_back(p[i]);
    }
    return out;
}

RankedList combined_probability(const std::string& query_id,
                                const std::vector<std::string>& gallery,
                                const std::vector<double>& s_r, const std::vector<double>& s_c) {
    if (s_r.size() != gallery.size() || s_c.size() != gallery.size()) {
        throw ContractError("combined_probability: score vectors do not match the gallery (" +
                            std::to_string(s_r.size()) + ", " + std::to_string(s_c.size()) +
                            " vs " + std::to_string(gallery.size()) + ")");
    }
    GalleryProbs probs;
    probs.gallery = gallery;
    const auto lr = log_softmax(s_r);
    const auto lc = log_softmax(s_c);
    probs.log_p.resize(gallery.size());
    for (std::size_t i = 0; i < gallery.size(); ++i) probs.log_p[i] = lr[i] + lc[i];
    return make_ranked(query_id, probs);
}

GalleryProbs ensemble_combine(const std::vector<GalleryProbs>& per_model) {
    if (per_model.empty()) throw ContractError("ensemble_combine: no models given");
    GalleryProbs out;
    out.gallery = per_model[0].gallery;
    out.log_p.assign(out.gallery.size(), 0.0);
    for (const auto& model : per_model) {
        if (model.gallery != out.gallery) {
            throw ContractError("ensemble_combine: galleries differ across models");
        }
        const auto lp = log_softmax(model.log_p);
        for (std::size_t i = 0; i < lp.size(); ++i) out.log_p[i] += lp[i];
    }
    return out;
}

double recall_at_k(const std::vector<RankedList>& ranked, const std::vector<std::string>& truths,
                   int k) {
    if (ranked.size() != truths.size()) {
        throw ContractError("recall_at_k: " + std::to_string(ranked.size()) + " ranked lists vs " +
                            std::to_string(truths.size()) + " truths");
    }
    if (ranked.empty()) throw ContractError("recall_at_k: no queries");
    if (k < 1) throw ContractError("recall_at_k: K must be >= 1");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (ranked[i].rank_of(truths[i]) < static_cast<std::size_t>(k)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ranked.size());
}

std::string RecallReport::to_text() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    for (const auto& [category, by_k] : per_category) {
        os << category << ":";
        for (const auto& [k, recall] : by_k) os << "  R@" << k << " " << recall;
        os << "\n";
    }
    os << "overall average: " << overall << "\n";
    return os.str();
}

std::string RecallReport::to_key_value() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    for (const auto& [category, by_k] : per_category) {
        for (const auto& [k, recall] : by_k) {
            os << category << ".r" << k << " " << recall << "\n";
        }
    }
    os << "overall.avg " << overall << "\n";
    return os.str();
}

void write_report(const RecallReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("report: cannot write '" + path + "'");
    out << report.to_key_value();
}

namespace {

// Per-model inference state over one store: every image's expert banks as
// (N x D) matrices plus the id -> row mapping.
struct ModelBanks {
    const CcnetModel* model;
    BankMatrices all;  // (N x D) per expert
    std::map<std::string, std::int64_t> row_of;
};

ModelBanks build_banks(const CcnetModel& model, const FeatureStore& store,
                       const std::vector<std::string>& ids,
                       const std::vector<PooledImage>& pooled) {
    ModelBanks banks;
    banks.model = &model;
    std::vector<const PooledImage*> ptrs;
    ptrs.reserve(pooled.size());
    for (const auto& p : pooled) ptrs.push_back(&p);
    banks.all = model.image_banks(ptrs, RunMode::inference());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        banks.row_of[ids[i]] = static_cast<std::int64_t>(i);
    }
    (void)store;
    return banks;
}

BankMatrices gather_banks(const BankMatrices& all, const std::vector<std::int64_t>& rows) {
    BankMatrices out;
    for (int e = 0; e < kNumExperts; ++e) out[e] = ops::gather_rows(all[e], rows);
    return out;
}

// Scores of one query against a gallery for one model, by scorer.
GalleryProbs score_query(const ModelBanks& banks, const std::vector<std::string>& gallery,
                         const BankMatrices& gallery_banks, const std::string& ref_id,
                         const std::vector<std::string>& merged_tokens,
                         const WordVectorTable& words, Scorer scorer) {
    const RunMode mode = RunMode::inference();
    const auto row_it = banks.row_of.find(ref_id);
    if (row_it == banks.row_of.end()) {
        throw DataError("evaluate: reference id '" + ref_id + "' missing from the store");
    }
    BankMatrices ref = gather_banks(banks.all, {row_it->second});
    CaptionEncoding enc = banks.model->text_experts().encode(merged_tokens, words, mode);
    BankMatrices text;
    for (int e = 0; e < kNumExperts; ++e) text[e] = enc.expert[e];

    const std::size_t g = gallery.size();
    std::vector<double> s_r, s_c;
    if (scorer != Scorer::kCorrectionOnly) {
        BankMatrices composed = banks.model->compose_banks(ref, text, mode);
        auto scores = composition_scores(composed, gallery_banks);  // (1 x G)
        s_r.assign(scores->value.begin(), scores->value.end());
    }
    if (scorer != Scorer::kCompositionOnly) {
        auto scores = banks.model->correction_scores(ref, gallery_banks, text, mode);  // (1 x G)
        s_c.assign(scores->value.begin(), scores->value.end());
    }

    GalleryProbs out;
    out.gallery = gallery;
    out.log_p.assign(g, 0.0);
    if (!s_r.empty()) {
        const auto lp = log_softmax(s_r);
        for (std::size_t i = 0; i < g; ++i) out.log_p[i] += lp[i];
    }
    if (!s_c.empty()) {
        const auto lp = log_softmax(s_c);
        for (std::size_t i = 0; i < g; ++i) out.log_p[i] += lp[i];
    }
    return out;
}

}  // namespace

RecallReport evaluate(const std::vector<const CcnetModel*>& models, const FeatureStore& store,
                      const std::vector<TripletRecord>& split, const WordVectorTable& words,
                      const EvalOptions& options) {
    if (models.empty()) throw ContractError("evaluate: no models given");
    if (split.empty()) throw ContractError("evaluate: empty split");

    const std::vector<std::string> ids = store.ids();
    std::vector<PooledImage> pooled;
    pooled.reserve(ids.size());
    for (const auto& id : ids) pooled.push_back(store.pooled(id));

    std::vector<ModelBanks> banks;
    banks.reserve(models.size());
    for (const CcnetModel* model : models) {
        banks.push_back(build_banks(*model, store, ids, pooled));
    }

    // Gallery per category: all store images with that label, ascending id.
    std::map<std::string, std::vector<std::string>> galleries;
    for (const auto& id : ids) galleries[store.category(id)].push_back(id);
    std::map<std::string, std::vector<std::int64_t>> gallery_rows;
    for (const auto& [category, gallery] : galleries) {
        auto& rows = gallery_rows[category];
        for (const auto& id : gallery) rows.push_back(banks[0].row_of.at(id));
    }
    // Candidate banks per model per category.
    std::map<std::string, std::vector<BankMatrices>> gallery_banks;
    for (const auto& [category, rows] : gallery_rows) {
        auto& per_model = gallery_banks[category];
        for (const auto& mb : banks) per_model.push_back(gather_banks(mb.all, rows));
    }

    std::map<std::string, std::vector<RankedList>> ranked_by_category;
    std::map<std::string, std::vector<std::string>> truths_by_category;
    for (const auto& rec : split) {
        auto git = galleries.find(rec.category);
        if (git == galleries.end()) {
            throw DataError("evaluate: no gallery for category '" + rec.category + "'");
        }
        const auto& gallery = git->second;
        const auto merged = merge_captions(rec.captions);
        std::vector<GalleryProbs> per_model;
        for (std::size_t m = 0; m < banks.size(); ++m) {
            per_model.push_back(score_query(banks[m], gallery, gallery_banks[rec.category][m],
                                            rec.ref_id, merged, words, options.scorer));
        }
        const GalleryProbs combined =
            per_model.size() == 1 ? per_model[0] : ensemble_combine(per_model);
        ranked_by_category[rec.category].push_back(make_ranked(rec.ref_id, combined));
        truths_by_category[rec.category].push_back(rec.trg_id);
    }

    RecallReport report;
    double sum = 0.0;
    std::size_t cells = 0;
    for (const auto& [category, ranked] : ranked_by_category) {
        for (int k : options.ks) {
            const double recall = recall_at_k(ranked, truths_by_category[category], k);
            report.per_category[category][k] = recall;
            sum += recall;
            ++cells;
        }
    }
    report.overall = cells > 0 ? sum / static_cast<double>(cells) : 0.0;
    return report;
}

RankedList retrieve_topk(const std::vector<const CcnetModel*>& models, const FeatureStore& store,
                         const WordVectorTable& words, const std::string& ref_id,
                         const std::string& caption_text, std::size_t topk, Scorer scorer) {
    if (models.empty()) throw ContractError("retrieve: no models given");
    const std::vector<std::string> ids = store.ids();
    if (!store.has(ref_id)) throw DataError("retrieve: unknown reference id '" + ref_id + "'");
    const std::string category = store.category(ref_id);

    std::vector<std::string> gallery;
    for (const auto& id : ids) {
        if (store.category(id) == category) gallery.push_back(id);
    }

    std::vector<PooledImage> pooled;
    pooled.reserve(ids.size());
    for (const auto& id : ids) pooled.push_back(store.pooled(id));

    const std::vector<std::string> tokens = tokenize(caption_text);
    if (tokens.empty()) throw ContractError("retrieve: caption has no tokens");

    std::vector<GalleryProbs> per_model;
    for (const CcnetModel* model : models) {
        ModelBanks banks = build_banks(*model, store, ids, pooled);
        std::vector<std::int64_t> rows;
        for (const auto& id : gallery) rows.push_back(banks.row_of.at(id));
        per_model.push_back(score_query(banks, gallery, gather_banks(banks.all, rows), ref_id,
                                        tokens, words, scorer));
    }
    RankedList ranked = make_ranked(
        ref_id, per_model.size() == 1 ? per_model[0] : ensemble_combine(per_model));
    if (topk < ranked.candidate_ids.size()) {
        ranked.candidate_ids.resize(topk);
        ranked.probabilities.resize(topk);
    }
    return ranked;
}

}  // namespace ccnet

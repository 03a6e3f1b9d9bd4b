#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ccnet/retrieval.hpp"
#include "test_util.hpp"

using namespace ccnet;

namespace {

RankedList ranked_with_truth_at(const std::string& truth, std::size_t rank,
                                std::size_t gallery_size) {
    GalleryProbs probs;
    for (std::size_t i = 0; i < gallery_size; ++i) {
        probs.gallery.push_back("c" + std::to_string(100 + i));
        probs.log_p.push_back(-static_cast<double>(i));
    }
    // Place the truth at the requested 0-based rank by score surgery.
    probs.gallery[rank] = truth;
    return make_ranked("q", probs);
}

}  // namespace

TEST_CASE("combined probability matches the analytic product") {
    const std::vector<std::string> gallery = {"a", "b", "c"};
    const std::vector<double> p_r = {0.6, 0.3, 0.1};
    const std::vector<double> p_c = {0.2, 0.3, 0.5};
    std::vector<double> s_r, s_c;
    for (double p : p_r) s_r.push_back(std::log(p));
    for (double p : p_c) s_c.push_back(std::log(p));
    RankedList ranked = combined_probability("q", gallery, s_r, s_c);
    REQUIRE(ranked.candidate_ids == std::vector<std::string>{"a", "b", "c"});
    CHECK(ranked.probabilities[0] == doctest::Approx(12.0 / 26.0).epsilon(1e-9));
    CHECK(ranked.probabilities[1] == doctest::Approx(9.0 / 26.0).epsilon(1e-9));
    CHECK(ranked.probabilities[2] == doctest::Approx(5.0 / 26.0).epsilon(1e-9));
    double sum = 0.0;
    for (double p : ranked.probabilities) sum += p;
    CHECK(std::fabs(sum - 1.0) <= 1e-6);
}

TEST_CASE("uniform composition probabilities leave the correction ranking") {
    Rng rng(1);
    const std::vector<std::string> gallery = {"a", "b", "c", "d", "e"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s_r(5, 0.42), s_c;
        for (int i = 0; i < 5; ++i) s_c.push_back(rng.uniform(-2, 2));
        RankedList both = combined_probability("q", gallery, s_r, s_c);
        RankedList only_c = combined_probability("q", gallery, std::vector<double>(5, 0.0), s_c);
        CHECK(both.candidate_ids == only_c.candidate_ids);
    }
}

TEST_CASE("ranking by combined probability equals ranking by summed log probabilities") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::string> gallery;
        std::vector<double> s_r, s_c;
        for (int i = 0; i < 10; ++i) {
            gallery.push_back("c" + std::to_string(i));
            s_r.push_back(rng.uniform(-3, 3));
            s_c.push_back(rng.uniform(-3, 3));
        }
        RankedList ranked = combined_probability("q", gallery, s_r, s_c);
        const auto lr = log_softmax(s_r);
        const auto lc = log_softmax(s_c);
        std::size_t best = 0;
        for (std::size_t i = 1; i < 10; ++i) {
            if (lr[i] + lc[i] > lr[best] + lc[best]) best = i;
        }
        CHECK(ranked.candidate_ids[0] == gallery[best]);
    }
}

TEST_CASE("combined probability rejects mismatched galleries") {
    CHECK_THROWS_AS(combined_probability("q", {"a", "b"}, {1.0, 2.0}, {1.0}), ContractError);
}

TEST_CASE("ties break by ascending candidate id") {
    GalleryProbs probs;
    probs.gallery = {"zebra", "apple", "mango"};
    probs.log_p = {0.5, 0.5, 0.5};
    RankedList ranked = make_ranked("q", probs);
    CHECK(ranked.candidate_ids == std::vector<std::string>{"apple", "mango", "zebra"});
}

TEST_CASE("recall fixtures") {
    std::vector<RankedList> ranked;
    std::vector<std::string> truths = {"t0", "t1", "t2"};
    // 1-based ranks 1, 11, 2
    ranked.push_back(ranked_with_truth_at("t0", 0, 20));
    ranked.push_back(ranked_with_truth_at("t1", 10, 20));
    ranked.push_back(ranked_with_truth_at("t2", 1, 20));
    CHECK(recall_at_k(ranked, truths, 10) == doctest::Approx(2.0 / 3.0));
    CHECK(recall_at_k(ranked, truths, 50) == 1.0);  // K >= gallery size

    std::vector<std::string> absent = {"t0", "missing", "t2"};
    CHECK_THROWS_AS(recall_at_k(ranked, absent, 10), ContractError);
}

TEST_CASE("recall matches a brute-force counting oracle and is monotone in K") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n_queries = 8, gallery_size = 12;
        std::vector<RankedList> ranked;
        std::vector<std::string> truths;
        std::vector<std::size_t> true_ranks;
        for (std::size_t q = 0; q < n_queries; ++q) {
            const std::size_t rank = rng.bounded(gallery_size);
            true_ranks.push_back(rank);
            truths.push_back("truth" + std::to_string(q));
            ranked.push_back(ranked_with_truth_at(truths.back(), rank, gallery_size));
        }
        double prev = 0.0;
        for (int k = 1; k <= static_cast<int>(gallery_size); ++k) {
            std::size_t hits = 0;
            for (std::size_t r : true_ranks) {
                if (r < static_cast<std::size_t>(k)) ++hits;
            }
            const double recall = recall_at_k(ranked, truths, k);
            CHECK(recall == static_cast<double>(hits) / n_queries);
            CHECK(recall >= prev);
            prev = recall;
        }
    }
}

TEST_CASE("single-model ensemble is the identity") {
    Rng rng(4);
    GalleryProbs probs;
    for (int i = 0; i < 6; ++i) {
        probs.gallery.push_back("c" + std::to_string(i));
        probs.log_p.push_back(rng.uniform(-2, 2));
    }
    GalleryProbs combined = ensemble_combine({probs});
    RankedList a = make_ranked("q", probs);
    RankedList b = make_ranked("q", combined);
    CHECK(a.candidate_ids == b.candidate_ids);
    for (std::size_t i = 0; i < a.probabilities.size(); ++i) {
        CHECK(a.probabilities[i] == doctest::Approx(b.probabilities[i]).epsilon(1e-12));
    }
}

TEST_CASE("ensemble equals the log-domain summation oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        GalleryProbs m1, m2;
        m1.gallery = m2.gallery = {"a", "b", "c"};
        for (int i = 0; i < 3; ++i) {
            m1.log_p.push_back(rng.uniform(-2, 2));
            m2.log_p.push_back(rng.uniform(-2, 2));
        }
        GalleryProbs combined = ensemble_combine({m1, m2});
        RankedList ranked = make_ranked("q", combined);

        // Oracle: normalize each model, multiply, renormalize.
        const auto p1 = softmax_probabilities(m1.log_p);
        const auto p2 = softmax_probabilities(m2.log_p);
        std::vector<double> prod(3);
        double z = 0.0;
        for (int i = 0; i < 3; ++i) {
            prod[i] = p1[i] * p2[i];
            z += prod[i];
        }
        for (int i = 0; i < 3; ++i) prod[i] /= z;
        for (std::size_t r = 0; r < 3; ++r) {
            const std::size_t idx = static_cast<std::size_t>(
                std::find(combined.gallery.begin(), combined.gallery.end(),
                          ranked.candidate_ids[r]) -
                combined.gallery.begin());
            CHECK(std::fabs(ranked.probabilities[r] - prod[idx]) <= 1e-12);
        }
    }
}

TEST_CASE("ensemble is equivariant under candidate permutation") {
    GalleryProbs m1, m2;
    m1.gallery = m2.gallery = {"a", "b", "c", "d"};
    m1.log_p = {0.1, 0.9, -0.3, 0.4};
    m2.log_p = {0.5, -0.1, 0.2, 0.0};
    RankedList base = make_ranked("q", ensemble_combine({m1, m2}));

    const std::vector<std::size_t> perm = {2, 0, 3, 1};
    GalleryProbs p1, p2;
    for (std::size_t i : perm) {
        p1.gallery.push_back(m1.gallery[i]);
        p1.log_p.push_back(m1.log_p[i]);
        p2.gallery.push_back(m2.gallery[i]);
        p2.log_p.push_back(m2.log_p[i]);
    }
    RankedList permuted = make_ranked("q", ensemble_combine({p1, p2}));
    CHECK(base.candidate_ids == permuted.candidate_ids);

    GalleryProbs mismatched = m2;
    mismatched.gallery[0] = "zzz";
    CHECK_THROWS_AS(ensemble_combine({m1, mismatched}), ContractError);
}

TEST_CASE("oracle and adversarial scorers bound the recall") {
    // A scorer that pins the truth to the top ranks everything right.
    std::vector<RankedList> top, bottom;
    std::vector<std::string> truths;
    for (int q = 0; q < 10; ++q) {
        truths.push_back("t" + std::to_string(q));
        top.push_back(ranked_with_truth_at(truths.back(), 0, 100));
        bottom.push_back(ranked_with_truth_at(truths.back(), 99, 100));
    }
    CHECK(recall_at_k(top, truths, 1) == 1.0);
    CHECK(recall_at_k(top, truths, 10) == 1.0);
    CHECK(recall_at_k(bottom, truths, 10) == 0.0);
}

TEST_CASE("evaluate on synthetic data is deterministic and shaped by category") {
    SyntheticSpec spec;
    spec.attributes = 3;
    spec.values = 3;
    spec.images = 27;
    spec.train_triplets = 4;
    spec.eval_triplets = 24;
    spec.noise = 0.02;
    spec.seed = 11;
    spec.channels = 12;
    spec.intermediate_dim = 8;
    spec.word_dim = 12;
    SyntheticData data = generate_synthetic(spec);

    ModelConfig config;
    config.d = 8;
    config.fusion_rank = 2;
    config.channels = spec.channels;
    config.intermediate_dim = spec.intermediate_dim;
    config.word_dim = spec.word_dim;
    config.seed = 5;
    CcnetModel model(config);

    EvalOptions options;
    options.ks = {1, 5};
    RecallReport r1 = evaluate({&model}, data.store, data.eval, data.words, options);
    RecallReport r2 = evaluate({&model}, data.store, data.eval, data.words, options);
    CHECK(r1.to_key_value() == r2.to_key_value());
    CHECK(r1.overall >= 0.0);
    CHECK(r1.overall <= 1.0);
    for (const auto& [category, by_k] : r1.per_category) {
        CHECK(by_k.count(1) == 1);
        CHECK(by_k.count(5) == 1);
        CHECK(by_k.at(1) <= by_k.at(5));
    }
    // Key-value report carries the overall line.
    CHECK(r1.to_key_value().find("overall.avg") != std::string::npos);

    RankedList hits = retrieve_topk({&model}, data.store, data.words, data.eval[0].ref_id,
                                    "is color1", 5);
    CHECK(hits.candidate_ids.size() == 5);
    CHECK(hits.probabilities.size() == 5);
}

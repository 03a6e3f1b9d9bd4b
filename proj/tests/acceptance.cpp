// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "ccnet/harness.hpp"
#include "ccnet/model.hpp"
#include "ccnet/retrieval.hpp"

using namespace ccnet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(const std::string& name, bool pass, const std::string& detail, double secs) {
    std::printf("[%s] %-28s %s  (%.1f s)\n", pass ? "PASS" : "FAIL", name.c_str(),
                detail.c_str(), secs);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string work_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / "ccnet_acceptance" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// --------------------------------------------------------------------------

void criterion_gradient_suite() {
    auto start = Clock::now();
    GradCheckResult result = grad_check();
    const double secs = seconds_since(start);
    char detail[128];
    std::snprintf(detail, sizeof(detail), "max relative error %.3e over %zu parameter groups",
                  result.max_error, result.per_parameter.size());
    report("gradient-suite", result.max_error <= 1e-4 && secs < 60.0, detail, secs);
}

void criterion_oracle_equivalence() {
    auto start = Clock::now();
    Rng rng(20240801);
    double worst = 0.0;
    bool recall_exact = true;

    // Batch softmax loss vs direct per-row softmax/-log oracle.
    for (int trial = 0; trial < 100; ++trial) {
        const std::int64_t b = 2 + static_cast<std::int64_t>(rng.bounded(7));
        auto s = Tensor::zeros({b, b});
        for (double& v : s->value) v = rng.uniform(-4, 4);
        double expect = 0.0;
        for (std::int64_t i = 0; i < b; ++i) {
            double denom = 0.0;
            for (std::int64_t j = 0; j < b; ++j) denom += std::exp(s->at(i, j));
            expect -= std::log(std::exp(s->at(i, i)) / denom);
        }
        expect /= static_cast<double>(b);
        worst = std::max(worst, std::fabs(batch_softmax_loss(s)->item() - expect));
    }

    // Attended pooling vs weighted-sum oracle.
    ModelConfig config;
    config.d = 8;
    config.fusion_rank = 2;
    config.channels = 8;
    config.intermediate_dim = 8;
    config.word_dim = 12;
    config.seed = 31;
    CcnetModel model(config);
    for (int trial = 0; trial < 100; ++trial) {
        const std::int64_t l = 1 + static_cast<std::int64_t>(rng.bounded(5));
        auto w = Tensor::zeros({l, config.d});
        for (double& v : w->value) v = rng.uniform(-1, 1);
        const int e = static_cast<int>(rng.bounded(kNumExperts));
        auto att = model.text_experts().attend(w, e, RunMode::inference());
        for (std::int64_t c = 0; c < config.d; ++c) {
            double expect = 0.0;
            for (std::int64_t t = 0; t < l; ++t) expect += att.alpha->value[t] * w->at(t, c);
            worst = std::max(worst, std::fabs(att.attended->value[c] - expect));
        }
    }

    // Slice pooling vs explicit enumeration.
    const auto slices = default_slice_regions();
    for (int trial = 0; trial < 100; ++trial) {
        const std::int64_t c = 1 + static_cast<std::int64_t>(rng.bounded(6));
        std::vector<double> map(static_cast<std::size_t>(7 * 7 * c));
        for (double& v : map) v = rng.uniform(-2, 2);
        const auto& region = slices[rng.bounded(kNumSlices)];
        const auto pooled = region_pool(map, 7, 7, c, region);
        for (std::int64_t ch = 0; ch < c; ++ch) {
            double sum = 0.0;
            for (std::int64_t r = region.row0; r < region.row1; ++r)
                for (std::int64_t col = region.col0; col < region.col1; ++col)
                    sum += map[static_cast<std::size_t>((r * 7 + col) * c + ch)];
            worst = std::max(worst, std::fabs(pooled[ch] - sum / 9.0));
        }
    }

    // MUTAN fusion vs the explicit bilinear oracle.
    for (int trial = 0; trial < 100; ++trial) {
        const int e = static_cast<int>(rng.bounded(kNumExperts));
        const MutanFusion& fusion = model.composition().fusion[e];
        auto x = Tensor::zeros({1, config.d});
        auto t = Tensor::zeros({1, config.d});
        for (double& v : x->value) v = rng.uniform(-1, 1);
        for (double& v : t->value) v = rng.uniform(-1, 1);
        auto out = fusion(x, t);
        const std::int64_t d = config.d;
        std::vector<double> cat;
        for (std::int64_t r = 0; r < config.fusion_rank; ++r) {
            for (std::int64_t i = 0; i < d; ++i) {
                double ux = 0.0, vt = 0.0;
                for (std::int64_t j = 0; j < d; ++j) {
                    ux += fusion.U[r]->value[i * d + j] * x->value[j];
                    vt += fusion.V[r]->value[i * d + j] * t->value[j];
                }
                cat.push_back(ux * vt);
            }
        }
        for (std::int64_t o = 0; o < d; ++o) {
            double expect = 0.0;
            for (std::size_t i = 0; i < cat.size(); ++i)
                expect += fusion.Wo->value[o * cat.size() + i] * cat[i];
            worst = std::max(worst, std::fabs(out->value[o] - expect));
        }
    }

    // Recall@K vs brute-force counting.
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t queries = 4 + rng.bounded(6), gallery = 8 + rng.bounded(8);
        std::vector<RankedList> ranked;
        std::vector<std::string> truths;
        std::vector<std::size_t> positions;
        for (std::size_t q = 0; q < queries; ++q) {
            GalleryProbs probs;
            for (std::size_t i = 0; i < gallery; ++i) {
                probs.gallery.push_back("g" + std::to_string(i));
                probs.log_p.push_back(-static_cast<double>(i));
            }
            const std::size_t pos = rng.bounded(gallery);
            probs.gallery[pos] = "truth" + std::to_string(q);
            positions.push_back(pos);
            truths.push_back(probs.gallery[pos]);
            ranked.push_back(make_ranked("q", probs));
        }
        const int k = 1 + static_cast<int>(rng.bounded(gallery));
        std::size_t hits = 0;
        for (std::size_t pos : positions) {
            if (pos < static_cast<std::size_t>(k)) ++hits;
        }
        if (recall_at_k(ranked, truths, k) !=
            static_cast<double>(hits) / static_cast<double>(queries)) {
            recall_exact = false;
        }
    }

    char detail[96];
    std::snprintf(detail, sizeof(detail), "max deviation %.3e, recall oracle %s", worst,
                  recall_exact ? "exact" : "MISMATCH");
    report("oracle-equivalence", worst <= 1e-12 && recall_exact, detail, seconds_since(start));
}

void criterion_analytic_fixtures() {
    auto start = Clock::now();
    bool pass = true;
    std::string detail;

    const double ln32 = batch_softmax_loss(Tensor::full({32, 32}, 2.5))->item();
    if (std::fabs(ln32 - 3.465736) > 1e-6) {
        pass = false;
        detail += "uniform loss " + std::to_string(ln32) + " != ln 32; ";
    }

    ModelConfig config;
    config.d = 8;
    config.fusion_rank = 2;
    config.channels = 8;
    config.intermediate_dim = 8;
    config.word_dim = 12;
    config.seed = 77;
    CcnetModel model(config);
    Rng rng(5);

    auto w = Tensor::zeros({1, config.d});
    for (double& v : w->value) v = rng.uniform(-1, 1);
    for (int e = 0; e < kNumExperts; ++e) {
        auto att = model.text_experts().attend(w, e, RunMode::inference());
        if (att.alpha->value[0] != 1.0) pass = false;
        for (std::int64_t c = 0; c < config.d; ++c) {
            if (att.attended->value[c] != w->value[c]) pass = false;
        }
    }

    for (int trial = 0; trial < 20; ++trial) {
        auto x = Tensor::zeros({config.d});
        for (double& v : x->value) v = rng.uniform(-2, 2);
        auto parts = model.difference_parts(x, x);
        for (double v : parts.diff->value) {
            if (v != 0.0) pass = false;
        }
    }

    for (int trial = 0; trial < 20; ++trial) {
        auto x = Tensor::zeros({5});
        auto W = Tensor::zeros({5, 5});
        auto b = Tensor::zeros({5});
        for (double& v : x->value) v = rng.uniform(-3, 3);
        for (double& v : W->value) v = rng.uniform(-1, 1);
        for (double& v : b->value) v = rng.uniform(-1, 1);
        auto y = ops::context_gating(x, W, b);
        for (int i = 0; i < 5; ++i) {
            if (std::fabs(y->value[i]) > std::fabs(x->value[i])) pass = false;
        }
    }

    if (detail.empty()) detail = "ln B, degenerate attention, zero difference, gate bound";
    report("analytic-fixtures", pass, detail, seconds_since(start));
}

SyntheticSpec overfit_spec() {
    SyntheticSpec spec;
    spec.attributes = 3;
    spec.values = 4;
    spec.images = 64;
    spec.train_triplets = 64;
    spec.eval_triplets = 32;
    spec.noise = 0.05;
    spec.seed = 13;
    spec.word_dim = 64;
    return spec;
}

TrainConfig overfit_config() {
    TrainConfig config;
    config.d = 32;
    config.batch = 32;
    config.learning_rate = 3e-3;
    config.decay = 0.98;
    config.dropout = 0.1;
    config.fusion_rank = 2;
    config.epochs = 200;
    config.seed = 4;
    return config;
}

void criterion_overfit() {
    auto start = Clock::now();
    const std::string dir = work_dir("overfit");
    write_synthetic(overfit_spec(), dir);
    TrainOptions options;
    options.out_path = dir + "/model.ckpt";
    train(overfit_config(), dir, options);

    CcnetModel model = CcnetModel::from_checkpoint(dir + "/model.ckpt");
    Dataset data = load_dataset(dir, "train");
    EvalOptions opt;
    opt.ks = {1};
    RecallReport result = evaluate({&model}, data.store, data.triplets, data.words, opt);
    const double secs = seconds_since(start);
    char detail[96];
    std::snprintf(detail, sizeof(detail), "training-set R@1 = %.4f (64 triplets, D=32, 200 epochs)",
                  result.overall);
    report("overfit-check", result.overall >= 0.95 && secs < 300.0, detail, secs);
}

SyntheticSpec benchmark_spec() {
    SyntheticSpec spec;  // A=4, V=6, N=1296, C=C_i=32 defaults
    spec.train_triplets = 1500;
    spec.eval_triplets = 500;
    spec.noise = 0.8;
    spec.seed = 77;
    spec.word_dim = 64;
    return spec;
}

TrainConfig benchmark_config(std::uint64_t seed) {
    TrainConfig config;
    config.d = 32;
    config.batch = 32;
    config.learning_rate = 1e-3;
    config.decay = 0.95;
    config.dropout = 0.1;
    config.fusion_rank = 2;
    config.epochs = 10;
    config.seed = seed;
    return config;
}

void criterion_benchmark_and_ensemble() {
    auto start = Clock::now();
    const std::string dir = work_dir("benchmark");
    write_synthetic(benchmark_spec(), dir);
    Dataset eval_data = load_dataset(dir, "val");

    std::vector<std::string> ckpts;
    std::vector<std::unique_ptr<CcnetModel>> models;
    std::vector<double> full_overall, comp_overall;
    int positive = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
        const std::string ckpt = dir + "/seed" + std::to_string(seed) + ".ckpt";
        TrainOptions options;
        options.out_path = ckpt;
        train(benchmark_config(seed), dir, options);
        ckpts.push_back(ckpt);
        models.push_back(std::make_unique<CcnetModel>(CcnetModel::from_checkpoint(ckpt)));

        EvalOptions full_opt;
        RecallReport full = evaluate({models.back().get()}, eval_data.store, eval_data.triplets,
                                     eval_data.words, full_opt);
        EvalOptions comp_opt;
        comp_opt.scorer = Scorer::kCompositionOnly;
        RecallReport comp = evaluate({models.back().get()}, eval_data.store, eval_data.triplets,
                                     eval_data.words, comp_opt);
        full_overall.push_back(full.overall);
        comp_overall.push_back(comp.overall);
        if (full.overall > comp.overall) ++positive;
    }
    const double secs = seconds_since(start);
    char detail[192];
    std::snprintf(detail, sizeof(detail),
                  "ccnet %.4f/%.4f/%.4f vs composition %.4f/%.4f/%.4f, sign test %d/3",
                  full_overall[0], full_overall[1], full_overall[2], comp_overall[0],
                  comp_overall[1], comp_overall[2], positive);
    report("generalization-ablation", positive == 3 && secs < 1800.0, detail, secs);

    // Ensemble of the three seeds against the best single member.
    auto ens_start = Clock::now();
    std::vector<const CcnetModel*> model_ptrs;
    for (const auto& m : models) model_ptrs.push_back(m.get());
    RecallReport ensemble =
        evaluate(model_ptrs, eval_data.store, eval_data.triplets, eval_data.words);
    const double best_single =
        std::max({full_overall[0], full_overall[1], full_overall[2]});
    char ens_detail[128];
    std::snprintf(ens_detail, sizeof(ens_detail), "ensemble %.4f vs best single %.4f",
                  ensemble.overall, best_single);
    report("ensemble-sanity", ensemble.overall >= best_single - 0.01, ens_detail,
           seconds_since(ens_start));
}

void criterion_determinism() {
    auto start = Clock::now();
    const std::string dir = work_dir("determinism");
    SyntheticSpec spec = overfit_spec();
    write_synthetic(spec, dir);
    TrainConfig config = overfit_config();
    config.epochs = 3;

    TrainOptions a;
    a.out_path = dir + "/a.ckpt";
    train(config, dir, a);
    TrainOptions b;
    b.out_path = dir + "/b.ckpt";
    train(config, dir, b);

    const bool ckpt_equal = read_file(dir + "/a.ckpt") == read_file(dir + "/b.ckpt");
    const bool log_equal =
        read_file(dir + "/a.ckpt.losslog.csv") == read_file(dir + "/b.ckpt.losslog.csv");
    report("determinism",
           ckpt_equal && log_equal,
           std::string("checkpoints ") + (ckpt_equal ? "identical" : "DIFFER") + ", loss logs " +
               (log_equal ? "identical" : "DIFFER"),
           seconds_since(start));
}

void criterion_format_round_trips() {
    auto start = Clock::now();
    const std::string dir = work_dir("formats");
    Rng rng(99);
    bool pass = true;

    FeatureStoreHeader header{7, 7, 6, 5};
    FeatureStore store(header);
    for (int i = 0; i < 4; ++i) {
        std::vector<float> map(7 * 7 * 6), inter(5);
        for (auto& v : map) v = static_cast<float>(rng.uniform(-1, 1));
        for (auto& v : inter) v = static_cast<float>(rng.uniform(-1, 1));
        store.add("img" + std::to_string(i), map, inter, i % 2 ? "dress" : "shirt");
    }
    store.save(dir);
    FeatureStore loaded = FeatureStore::load(dir);
    if (loaded.raw_data() != store.raw_data()) pass = false;

    ModelParams params;
    params.add("block.weight", Tensor::zeros({6, 4}, true));
    params.add("block.bias", Tensor::zeros({6}, true));
    params.add("stats.running_var", Tensor::full({6}, 1.0), false);
    for (const auto& [name, entry] : params.entries()) {
        for (double& v : entry.tensor->value) v = rng.uniform(-2, 2);
    }
    const std::string ckpt_path = dir + "/params.ckpt";
    save_checkpoint(params, ckpt_path);
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    for (const auto& [name, entry] : params.entries()) {
        const auto& stored = ckpt.tensors.at(name);
        if (stored.shape != entry.tensor->shape) pass = false;
        for (std::size_t i = 0; i < stored.values.size(); ++i) {
            if (stored.values[i] != static_cast<float>(entry.tensor->value[i])) pass = false;
        }
    }
    // And a second write of the loaded state is byte-identical.
    ModelParams reloaded;
    for (const auto& [name, entry] : params.entries()) {
        reloaded.add(name, Tensor::zeros(entry.tensor->shape), entry.learnable);
    }
    apply_checkpoint(ckpt, reloaded);
    save_checkpoint(reloaded, dir + "/params2.ckpt");
    if (read_file(ckpt_path) != read_file(dir + "/params2.ckpt")) pass = false;

    report("format-round-trips", pass, "feature store and checkpoint bit-exact at 32-bit",
           seconds_since(start));
}

}  // namespace

int main() {
    auto start = Clock::now();
    criterion_gradient_suite();
    criterion_oracle_equivalence();
    criterion_analytic_fixtures();
    criterion_format_round_trips();
    criterion_determinism();
    criterion_overfit();
    criterion_benchmark_and_ensemble();
    std::printf("%s: %d criterion(s) failed (total %.1f s)\n",
                g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED", g_failures,
                seconds_since(start));
    return g_failures == 0 ? 0 : 1;
}

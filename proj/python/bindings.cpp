#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <memory>

#include "ccnet/harness.hpp"
#include "ccnet/model.hpp"
#include "ccnet/retrieval.hpp"

namespace py = pybind11;
using namespace ccnet;

namespace {

TensorPtr tensor_from_array(const py::array_t<double, py::array::c_style>& arr) {
    std::vector<std::int64_t> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<std::size_t>(i)] = arr.shape(i);
    std::vector<double> values(arr.data(), arr.data() + arr.size());
    return Tensor::from_values(shape, std::move(values));
}

py::array_t<double> array_from_tensor(const TensorPtr& t) {
    std::vector<py::ssize_t> shape(t->shape.begin(), t->shape.end());
    py::array_t<double> out(shape);
    std::copy(t->value.begin(), t->value.end(), out.mutable_data());
    return out;
}

SyntheticSpec spec_from_kwargs(std::int64_t attributes, std::int64_t values, std::int64_t images,
                               std::int64_t train_triplets, std::int64_t eval_triplets,
                               double noise, std::uint64_t seed, std::int64_t channels,
                               std::int64_t intermediate_dim, std::int64_t word_dim) {
    SyntheticSpec spec;
    spec.attributes = attributes;
    spec.values = values;
    spec.images = images;
    spec.train_triplets = train_triplets;
    spec.eval_triplets = eval_triplets;
    spec.noise = noise;
    spec.seed = seed;
    spec.channels = channels;
    spec.intermediate_dim = intermediate_dim;
    spec.word_dim = word_dim;
    return spec;
}

Scorer scorer_from_name(const std::string& name) {
    if (name == "ccnet") return Scorer::kCcnet;
    if (name == "composition") return Scorer::kCompositionOnly;
    if (name == "correction") return Scorer::kCorrectionOnly;
    throw ContractError("unknown scorer '" + name + "'");
}

py::dict report_to_dict(const RecallReport& report) {
    py::dict out;
    for (const auto& [category, by_k] : report.per_category) {
        for (const auto& [k, recall] : by_k) {
            out[py::str(category + ".r" + std::to_string(k))] = recall;
        }
    }
    out["overall.avg"] = report.overall;
    return out;
}

}  // namespace

PYBIND11_MODULE(_ccnet, m) {
    m.doc() = "Compositional image-text retrieval engine";

    m.def(
        "softmax",
        [](const py::array_t<double, py::array::c_style>& x, int axis) {
            auto t = tensor_from_array(x);
            if (axis < 0) axis += t->rank();
            return array_from_tensor(ops::softmax(t, axis));
        },
        py::arg("x"), py::arg("axis") = -1, "Max-subtracted softmax along an axis");

    m.def(
        "batch_softmax_loss",
        [](const py::array_t<double, py::array::c_style>& scores) {
            return batch_softmax_loss(tensor_from_array(scores))->item();
        },
        py::arg("scores"), "In-batch softmax cross entropy over a square score matrix");

    m.def(
        "context_gating",
        [](const py::array_t<double, py::array::c_style>& x,
           const py::array_t<double, py::array::c_style>& W,
           const py::array_t<double, py::array::c_style>& b) {
            return array_from_tensor(
                ops::context_gating(tensor_from_array(x), tensor_from_array(W),
                                    tensor_from_array(b)));
        },
        py::arg("x"), py::arg("weight"), py::arg("bias"),
        "Sigmoid self-gating y = x * sigmoid(W x + b)");

    m.def(
        "combined_probability",
        [](const std::vector<std::string>& gallery, const std::vector<double>& s_r,
           const std::vector<double>& s_c) {
            RankedList ranked = combined_probability("query", gallery, s_r, s_c);
            std::vector<std::pair<std::string, double>> out;
            for (std::size_t i = 0; i < ranked.candidate_ids.size(); ++i) {
                out.emplace_back(ranked.candidate_ids[i], ranked.probabilities[i]);
            }
            return out;
        },
        py::arg("gallery"), py::arg("s_r"), py::arg("s_c"),
        "Rank a gallery by the product of the two score softmaxes");

    m.def(
        "recall_at_k",
        [](const std::vector<std::vector<std::string>>& ranked_ids,
           const std::vector<std::string>& truths, int k) {
            std::vector<RankedList> ranked;
            for (std::size_t q = 0; q < ranked_ids.size(); ++q) {
                RankedList r;
                r.query_id = "q" + std::to_string(q);
                r.candidate_ids = ranked_ids[q];
                r.probabilities.assign(ranked_ids[q].size(), 0.0);
                ranked.push_back(std::move(r));
            }
            return recall_at_k(ranked, truths, k);
        },
        py::arg("ranked_ids"), py::arg("truths"), py::arg("k"),
        "Fraction of queries whose truth appears in the top K of its ranked id list");

    m.def(
        "generate_synthetic",
        [](const std::string& out_dir, std::int64_t attributes, std::int64_t values,
           std::int64_t images, std::int64_t train_triplets, std::int64_t eval_triplets,
           double noise, std::uint64_t seed, std::int64_t channels, std::int64_t intermediate_dim,
           std::int64_t word_dim) {
            write_synthetic(spec_from_kwargs(attributes, values, images, train_triplets,
                                             eval_triplets, noise, seed, channels,
                                             intermediate_dim, word_dim),
                            out_dir);
        },
        py::arg("out_dir"), py::arg("attributes") = 4, py::arg("values") = 6,
        py::arg("images") = 1296, py::arg("train_triplets") = 2000,
        py::arg("eval_triplets") = 500, py::arg("noise") = 0.05, py::arg("seed") = 1,
        py::arg("channels") = 32, py::arg("intermediate_dim") = 32, py::arg("word_dim") = 300,
        "Generate an attribute-structured dataset under out_dir");

    m.def(
        "train",
        [](const std::string& data_dir, const std::string& out_ckpt, std::int64_t d,
           std::int64_t batch, double lr, double decay, const std::string& decay_unit,
           double dropout, std::int64_t fusion_rank, std::int64_t epochs, std::uint64_t seed,
           double lambda_r, double lambda_c, bool share_diff_fc) {
            TrainConfig config;
            config.d = d;
            config.batch = batch;
            config.learning_rate = lr;
            config.decay = decay;
            if (decay_unit == "step") {
                config.decay_unit = TrainConfig::DecayUnit::kStep;
            } else if (decay_unit != "epoch") {
                throw ContractError("decay_unit must be 'epoch' or 'step'");
            }
            config.dropout = dropout;
            config.fusion_rank = fusion_rank;
            config.epochs = epochs;
            config.seed = seed;
            config.lambda_r = lambda_r;
            config.lambda_c = lambda_c;
            config.share_diff_fc = share_diff_fc;
            TrainOptions options;
            options.out_path = out_ckpt;
            TrainResult result = train(config, data_dir, options);
            py::dict out;
            out["steps"] = result.log.size();
            out["checkpoint"] = result.checkpoint_path;
            if (!result.log.empty()) {
                out["final_loss"] = result.log.back().loss;
                out["final_loss_r"] = result.log.back().loss_r;
                out["final_loss_c"] = result.log.back().loss_c;
            }
            return out;
        },
        py::arg("data_dir"), py::arg("out_ckpt"), py::arg("d") = 64, py::arg("batch") = 32,
        py::arg("lr") = 1e-4, py::arg("decay") = 0.95, py::arg("decay_unit") = "epoch",
        py::arg("dropout") = 0.2, py::arg("fusion_rank") = 4, py::arg("epochs") = 10,
        py::arg("seed") = 1, py::arg("lambda_r") = 1.0, py::arg("lambda_c") = 1.0,
        py::arg("share_diff_fc") = true, "Train on data_dir and write a checkpoint");

    m.def(
        "evaluate",
        [](const std::vector<std::string>& ckpts, const std::string& data_dir,
           const std::string& split, const std::vector<int>& ks, const std::string& scorer) {
            std::vector<std::unique_ptr<CcnetModel>> models;
            std::vector<const CcnetModel*> ptrs;
            for (const auto& path : ckpts) {
                models.push_back(
                    std::make_unique<CcnetModel>(CcnetModel::from_checkpoint(path)));
                ptrs.push_back(models.back().get());
            }
            Dataset data = load_dataset(data_dir, split);
            EvalOptions options;
            options.ks = ks;
            options.scorer = scorer_from_name(scorer);
            return report_to_dict(
                evaluate(ptrs, data.store, data.triplets, data.words, options));
        },
        py::arg("ckpts"), py::arg("data_dir"), py::arg("split") = "val",
        py::arg("ks") = std::vector<int>{10, 50}, py::arg("scorer") = "ccnet",
        "Per-category Recall@K plus the overall average; several checkpoints ensemble");

    m.def(
        "retrieve",
        [](const std::string& ckpt, const std::string& data_dir, const std::string& ref_id,
           const std::string& caption, std::size_t topk, const std::string& scorer) {
            CcnetModel model = CcnetModel::from_checkpoint(ckpt);
            FeatureStore store = FeatureStore::load(data_dir);
            WordVectorTable words = WordVectorTable::load(
                (std::filesystem::path(data_dir) / "words.txt").string());
            RankedList ranked = retrieve_topk({&model}, store, words, ref_id, caption, topk,
                                              scorer_from_name(scorer));
            std::vector<std::pair<std::string, double>> out;
            for (std::size_t i = 0; i < ranked.candidate_ids.size(); ++i) {
                out.emplace_back(ranked.candidate_ids[i], ranked.probabilities[i]);
            }
            return out;
        },
        py::arg("ckpt"), py::arg("data_dir"), py::arg("ref_id"), py::arg("caption"),
        py::arg("topk") = 10, py::arg("scorer") = "ccnet",
        "Rank the reference's category gallery for one caption");

    m.def(
        "grad_check",
        [] {
            GradCheckResult result = grad_check();
            py::dict out;
            for (const auto& [module, err] : result.per_module) out[py::str(module)] = err;
            out["max"] = result.max_error;
            return out;
        },
        "Finite-difference check of the joint loss gradients on a micro model");
}

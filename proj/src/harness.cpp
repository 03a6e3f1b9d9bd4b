#include "ccnet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string_view>

namespace ccnet {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kStreamShuffle = 10;
constexpr std::uint64_t kStreamDropout = 11;
constexpr std::uint64_t kStreamGradCheck = 12;

}  // namespace

TrainConfig parse_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("train config: cannot open '" + path + "'");
    TrainConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key.empty()) continue;
        std::string value;
        ss >> value;
        if (value == "=") ss >> value;
        if (value.empty()) {
            throw FormatError("train config: missing value at line " + std::to_string(line_no));
        }
        auto bad_value = [&]() {
            return FormatError("train config: bad value for '" + key + "' at line " +
                               std::to_string(line_no));
        };
        try {
            if (key == "d") {
                config.d = std::stoll(value);
            } else if (key == "batch") {
                config.batch = std::stoll(value);
            } else if (key == "lr" || key == "learning_rate") {
                config.learning_rate = std::stod(value);
            } else if (key == "decay") {
                config.decay = std::stod(value);
            } else if (key == "decay_unit") {
                if (value == "epoch") {
                    config.decay_unit = TrainConfig::DecayUnit::kEpoch;
                } else if (value == "step") {
                    config.decay_unit = TrainConfig::DecayUnit::kStep;
                } else {
                    throw bad_value();
                }
            } else if (key == "dropout") {
                config.dropout = std::stod(value);
            } else if (key == "fusion_rank") {
                config.fusion_rank = std::stoll(value);
            } else if (key == "epochs") {
                config.epochs = std::stoll(value);
            } else if (key == "seed") {
                config.seed = std::stoull(value);
            } else if (key == "lambda_r") {
                config.lambda_r = std::stod(value);
            } else if (key == "lambda_c") {
                config.lambda_c = std::stod(value);
            } else if (key == "share_diff_fc") {
                if (value == "true" || value == "1") {
                    config.share_diff_fc = true;
                } else if (value == "false" || value == "0") {
                    config.share_diff_fc = false;
                } else {
                    throw bad_value();
                }
            } else if (key == "eval_every") {
                config.eval_every = std::stoll(value);
            } else {
                throw FormatError("train config: unknown key '" + key + "' at line " +
                                  std::to_string(line_no));
            }
        } catch (const std::invalid_argument&) {
            throw bad_value();
        }
    }
    if (config.batch < 2) throw DataError("train config: batch must be >= 2");
    if (config.learning_rate < 0 || config.decay <= 0 || config.dropout < 0 ||
        config.dropout >= 1) {
        throw DataError("train config: rates out of range");
    }
    return config;
}

OptimizerState OptimizerState::init(const ModelParams& params, double learning_rate) {
    OptimizerState state;
    state.learning_rate = learning_rate;
    for (const auto& [name, entry] : params.entries()) {
        if (!entry.learnable) continue;
        Slot slot;
        slot.m.assign(entry.tensor->value.size(), 0.0);
        slot.v.assign(entry.tensor->value.size(), 0.0);
        state.slots.emplace(name, std::move(slot));
    }
    return state;
}

void adam_step(ModelParams& params, OptimizerState& state, const AdamHyper& hyper) {
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(hyper.beta1, t);
    const double bias2 = 1.0 - std::pow(hyper.beta2, t);
    for (const auto& [name, entry] : params.entries()) {
        if (!entry.learnable) continue;
        auto it = state.slots.find(name);
        if (it == state.slots.end()) {
            throw DataError("adam: no optimizer slot for parameter '" + name + "'");
        }
        Tensor& tensor = *entry.tensor;
        if (tensor.grad.size() != tensor.value.size()) {
            throw DataError("adam: gradient shape mismatch for '" + name + "' (" +
                            std::to_string(tensor.grad.size()) + " values vs " +
                            std::to_string(tensor.value.size()) + ")");
        }
        OptimizerState::Slot& slot = it->second;
        for (std::size_t i = 0; i < tensor.value.size(); ++i) {
            const double g = tensor.grad[i];
            slot.m[i] = hyper.beta1 * slot.m[i] + (1.0 - hyper.beta1) * g;
            slot.v[i] = hyper.beta2 * slot.v[i] + (1.0 - hyper.beta2) * g * g;
            const double m_hat = slot.m[i] / bias1;
            const double v_hat = slot.v[i] / bias2;
            tensor.value[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps);
        }
    }
}

OptimizerSnapshot snapshot_optimizer(const OptimizerState& state) {
    OptimizerSnapshot snap;
    snap.step = state.step;
    snap.epoch = state.epoch;
    snap.learning_rate = state.learning_rate;
    for (const auto& [name, slot] : state.slots) {
        std::vector<float> m(slot.m.begin(), slot.m.end());
        std::vector<float> v(slot.v.begin(), slot.v.end());
        snap.moments[name] = {std::move(m), std::move(v)};
    }
    return snap;
}

OptimizerState restore_optimizer(const OptimizerSnapshot& snapshot, const ModelParams& params) {
    OptimizerState state = OptimizerState::init(params, snapshot.learning_rate);
    state.step = snapshot.step;
    state.epoch = snapshot.epoch;
    for (auto& [name, slot] : state.slots) {
        auto it = snapshot.moments.find(name);
        if (it == snapshot.moments.end()) {
            throw DataError("optimizer snapshot: missing moments for '" + name + "'");
        }
        if (it->second.first.size() != slot.m.size()) {
            throw DataError("optimizer snapshot: moment size mismatch for '" + name + "'");
        }
        for (std::size_t i = 0; i < slot.m.size(); ++i) {
            slot.m[i] = static_cast<double>(it->second.first[i]);
            slot.v[i] = static_cast<double>(it->second.second[i]);
        }
    }
    return state;
}

std::string format_loss_log(const std::vector<StepLog>& log) {
    std::ostringstream os;
    os << "step,epoch,loss_r,loss_c,loss,lr\n";
    char buf[160];
    for (const auto& row : log) {
        std::snprintf(buf, sizeof(buf), "%llu,%llu,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<unsigned long long>(row.step),
                      static_cast<unsigned long long>(row.epoch), row.loss_r, row.loss_c,
                      row.loss, row.lr);
        os << buf;
    }
    return os.str();
}

Dataset load_dataset(const std::string& data_dir, const std::string& split) {
    Dataset data;
    data.store = FeatureStore::load(data_dir);
    data.words = WordVectorTable::load((fs::path(data_dir) / "words.txt").string());
    data.triplets = load_triplets((fs::path(data_dir) / (split + ".jsonl")).string());
    return data;
}

namespace {

struct Batch {
    std::vector<const PooledImage*> refs;
    std::vector<const PooledImage*> trgs;
    std::vector<std::vector<std::string>> captions;  // merged token lists
};

struct ForwardLosses {
    TensorPtr loss_r, loss_c, loss;
};

ForwardLosses joint_forward(const CcnetModel& model, const Batch& batch,
                            const WordVectorTable& words, const RunMode& mode, double lambda_r,
                            double lambda_c) {
    const std::int64_t b = static_cast<std::int64_t>(batch.refs.size());
    std::vector<const PooledImage*> all_images = batch.refs;
    all_images.insert(all_images.end(), batch.trgs.begin(), batch.trgs.end());
    BankMatrices joint = model.image_banks(all_images, mode);
    std::vector<std::int64_t> ref_rows(b), trg_rows(b);
    for (std::int64_t i = 0; i < b; ++i) {
        ref_rows[i] = i;
        trg_rows[i] = b + i;
    }
    BankMatrices ref, trg;
    for (int e = 0; e < kNumExperts; ++e) {
        ref[e] = ops::gather_rows(joint[e], ref_rows);
        trg[e] = ops::gather_rows(joint[e], trg_rows);
    }
    BankMatrices text = model.caption_banks(batch.captions, words, mode);
    BankMatrices composed = model.compose_banks(ref, text, mode);

    ForwardLosses out;
    out.loss_r = batch_softmax_loss(composition_scores(composed, trg));
    out.loss_c = batch_softmax_loss(model.correction_scores(ref, trg, text, mode));
    out.loss = ops::add(ops::scale_const(out.loss_r, lambda_r),
                        ops::scale_const(out.loss_c, lambda_c));
    return out;
}

[[noreturn]] void abort_non_finite(const ModelParams& params, std::uint64_t step) {
    std::string worst_name = "(none)";
    double worst_norm = -1.0;
    for (const auto& [name, entry] : params.entries()) {
        if (!entry.learnable) continue;
        double norm = 0.0;
        for (double g : entry.tensor->grad) norm += g * g;
        norm = std::sqrt(norm);
        if (!std::isfinite(norm)) {
            worst_name = name;
            worst_norm = norm;
            break;
        }
        if (norm > worst_norm) {
            worst_norm = norm;
            worst_name = name;
        }
    }
    throw TrainError("train: non-finite loss at step " + std::to_string(step) +
                     "; parameter '" + worst_name + "' gradient norm " +
                     std::to_string(worst_norm));
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::string& data_dir,
                  const TrainOptions& options) {
    if (config.batch < 2) throw ContractError("train: batch must be >= 2");
    if (options.out_path.empty()) throw ContractError("train: no checkpoint path given");

    Dataset data = load_dataset(data_dir, "train");
    if (data.triplets.size() < 2) throw DataError("train: need at least 2 triplets");
    std::vector<TripletRecord> eval_split;
    if (config.eval_every > 0 &&
        fs::exists(fs::path(data_dir) / "val.jsonl")) {
        eval_split = load_triplets((fs::path(data_dir) / "val.jsonl").string());
    }

    // Pool every referenced image once.
    std::map<std::string, PooledImage> pooled;
    for (const auto& rec : data.triplets) {
        for (const std::string& id : {rec.ref_id, rec.trg_id}) {
            if (!pooled.count(id)) pooled.emplace(id, data.store.pooled(id));
        }
    }

    ModelConfig model_config;
    model_config.d = config.d;
    model_config.fusion_rank = config.fusion_rank;
    model_config.channels = data.store.header().channels;
    model_config.intermediate_dim = data.store.header().intermediate_dim;
    model_config.word_dim = data.words.dim();
    model_config.share_diff_fc = config.share_diff_fc;
    model_config.seed = config.seed;
    CcnetModel model(model_config);

    OptimizerState state = OptimizerState::init(model.params(), config.learning_rate);
    std::uint64_t start_epoch = 0;
    if (!options.resume_path.empty()) {
        Checkpoint ckpt = load_checkpoint(options.resume_path);
        apply_checkpoint(ckpt, model.params());
        if (!ckpt.optimizer.has_value()) {
            throw DataError("train: resume checkpoint has no optimizer state");
        }
        state = restore_optimizer(*ckpt.optimizer, model.params());
        start_epoch = state.epoch;
    }

    TrainResult result;
    result.checkpoint_path = options.out_path;
    const std::string log_path =
        options.log_path.empty() ? options.out_path + ".losslog.csv" : options.log_path;

    std::vector<std::size_t> order(data.triplets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const std::size_t batch_size =
        std::min<std::size_t>(static_cast<std::size_t>(config.batch), order.size());

    for (std::uint64_t epoch = start_epoch;
         epoch < static_cast<std::uint64_t>(config.epochs); ++epoch) {
        // The epoch's batch order is a pure function of (seed, epoch) so a
        // resumed run sees the same shuffles as an uninterrupted one.
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(config.seed, kStreamShuffle, epoch));
        shuffle_rng.shuffle(order);

        const std::size_t n_batches = order.size() / batch_size;
        for (std::size_t bi = 0; bi < n_batches; ++bi) {
            Batch batch;
            for (std::size_t k = 0; k < batch_size; ++k) {
                const TripletRecord& rec = data.triplets[order[bi * batch_size + k]];
                batch.refs.push_back(&pooled.at(rec.ref_id));
                batch.trgs.push_back(&pooled.at(rec.trg_id));
                batch.captions.push_back(merge_captions(rec.captions));
            }

            Rng dropout_rng(derive_seed(config.seed, kStreamDropout, state.step));
            const RunMode mode = RunMode::train(config.dropout, &dropout_rng);

            Tape tape;
            ForwardLosses losses =
                joint_forward(model, batch, data.words, mode, config.lambda_r, config.lambda_c);
            model.params().zero_grad();
            tape.backward(losses.loss);

            StepLog row;
            row.step = state.step;  // 0-based step counter before the update
            row.epoch = epoch;
            row.loss_r = losses.loss_r->item();
            row.loss_c = losses.loss_c->item();
            row.loss = losses.loss->item();
            row.lr = state.learning_rate;
            if (!std::isfinite(row.loss)) {
                abort_non_finite(model.params(), state.step);
            }
            result.log.push_back(row);

            adam_step(model.params(), state);
            if (config.decay_unit == TrainConfig::DecayUnit::kStep) {
                state.learning_rate *= config.decay;
            }
        }

        if (config.decay_unit == TrainConfig::DecayUnit::kEpoch) {
            state.learning_rate *= config.decay;
        }
        state.epoch = epoch + 1;

        OptimizerSnapshot snap = snapshot_optimizer(state);
        save_checkpoint(model.params(), options.out_path, &snap);

        if (config.eval_every > 0 && !eval_split.empty() &&
            (epoch + 1) % static_cast<std::uint64_t>(config.eval_every) == 0) {
            RecallReport report = evaluate({&model}, data.store, eval_split, data.words);
            if (report.overall > result.best_eval) {
                result.best_eval = report.overall;
                save_checkpoint(model.params(), options.out_path + ".best", &snap);
            }
        }
    }

    std::ofstream log_out(log_path, std::ios::binary);
    if (!log_out) throw DataError("train: cannot write loss log '" + log_path + "'");
    log_out << format_loss_log(result.log);
    return result;
}

namespace {

// Central differences are only meaningful at a differentiable point: a
// pre-activation within ~h of a ReLU kink makes the two-sided difference
// straddle the kink. The recorded relu inputs expose the margin.
double relu_kink_margin(const Tape& tape) {
    double margin = 1e300;
    for (const auto& rec : tape.records()) {
        if (std::string_view(rec.name) != "relu") continue;
        for (double v : rec.inputs[0]->value) margin = std::min(margin, std::fabs(v));
    }
    return margin;
}

}  // namespace

GradCheckResult grad_check(double h) {
    // Micro configuration: D=8, E=7, B=4, R=2, l=3 at double precision,
    // dropout 0, batch norm in inference mode.
    ModelConfig config;
    config.d = 8;
    config.fusion_rank = 2;
    config.channels = 8;
    config.intermediate_dim = 8;
    config.word_dim = 16;

    const std::int64_t b = 4;
    const std::vector<std::string> vocab = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta"};
    const RunMode mode = RunMode::inference();
    // A perturbation of h moves any pre-activation by at most a few h, so
    // activations this far from the kink never flip regime during the sweep.
    const double min_margin = 8.0 * h;

    std::unique_ptr<CcnetModel> model;
    std::vector<PooledImage> pooled(2 * b);
    WordVectorTable words;
    Batch batch;
    auto forward = [&] { return joint_forward(*model, batch, words, mode, 1.0, 1.0).loss; };

    bool found_point = false;
    for (std::uint64_t trial = 0; trial < 32 && !found_point; ++trial) {
        config.seed = 2024 + trial;
        model = std::make_unique<CcnetModel>(config);
        Rng rng(derive_seed(config.seed, kStreamGradCheck));
        for (auto& img : pooled) {
            for (int e = 0; e < kNumExperts; ++e) {
                const std::int64_t in = e == 1 ? config.intermediate_dim : config.channels;
                img.raw[e].resize(static_cast<std::size_t>(in));
                for (double& v : img.raw[e]) v = rng.uniform(-1, 1);
            }
        }
        words = WordVectorTable(config.word_dim);
        for (const auto& tok : vocab) {
            std::vector<double> vec(static_cast<std::size_t>(config.word_dim));
            for (double& v : vec) v = rng.uniform(-0.5, 0.5);
            words.add(tok, vec);
        }
        batch = Batch{};
        for (std::int64_t i = 0; i < b; ++i) {
            batch.refs.push_back(&pooled[static_cast<std::size_t>(i)]);
            batch.trgs.push_back(&pooled[static_cast<std::size_t>(b + i)]);
            std::vector<std::string> caption;
            for (int t = 0; t < 3; ++t) {
                caption.push_back(vocab[rng.bounded(vocab.size())]);
            }
            batch.captions.push_back(caption);
        }

        model->params().zero_grad();
        Tape tape;
        auto loss = forward();
        if (relu_kink_margin(tape) >= min_margin) {
            tape.backward(loss);
            found_point = true;
        }
    }
    if (!found_point) {
        throw TrainError("grad_check: no kink-free evaluation point found");
    }

    GradCheckResult result;
    for (const auto& [name, entry] : model->params().entries()) {
        if (!entry.learnable) continue;
        Tensor& tensor = *entry.tensor;
        double worst = 0.0;
        for (std::size_t i = 0; i < tensor.value.size(); ++i) {
            const double saved = tensor.value[i];
            tensor.value[i] = saved + h;
            const double f_plus = forward()->item();
            tensor.value[i] = saved - h;
            const double f_minus = forward()->item();
            tensor.value[i] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * h);
            const double analytic = tensor.grad[i];
            const double denom = std::max({std::fabs(analytic), std::fabs(fd), 1e-4});
            worst = std::max(worst, std::fabs(analytic - fd) / denom);
        }
        result.per_parameter[name] = worst;
        const std::string module = name.substr(0, name.find('.'));
        auto it = result.per_module.find(module);
        if (it == result.per_module.end()) {
            result.per_module[module] = worst;
        } else {
            it->second = std::max(it->second, worst);
        }
        result.max_error = std::max(result.max_error, worst);
    }
    return result;
}

}  // namespace ccnet

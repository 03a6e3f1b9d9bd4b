#pragma once

#include <map>
#include <string>
#include <vector>

#include "ccnet/data_io.hpp"
#include "ccnet/model.hpp"
#include "ccnet/retrieval.hpp"

namespace ccnet {

struct TrainConfig {
    std::int64_t d = 64;
    std::int64_t batch = 32;
    double learning_rate = 1e-4;
    double decay = 0.95;
    enum class DecayUnit { kEpoch, kStep };
    // The literal per-step reading annihilates the rate within a few
    // hundred steps; per-epoch is the default, per-step stays available.
    DecayUnit decay_unit = DecayUnit::kEpoch;
    double dropout = 0.2;
    std::int64_t fusion_rank = 4;
    std::int64_t epochs = 10;
    std::uint64_t seed = 1;
    double lambda_r = 1.0;
    double lambda_c = 1.0;
    bool share_diff_fc = true;
    std::int64_t eval_every = 0;  // epochs between eval snapshots, 0 = off
};

TrainConfig parse_train_config(const std::string& path);

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    struct Slot {
        std::vector<double> m, v;
    };
    std::map<std::string, Slot> slots;  // learnable parameters only
    std::uint64_t step = 0;
    std::uint64_t epoch = 0;
    double learning_rate = 0.0;

    static OptimizerState init(const ModelParams& params, double learning_rate);
};

// One bias-corrected Adam update from the gradients currently stored on
// the learnable parameters. Learning-rate decay is the caller's job (it
// happens at decay-unit boundaries, not inside the step).
void adam_step(ModelParams& params, OptimizerState& state, const AdamHyper& hyper = {});

OptimizerSnapshot snapshot_optimizer(const OptimizerState& state);
OptimizerState restore_optimizer(const OptimizerSnapshot& snapshot, const ModelParams& params);

struct StepLog {
    std::uint64_t step = 0;
    std::uint64_t epoch = 0;
    double loss_r = 0.0;
    double loss_c = 0.0;
    double loss = 0.0;
    double lr = 0.0;
};

std::string format_loss_log(const std::vector<StepLog>& log);

struct Dataset {
    FeatureStore store;
    WordVectorTable words;
    std::vector<TripletRecord> triplets;
};

Dataset load_dataset(const std::string& data_dir, const std::string& split);

struct TrainOptions {
    std::string out_path;          // checkpoint written at every epoch end
    std::string log_path;          // defaults to out_path + ".losslog.csv"
    std::string resume_path;       // optional checkpoint with optimizer state
};

struct TrainResult {
    std::vector<StepLog> log;
    std::string checkpoint_path;
    double best_eval = -1.0;  // only meaningful when eval_every > 0
};

TrainResult train(const TrainConfig& config, const std::string& data_dir,
                  const TrainOptions& options);

// Joint-loss gradient check on a micro model (D=8, E=7, B=4, R=2, l=3)
// at double precision: analytic gradients against central finite
// differences (h = 1e-5) for every learnable parameter.
struct GradCheckResult {
    std::map<std::string, double> per_parameter;  // max relative error
    std::map<std::string, double> per_module;     // prefix before the first '.'
    double max_error = 0.0;
};

GradCheckResult grad_check(double h = 1e-5);

}  // namespace ccnet

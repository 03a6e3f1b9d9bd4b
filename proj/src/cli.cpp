#include "ccnet/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "ccnet/harness.hpp"
#include "ccnet/model.hpp"
#include "ccnet/retrieval.hpp"

namespace ccnet {

namespace {

std::vector<int> parse_ks(const std::string& csv) {
    std::vector<int> ks;
    std::string current;
    for (char ch : csv + ",") {
        if (ch == ',') {
            if (!current.empty()) {
                ks.push_back(std::stoi(current));
                current.clear();
            }
        } else {
            current.push_back(ch);
        }
    }
    if (ks.empty()) throw ContractError("eval: empty recall list");
    return ks;
}

Scorer parse_scorer(const std::string& name) {
    if (name == "ccnet") return Scorer::kCcnet;
    if (name == "composition") return Scorer::kCompositionOnly;
    if (name == "correction") return Scorer::kCorrectionOnly;
    throw ContractError("unknown scorer '" + name + "'");
}

int run_synth(const std::string& out_dir, const std::string& spec_path, std::int64_t seed) {
    SyntheticSpec spec = spec_path.empty() ? SyntheticSpec{} : parse_synthetic_spec(spec_path);
    if (seed >= 0) spec.seed = static_cast<std::uint64_t>(seed);
    write_synthetic(spec, out_dir);
    std::cout << "wrote " << spec.images << " images, " << spec.train_triplets
              << " train triplets, " << spec.eval_triplets << " eval triplets to " << out_dir
              << "\n";
    return 0;
}

int run_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_path, const std::string& log_path,
              const std::string& resume_path) {
    TrainConfig config =
        config_path.empty() ? TrainConfig{} : parse_train_config(config_path);
    TrainOptions options;
    options.out_path = out_path;
    options.log_path = log_path;
    options.resume_path = resume_path;
    TrainResult result = train(config, data_dir, options);
    if (!result.log.empty()) {
        const StepLog& last = result.log.back();
        std::printf("trained %zu steps, final loss %.6f (r %.6f, c %.6f)\n", result.log.size(),
                    last.loss, last.loss_r, last.loss_c);
    }
    std::cout << "checkpoint: " << result.checkpoint_path << "\n";
    return 0;
}

int run_eval(const std::vector<std::string>& ckpts, const std::string& data_dir,
             const std::string& split, const std::string& recall_csv,
             const std::string& report_path, const std::string& scorer_name) {
    std::vector<std::unique_ptr<CcnetModel>> models;
    std::vector<const CcnetModel*> model_ptrs;
    for (const auto& path : ckpts) {
        models.push_back(std::make_unique<CcnetModel>(CcnetModel::from_checkpoint(path)));
        model_ptrs.push_back(models.back().get());
    }
    Dataset data = load_dataset(data_dir, split);
    EvalOptions options;
    options.ks = parse_ks(recall_csv);
    options.scorer = parse_scorer(scorer_name);
    RecallReport report = evaluate(model_ptrs, data.store, data.triplets, data.words, options);
    std::cout << report.to_text();
    if (!report_path.empty()) {
        write_report(report, report_path);
        std::cout << "report: " << report_path << "\n";
    }
    return 0;
}

int run_retrieve(const std::string& ckpt, const std::string& data_dir, const std::string& ref_id,
                 const std::string& caption, std::int64_t topk, const std::string& scorer_name) {
    CcnetModel model = CcnetModel::from_checkpoint(ckpt);
    FeatureStore store = FeatureStore::load(data_dir);
    WordVectorTable words =
        WordVectorTable::load((std::filesystem::path(data_dir) / "words.txt").string());
    RankedList ranked = retrieve_topk({&model}, store, words, ref_id, caption,
                                      static_cast<std::size_t>(topk), parse_scorer(scorer_name));
    for (std::size_t i = 0; i < ranked.candidate_ids.size(); ++i) {
        std::printf("%2zu  %s  %.6f\n", i + 1, ranked.candidate_ids[i].c_str(),
                    ranked.probabilities[i]);
    }
    return 0;
}

int run_gradcheck() {
    GradCheckResult result = grad_check();
    for (const auto& [module, err] : result.per_module) {
        std::printf("%-12s max relative error %.3e\n", module.c_str(), err);
    }
    std::printf("overall      max relative error %.3e (tolerance 1e-4)\n", result.max_error);
    if (result.max_error > 1e-4) {
        std::fprintf(stderr, "gradcheck: tolerance exceeded\n");
        return 1;
    }
    return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
    CLI::App app{"Compositional image-text retrieval engine"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    std::string synth_out, synth_spec;
    std::int64_t synth_seed = -1;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--spec", synth_spec, "Synthetic spec file");
    synth->add_option("--seed", synth_seed, "Seed override");

    auto* train_cmd = app.add_subcommand("train", "Train a model");
    std::string train_config, train_data, train_out, train_log, train_resume;
    train_cmd->add_option("--config", train_config, "Train config file");
    train_cmd->add_option("--data", train_data, "Dataset directory")->required();
    train_cmd->add_option("--out", train_out, "Checkpoint output path")->required();
    train_cmd->add_option("--log", train_log, "Loss log path");
    train_cmd->add_option("--resume", train_resume, "Checkpoint to resume from");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate recall on a split");
    std::string eval_ckpt, eval_data, eval_split = "val", eval_recall = "10,50";
    std::string eval_report, eval_scorer = "ccnet";
    std::vector<std::string> eval_ensemble;
    eval_cmd->add_option("--ckpt", eval_ckpt, "Model checkpoint")->required();
    eval_cmd->add_option("--data", eval_data, "Dataset directory")->required();
    eval_cmd->add_option("--split", eval_split, "Split name (train|val)");
    eval_cmd->add_option("--recall", eval_recall, "Comma-separated K list");
    eval_cmd->add_option("--ensemble", eval_ensemble, "Additional checkpoints to ensemble");
    eval_cmd->add_option("--report", eval_report, "Key-value report output path");
    eval_cmd->add_option("--scorer", eval_scorer, "ccnet|composition|correction");

    auto* retrieve_cmd = app.add_subcommand("retrieve", "Rank candidates for one query");
    std::string ret_ckpt, ret_data, ret_ref, ret_caption, ret_scorer = "ccnet";
    std::int64_t ret_topk = 10;
    retrieve_cmd->add_option("--ckpt", ret_ckpt, "Model checkpoint")->required();
    retrieve_cmd->add_option("--data", ret_data, "Dataset directory")->required();
    retrieve_cmd->add_option("--ref", ret_ref, "Reference image id")->required();
    retrieve_cmd->add_option("--caption", ret_caption, "Relative caption text")->required();
    retrieve_cmd->add_option("--topk", ret_topk, "Number of results");

    app.add_subcommand("gradcheck", "Finite-difference check of the joint gradients");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (synth->parsed()) return run_synth(synth_out, synth_spec, synth_seed);
        if (train_cmd->parsed()) {
            return run_train(train_config, train_data, train_out, train_log, train_resume);
        }
        if (eval_cmd->parsed()) {
            std::vector<std::string> ckpts = {eval_ckpt};
            ckpts.insert(ckpts.end(), eval_ensemble.begin(), eval_ensemble.end());
            return run_eval(ckpts, eval_data, eval_split, eval_recall, eval_report, eval_scorer);
        }
        if (retrieve_cmd->parsed()) {
            return run_retrieve(ret_ckpt, ret_data, ret_ref, ret_caption, ret_topk, ret_scorer);
        }
        return run_gradcheck();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace ccnet

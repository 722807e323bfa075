// Command-line front end for the dermboost pipeline.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dermboost/dermboost.hpp"

namespace {

struct common_options {
    std::string config_path;
    std::string out_dir;
    std::optional<std::int64_t> seed;
};

void add_common(CLI::App* cmd, common_options& opts, bool config_required = true) {
    auto* c = cmd->add_option("--config", opts.config_path, "pipeline configuration file");
    if (config_required) c->required();
    cmd->add_option("--out", opts.out_dir, "output directory (overrides output.dir)");
    cmd->add_option("--seed", opts.seed, "override every stage seed");
}

dermboost::pipeline_config load_config(const common_options& opts) {
    dermboost::pipeline_config cfg = dermboost::load_pipeline_config(opts.config_path);
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    if (opts.seed) dermboost::apply_seed_override(cfg, static_cast<std::uint64_t>(*opts.seed));
    return cfg;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const dermboost::config_error*>(&e) ||
        dynamic_cast<const dermboost::argument_error*>(&e))
        return 2;
    if (dynamic_cast<const dermboost::degenerate_input_error*>(&e) ||
        dynamic_cast<const dermboost::study_error*>(&e) ||
        dynamic_cast<const dermboost::aggregate_error*>(&e))
        return 4;
    if (dynamic_cast<const dermboost::error*>(&e)) return 3;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dermboost: tabular melanoma risk scoring with rank fusion"};
    app.require_subcommand(1);

    common_options split_opts, features_opts, train_opts, tune_opts, eval_opts, fuse_opts,
        pipeline_opts;

    auto* split = app.add_subcommand("split", "build the patient-grouped stratified fold plan");
    add_common(split, split_opts);

    auto* features = app.add_subcommand("features", "export the encoded feature matrix");
    add_common(features, features_opts);

    auto* train = app.add_subcommand("train", "train per-fold models and write OOF predictions");
    add_common(train, train_opts);
    bool train_stage2 = false;
    train->add_flag("--stage2", train_stage2,
                    "join stage2_feature prediction columns before training");

    auto* tune = app.add_subcommand("tune", "random-search the sampler/model parameters");
    add_common(tune, tune_opts);

    auto* evaluate = app.add_subcommand("evaluate", "score a prediction CSV against the dataset");
    add_common(evaluate, eval_opts);
    std::string eval_pred;
    evaluate->add_option("--pred", eval_pred, "prediction CSV (isic_id,score)")->required();

    auto* fuse = app.add_subcommand("fuse", "optimize and apply rank-blend weights");
    add_common(fuse, fuse_opts);
    std::vector<std::string> fuse_preds;
    fuse->add_option("predictions", fuse_preds, "prediction CSVs to fuse");

    auto* pipeline = app.add_subcommand("pipeline", "run split, training stages and fusion");
    add_common(pipeline, pipeline_opts);

    auto* synth = app.add_subcommand("synth", "write a synthetic metadata CSV");
    std::string synth_out = "synthetic.csv";
    dermboost::synth_params sp;
    std::int64_t synth_seed = 0;
    synth->add_option("--patients", sp.n_patients, "number of patients");
    synth->add_option("--min-lesions", sp.lesions_min, "minimum lesions per patient");
    synth->add_option("--max-lesions", sp.lesions_max, "maximum lesions per patient");
    synth->add_option("--rate", sp.positive_rate, "expected positive rate");
    synth->add_option("--signal", sp.signal_strength, "label signal strength");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--out", synth_out, "output CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (split->parsed()) {
            dermboost::run_split(load_config(split_opts));
        } else if (features->parsed()) {
            dermboost::run_features(load_config(features_opts));
        } else if (train->parsed()) {
            dermboost::run_train(load_config(train_opts),
                                 train_stage2 ? dermboost::train_stage::stage2
                                              : dermboost::train_stage::stage1);
        } else if (tune->parsed()) {
            dermboost::run_tune(load_config(tune_opts));
        } else if (evaluate->parsed()) {
            dermboost::run_evaluate(load_config(eval_opts), eval_pred);
        } else if (fuse->parsed()) {
            dermboost::pipeline_config cfg = load_config(fuse_opts);
            std::vector<std::filesystem::path> preds(fuse_preds.begin(), fuse_preds.end());
            if (preds.empty())
                for (const auto& p :
                     cfg.stage_predictions(dermboost::prediction_stage::stage1_model))
                    preds.emplace_back(p.path);
            dermboost::run_fuse(cfg, preds);
        } else if (pipeline->parsed()) {
            dermboost::run_pipeline(load_config(pipeline_opts));
        } else if (synth->parsed()) {
            sp.seed = static_cast<std::uint64_t>(synth_seed);
            const dermboost::dataset data = dermboost::generate_synthetic_dataset(sp);
            dermboost::save_metadata_csv(data, synth_out);
            std::size_t positives = 0;
            for (const auto& rec : data.records())
                positives += static_cast<std::size_t>(rec.label);
            std::cout << "wrote " << data.size() << " records (" << positives
                      << " positive) to " << synth_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 0;
}

// Command-line front end: synthetic data generation, training (single- and
// cross-domain), evaluation, the ablation table and the gradient-check suite.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "agcn/config.hpp"
#include "agcn/dataset.hpp"
#include "agcn/gradcheck.hpp"
#include "agcn/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;    // validation / configuration problems
constexpr int kExitRuntime = 2;  // runtime failures (non-finite loss, ...)

int cmd_gen_synth(const std::string& spec_path, const std::string& out_dir) {
    agcn::SynthSpec spec = agcn::load_synth_spec(spec_path);
    agcn::MultiLabelDataset ds = agcn::generate_synthetic(spec);
    if (spec.shift.kind != agcn::ShiftSpec::Kind::none) {
        ds = agcn::apply_shift(ds, spec.shift);
        if (spec.keep_labels) ds.labels_hidden = false;
    }
    agcn::save_dataset(ds, out_dir);
    std::printf("wrote %zu samples (%zu labels, %zu features, %s%s) to %s\n", ds.n(),
                ds.n_labels(), ds.d_in(), agcn::to_string(ds.domain_tag).c_str(),
                ds.labeled_for_training() ? ", labeled" : "", out_dir.c_str());
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& train_dir,
              const std::string& val_dir, const std::string& out_dir) {
    agcn::TrainConfig cfg = agcn::load_config(config_path);
    agcn::MultiLabelDataset train = agcn::load_dataset(train_dir);
    agcn::MultiLabelDataset val = agcn::load_dataset(val_dir);
    agcn::RunArtifacts artifacts = agcn::train_single(cfg, train, val);
    agcn::save_run_artifacts(artifacts, out_dir);
    std::printf("trained %zu epochs, final val mAP %.4f -> %s\n", artifacts.epochs.size() - 1,
                artifacts.final_report.map, out_dir.c_str());
    return kExitOk;
}

int cmd_train_da(const std::string& config_path, const std::string& source_dir,
                 const std::string& target_dir, const std::string& target_val_dir,
                 const std::string& out_dir) {
    agcn::TrainConfig cfg = agcn::load_config(config_path);
    agcn::MultiLabelDataset source = agcn::load_dataset(source_dir);
    agcn::MultiLabelDataset target = agcn::load_dataset(target_dir);
    agcn::MultiLabelDataset target_val = agcn::load_dataset(target_val_dir);
    agcn::RunArtifacts artifacts = agcn::train_da(cfg, source, target, target_val);
    agcn::save_run_artifacts(artifacts, out_dir);
    std::printf("trained %zu epochs, final target mAP %.4f, domain acc %.3f -> %s\n",
                artifacts.epochs.size() - 1, artifacts.final_report.map,
                artifacts.domain_accuracy.empty() ? 0.0 : artifacts.domain_accuracy.back(),
                out_dir.c_str());
    return kExitOk;
}

int cmd_eval(const std::string& model_dir, const std::string& data_dir,
             const std::string& out_path, double threshold, std::size_t topk) {
    agcn::ModelBundle bundle = agcn::load_model(model_dir);
    agcn::MultiLabelDataset ds = agcn::load_dataset(data_dir);
    agcn::MetricsReport report = agcn::evaluate_model(bundle, ds, threshold, topk);
    std::ofstream out(out_path);
    if (!out) throw agcn::IoError("eval: cannot open " + out_path);
    out << agcn::metrics_report_json(report);

    // one-line CSV twin next to the JSON report
    std::string csv_path = out_path;
    const std::size_t dot = csv_path.rfind(".json");
    if (dot != std::string::npos) csv_path = csv_path.substr(0, dot);
    csv_path += ".csv";
    std::ofstream csv(csv_path);
    if (!csv) throw agcn::IoError("eval: cannot open " + csv_path);
    csv << agcn::metrics_report_csv_header() << "\n"
        << agcn::metrics_report_csv_line(report) << "\n";
    std::printf("mAP %.4f CF1 %.4f OF1 %.4f -> %s\n", report.map, report.cf1, report.of1,
                out_path.c_str());
    return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& train_dir,
               const std::string& val_dir, const std::string& out_path) {
    agcn::TrainConfig cfg = agcn::load_config(config_path);
    agcn::MultiLabelDataset train = agcn::load_dataset(train_dir);
    agcn::MultiLabelDataset val = agcn::load_dataset(val_dir);
    std::vector<agcn::AblationRow> rows = agcn::ablate(cfg, train, val);
    const std::string table = agcn::ablation_table_csv(rows);
    std::ofstream out(out_path);
    if (!out) throw agcn::IoError("ablate: cannot open " + out_path);
    out << table;
    std::fputs(table.c_str(), stdout);
    return kExitOk;
}

int cmd_gradcheck(int trials, double tol, std::uint64_t seed, double fd_step,
                  std::size_t max_dim) {
    agcn::GradCheckOptions opts;
    opts.trials = trials;
    opts.tol_rel = tol;
    opts.seed = seed;
    opts.fd_step = fd_step;
    opts.max_dim = max_dim;
    bool all_pass = true;
    for (const agcn::GradCheckResult& r : agcn::check_primitives(opts)) {
        std::printf("%-20s trials=%-4d max_rel_err=%.3e %s\n", r.primitive.c_str(), r.trials,
                    r.max_rel_err, r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    return all_pass ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive graph convolutional networks for multi-label classification"};
    app.require_subcommand(1);

    std::string spec_path, out_path, config_path, train_dir, val_dir;
    std::string source_dir, target_dir, target_val_dir, model_dir, data_dir;
    double threshold = 0.5, tol = 1e-5, fd_step = 1e-6;
    std::size_t topk = 0, max_dim = 8;
    int trials = 100;
    std::uint64_t seed = 7;

    CLI::App* gen = app.add_subcommand("gen-synth", "generate a synthetic dataset");
    gen->add_option("--spec", spec_path, "SynthSpec JSON file")->required();
    gen->add_option("--out", out_path, "output dataset directory")->required();

    CLI::App* train = app.add_subcommand("train", "single-domain training");
    train->add_option("--config", config_path, "config file")->required();
    train->add_option("--train", train_dir, "training dataset directory")->required();
    train->add_option("--val", val_dir, "validation dataset directory")->required();
    train->add_option("--out", out_path, "run artifact directory")->required();

    CLI::App* da = app.add_subcommand("train-da", "adversarial domain-adaptation training");
    da->add_option("--config", config_path, "config file")->required();
    da->add_option("--source", source_dir, "labeled source dataset directory")->required();
    da->add_option("--target", target_dir, "unlabeled target dataset directory")->required();
    da->add_option("--target-val", target_val_dir, "labeled target validation directory")
        ->required();
    da->add_option("--out", out_path, "run artifact directory")->required();

    CLI::App* eval = app.add_subcommand("eval", "evaluate a saved model");
    eval->add_option("--model", model_dir, "model directory")->required();
    eval->add_option("--data", data_dir, "labeled dataset directory")->required();
    eval->add_option("--out", out_path, "report JSON path")->required();
    eval->add_option("--threshold", threshold, "decision threshold (default 0.5)");
    eval->add_option("--topk", topk, "top-k binarization (0 = threshold)");

    CLI::App* ablate = app.add_subcommand("ablate", "A / A+B / A+B+C ablation table");
    ablate->add_option("--config", config_path, "config file")->required();
    ablate->add_option("--train", train_dir, "training dataset directory")->required();
    ablate->add_option("--val", val_dir, "validation dataset directory")->required();
    ablate->add_option("--out", out_path, "table CSV path")->required();

    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference check of every primitive");
    gc->add_option("--trials", trials, "random instances per primitive (default 100)");
    gc->add_option("--tol", tol, "relative tolerance (default 1e-5)");
    gc->add_option("--seed", seed, "RNG seed (default 7)");
    gc->add_option("--fd-step", fd_step, "central-difference step (default 1e-6)");
    gc->add_option("--max-dim", max_dim, "max matrix dimension (default 8)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_synth(spec_path, out_path);
        if (train->parsed()) return cmd_train(config_path, train_dir, val_dir, out_path);
        if (da->parsed())
            return cmd_train_da(config_path, source_dir, target_dir, target_val_dir, out_path);
        if (eval->parsed()) return cmd_eval(model_dir, data_dir, out_path, threshold, topk);
        if (ablate->parsed()) return cmd_ablate(config_path, train_dir, val_dir, out_path);
        if (gc->parsed()) return cmd_gradcheck(trials, tol, seed, fd_step, max_dim);
    } catch (const agcn::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const agcn::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const agcn::ContractError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const agcn::ShapeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime failure: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}

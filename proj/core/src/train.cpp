#include "agcn/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "agcn/losses.hpp"
#include "agcn/optim.hpp"
#include "agcn/rng.hpp"

namespace agcn {

namespace {

// rng stream salts; model/source-batch streams must match between single
// and DA runs so a lambda = 0 DA run reproduces the single-domain one
constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kDomainInitStream = 12;
constexpr std::uint64_t kBatchStream = 21;
constexpr std::uint64_t kTargetBatchStream = 22;

std::vector<std::size_t> parse_width_list(const std::string& text) {
    std::vector<std::size_t> widths;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t a = item.find_first_not_of(" \t");
        if (a == std::string::npos) continue;
        std::size_t b = item.find_last_not_of(" \t");
        item = item.substr(a, b - a + 1);
        try {
            const long long v = std::stoll(item);
            if (v <= 0) throw ConfigError("model.gen_hidden_widths: widths must be positive");
            widths.push_back(static_cast<std::size_t>(v));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("model.gen_hidden_widths: bad width '" + item + "'");
        }
    }
    return widths;
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& order, std::size_t begin,
                 std::size_t end) {
    Matrix out(end - begin, m.cols());
    for (std::size_t i = begin; i < end; ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i - begin, j) = m(order[i], j);
    return out;
}

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Wrapping batch index stream over a foreign dataset (the target side of a
// DA run): reshuffles whenever a permutation is exhausted.
class IndexStream {
public:
    IndexStream(std::size_t n, Rng rng) : n_(n), rng_(std::move(rng)) { reshuffle(); }

    std::vector<std::size_t> next(std::size_t k) {
        std::vector<std::size_t> out;
        out.reserve(k);
        while (out.size() < k) {
            if (cursor_ == n_) reshuffle();
            out.push_back(perm_[cursor_++]);
        }
        return out;
    }

private:
    void reshuffle() {
        perm_ = rng_.permutation(n_);
        cursor_ = 0;
    }

    std::size_t n_;
    Rng rng_;
    std::vector<std::size_t> perm_;
    std::size_t cursor_ = 0;
};

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(idx[i], j);
    return out;
}

void check_datasets_compatible(const MultiLabelDataset& a, const MultiLabelDataset& b,
                               const char* what) {
    if (a.d_in() != b.d_in())
        throw ContractError(std::string(what) + ": feature widths differ (" +
                            std::to_string(a.d_in()) + " vs " + std::to_string(b.d_in()) + ")");
    if (a.label_names != b.label_names)
        throw ContractError(std::string(what) + ": label names differ");
}

void apply_gradients(ModelBundle& bundle, const GradMap& grads,
                     std::map<std::string, AdamState>& states, double lr) {
    for_each_param(bundle, [&](const std::string& name, Matrix& param) {
        auto it = grads.find(name);
        if (it == grads.end()) throw StateError("train: missing gradient for '" + name + "'");
        adam_step(param, it->second, states[name], lr);
    });
}

double epoch_mean(const std::vector<double>& losses) {
    double s = 0.0;
    for (double v : losses) s += v;
    return losses.empty() ? 0.0 : s / static_cast<double>(losses.size());
}

}  // namespace

std::string RunArtifacts::metrics_csv() const {
    std::string out = "epoch,split," + metrics_report_csv_header() + ",loss,lr\n";
    for (const EpochRow& row : epochs) {
        out += std::to_string(row.epoch) + "," + row.split + "," +
               metrics_report_csv_line(row.metrics) + "," + fmt17(row.loss) + "," +
               fmt17(row.lr) + "\n";
    }
    return out;
}

Matrix prototype_node_features(const Matrix& features, const Matrix& labels) {
    if (features.rows() != labels.rows())
        throw ShapeError("prototype_node_features: feature/label row mismatch");
    const std::size_t n_labels = labels.cols(), d = features.cols();
    Matrix protos(n_labels, d);
    for (std::size_t l = 0; l < n_labels; ++l) {
        double count = 0.0;
        for (std::size_t i = 0; i < features.rows(); ++i) {
            if (labels(i, l) == 0.0) continue;
            count += 1.0;
            for (std::size_t j = 0; j < d; ++j) protos(l, j) += features(i, j);
        }
        if (count > 0.0)
            for (std::size_t j = 0; j < d; ++j) protos(l, j) /= count;
    }
    return protos;
}

Matrix load_node_features_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("node features: cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError("node features: " + path.string() + " line " +
                              std::to_string(line_no) + ": bad number '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw IoError("node features: " + path.string() + " line " +
                          std::to_string(line_no) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError("node features: " + path.string() + " is empty");
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
    return m;
}

ModelBundle build_model(const TrainConfig& cfg, const MultiLabelDataset& train,
                        bool with_domain) {
    cfg.validate();
    train.validate();
    if (!train.labeled_for_training())
        throw ContractError("build_model: training set must carry visible labels");

    Rng root(cfg.seed);
    Rng init = root.fork(kInitStream);
    Rng dom_init = root.fork(kDomainInitStream);

    ModelBundle bundle;
    bundle.d_f = cfg.d_f;
    bundle.ablation = parse_ablation(cfg.ablation);
    bundle.detach_c = cfg.detach_c;

    const GeneratorKind gen_kind = parse_generator_kind(cfg.generator);
    if (gen_kind == GeneratorKind::identity) {
        if (train.d_in() != cfg.d_f)
            throw ConfigError("model: identity generator needs feature_dim == d_f (" +
                              std::to_string(train.d_in()) + " vs " + std::to_string(cfg.d_f) +
                              "); use generator = \"mlp\"");
        bundle.generator = make_identity_generator(cfg.d_f, cfg.leaky_slope);
    } else {
        bundle.generator = make_mlp_generator(train.d_in(), parse_width_list(cfg.gen_hidden_widths),
                                              cfg.d_f, cfg.leaky_slope, init);
    }

    Matrix f0;
    if (cfg.node_features == "prototype") {
        f0 = prototype_node_features(train.features, *train.labels);
    } else if (cfg.node_features == "file") {
        f0 = load_node_features_csv(cfg.node_features_file);
        if (f0.rows() != train.n_labels())
            throw ConfigError("graph.node_features_file: expected " +
                              std::to_string(train.n_labels()) + " rows, got " +
                              std::to_string(f0.rows()));
    } else {  // learned
        const std::size_t d0 = cfg.d0 ? cfg.d0 : cfg.d_f;
        f0 = Matrix(train.n_labels(), d0);
        const double s = 1.0 / std::sqrt(static_cast<double>(d0));
        for (double& v : f0.data()) v = init.gaussian(0.0, s);
        bundle.learn_node_features = true;
    }

    bundle.graph = build_label_graph(*train.labels, std::move(f0), cfg.tau,
                                     parse_adjacency_norm(cfg.adjacency_norm));

    const std::size_t d0 = bundle.graph.node_features.cols();
    if (cfg.layers == 1) {
        bundle.layers.push_back(make_layer_params(d0, cfg.d_f, cfg.leaky_slope, init, train.n_labels()));
    } else {
        const std::size_t hidden = (cfg.d_f + 1) / 2;
        bundle.layers.push_back(make_layer_params(d0, hidden, cfg.leaky_slope, init, train.n_labels()));
        bundle.layers.push_back(make_layer_params(hidden, cfg.d_f, cfg.leaky_slope, init, train.n_labels()));
    }

    if (with_domain) {
        const std::size_t hidden = cfg.domain_hidden ? cfg.domain_hidden : 4 * cfg.d_f;
        bundle.domain_clf = make_domain_classifier(cfg.d_f, hidden, cfg.leaky_slope, dom_init);
    }

    bundle.validate();
    return bundle;
}

MetricsReport evaluate_model(const ModelBundle& bundle, const MultiLabelDataset& ds,
                             double decision_threshold, std::size_t topk) {
    if (!ds.labels) throw ContractError("evaluate_model: dataset has no labels");
    EvalFrame frame;
    frame.scores = predict_scores(bundle, ds.features);
    frame.targets = *ds.labels;
    frame.decision_threshold = decision_threshold;
    frame.topk = topk;
    return evaluate_frame(frame);
}

Matrix domain_scores(const ModelBundle& bundle, const Matrix& features) {
    Tape t;
    TapeBundle tv = register_model(t, bundle, /*trainable=*/false, /*with_domain=*/true);
    Var x = generate_features(t, bundle, tv, t.constant(features));
    Var d_hat = classify_domain(t, bundle, tv, x, 0.0);
    return t.value(d_hat);
}

namespace {

struct TrainLoop {
    TrainLoop(const TrainConfig& c, ModelBundle& b) : cfg(c), bundle(b) {}

    const TrainConfig& cfg;
    ModelBundle& bundle;
    std::map<std::string, AdamState> adam;
    std::size_t global_step = 0;
    std::size_t total_steps = 1;

    double step_lr() const {
        return cosine_lr(global_step, total_steps, cfg.max_lr);
    }

    void check_finite(double loss, std::size_t epoch, std::size_t step) const {
        if (!std::isfinite(loss))
            throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                               " step " + std::to_string(step));
    }
};

// Saturated or non-finite probabilities mean the run diverged; surface that
// as a runtime failure rather than a contract violation inside the loss.
void check_probs_runtime(const Matrix& probs, std::size_t epoch, std::size_t step) {
    for (double v : probs.data())
        if (!(v > 0.0 && v < 1.0))
            throw NumericError("train: probabilities saturated at epoch " +
                               std::to_string(epoch) + " step " + std::to_string(step) +
                               " (diverged)");
}

}  // namespace

RunArtifacts train_single(const TrainConfig& cfg, const MultiLabelDataset& train,
                          const MultiLabelDataset& val) {
    cfg.validate();
    train.validate();
    val.validate();
    if (!train.labeled_for_training())
        throw ContractError("train_single: training set must carry visible labels");
    if (!val.labeled_for_training())
        throw ContractError("train_single: validation set must carry visible labels");
    check_datasets_compatible(train, val, "train_single");

    ModelBundle bundle = build_model(cfg, train, /*with_domain=*/false);
    Rng batch_rng = Rng(cfg.seed).fork(kBatchStream);

    const std::size_t n = train.n();
    const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    TrainLoop loop(cfg, bundle);
    loop.total_steps = std::max<std::size_t>(1, cfg.epochs * steps_per_epoch);

    RunArtifacts artifacts;
    artifacts.config_echo = cfg.echo();
    artifacts.label_names = train.label_names;

    auto eval_row = [&](std::size_t epoch, double mean_loss, double lr) {
        EpochRow row;
        row.epoch = epoch;
        row.split = "val";
        row.metrics = evaluate_model(bundle, val, cfg.decision_threshold, cfg.topk);
        row.loss = mean_loss;
        row.lr = lr;
        artifacts.epochs.push_back(std::move(row));
    };

    // epoch 0: untrained baseline; classification loss measured, no updates
    {
        std::vector<double> losses;
        std::vector<std::size_t> ident(n);
        for (std::size_t i = 0; i < n; ++i) ident[i] = i;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            const std::size_t lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
            Tape t;
            TapeBundle tv = register_model(t, bundle, /*trainable=*/false, false);
            Var probs = predict(t, bundle, tv, t.constant(take_rows(train.features, ident, lo, hi)));
            check_probs_runtime(t.value(probs), 0, b);
            Var lc = asl_loss(t, probs, take_rows(*train.labels, ident, lo, hi), cfg.loss);
            losses.push_back(t.value(lc)(0, 0));
        }
        eval_row(0, epoch_mean(losses), 0.0);
    }

    double best_map = artifacts.epochs.front().metrics.map;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = batch_rng.permutation(n);
        std::vector<double> losses;
        double lr = 0.0;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            const std::size_t lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
            lr = loop.step_lr();

            Tape t;
            TapeBundle tv = register_model(t, bundle, /*trainable=*/true, false);
            Var probs = predict(t, bundle, tv, t.constant(take_rows(train.features, order, lo, hi)));
            check_probs_runtime(t.value(probs), epoch, b);
            Var lc = asl_loss(t, probs, take_rows(*train.labels, order, lo, hi), cfg.loss);
            const double loss = t.value(lc)(0, 0);
            loop.check_finite(loss, epoch, b);
            losses.push_back(loss);

            GradMap grads = t.backward(lc);
            apply_gradients(bundle, grads, loop.adam, lr);
            ++loop.global_step;
        }
        eval_row(epoch, epoch_mean(losses), lr);

        const double map = artifacts.epochs.back().metrics.map;
        if (map > best_map) {
            best_map = map;
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            break;
        }
    }

    artifacts.final_report = artifacts.epochs.back().metrics;
    artifacts.model = std::move(bundle);
    return artifacts;
}

RunArtifacts train_da(const TrainConfig& cfg, const MultiLabelDataset& source,
                      const MultiLabelDataset& target, const MultiLabelDataset& target_val) {
    cfg.validate();
    source.validate();
    target.validate();
    target_val.validate();
    if (!source.labeled_for_training())
        throw ContractError("train_da: source set must carry visible labels");
    if (target.labels && !target.labels_hidden)
        throw ContractError(
            "train_da: target labels must not be visible during training (unsupervised DA)");
    if (!target_val.labeled_for_training())
        throw ContractError("train_da: target_val must carry visible labels");
    if (source.d_in() != target.d_in())
        throw ContractError("train_da: source/target feature widths differ");
    check_datasets_compatible(source, target_val, "train_da");

    ModelBundle bundle = build_model(cfg, source, /*with_domain=*/true);
    Rng batch_rng = Rng(cfg.seed).fork(kBatchStream);
    IndexStream target_stream(target.n(), Rng(cfg.seed).fork(kTargetBatchStream));

    const std::size_t n = source.n();
    const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    TrainLoop loop(cfg, bundle);
    loop.total_steps = std::max<std::size_t>(1, cfg.epochs * steps_per_epoch);

    RunArtifacts artifacts;
    artifacts.config_echo = cfg.echo();
    artifacts.label_names = source.label_names;

    auto domain_diagnostics_now = [&]() {
        const Matrix ds = domain_scores(bundle, source.features);
        const Matrix dt = domain_scores(bundle, target.features);
        double correct = 0.0;
        for (std::size_t i = 0; i < ds.rows(); ++i) correct += ds(i, 0) <= 0.5;
        for (std::size_t i = 0; i < dt.rows(); ++i) correct += dt(i, 0) > 0.5;
        Matrix all = concat_rows(ds, dt);
        std::vector<int> domain(ds.rows(), 0);
        domain.insert(domain.end(), dt.rows(), 1);
        return std::pair{correct / static_cast<double>(ds.rows() + dt.rows()),
                         domain_loss_paper_form(all, domain)};
    };

    auto eval_row = [&](std::size_t epoch, double mean_loss, double lr) {
        EpochRow row;
        row.epoch = epoch;
        row.split = "target_val";
        row.metrics = evaluate_model(bundle, target_val, cfg.decision_threshold, cfg.topk);
        row.loss = mean_loss;
        row.lr = lr;
        artifacts.epochs.push_back(std::move(row));
        auto [acc, paper_loss] = domain_diagnostics_now();
        artifacts.domain_accuracy.push_back(acc);
        artifacts.domain_loss_paper.push_back(paper_loss);
    };

    {
        std::vector<double> losses;
        std::vector<std::size_t> ident(n);
        for (std::size_t i = 0; i < n; ++i) ident[i] = i;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            const std::size_t lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
            Tape t;
            TapeBundle tv = register_model(t, bundle, /*trainable=*/false, false);
            Var probs =
                predict(t, bundle, tv, t.constant(take_rows(source.features, ident, lo, hi)));
            check_probs_runtime(t.value(probs), 0, b);
            Var lc = asl_loss(t, probs, take_rows(*source.labels, ident, lo, hi), cfg.loss);
            losses.push_back(t.value(lc)(0, 0));
        }
        eval_row(0, epoch_mean(losses), 0.0);
    }

    double best_map = artifacts.epochs.front().metrics.map;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = batch_rng.permutation(n);
        std::vector<double> losses;
        double lr = 0.0;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            const std::size_t lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
            const std::size_t batch_n = hi - lo;
            lr = loop.step_lr();
            const double progress =
                static_cast<double>(loop.global_step) / static_cast<double>(loop.total_steps);
            const double lambda = cfg.effective_lambda(progress);

            Tape t;
            TapeBundle tv = register_model(t, bundle, /*trainable=*/true, /*with_domain=*/true);
            Var xs = generate_features(t, bundle, tv,
                                       t.constant(take_rows(source.features, order, lo, hi)));
            Var xt = generate_features(t, bundle, tv,
                                       t.constant(gather_rows(target.features,
                                                              target_stream.next(batch_n))));
            Var fl = subnet_classifiers(t, bundle, tv, bundle.ablation);
            Var probs = t.sigmoid(t.matmul(xs, t.transpose(fl)));
            check_probs_runtime(t.value(probs), epoch, b);
            Var lc = asl_loss(t, probs, take_rows(*source.labels, order, lo, hi), cfg.loss);

            const bool lambda_in_grl = cfg.grl_lambda_location == "grl";
            Var d_hat = classify_domain(t, bundle, tv, t.concat_rows(xs, xt),
                                        lambda_in_grl ? lambda : 1.0);
            check_probs_runtime(t.value(d_hat), epoch, b);
            std::vector<int> domain(batch_n, 0);
            domain.insert(domain.end(), batch_n, 1);
            Var ld = domain_loss(t, d_hat, domain);

            LossConfig objective_cfg = cfg.loss;
            objective_cfg.lambda_d = lambda_in_grl ? 1.0 : lambda;
            Var total = total_objective(t, lc, ld, objective_cfg);

            const double loss_c = t.value(lc)(0, 0);
            loop.check_finite(t.value(total)(0, 0), epoch, b);
            losses.push_back(loss_c);

            GradMap grads = t.backward(total);
            apply_gradients(bundle, grads, loop.adam, lr);
            ++loop.global_step;
        }
        eval_row(epoch, epoch_mean(losses), lr);

        const double map = artifacts.epochs.back().metrics.map;
        if (map > best_map) {
            best_map = map;
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            break;
        }
    }

    artifacts.final_report = artifacts.epochs.back().metrics;
    artifacts.model = std::move(bundle);
    return artifacts;
}

std::vector<AblationRow> ablate(const TrainConfig& cfg, const MultiLabelDataset& train,
                                const MultiLabelDataset& val) {
    std::vector<AblationRow> rows;
    double map_a = 0.0;
    for (const char* variant : {"A", "AB", "ABC"}) {
        TrainConfig variant_cfg = cfg;
        variant_cfg.ablation = variant;
        RunArtifacts artifacts = train_single(variant_cfg, train, val);
        AblationRow row;
        row.variant = variant;
        row.map = artifacts.final_report.map;
        if (row.variant == "A") map_a = row.map;
        row.delta_vs_a = row.map - map_a;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_table_csv(const std::vector<AblationRow>& rows) {
    std::string out = "variant,map,delta_map\n";
    for (const AblationRow& row : rows)
        out += row.variant + "," + fmt17(row.map) + "," + fmt17(row.delta_vs_a) + "\n";
    return out;
}

void save_run_artifacts(const RunArtifacts& artifacts, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    std::ofstream csv(dir / "metrics.csv");
    if (!csv) throw IoError("save_run_artifacts: cannot open " + (dir / "metrics.csv").string());
    csv << artifacts.metrics_csv();

    std::ofstream report(dir / "report.json");
    if (!report) throw IoError("save_run_artifacts: cannot open " + (dir / "report.json").string());
    report << metrics_report_json(artifacts.final_report);

    std::ofstream report_csv(dir / "report.csv");
    if (!report_csv)
        throw IoError("save_run_artifacts: cannot open " + (dir / "report.csv").string());
    report_csv << metrics_report_csv_header() << "\n"
               << metrics_report_csv_line(artifacts.final_report) << "\n";

    std::ofstream echo(dir / "config_echo.toml");
    if (!echo)
        throw IoError("save_run_artifacts: cannot open " + (dir / "config_echo.toml").string());
    echo << artifacts.config_echo;

    export_cooccurrence_csv(dir / "cooccurrence.csv", artifacts.model.graph.cooccurrence,
                            artifacts.label_names);

    if (!artifacts.domain_accuracy.empty()) {
        std::ofstream dom(dir / "domain_accuracy.csv");
        if (!dom)
            throw IoError("save_run_artifacts: cannot open " +
                          (dir / "domain_accuracy.csv").string());
        dom << "epoch,domain_accuracy,domain_loss_paper_form\n";
        for (std::size_t i = 0; i < artifacts.domain_accuracy.size(); ++i)
            dom << i << "," << fmt17(artifacts.domain_accuracy[i]) << ","
                << fmt17(artifacts.domain_loss_paper[i]) << "\n";
    }

    TrainConfig echoed = parse_config_text(artifacts.config_echo);
    save_model(artifacts.model, dir / "model", echoed.digest());
}

}  // namespace agcn

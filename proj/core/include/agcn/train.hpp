#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "agcn/config.hpp"
#include "agcn/dataset.hpp"
#include "agcn/metrics.hpp"
#include "agcn/model.hpp"

namespace agcn {

// One logged row of the per-epoch metrics CSV. Epoch 0 is the untrained
// model: metrics of the initial parameters, classification loss measured
// without taking a step.
struct EpochRow {
    std::size_t epoch = 0;
    std::string split;
    MetricsReport metrics;
    double loss = 0.0;  // mean classification loss over the epoch's batches
    double lr = 0.0;    // learning rate at the epoch's last step
};

struct RunArtifacts {
    std::vector<EpochRow> epochs;
    MetricsReport final_report;
    ModelBundle model;
    std::string config_echo;
    std::vector<std::string> label_names;
    // DA runs only, one entry per epoch row: discriminator accuracy over all
    // source+target samples, and the saturating-form domain loss diagnostic.
    std::vector<double> domain_accuracy;
    std::vector<double> domain_loss_paper;

    std::string metrics_csv() const;
};

struct AblationRow {
    std::string variant;
    double map = 0.0;
    double delta_vs_a = 0.0;
};

// Label-prototype node features: row l is the mean feature vector of the
// training samples containing label l (zero for labels that never occur).
Matrix prototype_node_features(const Matrix& features, const Matrix& labels);

// Header-less CSV of N x d0 node features.
Matrix load_node_features_csv(const std::filesystem::path& path);

// Assembles an initialized model for this config and training set.
ModelBundle build_model(const TrainConfig& cfg, const MultiLabelDataset& train,
                        bool with_domain);

// Minimizes the asymmetric loss over seeded shuffled batches; evaluates on
// val after every epoch. Deterministic given config + data.
RunArtifacts train_single(const TrainConfig& cfg, const MultiLabelDataset& train,
                          const MultiLabelDataset& val);

// Adversarial domain adaptation: classification loss on labeled source
// batches, domain loss on 1:1 interleaved source/target batches through the
// GRL. The target set must not expose labels; evaluation uses target_val.
RunArtifacts train_da(const TrainConfig& cfg, const MultiLabelDataset& source,
                      const MultiLabelDataset& target, const MultiLabelDataset& target_val);

// Runs the A / A+B / A+B+C variants under identical seeds.
std::vector<AblationRow> ablate(const TrainConfig& cfg, const MultiLabelDataset& train,
                                const MultiLabelDataset& val);
std::string ablation_table_csv(const std::vector<AblationRow>& rows);

MetricsReport evaluate_model(const ModelBundle& bundle, const MultiLabelDataset& ds,
                             double decision_threshold, std::size_t topk);

// Domain probabilities for a feature block (no gradients).
Matrix domain_scores(const ModelBundle& bundle, const Matrix& features);

// metrics.csv, report.json, config_echo.toml, cooccurrence.csv, model/.
void save_run_artifacts(const RunArtifacts& artifacts, const std::filesystem::path& dir);

}  // namespace agcn

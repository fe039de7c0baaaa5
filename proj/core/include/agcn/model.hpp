#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "agcn/labelgraph.hpp"
#include "agcn/matrix.hpp"
#include "agcn/rng.hpp"
#include "agcn/tape.hpp"

namespace agcn {

enum class GeneratorKind { identity, mlp };

GeneratorKind parse_generator_kind(const std::string& s);
std::string to_string(GeneratorKind k);

// f_g: maps input feature vectors to the d_f-dimensional representation the
// classifiers consume. identity passes precomputed features straight
// through; mlp is the trainable desk-scale generator.
struct FeatureGenerator {
    GeneratorKind kind = GeneratorKind::identity;
    std::vector<std::size_t> layer_widths;  // per affine layer, last one = d_f
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;  // 1 x width
    double leaky_slope = 0.2;
};

// f_d: one hidden layer, sigmoid output in (0, 1).
struct DomainClassifier {
    std::size_t hidden_width = 0;
    Matrix w1, b1;  // d_f -> hidden
    Matrix w2, b2;  // hidden -> 1
    double leaky_slope = 0.2;
};

// Everything a trained model consists of: generator parameters, the label
// graph, the per-layer GCN parameters, and (in DA mode) the domain
// classifier.
struct ModelBundle {
    std::size_t d_f = 0;
    FeatureGenerator generator;
    LabelGraph graph;
    std::vector<AdaptiveLayerParams> layers;
    std::optional<DomainClassifier> domain_clf;
    bool learn_node_features = false;
    bool detach_c = false;
    Ablation ablation = Ablation::ABC;

    void validate() const;
};

// Visits every trainable matrix with a stable name; the same names key the
// gradient map, the optimizer state and the persisted parameter file.
void for_each_param(ModelBundle& bundle,
                    const std::function<void(const std::string&, Matrix&)>& fn);
void for_each_param(const ModelBundle& bundle,
                    const std::function<void(const std::string&, const Matrix&)>& fn);

// Tape handles for one forward pass over a registered bundle.
struct TapeBundle {
    Var node_features;  // leaf when learned, constant otherwise
    std::vector<LayerVars> layers;
    std::vector<Var> gen_weights, gen_biases;
    Var dom_w1, dom_b1, dom_w2, dom_b2;
    bool has_domain = false;
};

// Registers parameters on the tape; trainable = false registers constants
// (evaluation passes), with_domain controls the domain classifier.
TapeBundle register_model(Tape& t, const ModelBundle& bundle, bool trainable, bool with_domain);

// f_g applied to a batch (n x d_in -> n x d_f).
Var generate_features(Tape& t, const ModelBundle& bundle, const TapeBundle& tv, Var batch);

// F^L: the N interdependent classifiers from the GCN subnet.
Var subnet_classifiers(Tape& t, const ModelBundle& bundle, const TapeBundle& tv, Ablation abl);

// sigmoid(X (F^L)^T): per-sample label probabilities, n x N.
Var predict(Tape& t, const ModelBundle& bundle, const TapeBundle& tv, Var batch, Ablation abl);
Var predict(Tape& t, const ModelBundle& bundle, const TapeBundle& tv, Var batch);

// Gradient reversal: identity forward, backward multiplies by -lambda.
Var grl(Tape& t, Var x, double lambda);

// grl(features, lambda) -> hidden -> sigmoid domain probability (n x 1).
Var classify_domain(Tape& t, const ModelBundle& bundle, const TapeBundle& tv, Var features,
                    double lambda);

// Plain-matrix evaluation pass (no gradients): probabilities for a batch.
Matrix predict_scores(const ModelBundle& bundle, const Matrix& features);

// Builders used by the training harness.
FeatureGenerator make_identity_generator(std::size_t d_f, double leaky_slope);
FeatureGenerator make_mlp_generator(std::size_t d_in, const std::vector<std::size_t>& hidden,
                                    std::size_t d_f, double leaky_slope, Rng& rng);
DomainClassifier make_domain_classifier(std::size_t d_f, std::size_t hidden_width,
                                        double leaky_slope, Rng& rng);
// n_labels tempers the weight scale: the summed adjacency A + B + C mixes
// rows with a gain that grows with N, which stacked layers would otherwise
// amplify past sigmoid saturation.
AdaptiveLayerParams make_layer_params(std::size_t d_in, std::size_t d_out, double leaky_slope,
                                      Rng& rng, std::size_t n_labels);
Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

// Persistence: manifest.json (format version, config digest, shapes) plus
// params.txt with every matrix as decimal text, round-trip exact.
void save_model(const ModelBundle& bundle, const std::filesystem::path& dir,
                const std::string& config_digest);
ModelBundle load_model(const std::filesystem::path& dir);

}  // namespace agcn

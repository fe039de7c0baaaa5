#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "agcn/matrix.hpp"
#include "agcn/tape.hpp"

namespace agcn {

// Which adjacency terms the layer uses: the fixed co-occurrence graph alone,
// plus the learned attention graph, plus the similarity graph.
enum class Ablation { A, AB, ABC };

Ablation parse_ablation(const std::string& s);
std::string to_string(Ablation a);

enum class AdjacencyNorm { row, sym };

AdjacencyNorm parse_adjacency_norm(const std::string& s);
std::string to_string(AdjacencyNorm n);

// The label graph: N nodes (one per label), initial node features, the
// conditional co-occurrence probabilities and the fixed adjacency derived
// from them. Immutable once built; the fixed adjacency receives no gradient.
struct LabelGraph {
    std::size_t n_labels = 0;
    Matrix node_features;  // N x d0
    Matrix cooccurrence;   // N x N, p_ij = P(label j | label i)
    Matrix fixed_adj;      // N x N, normalized
    double threshold = 0.0;
};

// Learnable per-layer parameters: the shared transform W and the attention
// vector a. B and C are recomputed from these on every forward pass.
struct AdaptiveLayerParams {
    Matrix weight;    // d_l x d_{l+1}
    Matrix attn_vec;  // 2*d_{l+1} x 1
    double leaky_slope = 0.2;
};

// Tape handles for one layer's registered parameters.
struct LayerVars {
    Var weight;
    Var attn;
};

// p_ij = count(samples with i and j) / count(samples with i). Rows of
// never-occurring labels are all zero; occurring labels get a unit diagonal.
Matrix co_occurrence_matrix(const Matrix& labels);

// Binary adjacency of Eq-style thresholding: 1 iff p_ij >= tau.
Matrix threshold_adjacency(const Matrix& p, double tau);

// row: divide each nonzero row by its sum. sym: D^(-1/2) (a + I) D^(-1/2)
// with D the degree matrix of a + I.
Matrix normalize_adjacency(const Matrix& a, AdjacencyNorm scheme);

// Full fixed-adjacency recipe: tau = 0 keeps every co-occurrence and
// normalizes the probabilities directly; tau > 0 thresholds first.
Matrix build_fixed_adjacency(const Matrix& cooccurrence, double tau, AdjacencyNorm scheme);

LabelGraph build_label_graph(const Matrix& labels, Matrix node_features, double tau,
                             AdjacencyNorm scheme);

// Attention scores e_ij = LeakyReLU(a^T [W f_i || W f_j]) over all N^2
// pairs (the adaptive graph is dense, no neighborhood restriction).
Var attention_scores(Tape& t, Var f, LayerVars lv, double leaky_slope);

// b_ij = alpha_ij, plus the row maximum added on the diagonal.
Var self_importance(Tape& t, Var alpha);

// B = self_importance(row_softmax(attention_scores(f))).
Var attention_adjacency(Tape& t, Var f, LayerVars lv, double leaky_slope);

// One layer: LeakyReLU((A + B + C) f W). A is a constant on the tape, B and
// C differentiate through f and the layer parameters; detach_c freezes C at
// its current value.
Var agcn_layer(Tape& t, Var f, const LabelGraph& graph, LayerVars lv, double leaky_slope,
               bool use_b, bool use_c, bool detach_c = false);

// Stacks 1 or 2 layers and returns the classifier matrix F^L (N x d_f).
Var gcn_subnet_forward(Tape& t, const LabelGraph& graph, Var f0,
                       const std::vector<LayerVars>& layers, double leaky_slope, Ablation abl,
                       bool detach_c, std::size_t d_f);

void export_cooccurrence_csv(const std::filesystem::path& path, const Matrix& p,
                             const std::vector<std::string>& label_names);
std::pair<Matrix, std::vector<std::string>> import_cooccurrence_csv(
    const std::filesystem::path& path);

}  // namespace agcn

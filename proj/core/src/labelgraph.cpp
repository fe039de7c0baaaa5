#include "agcn/labelgraph.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace agcn {

Ablation parse_ablation(const std::string& s) {
    if (s == "A") return Ablation::A;
    if (s == "AB") return Ablation::AB;
    if (s == "ABC") return Ablation::ABC;
    throw ConfigError("ablation: expected A, AB or ABC, got '" + s + "'");
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::A: return "A";
        case Ablation::AB: return "AB";
        case Ablation::ABC: return "ABC";
    }
    return "?";
}

AdjacencyNorm parse_adjacency_norm(const std::string& s) {
    if (s == "row") return AdjacencyNorm::row;
    if (s == "sym") return AdjacencyNorm::sym;
    throw ConfigError("adjacency_norm: expected row or sym, got '" + s + "'");
}

std::string to_string(AdjacencyNorm n) {
    return n == AdjacencyNorm::row ? "row" : "sym";
}

static void require_binary(const Matrix& m, const char* what) {
    for (double v : m.data())
        if (v != 0.0 && v != 1.0)
            throw ContractError(std::string(what) + ": matrix must be binary (0/1)");
}

Matrix co_occurrence_matrix(const Matrix& labels) {
    if (labels.rows() == 0 || labels.cols() == 0)
        throw ContractError("co_occurrence_matrix: empty dataset");
    require_binary(labels, "co_occurrence_matrix");
    const std::size_t n = labels.rows(), nl = labels.cols();

    std::vector<double> count(nl, 0.0);
    Matrix joint(nl, nl);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t i = 0; i < nl; ++i) {
            if (labels(s, i) == 0.0) continue;
            count[i] += 1.0;
            for (std::size_t j = 0; j < nl; ++j)
                if (labels(s, j) != 0.0) joint(i, j) += 1.0;
        }
    }
    Matrix p(nl, nl);
    for (std::size_t i = 0; i < nl; ++i) {
        if (count[i] == 0.0) continue;  // absent label keeps an all-zero row
        for (std::size_t j = 0; j < nl; ++j) p(i, j) = joint(i, j) / count[i];
    }
    return p;
}

Matrix threshold_adjacency(const Matrix& p, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0))
        throw ConfigError("threshold_adjacency: tau must lie in [0, 1]");
    for (double v : p.data())
        if (!(v >= 0.0 && v <= 1.0))
            throw ContractError("threshold_adjacency: probabilities must lie in [0, 1]");
    Matrix a(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.size(); ++i) a.data()[i] = p.data()[i] >= tau ? 1.0 : 0.0;
    return a;
}

Matrix normalize_adjacency(const Matrix& a, AdjacencyNorm scheme) {
    if (a.rows() != a.cols())
        throw ShapeError("normalize_adjacency: square matrix required, got " + a.shape_str());
    for (double v : a.data())
        if (v < 0.0) throw ContractError("normalize_adjacency: entries must be nonnegative");

    const std::size_t n = a.rows();
    Matrix out(n, n);
    if (scheme == AdjacencyNorm::row) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += a(i, j);
            if (s == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out(i, j) = a(i, j) / s;
        }
        return out;
    }
    // sym: D^(-1/2) (a + I) D^(-1/2)
    Matrix aug = a;
    for (std::size_t i = 0; i < n; ++i) aug(i, i) += 1.0;
    std::vector<double> dinvsqrt(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += aug(i, j);
        dinvsqrt[i] = 1.0 / std::sqrt(deg);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out(i, j) = dinvsqrt[i] * aug(i, j) * dinvsqrt[j];
    return out;
}

Matrix build_fixed_adjacency(const Matrix& cooccurrence, double tau, AdjacencyNorm scheme) {
    if (tau > 0.0) return normalize_adjacency(threshold_adjacency(cooccurrence, tau), scheme);
    return normalize_adjacency(cooccurrence, scheme);
}

LabelGraph build_label_graph(const Matrix& labels, Matrix node_features, double tau,
                             AdjacencyNorm scheme) {
    LabelGraph g;
    g.n_labels = labels.cols();
    g.cooccurrence = co_occurrence_matrix(labels);
    g.fixed_adj = build_fixed_adjacency(g.cooccurrence, tau, scheme);
    g.threshold = tau;
    if (node_features.rows() != g.n_labels)
        throw ShapeError("build_label_graph: node features must have one row per label, got " +
                         node_features.shape_str());
    g.node_features = std::move(node_features);
    return g;
}

Var attention_scores(Tape& t, Var f, LayerVars lv, double leaky_slope) {
    const std::size_t n = t.rows(f);
    const std::size_t d_out = t.cols(lv.weight);
    if (t.rows(lv.attn) != 2 * d_out || t.cols(lv.attn) != 1)
        throw ShapeError("attention_scores: attention vector must be " +
                         std::to_string(2 * d_out) + "x1, got " +
                         t.value(lv.attn).shape_str());
    Var h = t.matmul(f, lv.weight);                        // N x d'
    Var a_self = t.slice_rows(lv.attn, 0, d_out);          // d' x 1
    Var a_neigh = t.slice_rows(lv.attn, d_out, 2 * d_out); // d' x 1
    Var u = t.matmul(h, a_self);                           // N x 1, a_self . (W f_i)
    Var w = t.matmul(h, a_neigh);                          // N x 1, a_neigh . (W f_j)
    Var ones_row = t.constant(Matrix(1, n, 1.0));
    // e_ij = u_i + w_j before the activation
    Var pre = t.add(t.matmul(u, ones_row), t.transpose(t.matmul(w, ones_row)));
    return t.leaky_relu(pre, leaky_slope);
}

Var self_importance(Tape& t, Var alpha) { return t.self_importance(alpha); }

Var attention_adjacency(Tape& t, Var f, LayerVars lv, double leaky_slope) {
    return t.self_importance(t.row_softmax(attention_scores(t, f, lv, leaky_slope)));
}

Var agcn_layer(Tape& t, Var f, const LabelGraph& graph, LayerVars lv, double leaky_slope,
               bool use_b, bool use_c, bool detach_c) {
    if (graph.fixed_adj.rows() != t.rows(f) || graph.fixed_adj.cols() != t.rows(f))
        throw ShapeError("agcn_layer: adjacency " + graph.fixed_adj.shape_str() +
                         " does not match " + std::to_string(t.rows(f)) + " nodes");
    Var s = t.constant(graph.fixed_adj);
    if (use_b) s = t.add(s, attention_adjacency(t, f, lv, leaky_slope));
    if (use_c) {
        Var c = detach_c ? t.constant(cosine_similarity_rows(t.value(f), kCosineNormEps))
                         : t.cosine_row_pairs(f);
        s = t.add(s, c);
    }
    return t.leaky_relu(t.matmul(t.matmul(s, f), lv.weight), leaky_slope);
}

Var gcn_subnet_forward(Tape& t, const LabelGraph& graph, Var f0,
                       const std::vector<LayerVars>& layers, double leaky_slope, Ablation abl,
                       bool detach_c, std::size_t d_f) {
    if (layers.empty() || layers.size() > 2)
        throw ConfigError("gcn_subnet_forward: layer count must be 1 or 2, got " +
                          std::to_string(layers.size()));
    const bool use_b = abl != Ablation::A;
    const bool use_c = abl == Ablation::ABC;
    Var f = f0;
    for (const LayerVars& lv : layers)
        f = agcn_layer(t, f, graph, lv, leaky_slope, use_b, use_c, detach_c);
    if (t.cols(f) != d_f)
        throw ConfigError("gcn_subnet_forward: final layer width " + std::to_string(t.cols(f)) +
                          " != feature width " + std::to_string(d_f));
    return f;
}

void export_cooccurrence_csv(const std::filesystem::path& path, const Matrix& p,
                             const std::vector<std::string>& label_names) {
    if (label_names.size() != p.cols())
        throw ContractError("export_cooccurrence_csv: " + std::to_string(label_names.size()) +
                            " names for " + p.shape_str() + " matrix");
    std::ofstream out(path);
    if (!out) throw IoError("export_cooccurrence_csv: cannot open " + path.string());
    for (std::size_t j = 0; j < label_names.size(); ++j)
        out << (j ? "," : "") << label_names[j];
    out << "\n";
    char buf[32];
    for (std::size_t i = 0; i < p.rows(); ++i) {
        for (std::size_t j = 0; j < p.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", p(i, j));
            out << (j ? "," : "") << buf;
        }
        out << "\n";
    }
}

std::pair<Matrix, std::vector<std::string>> import_cooccurrence_csv(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("import_cooccurrence_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw IoError("import_cooccurrence_csv: " + path.string() + " line 1: missing header");
    std::vector<std::string> names;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) names.push_back(cell);
    }
    const std::size_t n = names.size();
    Matrix p(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line))
            throw IoError("import_cooccurrence_csv: " + path.string() + " line " +
                          std::to_string(i + 2) + ": unexpected end of file");
        std::stringstream ss(line);
        std::string cell;
        std::size_t j = 0;
        while (std::getline(ss, cell, ',')) {
            if (j >= n)
                throw IoError("import_cooccurrence_csv: " + path.string() + " line " +
                              std::to_string(i + 2) + ": too many columns");
            try {
                p(i, j) = std::stod(cell);
            } catch (const std::exception&) {
                throw IoError("import_cooccurrence_csv: " + path.string() + " line " +
                              std::to_string(i + 2) + ": bad number '" + cell + "'");
            }
            ++j;
        }
        if (j != n)
            throw IoError("import_cooccurrence_csv: " + path.string() + " line " +
                          std::to_string(i + 2) + ": expected " + std::to_string(n) +
                          " columns, got " + std::to_string(j));
    }
    return {std::move(p), std::move(names)};
}

}  // namespace agcn

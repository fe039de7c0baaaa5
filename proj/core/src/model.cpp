#include "agcn/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace agcn {

using nlohmann::json;

GeneratorKind parse_generator_kind(const std::string& s) {
    if (s == "identity") return GeneratorKind::identity;
    if (s == "mlp") return GeneratorKind::mlp;
    throw ConfigError("generator: expected identity or mlp, got '" + s + "'");
}

std::string to_string(GeneratorKind k) {
    return k == GeneratorKind::identity ? "identity" : "mlp";
}

void ModelBundle::validate() const {
    if (d_f == 0) throw ConfigError("model: d_f must be positive");
    if (generator.kind == GeneratorKind::mlp) {
        if (generator.layer_widths.empty() || generator.layer_widths.back() != d_f)
            throw ConfigError("model: mlp generator widths must end in d_f");
        if (generator.weights.size() != generator.layer_widths.size() ||
            generator.biases.size() != generator.layer_widths.size())
            throw ConfigError("model: generator parameter count mismatch");
        for (std::size_t i = 0; i < generator.weights.size(); ++i) {
            if (generator.weights[i].cols() != generator.layer_widths[i] ||
                generator.biases[i].cols() != generator.layer_widths[i] ||
                generator.biases[i].rows() != 1)
                throw ShapeError("model: generator layer " + std::to_string(i) +
                                 " has inconsistent shapes");
            if (i > 0 && generator.weights[i].rows() != generator.layer_widths[i - 1])
                throw ShapeError("model: generator layer " + std::to_string(i) +
                                 " input width mismatch");
        }
    }
    if (graph.n_labels == 0) throw ConfigError("model: graph has no labels");
    if (graph.node_features.rows() != graph.n_labels)
        throw ShapeError("model: node features rows != n_labels");
    if (layers.empty() || layers.size() > 2)
        throw ConfigError("model: layer count must be 1 or 2");
    std::size_t width = graph.node_features.cols();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const AdaptiveLayerParams& lp = layers[i];
        if (lp.weight.rows() != width)
            throw ShapeError("model: gcn layer " + std::to_string(i) + " expects input width " +
                             std::to_string(lp.weight.rows()) + ", got " + std::to_string(width));
        if (lp.attn_vec.rows() != 2 * lp.weight.cols() || lp.attn_vec.cols() != 1)
            throw ShapeError("model: gcn layer " + std::to_string(i) +
                             " attention vector shape mismatch");
        width = lp.weight.cols();
    }
    if (width != d_f)
        throw ConfigError("model: final gcn width " + std::to_string(width) + " != d_f " +
                          std::to_string(d_f));
    if (domain_clf) {
        if (domain_clf->w1.rows() != d_f || domain_clf->w1.cols() != domain_clf->hidden_width ||
            domain_clf->w2.rows() != domain_clf->hidden_width || domain_clf->w2.cols() != 1)
            throw ShapeError("model: domain classifier shape mismatch");
    }
}

template <typename Bundle, typename Fn>
static void visit_params(Bundle& bundle, const Fn& fn) {
    for (std::size_t i = 0; i < bundle.generator.weights.size(); ++i) {
        fn("gen.w" + std::to_string(i), bundle.generator.weights[i]);
        fn("gen.b" + std::to_string(i), bundle.generator.biases[i]);
    }
    if (bundle.learn_node_features) fn("graph.f0", bundle.graph.node_features);
    for (std::size_t i = 0; i < bundle.layers.size(); ++i) {
        fn("gcn." + std::to_string(i) + ".weight", bundle.layers[i].weight);
        fn("gcn." + std::to_string(i) + ".attn", bundle.layers[i].attn_vec);
    }
    if (bundle.domain_clf) {
        fn("dom.w1", bundle.domain_clf->w1);
        fn("dom.b1", bundle.domain_clf->b1);
        fn("dom.w2", bundle.domain_clf->w2);
        fn("dom.b2", bundle.domain_clf->b2);
    }
}

void for_each_param(ModelBundle& bundle,
                    const std::function<void(const std::string&, Matrix&)>& fn) {
    visit_params(bundle, fn);
}

void for_each_param(const ModelBundle& bundle,
                    const std::function<void(const std::string&, const Matrix&)>& fn) {
    visit_params(bundle, fn);
}

TapeBundle register_model(Tape& t, const ModelBundle& bundle, bool trainable, bool with_domain) {
    auto reg = [&](const std::string& name, const Matrix& m) {
        return trainable ? t.leaf(name, m) : t.constant(m);
    };
    TapeBundle tv;
    for (std::size_t i = 0; i < bundle.generator.weights.size(); ++i) {
        tv.gen_weights.push_back(reg("gen.w" + std::to_string(i), bundle.generator.weights[i]));
        tv.gen_biases.push_back(reg("gen.b" + std::to_string(i), bundle.generator.biases[i]));
    }
    tv.node_features = bundle.learn_node_features ? reg("graph.f0", bundle.graph.node_features)
                                                  : t.constant(bundle.graph.node_features);
    for (std::size_t i = 0; i < bundle.layers.size(); ++i) {
        LayerVars lv;
        lv.weight = reg("gcn." + std::to_string(i) + ".weight", bundle.layers[i].weight);
        lv.attn = reg("gcn." + std::to_string(i) + ".attn", bundle.layers[i].attn_vec);
        tv.layers.push_back(lv);
    }
    if (with_domain) {
        if (!bundle.domain_clf)
            throw StateError("register_model: domain pass requested without a domain classifier");
        tv.dom_w1 = reg("dom.w1", bundle.domain_clf->w1);
        tv.dom_b1 = reg("dom.b1", bundle.domain_clf->b1);
        tv.dom_w2 = reg("dom.w2", bundle.domain_clf->w2);
        tv.dom_b2 = reg("dom.b2", bundle.domain_clf->b2);
        tv.has_domain = true;
    }
    return tv;
}

Var generate_features(Tape& t, const ModelBundle& bundle, const TapeBundle& tv, Var batch) {
    if (bundle.generator.kind == GeneratorKind::identity) {
        if (t.cols(batch) != bundle.d_f)
            throw ShapeError("generate_features: identity generator needs input width " +
                             std::to_string(bundle.d_f) + ", got " +
                             std::to_string(t.cols(batch)));
        return batch;
    }
    Var x = batch;
    const std::size_t n_layers = tv.gen_weights.size();
    for (std::size_t i = 0; i < n_layers; ++i) {
        x = t.broadcast_row_add(t.matmul(x, tv.gen_weights[i]), tv.gen_biases[i]);
        if (i + 1 < n_layers) x = t.leaky_relu(x, bundle.generator.leaky_slope);
    }
    return x;
}

Var subnet_classifiers(Tape& t, const ModelBundle& bundle, const TapeBundle& tv, Ablation abl) {
    double slope = bundle.layers.front().leaky_slope;
    return gcn_subnet_forward(t, bundle.graph, tv.node_features, tv.layers, slope, abl,
                              bundle.detach_c, bundle.d_f);
}

Var predict(Tape& t, const ModelBundle& bundle, const TapeBundle& tv, Var batch, Ablation abl) {
    Var x = generate_features(t, bundle, tv, batch);
    Var fl = subnet_classifiers(t, bundle, tv, abl);
    return t.sigmoid(t.matmul(x, t.transpose(fl)));
}

Var predict(Tape& t, const ModelBundle& bundle, const TapeBundle& tv, Var batch) {
    return predict(t, bundle, tv, batch, bundle.ablation);
}

Var grl(Tape& t, Var x, double lambda) {
    if (!(std::isfinite(lambda) && lambda >= 0.0))
        throw ContractError("grl: lambda must be finite and >= 0");
    return t.grad_scale(x, -lambda);
}

Var classify_domain(Tape& t, const ModelBundle& bundle, const TapeBundle& tv, Var features,
                    double lambda) {
    if (!tv.has_domain)
        throw StateError("classify_domain: domain classifier not registered on this tape");
    const DomainClassifier& clf = *bundle.domain_clf;
    Var z = grl(t, features, lambda);
    Var h = t.leaky_relu(t.broadcast_row_add(t.matmul(z, tv.dom_w1), tv.dom_b1),
                         clf.leaky_slope);
    return t.sigmoid(t.broadcast_row_add(t.matmul(h, tv.dom_w2), tv.dom_b2));
}

Matrix predict_scores(const ModelBundle& bundle, const Matrix& features) {
    Tape t;
    TapeBundle tv = register_model(t, bundle, /*trainable=*/false, /*with_domain=*/false);
    Var probs = predict(t, bundle, tv, t.constant(features));
    return t.value(probs);
}

Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(-limit, limit);
    return m;
}

FeatureGenerator make_identity_generator(std::size_t d_f, double leaky_slope) {
    FeatureGenerator g;
    g.kind = GeneratorKind::identity;
    g.layer_widths = {d_f};
    g.leaky_slope = leaky_slope;
    return g;
}

FeatureGenerator make_mlp_generator(std::size_t d_in, const std::vector<std::size_t>& hidden,
                                    std::size_t d_f, double leaky_slope, Rng& rng) {
    FeatureGenerator g;
    g.kind = GeneratorKind::mlp;
    g.leaky_slope = leaky_slope;
    std::size_t prev = d_in;
    for (std::size_t w : hidden) {
        if (w == 0) throw ConfigError("generator: hidden widths must be positive");
        g.layer_widths.push_back(w);
        g.weights.push_back(glorot_uniform(prev, w, rng));
        g.biases.push_back(Matrix(1, w));
        prev = w;
    }
    g.layer_widths.push_back(d_f);
    g.weights.push_back(glorot_uniform(prev, d_f, rng));
    g.biases.push_back(Matrix(1, d_f));
    return g;
}

DomainClassifier make_domain_classifier(std::size_t d_f, std::size_t hidden_width,
                                        double leaky_slope, Rng& rng) {
    if (hidden_width == 0) throw ConfigError("domain classifier: hidden width must be positive");
    DomainClassifier clf;
    clf.hidden_width = hidden_width;
    clf.leaky_slope = leaky_slope;
    clf.w1 = glorot_uniform(d_f, hidden_width, rng);
    clf.b1 = Matrix(1, hidden_width);
    clf.w2 = glorot_uniform(hidden_width, 1, rng);
    clf.b2 = Matrix(1, 1);
    return clf;
}

AdaptiveLayerParams make_layer_params(std::size_t d_in, std::size_t d_out, double leaky_slope,
                                      Rng& rng, std::size_t n_labels) {
    // row sums of A + B + C reach about 3 + N; dividing the glorot limit by
    // half of that keeps layer outputs O(1) at init
    const double mixing_gain = std::max(1.0, (3.0 + static_cast<double>(n_labels)) / 2.0);
    AdaptiveLayerParams lp;
    lp.weight = scale(glorot_uniform(d_in, d_out, rng), 1.0 / mixing_gain);
    lp.attn_vec = glorot_uniform(2 * d_out, 1, rng);
    lp.leaky_slope = leaky_slope;
    return lp;
}

// ---------------------------------------------------------------------------
// persistence

static void write_matrix(std::ofstream& out, const std::string& name, const Matrix& m) {
    out << name << " " << m.rows() << " " << m.cols() << "\n";
    char buf[32];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            out << (j ? " " : "") << buf;
        }
        out << "\n";
    }
}

void save_model(const ModelBundle& bundle, const std::filesystem::path& dir,
                const std::string& config_digest) {
    bundle.validate();
    std::filesystem::create_directories(dir);

    json manifest;
    manifest["format_version"] = 1;
    manifest["config_digest"] = config_digest;
    manifest["d_f"] = bundle.d_f;
    manifest["ablation"] = to_string(bundle.ablation);
    manifest["detach_c"] = bundle.detach_c;
    manifest["learn_node_features"] = bundle.learn_node_features;
    manifest["generator"] = {{"kind", to_string(bundle.generator.kind)},
                             {"layer_widths", bundle.generator.layer_widths},
                             {"leaky_slope", bundle.generator.leaky_slope}};
    manifest["graph"] = {{"n_labels", bundle.graph.n_labels},
                         {"d0", bundle.graph.node_features.cols()},
                         {"threshold", bundle.graph.threshold}};
    json layer_list = json::array();
    for (const auto& lp : bundle.layers)
        layer_list.push_back({{"rows", lp.weight.rows()},
                              {"cols", lp.weight.cols()},
                              {"leaky_slope", lp.leaky_slope}});
    manifest["layers"] = layer_list;
    if (bundle.domain_clf)
        manifest["domain"] = {{"hidden_width", bundle.domain_clf->hidden_width},
                              {"leaky_slope", bundle.domain_clf->leaky_slope}};
    else
        manifest["domain"] = nullptr;

    std::ofstream mf(dir / "manifest.json");
    if (!mf) throw IoError("save_model: cannot open " + (dir / "manifest.json").string());
    mf << manifest.dump(2) << "\n";

    std::ofstream pf(dir / "params.txt");
    if (!pf) throw IoError("save_model: cannot open " + (dir / "params.txt").string());
    pf << "agcn-params 1\n";
    write_matrix(pf, "graph.f0", bundle.graph.node_features);
    write_matrix(pf, "graph.cooccurrence", bundle.graph.cooccurrence);
    write_matrix(pf, "graph.fixed_adj", bundle.graph.fixed_adj);
    for (std::size_t i = 0; i < bundle.generator.weights.size(); ++i) {
        write_matrix(pf, "gen.w" + std::to_string(i), bundle.generator.weights[i]);
        write_matrix(pf, "gen.b" + std::to_string(i), bundle.generator.biases[i]);
    }
    for (std::size_t i = 0; i < bundle.layers.size(); ++i) {
        write_matrix(pf, "gcn." + std::to_string(i) + ".weight", bundle.layers[i].weight);
        write_matrix(pf, "gcn." + std::to_string(i) + ".attn", bundle.layers[i].attn_vec);
    }
    if (bundle.domain_clf) {
        write_matrix(pf, "dom.w1", bundle.domain_clf->w1);
        write_matrix(pf, "dom.b1", bundle.domain_clf->b1);
        write_matrix(pf, "dom.w2", bundle.domain_clf->w2);
        write_matrix(pf, "dom.b2", bundle.domain_clf->b2);
    }
}

static std::map<std::string, Matrix> read_params(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_model: cannot open " + path.string());
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line) || line != "agcn-params 1")
        throw IoError("load_model: " + path.string() + " line 1: bad header");
    std::map<std::string, Matrix> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream hs(line);
        std::string name;
        std::size_t rows = 0, cols = 0;
        if (!(hs >> name >> rows >> cols) || rows == 0 || cols == 0)
            throw IoError("load_model: " + path.string() + " line " + std::to_string(line_no) +
                          ": bad matrix header");
        Matrix m(rows, cols);
        for (std::size_t i = 0; i < rows; ++i) {
            if (!std::getline(in, line))
                throw IoError("load_model: " + path.string() + " line " +
                              std::to_string(line_no + 1) + ": unexpected end of file");
            ++line_no;
            std::istringstream vs(line);
            for (std::size_t j = 0; j < cols; ++j)
                if (!(vs >> m(i, j)))
                    throw IoError("load_model: " + path.string() + " line " +
                                  std::to_string(line_no) + ": expected " +
                                  std::to_string(cols) + " values");
        }
        out[name] = std::move(m);
    }
    return out;
}

ModelBundle load_model(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw IoError("load_model: cannot open " + (dir / "manifest.json").string());
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw IoError("load_model: bad manifest.json: " + std::string(e.what()));
    }
    if (manifest.value("format_version", 0) != 1)
        throw IoError("load_model: unsupported format_version");

    auto params = read_params(dir / "params.txt");
    auto take = [&](const std::string& name) -> Matrix {
        auto it = params.find(name);
        if (it == params.end()) throw IoError("load_model: missing matrix '" + name + "'");
        return std::move(it->second);
    };

    ModelBundle b;
    b.d_f = manifest.at("d_f").get<std::size_t>();
    b.ablation = parse_ablation(manifest.at("ablation").get<std::string>());
    b.detach_c = manifest.at("detach_c").get<bool>();
    b.learn_node_features = manifest.at("learn_node_features").get<bool>();

    const json& gen = manifest.at("generator");
    b.generator.kind = parse_generator_kind(gen.at("kind").get<std::string>());
    b.generator.layer_widths = gen.at("layer_widths").get<std::vector<std::size_t>>();
    b.generator.leaky_slope = gen.at("leaky_slope").get<double>();
    if (b.generator.kind == GeneratorKind::mlp) {
        for (std::size_t i = 0; i < b.generator.layer_widths.size(); ++i) {
            b.generator.weights.push_back(take("gen.w" + std::to_string(i)));
            b.generator.biases.push_back(take("gen.b" + std::to_string(i)));
        }
    }

    const json& graph = manifest.at("graph");
    b.graph.n_labels = graph.at("n_labels").get<std::size_t>();
    b.graph.threshold = graph.at("threshold").get<double>();
    b.graph.node_features = take("graph.f0");
    b.graph.cooccurrence = take("graph.cooccurrence");
    b.graph.fixed_adj = take("graph.fixed_adj");

    for (std::size_t i = 0; i < manifest.at("layers").size(); ++i) {
        AdaptiveLayerParams lp;
        lp.weight = take("gcn." + std::to_string(i) + ".weight");
        lp.attn_vec = take("gcn." + std::to_string(i) + ".attn");
        lp.leaky_slope = manifest.at("layers")[i].at("leaky_slope").get<double>();
        b.layers.push_back(std::move(lp));
    }

    if (!manifest.at("domain").is_null()) {
        DomainClassifier clf;
        clf.hidden_width = manifest.at("domain").at("hidden_width").get<std::size_t>();
        clf.leaky_slope = manifest.at("domain").at("leaky_slope").get<double>();
        clf.w1 = take("dom.w1");
        clf.b1 = take("dom.b1");
        clf.w2 = take("dom.w2");
        clf.b2 = take("dom.b2");
        b.domain_clf = std::move(clf);
    }

    b.validate();
    return b;
}

}  // namespace agcn

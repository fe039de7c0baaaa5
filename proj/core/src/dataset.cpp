#include "agcn/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "agcn/rng.hpp"
#include "json.hpp"

namespace agcn {

using nlohmann::json;

DomainTag parse_domain_tag(const std::string& s) {
    if (s == "source") return DomainTag::source;
    if (s == "target") return DomainTag::target;
    throw ConfigError("domain_tag: expected source or target, got '" + s + "'");
}

std::string to_string(DomainTag t) { return t == DomainTag::source ? "source" : "target"; }

void MultiLabelDataset::validate() const {
    if (features.rows() == 0 || features.cols() == 0)
        throw ContractError("dataset: empty feature matrix");
    if (label_names.empty()) throw ContractError("dataset: no label names");
    std::set<std::string> unique(label_names.begin(), label_names.end());
    if (unique.size() != label_names.size())
        throw ContractError("dataset: label names must be unique");
    if (labels) {
        if (labels->rows() != features.rows())
            throw ContractError("dataset: label rows != feature rows");
        if (labels->cols() != label_names.size())
            throw ContractError("dataset: label columns != label name count");
        for (double v : labels->data())
            if (v != 0.0 && v != 1.0) throw ContractError("dataset: labels must be binary");
    }
    if (!features.all_finite()) throw ContractError("dataset: non-finite features");
}

void SynthSpec::validate() const {
    if (n_labels == 0 || n_clusters == 0 || samples == 0 || feature_dim == 0)
        throw ConfigError("synth spec: all counts must be positive");
    if (n_clusters > n_labels) throw ConfigError("synth spec: n_clusters must be <= n_labels");
    if (!(noise_sigma >= 0.0 && std::isfinite(noise_sigma)))
        throw ConfigError("synth spec: noise_sigma must be finite and >= 0");
}

std::size_t SynthSpec::cluster_of(std::size_t label) const {
    return std::min(label * n_clusters / n_labels, n_clusters - 1);
}

MultiLabelDataset generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    Rng seed_rng(spec.seed);
    Rng proto_rng = seed_rng.fork(1);
    Rng sample_rng = Rng(spec.sample_seed ? spec.sample_seed : spec.seed).fork(2);

    // prototype entries scale with 1/sqrt(d) so sample features stay O(1)
    // regardless of the feature dimension
    const double proto_scale = 1.0 / std::sqrt(static_cast<double>(spec.feature_dim));
    Matrix prototypes(spec.n_labels, spec.feature_dim);
    for (double& v : prototypes.data()) v = proto_rng.gaussian(0.0, proto_scale);

    MultiLabelDataset ds;
    ds.features = Matrix(spec.samples, spec.feature_dim);
    ds.labels = Matrix(spec.samples, spec.n_labels);
    for (std::size_t i = 0; i < spec.n_labels; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "label_%02zu", i);
        ds.label_names.push_back(buf);
    }

    for (std::size_t s = 0; s < spec.samples; ++s) {
        const std::size_t cluster = sample_rng.index(spec.n_clusters);
        for (std::size_t l = 0; l < spec.n_labels; ++l) {
            const double p =
                spec.cluster_of(l) == cluster ? kInClusterProb : kOutClusterProb;
            if (sample_rng.uniform() < p) {
                (*ds.labels)(s, l) = 1.0;
                for (std::size_t j = 0; j < spec.feature_dim; ++j)
                    ds.features(s, j) += prototypes(l, j);
            }
        }
        if (spec.noise_sigma > 0.0)
            for (std::size_t j = 0; j < spec.feature_dim; ++j)
                ds.features(s, j) += sample_rng.gaussian(0.0, spec.noise_sigma);
    }
    ds.validate();
    return ds;
}

Matrix random_rotation(std::size_t dim, std::uint64_t seed) {
    if (seed == 0) return Matrix::eye(dim);
    Rng rng = Rng(seed).fork(3);
    Matrix g(dim, dim);
    for (double& v : g.data()) v = rng.gaussian();

    // modified Gram-Schmidt on the columns
    for (std::size_t c = 0; c < dim; ++c) {
        for (std::size_t prev = 0; prev < c; ++prev) {
            double dot = 0.0;
            for (std::size_t r = 0; r < dim; ++r) dot += g(r, c) * g(r, prev);
            for (std::size_t r = 0; r < dim; ++r) g(r, c) -= dot * g(r, prev);
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < dim; ++r) norm += g(r, c) * g(r, c);
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw NumericError("random_rotation: degenerate draw");
        for (std::size_t r = 0; r < dim; ++r) g(r, c) /= norm;
    }

    // force det +1 (proper rotation) by flipping one column if needed
    Matrix lu = g;
    double det = 1.0;
    for (std::size_t i = 0; i < dim; ++i) {
        std::size_t pivot = i;
        for (std::size_t r = i + 1; r < dim; ++r)
            if (std::fabs(lu(r, i)) > std::fabs(lu(pivot, i))) pivot = r;
        if (pivot != i) {
            for (std::size_t c = 0; c < dim; ++c) std::swap(lu(i, c), lu(pivot, c));
            det = -det;
        }
        det *= lu(i, i);
        if (lu(i, i) == 0.0) break;
        for (std::size_t r = i + 1; r < dim; ++r) {
            const double f = lu(r, i) / lu(i, i);
            for (std::size_t c = i; c < dim; ++c) lu(r, c) -= f * lu(i, c);
        }
    }
    if (det < 0.0)
        for (std::size_t r = 0; r < dim; ++r) g(r, dim - 1) = -g(r, dim - 1);
    return g;
}

MultiLabelDataset apply_shift(const MultiLabelDataset& ds, const ShiftSpec& shift) {
    ds.validate();
    MultiLabelDataset out = ds;
    switch (shift.kind) {
        case ShiftSpec::Kind::none:
            break;  // features untouched; the dataset is still retagged below
        case ShiftSpec::Kind::affine: {
            if (!(std::isfinite(shift.scale) && std::isfinite(shift.bias)))
                throw ConfigError("shift: affine parameters must be finite");
            Matrix r = random_rotation(ds.d_in(), shift.seed);
            out.features = add_scalar(scale(matmul(ds.features, r), shift.scale), shift.bias);
            break;
        }
        case ShiftSpec::Kind::noise: {
            if (!(shift.sigma >= 0.0 && std::isfinite(shift.sigma)))
                throw ConfigError("shift: sigma must be finite and >= 0");
            Rng rng = Rng(shift.seed).fork(4);
            for (double& v : out.features.data()) v += rng.gaussian(0.0, shift.sigma);
            break;
        }
    }
    out.labels_hidden = out.labels.has_value();
    out.domain_tag = DomainTag::target;
    return out;
}

static ShiftSpec parse_shift(const json& j) {
    ShiftSpec s;
    const std::string kind = j.value("kind", "none");
    if (kind == "none") {
        s.kind = ShiftSpec::Kind::none;
    } else if (kind == "affine") {
        s.kind = ShiftSpec::Kind::affine;
        s.scale = j.value("scale", 1.0);
        s.seed = j.value("seed", std::uint64_t{0});
        s.bias = j.value("bias", 0.0);
    } else if (kind == "noise") {
        s.kind = ShiftSpec::Kind::noise;
        s.sigma = j.value("sigma", 0.0);
        s.seed = j.value("seed", std::uint64_t{0});
    } else {
        throw ConfigError("shift: expected kind none, affine or noise, got '" + kind + "'");
    }
    return s;
}

SynthSpec parse_synth_spec_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("synth spec: bad JSON: " + std::string(e.what()));
    }
    SynthSpec spec;
    try {
        spec.n_labels = j.at("n_labels").get<std::size_t>();
        spec.n_clusters = j.at("n_clusters").get<std::size_t>();
        spec.samples = j.at("samples").get<std::size_t>();
        spec.feature_dim = j.at("feature_dim").get<std::size_t>();
        spec.noise_sigma = j.value("noise_sigma", 0.0);
        spec.seed = j.value("seed", std::uint64_t{0});
        spec.sample_seed = j.value("sample_seed", std::uint64_t{0});
        spec.keep_labels = j.value("keep_labels", false);
        if (j.contains("shift")) spec.shift = parse_shift(j.at("shift"));
    } catch (const json::exception& e) {
        throw ConfigError("synth spec: " + std::string(e.what()));
    }
    spec.validate();
    return spec;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("synth spec: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_synth_spec_json(text);
}

void save_dataset(const MultiLabelDataset& ds, const std::filesystem::path& dir) {
    ds.validate();
    std::filesystem::create_directories(dir);
    const bool write_labels = ds.labels.has_value() && !ds.labels_hidden;

    json manifest;
    manifest["format_version"] = 1;
    manifest["n_labels"] = ds.n_labels();
    manifest["feature_dim"] = ds.d_in();
    manifest["samples"] = ds.n();
    manifest["label_names"] = ds.label_names;
    manifest["domain_tag"] = to_string(ds.domain_tag);
    manifest["labeled"] = write_labels;
    std::ofstream mf(dir / "manifest.json");
    if (!mf) throw IoError("save_dataset: cannot open " + (dir / "manifest.json").string());
    mf << manifest.dump(2) << "\n";

    std::ofstream df(dir / "data.jsonl");
    if (!df) throw IoError("save_dataset: cannot open " + (dir / "data.jsonl").string());
    char idbuf[32];
    for (std::size_t i = 0; i < ds.n(); ++i) {
        std::snprintf(idbuf, sizeof idbuf, "s%06zu", i);
        json line;
        line["id"] = idbuf;
        json feats = json::array();
        for (std::size_t j = 0; j < ds.d_in(); ++j) feats.push_back(ds.features(i, j));
        line["features"] = std::move(feats);
        if (write_labels) {
            json labs = json::array();
            for (std::size_t j = 0; j < ds.n_labels(); ++j)
                labs.push_back(static_cast<int>((*ds.labels)(i, j)));
            line["labels"] = std::move(labs);
        }
        df << line.dump() << "\n";
    }
}

MultiLabelDataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream mf(manifest_path);
    if (!mf) throw IoError("load_dataset: cannot open " + manifest_path.string());
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw IoError("load_dataset: bad manifest.json: " + std::string(e.what()));
    }
    if (manifest.value("format_version", 0) != 1)
        throw IoError("load_dataset: unsupported format_version");

    MultiLabelDataset ds;
    std::size_t n_labels = 0, feature_dim = 0, samples = 0;
    bool labeled = false;
    try {
        n_labels = manifest.at("n_labels").get<std::size_t>();
        feature_dim = manifest.at("feature_dim").get<std::size_t>();
        samples = manifest.at("samples").get<std::size_t>();
        ds.label_names = manifest.at("label_names").get<std::vector<std::string>>();
        ds.domain_tag = parse_domain_tag(manifest.at("domain_tag").get<std::string>());
        labeled = manifest.at("labeled").get<bool>();
    } catch (const json::exception& e) {
        throw IoError("load_dataset: manifest.json: " + std::string(e.what()));
    }
    if (ds.label_names.size() != n_labels)
        throw IoError("load_dataset: manifest.json: label_names count != n_labels");

    const auto data_path = dir / "data.jsonl";
    std::ifstream df(data_path);
    if (!df) throw IoError("load_dataset: cannot open " + data_path.string());

    ds.features = Matrix(samples, feature_dim);
    if (labeled) ds.labels = Matrix(samples, n_labels);

    std::string line;
    std::size_t row = 0, line_no = 0;
    while (std::getline(df, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (row >= samples)
            throw IoError("load_dataset: " + data_path.string() + " line " +
                          std::to_string(line_no) + ": more samples than manifest declares");
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("load_dataset: " + data_path.string() + " line " +
                          std::to_string(line_no) + ": " + std::string(e.what()));
        }
        if (!j.contains("features") || !j.at("features").is_array() ||
            j.at("features").size() != feature_dim)
            throw IoError("load_dataset: " + data_path.string() + " line " +
                          std::to_string(line_no) + ": expected " + std::to_string(feature_dim) +
                          " features");
        for (std::size_t c = 0; c < feature_dim; ++c) {
            if (!j.at("features")[c].is_number())
                throw IoError("load_dataset: " + data_path.string() + " line " +
                              std::to_string(line_no) + ": non-numeric feature");
            ds.features(row, c) = j.at("features")[c].get<double>();
        }
        if (labeled) {
            if (!j.contains("labels") || !j.at("labels").is_array() ||
                j.at("labels").size() != n_labels)
                throw IoError("load_dataset: " + data_path.string() + " line " +
                              std::to_string(line_no) + ": expected " + std::to_string(n_labels) +
                              " label entries");
            for (std::size_t c = 0; c < n_labels; ++c) {
                const int v = j.at("labels")[c].get<int>();
                if (v != 0 && v != 1)
                    throw IoError("load_dataset: " + data_path.string() + " line " +
                                  std::to_string(line_no) + ": labels must be 0/1");
                (*ds.labels)(row, c) = static_cast<double>(v);
            }
        } else if (j.contains("labels")) {
            throw IoError("load_dataset: " + data_path.string() + " line " +
                          std::to_string(line_no) +
                          ": labels present in a dataset declared unlabeled");
        }
        ++row;
    }
    if (row != samples)
        throw IoError("load_dataset: " + data_path.string() + ": manifest declares " +
                      std::to_string(samples) + " samples, file has " + std::to_string(row));
    ds.validate();
    return ds;
}

}  // namespace agcn

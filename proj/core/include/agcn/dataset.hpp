#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "agcn/matrix.hpp"

namespace agcn {

enum class DomainTag { source, target };

DomainTag parse_domain_tag(const std::string& s);
std::string to_string(DomainTag t);

// A multi-label dataset: features, optional binary labels and the domain it
// belongs to. Target sets used for unsupervised adaptation either carry no
// labels at all or keep them hidden (evaluation-only).
struct MultiLabelDataset {
    Matrix features;  // n x d_in
    std::optional<Matrix> labels;  // n x N binary
    bool labels_hidden = false;
    std::vector<std::string> label_names;
    DomainTag domain_tag = DomainTag::source;

    std::size_t n() const { return features.rows(); }
    std::size_t d_in() const { return features.cols(); }
    std::size_t n_labels() const { return label_names.size(); }
    bool labeled_for_training() const { return labels.has_value() && !labels_hidden; }

    void validate() const;
};

// Domain-shift description. kind none leaves features untouched; affine
// applies features * R * scale + bias with R a rotation seeded by `seed`
// (seed 0 keeps R = I); noise adds Gaussian sigma.
struct ShiftSpec {
    enum class Kind { none, affine, noise };
    Kind kind = Kind::none;
    double scale = 1.0;
    std::uint64_t seed = 0;
    double bias = 0.0;
    double sigma = 0.0;
};

// Cluster-structured synthetic data: a sample activates one latent cluster,
// includes each cluster label with probability kInClusterProb and the rest
// with kOutClusterProb, and sums the prototypes of its labels (plus noise).
inline constexpr double kInClusterProb = 0.8;
inline constexpr double kOutClusterProb = 0.05;

struct SynthSpec {
    std::size_t n_labels = 0;
    std::size_t n_clusters = 0;
    std::size_t samples = 0;
    std::size_t feature_dim = 0;
    double noise_sigma = 0.0;
    ShiftSpec shift;
    std::uint64_t seed = 0;
    // Seeds the per-sample draws; defaults to `seed`. A second split of the
    // same distribution = same seed (same prototypes), different sample_seed.
    std::uint64_t sample_seed = 0;
    // After a shift, keep the labels visible (for building target-val sets).
    bool keep_labels = false;

    void validate() const;
    std::size_t cluster_of(std::size_t label) const;
};

MultiLabelDataset generate_synthetic(const SynthSpec& spec);

// Returns the shifted copy: features transformed, labels kept but hidden,
// domain retagged as target.
MultiLabelDataset apply_shift(const MultiLabelDataset& ds, const ShiftSpec& shift);

// Orthogonal rotation (det +1) seeded deterministically; seed 0 = identity.
Matrix random_rotation(std::size_t dim, std::uint64_t seed);

SynthSpec parse_synth_spec_json(const std::string& text);
SynthSpec load_synth_spec(const std::filesystem::path& path);

// manifest.json + data.jsonl; decimal text round-trips every feature bit.
// Hidden labels are dropped on save.
void save_dataset(const MultiLabelDataset& ds, const std::filesystem::path& dir);
MultiLabelDataset load_dataset(const std::filesystem::path& dir);

}  // namespace agcn

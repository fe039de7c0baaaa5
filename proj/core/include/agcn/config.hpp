#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "agcn/losses.hpp"

namespace agcn {

// Resolved experiment configuration. Every key has a default; config files
// only override. Sections: [model], [graph], [loss], [train], [da].
struct TrainConfig {
    // [model]
    std::size_t d_f = 16;
    std::string generator = "identity";  // identity | mlp
    std::string gen_hidden_widths;       // comma-separated hidden widths for mlp

    // [graph]
    std::size_t layers = 1;            // 1 | 2
    double tau = 0.0;                  // co-occurrence threshold
    std::string adjacency_norm = "row";  // row | sym
    double leaky_slope = 0.2;
    std::string node_features = "prototype";  // prototype | file | learned
    std::string node_features_file;
    std::size_t d0 = 0;  // width of learned node features; 0 = d_f
    bool detach_c = false;

    // [loss]
    LossConfig loss;

    // [train]
    std::size_t epochs = 40;
    double max_lr = 1e-4;
    std::size_t batch_size = 32;
    std::uint64_t seed = 7;
    std::string ablation = "ABC";  // A | AB | ABC
    std::size_t patience = 8;      // epochs without val-mAP improvement
    double decision_threshold = 0.5;
    std::size_t topk = 0;  // 0 = threshold binarization

    // [da]
    std::string lambda_schedule = "constant";       // constant | dann_ramp
    std::string grl_lambda_location = "objective";  // objective | grl
    std::size_t domain_hidden = 0;                  // 0 = 4 * d_f

    void validate() const;

    // Canonical text form: every key in fixed order. Reparsing the echo
    // reproduces this config exactly.
    std::string echo() const;

    // FNV-1a hash of the echo, as hex.
    std::string digest() const;

    // Effective GRL weight at training progress p in [0, 1].
    double effective_lambda(double progress) const;
};

TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

}  // namespace agcn

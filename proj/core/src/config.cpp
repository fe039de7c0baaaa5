#include "agcn/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "agcn/labelgraph.hpp"
#include "agcn/model.hpp"

namespace agcn {

void TrainConfig::validate() const {
    if (d_f == 0) throw ConfigError("model.d_f: must be positive");
    parse_generator_kind(generator);
    if (layers != 1 && layers != 2) throw ConfigError("graph.layers: must be 1 or 2");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("graph.tau: must lie in [0, 1]");
    parse_adjacency_norm(adjacency_norm);
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
        throw ConfigError("graph.leaky_slope: must lie in (0, 1)");
    if (node_features != "prototype" && node_features != "file" && node_features != "learned")
        throw ConfigError("graph.node_features: expected prototype, file or learned, got '" +
                          node_features + "'");
    if (node_features == "file" && node_features_file.empty())
        throw ConfigError("graph.node_features_file: required when node_features = file");
    loss.validate();
    if (!(max_lr > 0.0 && std::isfinite(max_lr)))
        throw ConfigError("train.max_lr: must be positive");
    if (batch_size == 0) throw ConfigError("train.batch_size: must be positive");
    parse_ablation(ablation);
    if (!(decision_threshold >= 0.0 && decision_threshold <= 1.0))
        throw ConfigError("train.decision_threshold: must lie in [0, 1]");
    if (lambda_schedule != "constant" && lambda_schedule != "dann_ramp")
        throw ConfigError("da.lambda_schedule: expected constant or dann_ramp, got '" +
                          lambda_schedule + "'");
    if (grl_lambda_location != "objective" && grl_lambda_location != "grl")
        throw ConfigError("da.grl_lambda_location: expected objective or grl, got '" +
                          grl_lambda_location + "'");
}

double TrainConfig::effective_lambda(double progress) const {
    double lam = loss.lambda_d;
    if (lambda_schedule == "dann_ramp")
        lam *= 2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0;
    return lam;
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct KeyBinding {
    std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

void parse_count(const std::string& key, const std::string& raw, std::size_t& out) {
    try {
        const long long v = std::stoll(raw);
        if (v < 0) throw ConfigError(key + ": must be nonnegative");
        out = static_cast<std::size_t>(v);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError(key + ": bad integer '" + raw + "'");
    }
}

void parse_u64(const std::string& key, const std::string& raw, std::uint64_t& out) {
    try {
        out = std::stoull(raw);
    } catch (const std::exception&) {
        throw ConfigError(key + ": bad integer '" + raw + "'");
    }
}

void parse_real(const std::string& key, const std::string& raw, double& out) {
    try {
        std::size_t used = 0;
        out = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
    } catch (const std::exception&) {
        throw ConfigError(key + ": bad number '" + raw + "'");
    }
}

void parse_bool(const std::string& key, const std::string& raw, bool& out) {
    if (raw == "true") out = true;
    else if (raw == "false") out = false;
    else throw ConfigError(key + ": expected true or false, got '" + raw + "'");
}

std::string unquote(const std::string& raw) {
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
        return raw.substr(1, raw.size() - 2);
    return raw;
}

// One binding per key, in echo order.
const std::vector<std::pair<std::string, KeyBinding>>& bindings() {
    static const std::vector<std::pair<std::string, KeyBinding>> b = {
        {"model.d_f",
         {[](TrainConfig& c, const std::string& k, const std::string& v) { parse_count(k, v, c.d_f); },
          [](const TrainConfig& c) { return std::to_string(c.d_f); }}},
        {"model.generator",
         {[](TrainConfig& c, const std::string&, const std::string& v) { c.generator = unquote(v); },
          [](const TrainConfig& c) { return "\"" + c.generator + "\""; }}},
        {"model.gen_hidden_widths",
         {[](TrainConfig& c, const std::string&, const std::string& v) {
              c.gen_hidden_widths = unquote(v);
          },
          [](const TrainConfig& c) { return "\"" + c.gen_hidden_widths + "\""; }}},
        {"graph.layers",
         {[](TrainConfig& c, const std::string& k, const std::string& v) { parse_count(k, v, c.layers); },
          [](const TrainConfig& c) { return std::to_string(c.layers); }}},
        {"graph.tau",
         {[](TrainConfig& c, const std::string& k, const std::string& v) { parse_real(k, v, c.tau); },
          [](const TrainConfig& c) { return fmt_double(c.tau); }}},
        {"graph.adjacency_norm",
         {[](TrainConfig& c, const std::string&, const std::string& v) {
              c.adjacency_norm = unquote(v);
          },
          [](const TrainConfig& c) { return "\"" + c.adjacency_norm + "\""; }}},
        {"graph.leaky_slope",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              parse_real(k, v, c.leaky_slope);
          },
          [](const TrainConfig& c) { return fmt_double(c.leaky_slope); }}},
        {"graph.node_features",
         {[](TrainConfig& c, const std::string&, const std::string& v) {
              c.node_features = unquote(v);
          },
          [](const TrainConfig& c) { return "\"" + c.node_features + "\""; }}},
        {"graph.node_features_file",
         {[](TrainConfig& c, const std::string&, const std::string& v) {
              c.node_features_file = unquote(v);
          },
          [](const TrainConfig& c) { return "\"" + c.node_features_file + "\""; }}},
        {"graph.d0",
         {[](TrainConfig& c, const std::string& k, const std::string& v) { parse_count(k, v, c.d0); },
          [](const TrainConfig& c) { return std::to_string(c.d0); }}},
        {"graph.detach_c",
         {[](TrainConfig& c, const std::string& k, const std::string& v) { parse_bool(k, v, c.detach_c); },
          [](const TrainConfig& c) { return c.detach_c ? "true" : "false"; }}},
        {"loss.gamma_pos",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              parse_real(k, v, c.loss.gamma_pos);
          },
          [](const TrainConfig& c) { return fmt_double(c.loss.gamma_pos); }}},
        {"loss.gamma_neg",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              parse_real(k, v, c.loss.gamma_neg);
          },
          [](const TrainConfig& c) { return fmt_double(c.loss.gamma_neg); }}},
        {"loss.margin",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              parse_real(k, v, c.loss.margin);
          },
          [](const TrainConfig& c) { return fmt_double(c.loss.margin); }}},
        {"loss.lambda_d",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              parse_real(k, v, c.loss.lambda_d);
          },
          [](const TrainConfig& c) { return fmt_double(c.loss.lambda_d); }}},
        {"train.epochs",
         {[](TrainConfig& c, const std::string& k, const std::string& v) { parse_count(k, v, c.epochs); },
          [](const TrainConfig& c) { return std::to_string(c.epochs); }}},
        {"train.max_lr",
         {[](TrainConfig& c, const std::string& k, const std::string& v) { parse_real(k, v, c.max_lr); },
          [](const TrainConfig& c) { return fmt_double(c.max_lr); }}},
        {"train.batch_size",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              parse_count(k, v, c.batch_size);
          },
          [](const TrainConfig& c) { return std::to_string(c.batch_size); }}},
        {"train.seed",
         {[](TrainConfig& c, const std::string& k, const std::string& v) { parse_u64(k, v, c.seed); },
          [](const TrainConfig& c) { return std::to_string(c.seed); }}},
        {"train.ablation",
         {[](TrainConfig& c, const std::string&, const std::string& v) { c.ablation = unquote(v); },
          [](const TrainConfig& c) { return "\"" + c.ablation + "\""; }}},
        {"train.patience",
         {[](TrainConfig& c, const std::string& k, const std::string& v) { parse_count(k, v, c.patience); },
          [](const TrainConfig& c) { return std::to_string(c.patience); }}},
        {"train.decision_threshold",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              parse_real(k, v, c.decision_threshold);
          },
          [](const TrainConfig& c) { return fmt_double(c.decision_threshold); }}},
        {"train.topk",
         {[](TrainConfig& c, const std::string& k, const std::string& v) { parse_count(k, v, c.topk); },
          [](const TrainConfig& c) { return std::to_string(c.topk); }}},
        {"da.lambda_schedule",
         {[](TrainConfig& c, const std::string&, const std::string& v) {
              c.lambda_schedule = unquote(v);
          },
          [](const TrainConfig& c) { return "\"" + c.lambda_schedule + "\""; }}},
        {"da.grl_lambda_location",
         {[](TrainConfig& c, const std::string&, const std::string& v) {
              c.grl_lambda_location = unquote(v);
          },
          [](const TrainConfig& c) { return "\"" + c.grl_lambda_location + "\""; }}},
        {"da.domain_hidden",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              parse_count(k, v, c.domain_hidden);
          },
          [](const TrainConfig& c) { return std::to_string(c.domain_hidden); }}},
    };
    return b;
}

std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::string TrainConfig::echo() const {
    std::string out;
    std::string section;
    for (const auto& [key, binding] : bindings()) {
        const std::string sec = key.substr(0, key.find('.'));
        if (sec != section) {
            if (!out.empty()) out += "\n";
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += key.substr(key.find('.') + 1) + " = " + binding.get(*this) + "\n";
    }
    return out;
}

std::string TrainConfig::digest() const {
    const std::string text = echo();
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

TrainConfig parse_config_text(const std::string& text) {
    std::map<std::string, const KeyBinding*> by_key;
    for (const auto& [key, binding] : bindings()) by_key[key] = &binding;

    TrainConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": malformed section header");
            section = strip(line.substr(1, line.size() - 2));
            if (section != "model" && section != "graph" && section != "loss" &&
                section != "train" && section != "da")
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": unknown section [" + section + "]");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key +
                              "' outside any section");
        const std::string full = section + "." + key;
        auto it = by_key.find(full);
        if (it == by_key.end())
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" +
                              full + "'");
        it->second->set(cfg, full, value);
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

}  // namespace agcn

#include "irgsfda/cli/experiment_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace irgsfda::cli {

namespace {

std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_real(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw ConfigError("config key '" + key + "': '" + s + "' is not a number");
    return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw ConfigError("config key '" + key + "': '" + s + "' is not a non-negative integer");
    return v;
}

struct Field {
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

template <class T>
Field real_field(T ExperimentConfig::*section, double T::*member) {
    return {[=](const ExperimentConfig& c) { return fmt_real(c.*section.*member); },
            [=](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.*section.*member = parse_real(k, v);
            }};
}

template <class T, class U>
Field uint_field(T ExperimentConfig::*section, U T::*member) {
    return {[=](const ExperimentConfig& c) { return std::to_string(c.*section.*member); },
            [=](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.*section.*member = static_cast<U>(parse_uint(k, v));
            }};
}

template <class U>
Field top_uint(U ExperimentConfig::*member) {
    return {[=](const ExperimentConfig& c) { return std::to_string(c.*member); },
            [=](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.*member = static_cast<U>(parse_uint(k, v));
            }};
}

Field domain_name(toydet::DomainSpec ExperimentConfig::*section) {
    return {[=](const ExperimentConfig& c) { return (c.*section).name; },
            [=](ExperimentConfig& c, const std::string& k, const std::string& v) {
                if (v.empty()) throw ConfigError("config key '" + k + "' must not be empty");
                (c.*section).name = v;
            }};
}

const std::map<std::string, Field>& fields() {
    using C = ExperimentConfig;
    using D = toydet::DomainSpec;
    using A = adapt::AdaptConfig;
    using S = adapt::SourceConfig;
    static const std::map<std::string, Field> table{
        {"output_dir",
         {[](const C& c) { return c.output_dir; },
          [](C& c, const std::string& k, const std::string& v) {
              if (v.empty()) throw ConfigError("config key '" + k + "' must not be empty");
              c.output_dir = v;
          }}},
        {"seed", top_uint(&C::seed)},
        {"data.source_train", top_uint(&C::source_train)},
        {"data.source_eval", top_uint(&C::source_eval)},
        {"data.target_train", top_uint(&C::target_train)},
        {"data.target_eval", top_uint(&C::target_eval)},
        {"source.name", domain_name(&C::source)},
        {"source.brightness", real_field(&C::source, &D::brightness)},
        {"source.contrast", real_field(&C::source, &D::contrast)},
        {"source.noise_sigma", real_field(&C::source, &D::noise_sigma)},
        {"source.fog_alpha", real_field(&C::source, &D::fog_alpha)},
        {"target.name", domain_name(&C::target)},
        {"target.brightness", real_field(&C::target, &D::brightness)},
        {"target.contrast", real_field(&C::target, &D::contrast)},
        {"target.noise_sigma", real_field(&C::target, &D::noise_sigma)},
        {"target.fog_alpha", real_field(&C::target, &D::fog_alpha)},
        {"train.lr", real_field(&C::source_training, &S::lr)},
        {"train.momentum", real_field(&C::source_training, &S::momentum)},
        {"train.epochs", uint_field(&C::source_training, &S::epochs)},
        {"train.proposals", uint_field(&C::source_training, &S::proposals)},
        {"train.jitter", real_field(&C::source_training, &S::jitter)},
        {"adapt.lr", real_field(&C::adaptation, &A::lr)},
        {"adapt.momentum", real_field(&C::adaptation, &A::momentum)},
        {"adapt.alpha", real_field(&C::adaptation, &A::alpha)},
        {"adapt.threshold", real_field(&C::adaptation, &A::threshold)},
        {"adapt.proposals", uint_field(&C::adaptation, &A::proposals)},
        {"adapt.epochs", uint_field(&C::adaptation, &A::epochs)},
        {"adapt.temperature", real_field(&C::adaptation, &A::temperature)},
        {"adapt.w_sl", real_field(&C::adaptation, &A::w_sl)},
        {"adapt.w_gdl", real_field(&C::adaptation, &A::w_gdl)},
        {"adapt.w_gcl", real_field(&C::adaptation, &A::w_gcl)},
        {"adapt.gcn_layers", uint_field(&C::adaptation, &A::gcn_layers)},
        {"adapt.jitter", real_field(&C::adaptation, &A::jitter)},
        {"adapt.epsilon",
         {[](const C& c) { return c.adaptation.epsilon ? fmt_real(*c.adaptation.epsilon) : std::string("auto"); },
          [](C& c, const std::string& k, const std::string& v) {
              if (v == "auto")
                  c.adaptation.epsilon.reset();
              else
                  c.adaptation.epsilon = parse_real(k, v);
          }}},
        {"adapt.pairing",
         {[](const C& c) { return adapt::to_string(c.adaptation.pairing); },
          [](C& c, const std::string& k, const std::string& v) {
              try {
                  c.adaptation.pairing = adapt::pairing_from_string(v);
              } catch (const numerics::ContractError& e) {
                  throw ConfigError("config key '" + k + "': " + e.what());
              }
          }}},
    };
    return table;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void ExperimentConfig::apply_seed(std::uint64_t s) {
    seed = s;
    source_training.seed = s;
    adaptation.seed = s;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return emit_config(a) == emit_config(b);
}

std::string emit_config(const ExperimentConfig& cfg) {
    std::string out = std::string("format=") + kConfigFormat + "\n";
    for (const auto& [key, field] : fields()) out += key + "=" + field.get(cfg) + "\n";
    return out;
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    bool have_format = false;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' appears twice");
        if (key == "format") {
            if (value != kConfigFormat) throw ConfigError("unsupported config format '" + value + "'");
            have_format = true;
            continue;
        }
        const auto it = fields().find(key);
        if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
        it->second.set(cfg, key, value);
    }
    if (!have_format) throw ConfigError(std::string("config is missing format=") + kConfigFormat);
    cfg.source_training.seed = cfg.seed;
    cfg.adaptation.seed = cfg.seed;
    try {
        cfg.source.validate();
        cfg.target.validate();
        cfg.source_training.validate();
        cfg.adaptation.validate();
    } catch (const numerics::ContractError& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write config " + path.string());
    out << emit_config(cfg);
}

}  // namespace irgsfda::cli

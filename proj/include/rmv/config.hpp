#pragma once

// Experiment configuration: one JSON document per run.
//
//   {
//     "command": "simulate" | "poc" | "meanfield" | "ldp" | "exit" | "validate",
//     "seed": 42,                          mandatory, unsigned 64-bit
//     "model": "ou-cubic-1d" | { inline model },
//     "domain": { "kind": ..., "params": ... },   required for inline models
//     "x_tilde": [1.0], "contraction": 2.0,       exit runs with inline models
//     "output_dir": "out",
//     "params": { command specific, see docs/config.md }
//   }
//
// Unknown keys anywhere are errors.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "geometry.hpp"
#include "interaction.hpp"
#include "model.hpp"

namespace rmv {

enum class Command { simulate, poc, meanfield, ldp, exit, validate };

inline Command parse_command(const std::string& s) {
    if (s == "simulate") return Command::simulate;
    if (s == "poc") return Command::poc;
    if (s == "meanfield") return Command::meanfield;
    if (s == "ldp") return Command::ldp;
    if (s == "exit") return Command::exit;
    if (s == "validate") return Command::validate;
    throw ConfigError("unknown command '" + s + "'");
}

inline const char* to_string(Command c) {
    switch (c) {
    case Command::simulate: return "simulate";
    case Command::poc: return "poc";
    case Command::meanfield: return "meanfield";
    case Command::ldp: return "ldp";
    case Command::exit: return "exit";
    case Command::validate: return "validate";
    }
    return "?";
}

inline InteractionMethod parse_method(const std::string& s) {
    if (s == "automatic") return InteractionMethod::automatic;
    if (s == "pairwise") return InteractionMethod::pairwise;
    if (s == "moments") return InteractionMethod::moments;
    throw ConfigError("unknown interaction method '" + s + "'");
}

// Typed, range-checked accessor over a params object.
class Params {
public:
    Params(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    double number(const std::string& key, std::optional<double> def = std::nullopt, double lo = -kInf,
                  double hi = kInf) const {
        if (!j_.contains(key)) {
            if (!def) throw ConfigError(where_ + ": missing '" + key + "'");
            return *def;
        }
        const auto& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(where_ + ": '" + key + "' must be a number");
        const double x = v.get<double>();
        if (!(x >= lo && x <= hi))
            throw ConfigError(where_ + ": '" + key + "' = " + v.dump() + " outside [" + bound(lo) + ", " + bound(hi) +
                              "]");
        return x;
    }

    double positive(const std::string& key, std::optional<double> def = std::nullopt) const {
        const double x = number(key, def);
        if (!(x > 0.0)) throw ConfigError(where_ + ": '" + key + "' must be positive");
        return x;
    }

    std::size_t count(const std::string& key, std::optional<std::size_t> def = std::nullopt, std::size_t lo = 1,
                      std::size_t hi = std::size_t{1} << 40) const {
        if (!j_.contains(key)) {
            if (!def) throw ConfigError(where_ + ": missing '" + key + "'");
            return *def;
        }
        const auto& v = j_.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            throw ConfigError(where_ + ": '" + key + "' must be a nonnegative integer");
        const auto x = v.get<std::size_t>();
        if (x < lo || x > hi)
            throw ConfigError(where_ + ": '" + key + "' = " + std::to_string(x) + " outside [" + std::to_string(lo) +
                              ", " + std::to_string(hi) + "]");
        return x;
    }

    bool flag(const std::string& key, bool def) const {
        if (!j_.contains(key)) return def;
        if (!j_.at(key).is_boolean()) throw ConfigError(where_ + ": '" + key + "' must be true or false");
        return j_.at(key).get<bool>();
    }

    std::optional<bool> optional_flag(const std::string& key) const {
        if (!j_.contains(key)) return std::nullopt;
        return flag(key, false);
    }

    std::string text(const std::string& key, const std::string& def) const {
        if (!j_.contains(key)) return def;
        if (!j_.at(key).is_string()) throw ConfigError(where_ + ": '" + key + "' must be a string");
        return j_.at(key).get<std::string>();
    }

    std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> def = std::nullopt) const {
        if (!j_.contains(key)) {
            if (!def) throw ConfigError(where_ + ": missing '" + key + "'");
            return *def;
        }
        const auto& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(where_ + ": '" + key + "' must be an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(where_ + ": '" + key + "' must be an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::vector<std::size_t> counts(const std::string& key, std::optional<std::vector<std::size_t>> def) const {
        if (!j_.contains(key)) {
            if (!def) throw ConfigError(where_ + ": missing '" + key + "'");
            return *def;
        }
        std::vector<std::size_t> out;
        for (double x : numbers(key)) {
            if (!(x >= 1.0) || x != std::floor(x)) throw ConfigError(where_ + ": '" + key + "' must hold integers >= 1");
            out.push_back(static_cast<std::size_t>(x));
        }
        return out;
    }

    const nlohmann::json& raw(const std::string& key) const { return j_.at(key); }

    void allow(std::initializer_list<const char*> keys) const { detail::check_keys(j_, keys, where_); }

private:
    static std::string bound(double v) {
        if (v == kInf) return "inf";
        if (v == -kInf) return "-inf";
        std::ostringstream os;
        os << v;
        return os.str();
    }

    const nlohmann::json& j_;
    std::string where_;
};

struct ExperimentConfig {
    Command command = Command::validate;
    std::uint64_t seed = 0;
    nlohmann::json raw;    // full document, echoed in the manifest
    nlohmann::json params; // command-specific object
    std::optional<CatalogModel> model; // always set by parse_config
    std::string output_dir = "out";
};

inline std::uint64_t parse_seed(const nlohmann::json& j) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer() && j.get<long long>() >= 0) return static_cast<std::uint64_t>(j.get<long long>());
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        std::size_t pos = 0;
        try {
            const unsigned long long v = std::stoull(s, &pos, 0);
            if (pos == s.size()) return v;
        } catch (const std::exception&) {
        }
    }
    throw ConfigError("seed must be an unsigned 64-bit integer");
}

inline CatalogModel resolve_model(const nlohmann::json& doc) {
    const auto& m = detail::required(doc, "model", "config");
    if (m.is_string()) {
        CatalogModel c = find_model(m.get<std::string>());
        if (doc.contains("domain")) c.domain = ConvexDomain::from_json(doc.at("domain"));
        if (doc.contains("x_tilde")) c.x_tilde = detail::vector_from_json(doc.at("x_tilde"));
        if (doc.contains("contraction")) c.contraction = doc.at("contraction").get<double>();
        return c;
    }
    if (!m.is_object()) throw ConfigError("model must be a catalog id or an object");
    if (!doc.contains("domain")) throw ConfigError("inline models need a domain");
    CatalogModel c{make_polynomial_model(model_spec_from_json(m)), ConvexDomain::from_json(doc.at("domain")),
                   std::nullopt, std::nullopt};
    if (doc.contains("x_tilde")) c.x_tilde = detail::vector_from_json(doc.at("x_tilde"));
    if (doc.contains("contraction")) c.contraction = doc.at("contraction").get<double>();
    require_dim(c.domain.dimension(), c.model.dim, "domain");
    if (c.x_tilde) require_dim(c.x_tilde->size(), c.model.dim, "x_tilde");
    return c;
}

// `expected` is the subcommand given on the command line; a "command" key in
// the document must agree with it. `seed_override` replaces or supplies the seed.
inline ExperimentConfig parse_config(const nlohmann::json& doc, std::optional<Command> expected = std::nullopt,
                                     std::optional<std::uint64_t> seed_override = std::nullopt) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    detail::check_keys(doc, {"command", "seed", "model", "domain", "x_tilde", "contraction", "output_dir", "params"},
                       "config");
    ExperimentConfig c;
    c.raw = doc;
    if (doc.contains("command")) {
        if (!doc.at("command").is_string()) throw ConfigError("command must be a string");
        c.command = parse_command(doc.at("command").get<std::string>());
        if (expected && *expected != c.command)
            throw ConfigError(std::string("config is for '") + to_string(c.command) + "' but the subcommand is '" +
                              to_string(*expected) + "'");
    } else if (expected) {
        c.command = *expected;
    } else {
        throw ConfigError("config: missing 'command'");
    }
    c.raw["command"] = to_string(c.command);
    if (seed_override) {
        c.seed = *seed_override;
    } else {
        if (!doc.contains("seed")) throw ConfigError("a seed is mandatory (config key 'seed' or --seed)");
        c.seed = parse_seed(doc.at("seed"));
    }
    c.raw["seed"] = c.seed;
    c.model = resolve_model(doc);
    c.output_dir = doc.value("output_dir", std::string("out"));
    c.params = doc.value("params", nlohmann::json::object());
    if (!c.params.is_object()) throw ConfigError("params must be an object");
    return c;
}

inline ExperimentConfig load_config(const std::string& path, std::optional<Command> expected = std::nullopt,
                                    std::optional<std::uint64_t> seed_override = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(doc, expected, seed_override);
}

} // namespace rmv

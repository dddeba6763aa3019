#include "riskpref/config.hpp"

#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string_view>

#include <toml.hpp>

#ifndef RISKPREF_DATA_DIR
#define RISKPREF_DATA_DIR "data"
#endif

namespace riskpref {

namespace {

void check_keys(const toml::table& t, std::string_view where, std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, node] : t) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key.str() == a;
        if (!ok) throw std::invalid_argument("unknown config key: " + std::string(where) + std::string(key.str()));
    }
}

template <typename T>
void read(const toml::table& t, std::string_view key, T& out) {
    const auto* node = t.get(key);
    if (node == nullptr) return;
    if constexpr (std::is_same_v<T, std::string>) {
        auto v = node->value<std::string>();
        if (!v) throw std::invalid_argument("config key " + std::string(key) + " must be a string");
        out = *v;
    } else if constexpr (std::is_same_v<T, bool>) {
        auto v = node->value<bool>();
        if (!v) throw std::invalid_argument("config key " + std::string(key) + " must be a boolean");
        out = *v;
    } else if constexpr (std::is_floating_point_v<T>) {
        auto v = node->value<double>();
        if (!v) throw std::invalid_argument("config key " + std::string(key) + " must be a number");
        out = *v;
    } else {
        auto v = node->value<std::int64_t>();
        if (!v) throw std::invalid_argument("config key " + std::string(key) + " must be an integer");
        out = static_cast<T>(*v);
    }
}

const toml::table* sub(const toml::table& t, std::string_view key) {
    const auto* node = t.get(key);
    if (node == nullptr) return nullptr;
    const auto* tbl = node->as_table();
    if (tbl == nullptr) throw std::invalid_argument("config key " + std::string(key) + " must be a table");
    return tbl;
}

}  // namespace

std::vector<std::string> RunConfig::violations() const {
    std::vector<std::string> v;
    for (auto& s : generator.violations()) v.push_back("generator: " + s);
    for (auto& s : sampler.violations()) v.push_back("sampler: " + s);
    for (auto& s : agent.violations()) v.push_back("agent: " + s);
    for (auto& s : prompt.violations()) v.push_back("prompt: " + s);
    return v;
}

double parse_beta(const std::string& text) {
    if (text == "inf" || text == "argmax" || text == "infinity") return kArgmaxBeta;
    std::size_t pos = 0;
    double b = 0.0;
    try {
        b = std::stod(text, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != text.size() || !(b >= 0.0)) throw std::invalid_argument("invalid beta: " + text);
    return b;
}

ChoiceModelSpec synthetic_spec(const std::string& family, const std::map<std::string, double>& params, double beta,
                               const WeightingScheme& weighting) {
    ChoiceModelSpec spec;
    spec.utility = UtilityModel::make(parse_family(family), params);
    spec.weighting = weighting;
    spec.beta_sensitivity = beta;
    if (auto v = spec.violations(); !v.empty()) throw std::invalid_argument("invalid agent model: " + v.front());
    return spec;
}

std::string default_data_dir() {
    if (const char* env = std::getenv("RISKPREF_DATA_DIR"); env != nullptr && *env != '\0') return env;
    return RISKPREF_DATA_DIR;
}

RunConfig parse_run_config(const std::string& toml_text) {
    toml::table root;
    try {
        root = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "config parse error: " << e.description() << " at line " << e.source().begin.line;
        throw std::invalid_argument(msg.str());
    }
    check_keys(root, "",
               {"seed", "out_dir", "paths", "generator", "target", "sampler", "priors", "agent", "prompt"});
    RunConfig c;
    if (root.contains("seed")) {
        std::int64_t s = 0;
        read(root, "seed", s);
        if (s < 0) throw std::invalid_argument("seed must be non-negative");
        c.seed = static_cast<std::uint64_t>(s);
    }
    read(root, "out_dir", c.out_dir);

    if (const auto* t = sub(root, "paths")) {
        check_keys(*t, "paths.",
                   {"questions", "records", "test_questions", "test_records", "gl_items", "dospert_items", "log"});
        read(*t, "questions", c.paths.questions);
        read(*t, "records", c.paths.records);
        read(*t, "test_questions", c.paths.test_questions);
        read(*t, "test_records", c.paths.test_records);
        read(*t, "gl_items", c.paths.gl_items);
        read(*t, "dospert_items", c.paths.dospert_items);
        read(*t, "log", c.paths.log);
    }
    if (const auto* t = sub(root, "generator")) {
        check_keys(*t, "generator.",
                   {"ev_lo", "ev_hi", "p_lo", "p_hi", "low_fraction", "ev_diff_min", "var_diff_min"});
        auto& g = c.generator;
        read(*t, "ev_lo", g.ev_lo);
        read(*t, "ev_hi", g.ev_hi);
        read(*t, "p_lo", g.p_lo);
        read(*t, "p_hi", g.p_hi);
        read(*t, "low_fraction", g.low_fraction);
        read(*t, "ev_diff_min", g.ev_diff_min);
        read(*t, "var_diff_min", g.var_diff_min);
    }
    if (const auto* t = sub(root, "target")) {
        check_keys(*t, "target.", {"name", "label_mode"});
        read(*t, "name", c.target);
        std::string mode = std::string(label_mode_name(c.label_mode));
        read(*t, "label_mode", mode);
        c.label_mode = parse_label_mode(mode);
        find_target(c.target);
    }
    if (const auto* t = sub(root, "sampler")) {
        check_keys(*t, "sampler.",
                   {"draws", "tune", "chains", "target_accept", "max_tree_depth", "rhat_fail_threshold", "metric"});
        auto& s = c.sampler;
        read(*t, "draws", s.draws);
        read(*t, "tune", s.tune);
        read(*t, "chains", s.chains);
        read(*t, "target_accept", s.target_accept);
        read(*t, "max_tree_depth", s.max_tree_depth);
        read(*t, "rhat_fail_threshold", s.rhat_fail_threshold);
        std::string metric = s.metric == MetricKind::Dense ? "dense" : "diagonal";
        read(*t, "metric", metric);
        if (metric != "dense" && metric != "diagonal") throw std::invalid_argument("sampler.metric: dense|diagonal");
        s.metric = metric == "dense" ? MetricKind::Dense : MetricKind::Diagonal;
    }
    if (const auto* t = sub(root, "priors")) {
        check_keys(*t, "priors.", {"wide_crra_prior", "cara_scale", "prospect_r0"});
        read(*t, "wide_crra_prior", c.priors.wide_crra_prior);
        read(*t, "cara_scale", c.priors.cara_scale);
        read(*t, "prospect_r0", c.priors.prospect_r0);
    }
    if (const auto* t = sub(root, "agent")) {
        check_keys(*t, "agent.",
                   {"kind", "family", "params", "beta", "weighting", "weighting_gamma", "weighting_delta", "wealth",
                    "max_retries", "dospert_max_retries", "temperature", "top_p", "max_new_tokens", "endpoint"});
        auto& a = c.agent;
        std::string kind = "synthetic";
        read(*t, "kind", kind);
        if (kind != "synthetic" && kind != "external") throw std::invalid_argument("agent.kind: synthetic|external");
        a.kind = kind == "synthetic" ? AgentKind::Synthetic : AgentKind::External;

        std::string family = "linear";
        read(*t, "family", family);
        std::map<std::string, double> params;
        if (const auto* p = sub(*t, "params")) {
            for (const auto& [key, node] : *p) {
                auto v = node.value<double>();
                if (!v) throw std::invalid_argument("agent.params values must be numbers");
                params[std::string(key.str())] = *v;
            }
        }
        double beta = kArgmaxBeta;
        if (const auto* node = t->get("beta")) {
            if (auto s = node->value<std::string>()) {
                beta = parse_beta(*s);
            } else if (auto d = node->value<double>()) {
                beta = *d;
            } else {
                throw std::invalid_argument("agent.beta must be a number or \"inf\"");
            }
        }
        std::string weighting = "none";
        read(*t, "weighting", weighting);
        WeightingScheme w;
        w.kind = parse_weighting(weighting);
        read(*t, "weighting_gamma", w.gamma);
        read(*t, "weighting_delta", w.delta);
        a.synthetic = synthetic_spec(family, params, beta, w);
        read(*t, "wealth", a.questionnaire_wealth);
        read(*t, "max_retries", a.max_retries);
        read(*t, "dospert_max_retries", a.dospert_max_retries);
        read(*t, "temperature", a.generation.temperature);
        read(*t, "top_p", a.generation.top_p);
        read(*t, "max_new_tokens", a.generation.max_new_tokens);
        if (const auto* e = sub(*t, "endpoint")) {
            check_keys(*e, "agent.endpoint.",
                       {"base_url", "path", "model", "token_env", "timeout_seconds", "max_concurrency",
                        "backoff_seconds"});
            read(*e, "base_url", a.endpoint.base_url);
            read(*e, "path", a.endpoint.path);
            read(*e, "model", a.endpoint.model);
            read(*e, "token_env", a.endpoint.token_env);
            read(*e, "timeout_seconds", a.endpoint.timeout_seconds);
            read(*e, "max_concurrency", a.endpoint.max_concurrency);
            read(*e, "backoff_seconds", a.endpoint.backoff_seconds);
        }
    }
    if (const auto* t = sub(root, "prompt")) {
        check_keys(*t, "prompt.", {"tone", "variant", "icl_examples", "chat_style"});
        std::string tone;
        read(*t, "tone", tone);
        if (!tone.empty() && tone != "none") c.prompt.tone = parse_tone(tone);
        read(*t, "variant", c.prompt.variant);
        read(*t, "icl_examples", c.prompt.icl_examples);
        read(*t, "chat_style", c.prompt.chat_style);
    }
    if (auto v = c.violations(); !v.empty()) throw std::invalid_argument("invalid config: " + v.front());
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot read config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

}  // namespace riskpref

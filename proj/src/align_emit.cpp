#include "riskpref/align_emit.hpp"

#include <fstream>
#include <stdexcept>

namespace riskpref {

namespace {

// Inverse temperatures from `riskpref --seed 2024 calibrate-beta [--four]`
// on 5,000 diff-ev (or four-option) questions.
constexpr NamedTarget kTargets[] = {
    {"crra-1", Family::CRRA, 1.0, 94.31, 86.24, 9.653763336, 9.98164352},
    {"crra-0.71", Family::CRRA, 0.71, 96.83, 92.32, 3.429566756, 2.951732983},
    {"crra-neg5", Family::CRRA, -5.0, 99.87, 99.61, 2.74514e-13, 1.261565297e-15},
    {"cara-0.1", Family::CARA, 0.1, 98.68, 96.00, 30.56898689, 23.01745809},
    {"cara-2", Family::CARA, 2.0, 98.55, 96.14, 636.5340171, 774.2173658},
    {"prospect", Family::Prospect, 0.0, 94.69, 83.94, 0.04057409501, 0.02640138544},
};

void require_two_option(const ChoiceQuestion& q) {
    if (q.option_count() != 2) throw std::invalid_argument(q.id + ": alignment records need two-option questions");
}

void validate(const TargetSpec& target) {
    if (auto v = target.violations(); !v.empty()) throw std::invalid_argument("invalid target: " + v.front());
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

bool is_letter(const nlohmann::json& v) {
    return v.is_string() && v.get<std::string>().size() == 1 && v.get<std::string>()[0] >= 'A' &&
           v.get<std::string>()[0] <= 'Z';
}

}  // namespace

std::string_view label_mode_name(LabelMode mode) { return mode == LabelMode::Sampled ? "sampled" : "argmax"; }

LabelMode parse_label_mode(std::string_view name) {
    if (name == "sampled") return LabelMode::Sampled;
    if (name == "argmax") return LabelMode::Argmax;
    throw std::invalid_argument("unknown label mode: " + std::string(name));
}

std::vector<std::string> TargetSpec::violations() const { return model.violations(); }

UtilityModel NamedTarget::utility() const {
    switch (family) {
        case Family::CRRA: return UtilityModel::make(family, {{"gamma", param}});
        case Family::CARA: return UtilityModel::make(family, {{"alpha", param}});
        default:
            return UtilityModel::make(Family::Prospect,
                                      {{"alpha", 0.88}, {"beta", 0.88}, {"lambda", 2.25}, {"r0", 500.0}});
    }
}

std::span<const NamedTarget> named_targets() { return kTargets; }

const NamedTarget& find_target(std::string_view name) {
    for (const auto& t : kTargets) {
        if (t.name == name) return t;
    }
    throw std::invalid_argument("unknown target: " + std::string(name));
}

TargetSpec make_target(std::string_view name, bool four_option, LabelMode mode) {
    const auto& t = find_target(name);
    TargetSpec spec;
    spec.name = std::string(t.name);
    spec.model.utility = t.utility();
    spec.model.beta_sensitivity = four_option ? t.beta_four : t.beta_two;
    spec.label_mode = mode;
    return spec;
}

std::string alignment_prompt(const ChoiceQuestion& question) {
    std::string options;
    for (std::size_t idx : question.presentation_order()) {
        options += options.empty() ? "" : "\n";
        options += std::string(1, question.labels[idx]) + ": " + render_lottery(question.options[idx]);
    }
    return std::string(kSftInstruction) + "\nQuestion: " + options + "\nAnswer:";
}

std::vector<SftRecord> emit_sft(std::span<const ChoiceQuestion> questions, const TargetSpec& target,
                                std::uint64_t seed) {
    validate(target);
    ChoiceModelSpec argmax = target.model;
    argmax.beta_sensitivity = kArgmaxBeta;
    const RandomStream root(seed, 0x5F7);
    std::vector<SftRecord> out;
    out.reserve(questions.size());
    for (std::size_t i = 0; i < questions.size(); ++i) {
        const auto& q = questions[i];
        require_two_option(q);
        std::size_t idx = 0;
        if (target.label_mode == LabelMode::Argmax || target.model.is_argmax()) {
            idx = predict(argmax, q);
        } else {
            RandomStream rng = root.split(i);
            idx = sample_label(choice_probability(target.model, q), rng) == 1 ? 0 : 1;
        }
        out.push_back({alignment_prompt(q), std::string(1, q.labels[idx])});
    }
    return out;
}

DpoEmission emit_dpo(std::span<const ChoiceQuestion> questions, const TargetSpec& target) {
    validate(target);
    DpoEmission e;
    for (const auto& q : questions) {
        require_two_option(q);
        const auto u = option_utilities(target.model, q);
        if (u[0] == u[1]) {
            ++e.dropped_ties;
            continue;
        }
        const std::size_t hi = u[0] > u[1] ? 0 : 1;
        e.records.push_back(
            {alignment_prompt(q), std::string(1, q.labels[hi]), std::string(1, q.labels[1 - hi])});
    }
    return e;
}

nlohmann::json sft_to_json(const SftRecord& r) { return {{"prompt", r.prompt}, {"completion", r.completion}}; }

nlohmann::json dpo_to_json(const DpoRecord& r) {
    return {{"prompt", r.prompt}, {"chosen", r.chosen}, {"rejected", r.rejected}};
}

bool is_valid_sft_json(const nlohmann::json& j) {
    return j.is_object() && j.size() == 2 && j.contains("prompt") && j["prompt"].is_string() &&
           j.contains("completion") && is_letter(j["completion"]);
}

bool is_valid_dpo_json(const nlohmann::json& j) {
    return j.is_object() && j.size() == 3 && j.contains("prompt") && j["prompt"].is_string() &&
           j.contains("chosen") && is_letter(j["chosen"]) && j.contains("rejected") && is_letter(j["rejected"]) &&
           j["chosen"] != j["rejected"];
}

void write_sft_jsonl(const std::string& path, std::span<const SftRecord> records) {
    auto out = open_out(path);
    for (const auto& r : records) out << sft_to_json(r).dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_dpo_jsonl(const std::string& path, std::span<const DpoRecord> records) {
    auto out = open_out(path);
    for (const auto& r : records) out << dpo_to_json(r).dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace riskpref

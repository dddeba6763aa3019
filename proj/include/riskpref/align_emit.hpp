#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskpref/choice_model.hpp"

namespace riskpref {

enum class LabelMode { Sampled, Argmax };

std::string_view label_mode_name(LabelMode mode);
LabelMode parse_label_mode(std::string_view name);

struct TargetSpec {
    std::string name = "custom";
    ChoiceModelSpec model;
    LabelMode label_mode = LabelMode::Sampled;

    [[nodiscard]] std::vector<std::string> violations() const;
};

/// One of the six shipped alignment targets with its reference oracle
/// accuracies (percent) and the inverse temperatures calibrated to them.
struct NamedTarget {
    std::string_view name;
    Family family;
    double param = 0.0;  // gamma (CRRA) or alpha (CARA); unused for Prospect
    double oracle_two = 0.0;
    double oracle_four = 0.0;
    double beta_two = 0.0;
    double beta_four = 0.0;

    [[nodiscard]] UtilityModel utility() const;
};

std::span<const NamedTarget> named_targets();
const NamedTarget& find_target(std::string_view name);

/// Resolves a shipped target; the inverse temperature is the one calibrated
/// for two- or four-option questions.
TargetSpec make_target(std::string_view name, bool four_option = false, LabelMode mode = LabelMode::Sampled);

struct SftRecord {
    std::string prompt;
    std::string completion;
};

struct DpoRecord {
    std::string prompt;
    std::string chosen;
    std::string rejected;
};

struct DpoEmission {
    std::vector<DpoRecord> records;
    int dropped_ties = 0;
};

inline constexpr std::string_view kSftInstruction =
    "You are an economic decision-making agent. Analyze the options and reply with your choice as a single letter: "
    "A or B.";

std::string alignment_prompt(const ChoiceQuestion& question);

/// One record per question in input order. Sampled labels use stream i of
/// `seed` for question i.
std::vector<SftRecord> emit_sft(std::span<const ChoiceQuestion> questions, const TargetSpec& target,
                                std::uint64_t seed);

/// Chosen is the option with strictly higher expected utility; ties are
/// dropped and counted.
DpoEmission emit_dpo(std::span<const ChoiceQuestion> questions, const TargetSpec& target);

nlohmann::json sft_to_json(const SftRecord& r);
nlohmann::json dpo_to_json(const DpoRecord& r);
/// Schema checks: exact key set, string values, single-letter answers.
bool is_valid_sft_json(const nlohmann::json& j);
bool is_valid_dpo_json(const nlohmann::json& j);

void write_sft_jsonl(const std::string& path, std::span<const SftRecord> records);
void write_dpo_jsonl(const std::string& path, std::span<const DpoRecord> records);

}  // namespace riskpref

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "riskpref/agents.hpp"
#include "riskpref/align_emit.hpp"
#include "riskpref/inference.hpp"
#include "riskpref/lottery_gen.hpp"

namespace riskpref {

struct PathConfig {
    std::string questions;
    std::string records;
    std::string test_questions;
    std::string test_records;
    std::string gl_items;
    std::string dospert_items;
    std::string log;
};

/// Everything a subcommand may need. Loaded from TOML; command-line flags
/// override individual fields afterwards.
struct RunConfig {
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    PathConfig paths;
    GeneratorConfig generator;
    std::string target = "crra-0.71";
    LabelMode label_mode = LabelMode::Sampled;
    SamplerConfig sampler;
    PriorOptions priors;
    AgentConfig agent;
    PromptSpec prompt;

    [[nodiscard]] std::vector<std::string> violations() const;
};

/// Parses a TOML document. Unknown keys are rejected so typos surface.
RunConfig parse_run_config(const std::string& toml_text);
RunConfig load_run_config(const std::string& path);

/// "inf" or "argmax" map to the deterministic agent.
double parse_beta(const std::string& text);

/// Builds a synthetic choice model from a family name and name=value pairs.
ChoiceModelSpec synthetic_spec(const std::string& family, const std::map<std::string, double>& params,
                               double beta, const WeightingScheme& weighting = {});

/// Directory holding the shipped item files.
std::string default_data_dir();

}  // namespace riskpref

#include "riskpref/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "riskpref/agents.hpp"
#include "riskpref/align_emit.hpp"
#include "riskpref/choice_model.hpp"
#include "riskpref/config.hpp"
#include "riskpref/inference.hpp"
#include "riskpref/lottery_gen.hpp"
#include "riskpref/questionnaire.hpp"

namespace fs = std::filesystem;

namespace riskpref {

namespace {

struct AgentFlags {
    std::string target;
    std::string family;
    std::vector<std::string> params;
    std::string beta;
    std::string weighting;
    double weighting_gamma = 1.0;
    double weighting_delta = 1.0;
    std::optional<double> wealth;
    std::string endpoint;
    std::string model;
};

struct PromptFlags {
    std::string tone;
    int variant = 0;
    int icl = -1;
    bool plain = false;
};

struct Globals {
    std::string config_path;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    std::string out_dir;
};

struct Context {
    RunConfig cfg;
    fs::path out_dir;

    [[nodiscard]] std::uint64_t seed(std::string_view command) const {
        if (!cfg.seed) throw std::invalid_argument(std::string(command) + " requires --seed (or seed in the config)");
        return *cfg.seed;
    }
    [[nodiscard]] fs::path output(const std::string& flag, const std::string& default_name) const {
        fs::path p = flag.empty() ? out_dir / default_name : fs::path(flag);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        return p;
    }
};

// Writes through a temporary sibling so a failed command never leaves a
// truncated artifact under the final name.
void write_atomic(const fs::path& path, const std::function<void(const std::string&)>& writer) {
    const fs::path tmp = path.string() + ".partial";
    try {
        writer(tmp.string());
        fs::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    write_atomic(path, [&](const std::string& p) {
        std::ofstream out(p, std::ios::binary);
        out << j.dump(2) << '\n';
        if (!out) throw std::runtime_error("write failed: " + p);
    });
}

std::string require_path(const std::string& flag, const std::string& from_config, std::string_view what) {
    const std::string p = flag.empty() ? from_config : flag;
    if (p.empty()) throw std::invalid_argument(std::string(what) + " path required");
    if (!fs::exists(p)) throw std::invalid_argument(std::string(what) + " not found: " + p);
    return p;
}

std::map<std::string, double> parse_params(const std::vector<std::string>& items) {
    std::map<std::string, double> out;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--param expects name=value: " + item);
        std::size_t pos = 0;
        const std::string value = item.substr(eq + 1);
        double v = 0.0;
        try {
            v = std::stod(value, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != value.size()) throw std::invalid_argument("--param value is not a number: " + item);
        out[item.substr(0, eq)] = v;
    }
    return out;
}

void add_agent_flags(CLI::App* cmd, AgentFlags& f) {
    cmd->add_option("--target", f.target, "Synthetic agent from a shipped target (crra-1, prospect, ...)");
    cmd->add_option("--family", f.family, "Synthetic agent utility family");
    cmd->add_option("--param", f.params, "Utility parameter name=value (repeatable)");
    cmd->add_option("--beta", f.beta, "Inverse temperature, or inf for the argmax agent");
    cmd->add_option("--weighting", f.weighting, "Probability weighting: none|prelec|gonzalez_wu");
    cmd->add_option("--weighting-gamma", f.weighting_gamma);
    cmd->add_option("--weighting-delta", f.weighting_delta);
    cmd->add_option("--wealth", f.wealth, "Added to questionnaire rewards for synthetic agents");
    cmd->add_option("--endpoint", f.endpoint, "Chat-completions base URL; selects the external agent");
    cmd->add_option("--model", f.model, "Model name sent to the endpoint");
}

void add_prompt_flags(CLI::App* cmd, PromptFlags& f) {
    cmd->add_option("--tone", f.tone, "direct|cautious|aggressive|none");
    cmd->add_option("--variant", f.variant, "Tone phrasing 1-5");
    cmd->add_option("--icl", f.icl, "In-context examples per prompt");
    cmd->add_flag("--plain", f.plain, "Plain few-shot completion format instead of chat");
}

AgentConfig resolve_agent(const RunConfig& cfg, const AgentFlags& f, bool four_option) {
    AgentConfig a = cfg.agent;
    if (cfg.seed) a.seed = *cfg.seed;
    if (!f.target.empty() && !f.family.empty()) throw std::invalid_argument("use either --target or --family");
    if (!f.target.empty()) {
        a.kind = AgentKind::Synthetic;
        a.synthetic = make_target(f.target, four_option).model;
    } else if (!f.family.empty()) {
        WeightingScheme w{parse_weighting(f.weighting), f.weighting_gamma, f.weighting_delta};
        a.kind = AgentKind::Synthetic;
        a.synthetic = synthetic_spec(f.family, parse_params(f.params), kArgmaxBeta, w);
    }
    if (!f.beta.empty()) a.synthetic.beta_sensitivity = parse_beta(f.beta);
    if (f.wealth) a.questionnaire_wealth = *f.wealth;
    if (!f.endpoint.empty()) {
        a.kind = AgentKind::External;
        a.endpoint.base_url = f.endpoint;
    }
    if (!f.model.empty()) a.endpoint.model = f.model;
    if (auto v = a.violations(); !v.empty()) throw std::invalid_argument("invalid agent: " + v.front());
    return a;
}

PromptSpec resolve_prompt(const RunConfig& cfg, const PromptFlags& f) {
    PromptSpec p = cfg.prompt;
    if (!f.tone.empty()) {
        p.tone.reset();
        if (f.tone != "none") p.tone = parse_tone(f.tone);
    }
    if (f.variant != 0) p.variant = f.variant;
    if (f.icl >= 0) p.icl_examples = f.icl;
    if (f.plain) p.chat_style = false;
    if (auto v = p.violations(); !v.empty()) throw std::invalid_argument("invalid prompt: " + v.front());
    return p;
}

ChoiceModelSpec resolve_model(const RunConfig& cfg, const AgentFlags& f, bool four_option) {
    if (!f.endpoint.empty()) throw std::invalid_argument("this command needs a synthetic model, not an endpoint");
    return resolve_agent(cfg, f, four_option).synthetic;
}

FitData load_fit_data(const std::string& questions_path, const std::string& records_path) {
    const auto questions = read_questions_jsonl(questions_path);
    const auto records = read_records_jsonl(records_path);
    std::map<std::string, const ChoiceQuestion*> by_id;
    for (const auto& q : questions) by_id[q.id] = &q;
    FitData d;
    for (const auto& r : records) {
        auto it = by_id.find(r.question_id);
        if (it == by_id.end()) throw std::invalid_argument("record for unknown question " + r.question_id);
        if (r.chosen_index >= it->second->option_count()) {
            throw std::invalid_argument("record " + r.question_id + " chooses a missing option");
        }
        d.questions.push_back(*it->second);
        d.chosen.push_back(r.chosen_index);
    }
    if (d.size() == 0) throw std::invalid_argument("no choice records in " + records_path);
    return d;
}

std::vector<FamilyRequest> parse_families(const std::vector<std::string>& specs) {
    std::vector<FamilyRequest> out;
    if (specs.empty()) {
        for (Family f : kAllFamilies) out.push_back({f, WeightingKind::None});
        return out;
    }
    for (const auto& s : specs) {
        const auto sep = s.find(':');
        FamilyRequest r;
        r.family = parse_family(s.substr(0, sep));
        if (sep != std::string::npos) r.weighting = parse_weighting(s.substr(sep + 1));
        out.push_back(r);
    }
    return out;
}

std::string percent(double fraction) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * fraction;
    return s.str();
}

// ---- subcommands ----------------------------------------------------------------

struct GenFlags {
    std::string mode;
    std::size_t n = 0;
    std::size_t first_index = 0;
    std::string out;
    std::string csv;
};

int cmd_gen(const Context& ctx, const GenFlags& f) {
    GeneratorConfig g = ctx.cfg.generator;
    g.seed = ctx.seed("gen");
    const auto questions = generate_dataset(g, parse_mode(f.mode), f.n, f.first_index);
    const auto out = ctx.output(f.out, "questions.jsonl");
    write_atomic(out, [&](const std::string& p) { write_questions_jsonl(p, questions); });
    if (!f.csv.empty()) {
        const auto csv = ctx.output(f.csv, "questions.csv");
        write_atomic(csv, [&](const std::string& p) { write_questions_csv(p, questions); });
    }
    std::cout << "wrote " << questions.size() << " " << mode_name(parse_mode(f.mode)) << " questions to "
              << out.string() << '\n';
    return 0;
}

struct SimulateFlags {
    std::string questions;
    std::string out;
    std::string icl_questions;
    std::string icl_records;
    AgentFlags agent;
    PromptFlags prompt;
};

int cmd_simulate(const Context& ctx, const SimulateFlags& f) {
    const auto questions = read_questions_jsonl(require_path(f.questions, ctx.cfg.paths.questions, "questions"));
    if (questions.empty()) throw std::invalid_argument("no questions to answer");
    const bool four = questions.front().option_count() > 2;
    const auto agent = make_agent(resolve_agent(ctx.cfg, f.agent, four));
    const auto prompt = resolve_prompt(ctx.cfg, f.prompt);
    std::vector<IclExample> pool;
    if (!f.icl_questions.empty()) {
        const auto icl = load_fit_data(f.icl_questions, require_path(f.icl_records, "", "icl records"));
        for (std::size_t i = 0; i < icl.size(); ++i) {
            pool.push_back({icl.questions[i], icl.questions[i].labels[icl.chosen[i]]});
        }
    }
    const auto session = run_choice_session(*agent, questions, prompt, pool, ctx.seed("simulate"));
    const auto out = ctx.output(f.out, "records.jsonl");
    write_atomic(out, [&](const std::string& p) { write_records_jsonl(p, session.records); });
    std::cout << "agent " << agent->id() << ": " << session.records.size() << " valid answers, "
              << session.invalid_question_ids.size() << " invalid; wrote " << out.string() << '\n';
    for (const auto& id : session.invalid_question_ids) std::cerr << "invalid answer: " << id << '\n';
    return 0;
}

struct FitFlags {
    std::string questions;
    std::string records;
    std::string test_questions;
    std::string test_records;
    double test_fraction = 0.25;
    std::vector<std::string> families;
    bool wide_crra_prior = false;
    int draws = 0;
    int tune = 0;
    int chains = 0;
    double target_accept = 0.0;
    std::string report;
    std::string leaderboard;
};

int cmd_fit(const Context& ctx, const FitFlags& f) {
    FitData train = load_fit_data(require_path(f.questions, ctx.cfg.paths.questions, "questions"),
                                  require_path(f.records, ctx.cfg.paths.records, "records"));
    FitData test;
    const std::string tq = f.test_questions.empty() ? ctx.cfg.paths.test_questions : f.test_questions;
    if (!tq.empty()) {
        test = load_fit_data(require_path(tq, "", "test questions"),
                             require_path(f.test_records, ctx.cfg.paths.test_records, "test records"));
    } else {
        if (!(f.test_fraction > 0.0 && f.test_fraction < 1.0)) throw std::invalid_argument("test fraction in (0,1)");
        const auto n_test = static_cast<std::size_t>(f.test_fraction * static_cast<double>(train.size()));
        if (n_test == 0 || n_test >= train.size()) throw std::invalid_argument("too few records to split");
        const auto cut = static_cast<std::ptrdiff_t>(train.size() - n_test);
        test.questions.assign(train.questions.begin() + cut, train.questions.end());
        test.chosen.assign(train.chosen.begin() + cut, train.chosen.end());
        train.questions.resize(static_cast<std::size_t>(cut));
        train.chosen.resize(static_cast<std::size_t>(cut));
    }
    SamplerConfig s = ctx.cfg.sampler;
    s.seed = ctx.seed("fit");
    if (f.draws > 0) s.draws = f.draws;
    if (f.tune > 0) s.tune = f.tune;
    if (f.chains > 0) s.chains = f.chains;
    if (f.target_accept > 0.0) s.target_accept = f.target_accept;
    if (auto v = s.violations(); !v.empty()) throw std::invalid_argument("invalid sampler config: " + v.front());
    PriorOptions priors = ctx.cfg.priors;
    if (f.wide_crra_prior) priors.wide_crra_prior = true;

    const auto requests = parse_families(f.families);
    const auto results = fit_all_families(train, test, requests, priors, s);
    const auto report = ctx.output(f.report, "fit_report.json");
    const auto board = ctx.output(f.leaderboard, "leaderboard.csv");
    write_atomic(report, [&](const std::string& p) { write_fit_report(p, results); });
    write_atomic(board, [&](const std::string& p) { write_leaderboard_csv(p, results); });

    std::cout << std::left << std::setw(14) << "family" << std::setw(13) << "weighting" << std::setw(8) << "status"
              << std::setw(10) << "accuracy" << "max_rhat\n";
    for (const auto& r : results) {
        const bool ok = r.status == FitStatus::Ok && r.held_out_accuracy;
        std::cout << std::setw(14) << family_name(r.family) << std::setw(13) << weighting_name(r.weighting)
                  << std::setw(8) << status_name(r.status) << std::setw(10)
                  << (ok ? percent(*r.held_out_accuracy) : std::string("N/A"));
        if (!r.params.empty()) std::cout << r.diagnostics.max_rhat;
        std::cout << '\n';
        if (!r.message.empty()) std::cerr << family_name(r.family) << ": " << r.message << '\n';
    }
    std::cout << "wrote " << report.string() << " and " << board.string() << '\n';
    return 0;
}

struct EvalFlags {
    std::string questions;
    std::string records;
    std::string out;
    AgentFlags agent;
};

int cmd_eval(const Context& ctx, const EvalFlags& f) {
    const auto data = load_fit_data(require_path(f.questions, ctx.cfg.paths.questions, "questions"),
                                    require_path(f.records, ctx.cfg.paths.records, "records"));
    AgentFlags flags = f.agent;
    if (flags.target.empty() && flags.family.empty()) flags.target = ctx.cfg.target;
    ChoiceModelSpec spec = resolve_model(ctx.cfg, flags, data.questions.front().option_count() > 2);
    spec.beta_sensitivity = kArgmaxBeta;
    const double acc = prediction_accuracy(spec, data);
    nlohmann::json j = {{"n", data.size()},
                        {"accuracy", acc},
                        {"family", family_name(spec.utility.family)},
                        {"params", spec.utility.named_params()}};
    if (!flags.target.empty()) j["target"] = flags.target;
    if (!f.out.empty()) write_json(ctx.output(f.out, "eval.json"), j);
    std::cout << "accuracy " << percent(acc) << "% over " << data.size() << " records\n";
    return 0;
}

struct EmitFlags {
    std::string questions;
    std::string target;
    std::string label_mode;
    std::string beta;
    std::string out;
};

TargetSpec resolve_target(const Context& ctx, const EmitFlags& f) {
    LabelMode mode = f.label_mode.empty() ? ctx.cfg.label_mode : parse_label_mode(f.label_mode);
    TargetSpec t = make_target(f.target.empty() ? ctx.cfg.target : f.target, false, mode);
    if (!f.beta.empty()) t.model.beta_sensitivity = parse_beta(f.beta);
    return t;
}

int cmd_emit_sft(const Context& ctx, const EmitFlags& f) {
    const auto questions = read_questions_jsonl(require_path(f.questions, ctx.cfg.paths.questions, "questions"));
    const auto target = resolve_target(ctx, f);
    const std::uint64_t seed = target.label_mode == LabelMode::Sampled ? ctx.seed("emit-sft") : 0;
    const auto records = emit_sft(questions, target, seed);
    const auto out = ctx.output(f.out, "sft.jsonl");
    write_atomic(out, [&](const std::string& p) { write_sft_jsonl(p, records); });
    std::cout << "wrote " << records.size() << " SFT records (" << target.name << ", "
              << label_mode_name(target.label_mode) << ") to " << out.string() << '\n';
    return 0;
}

int cmd_emit_dpo(const Context& ctx, const EmitFlags& f) {
    const auto questions = read_questions_jsonl(require_path(f.questions, ctx.cfg.paths.questions, "questions"));
    const auto target = resolve_target(ctx, f);
    const auto emission = emit_dpo(questions, target);
    const auto out = ctx.output(f.out, "dpo.jsonl");
    write_atomic(out, [&](const std::string& p) { write_dpo_jsonl(p, emission.records); });
    std::cout << "wrote " << emission.records.size() << " DPO records (" << target.name << ") to " << out.string()
              << "; dropped " << emission.dropped_ties << " ties\n";
    return 0;
}

struct SurveyFlags {
    std::string items;
    int repeats = 10;
    std::vector<std::string> tones;
    std::string log;
    std::string summary;
    std::string radar;
    bool resume = false;
    AgentFlags agent;
    PromptFlags prompt;
};

std::vector<SurveyResponse> resume_rows(const fs::path& log, bool resume) {
    if (!resume || !fs::exists(log)) return {};
    return read_response_log_csv(log.string());
}

int cmd_survey_gl(const Context& ctx, const SurveyFlags& f) {
    const std::string items_path =
        f.items.empty() && ctx.cfg.paths.gl_items.empty() ? default_data_dir() + "/gl_items.json"
                                                           : require_path(f.items, ctx.cfg.paths.gl_items, "items");
    const auto items = load_gl_items(items_path);
    const auto agent = make_agent(resolve_agent(ctx.cfg, f.agent, false));
    PromptSpec prompt = resolve_prompt(ctx.cfg, f.prompt);

    std::vector<std::optional<PromptTone>> tones;
    for (const auto& t : f.tones) {
        if (t == "all") {
            tones.insert(tones.end(), {PromptTone::Direct, PromptTone::Cautious, PromptTone::Aggressive});
        } else if (t == "none") {
            tones.emplace_back(std::nullopt);
        } else {
            tones.emplace_back(parse_tone(t));
        }
    }
    if (tones.empty()) tones.push_back(prompt.tone);

    const auto log = ctx.output(f.log.empty() ? ctx.cfg.paths.log : f.log, "gl_responses.csv");
    const auto previous = resume_rows(log, f.resume);
    const std::uint64_t seed = ctx.seed("survey-gl");
    std::vector<SurveyResponse> rows;
    for (const auto& tone : tones) {
        prompt.tone = tone;
        auto part = run_gl_session(*agent, items, prompt, f.repeats, seed, previous);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    write_atomic(log, [&](const std::string& p) { write_response_log_csv(p, rows); });

    nlohmann::json summary = nlohmann::json::array();
    for (const auto& s : aggregate_gl_runs(items, rows)) {
        summary.push_back({{"tone", s.tone ? std::string(tone_name(*s.tone)) : "none"},
                           {"totals", s.totals},
                           {"dropped_runs", s.dropped_runs},
                           {"mean", s.mean},
                           {"sd", s.sd},
                           {"category", category_name(s.category)}});
        std::cout << (s.tone ? tone_name(*s.tone) : "none") << ": mean " << std::fixed << std::setprecision(2)
                  << s.mean << " sd " << s.sd << " (" << category_name(s.category) << "), " << s.totals.size()
                  << " complete runs, " << s.dropped_runs << " dropped\n";
    }
    write_json(ctx.output(f.summary, "gl_summary.json"), summary);
    std::cout << "wrote " << log.string() << '\n';
    return 0;
}

int cmd_survey_dospert(const Context& ctx, const SurveyFlags& f) {
    const std::string items_path = f.items.empty() && ctx.cfg.paths.dospert_items.empty()
                                       ? default_data_dir() + "/dospert_items.json"
                                       : require_path(f.items, ctx.cfg.paths.dospert_items, "items");
    const auto items = load_dospert_items(items_path);
    const auto agent = make_agent(resolve_agent(ctx.cfg, f.agent, false));
    const PromptSpec prompt = resolve_prompt(ctx.cfg, f.prompt);
    const auto log = ctx.output(f.log.empty() ? ctx.cfg.paths.log : f.log, "dospert_responses.csv");
    const auto rows = run_dospert_session(*agent, items, prompt, f.repeats, ctx.seed("survey-dospert"),
                                          resume_rows(log, f.resume));
    write_atomic(log, [&](const std::string& p) { write_response_log_csv(p, rows); });
    const auto scores = score_dospert(items, rows);
    const auto radar = ctx.output(f.radar, "dospert_radar.csv");
    write_atomic(radar, [&](const std::string& p) { write_radar_csv(p, scores); });
    for (const auto& [key, mean] : scores.domains) {
        std::cout << domain_name(key.first) << ' ' << dimension_name(key.second) << ": " << std::fixed
                  << std::setprecision(2) << mean << '\n';
    }
    std::cout << "wrote " << log.string() << " and " << radar.string() << '\n';
    return 0;
}

struct CalibrateFlags {
    std::vector<std::string> targets;
    std::size_t n = 5000;
    bool four = false;
    std::string mode;
    std::string out;
};

int cmd_calibrate(const Context& ctx, const CalibrateFlags& f) {
    GeneratorConfig g = ctx.cfg.generator;
    g.seed = ctx.seed("calibrate-beta");
    const QuestionMode mode = f.four ? QuestionMode::FourOption : parse_mode(f.mode.empty() ? "diff-ev" : f.mode);
    if (f.four != (mode == QuestionMode::FourOption)) throw std::invalid_argument("--four conflicts with --mode");
    const auto questions = generate_dataset(g, mode, f.n);
    std::vector<std::string> names = f.targets;
    if (names.empty() || (names.size() == 1 && names[0] == "all")) {
        names.clear();
        for (const auto& t : named_targets()) names.emplace_back(t.name);
    }
    std::ostringstream csv;
    csv << "target,options,reference_accuracy,beta,achieved_accuracy\n";
    for (const auto& name : names) {
        const auto& t = find_target(name);
        const double ref = (f.four ? t.oracle_four : t.oracle_two) / 100.0;
        const auto r = calibrate_beta(t.utility(), {}, questions, ref, g.seed);
        csv << name << ',' << (f.four ? 4 : 2) << ',' << ref << ',' << std::setprecision(10) << r.beta << ','
            << r.achieved_accuracy << '\n';
        std::cout << std::left << std::setw(11) << name << " beta " << std::setprecision(6) << r.beta
                  << "  simulated " << percent(r.achieved_accuracy) << "% (reference " << percent(ref) << "%)\n";
    }
    const auto out = ctx.output(f.out, f.four ? "calibration_four.csv" : "calibration.csv");
    write_atomic(out, [&](const std::string& p) {
        std::ofstream o(p, std::ios::binary);
        o << csv.str();
        if (!o) throw std::runtime_error("write failed: " + p);
    });
    return 0;
}

struct CurveFlags {
    std::vector<std::string> targets;
    AgentFlags agent;
    double x_min = 1.0;
    double x_max = 1000.0;
    int points = 200;
    std::string out;
};

int cmd_export_curves(const Context& ctx, const CurveFlags& f) {
    if (!(f.x_max > f.x_min) || f.points < 2) throw std::invalid_argument("need x-max > x-min and points >= 2");
    std::vector<std::pair<std::string, UtilityModel>> models;
    for (const auto& name : f.targets) models.emplace_back(name, find_target(name).utility());
    if (!f.agent.family.empty()) {
        models.emplace_back(f.agent.family, resolve_model(ctx.cfg, f.agent, false).utility);
    }
    if (models.empty()) throw std::invalid_argument("export-curves needs --target or --family");
    std::ostringstream csv;
    csv << std::setprecision(12) << "model,x,u\n";
    for (const auto& [name, model] : models) {
        for (int i = 0; i < f.points; ++i) {
            const double x = f.x_min + (f.x_max - f.x_min) * i / (f.points - 1);
            csv << name << ',' << x << ',' << eval_utility(model, x) << '\n';
        }
    }
    const auto out = ctx.output(f.out, "curves.csv");
    write_atomic(out, [&](const std::string& p) {
        std::ofstream o(p, std::ios::binary);
        o << csv.str();
        if (!o) throw std::runtime_error("write failed: " + p);
    });
    std::cout << "wrote " << models.size() << " curves to " << out.string() << '\n';
    return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
    CLI::App app{"Risk-preference profiling, fitting and alignment-data toolkit", "riskpref"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_path, "TOML run configuration");
    g.seed_opt = app.add_option("--seed", g.seed, "Seed for every generating command");
    app.add_option("--out-dir", g.out_dir, "Directory for default output paths");

    std::function<int(const Context&)> run;

    GenFlags gen;
    auto* c_gen = app.add_subcommand("gen", "Generate a lottery-choice dataset");
    c_gen->add_option("--mode", gen.mode, "same-ev|diff-ev|four")->required();
    c_gen->add_option("--n", gen.n, "Number of questions")->required();
    c_gen->add_option("--first-index", gen.first_index, "Index of the first question (sharding)");
    c_gen->add_option("--out", gen.out, "Output JSONL");
    c_gen->add_option("--csv", gen.csv, "Also write a flattened CSV");
    c_gen->callback([&] { run = [&](const Context& c) { return cmd_gen(c, gen); }; });

    SimulateFlags sim;
    auto* c_sim = app.add_subcommand("simulate", "Have an agent answer a dataset");
    c_sim->add_option("--questions", sim.questions);
    c_sim->add_option("--out", sim.out, "Output records JSONL");
    c_sim->add_option("--icl-questions", sim.icl_questions, "Question file for in-context examples");
    c_sim->add_option("--icl-records", sim.icl_records, "Records giving the in-context example answers");
    add_agent_flags(c_sim, sim.agent);
    add_prompt_flags(c_sim, sim.prompt);
    c_sim->callback([&] { run = [&](const Context& c) { return cmd_simulate(c, sim); }; });

    FitFlags fit;
    auto* c_fit = app.add_subcommand("fit", "Fit utility families by MCMC and rank them");
    c_fit->add_option("--questions", fit.questions);
    c_fit->add_option("--records", fit.records);
    c_fit->add_option("--test-questions", fit.test_questions);
    c_fit->add_option("--test-records", fit.test_records);
    c_fit->add_option("--test-fraction", fit.test_fraction, "Held-out tail fraction when no test set is given");
    c_fit->add_option("--family", fit.families, "family[:weighting], repeatable; default all ten");
    c_fit->add_flag("--wide-crra-prior", fit.wide_crra_prior);
    c_fit->add_option("--draws", fit.draws);
    c_fit->add_option("--tune", fit.tune);
    c_fit->add_option("--chains", fit.chains);
    c_fit->add_option("--target-accept", fit.target_accept);
    c_fit->add_option("--report", fit.report);
    c_fit->add_option("--leaderboard", fit.leaderboard);
    c_fit->callback([&] { run = [&](const Context& c) { return cmd_fit(c, fit); }; });

    EvalFlags ev;
    auto* c_eval = app.add_subcommand("eval", "Accuracy of choice records against a target's argmax labels");
    c_eval->add_option("--questions", ev.questions);
    c_eval->add_option("--records", ev.records);
    c_eval->add_option("--out", ev.out, "Optional JSON result");
    add_agent_flags(c_eval, ev.agent);
    c_eval->callback([&] { run = [&](const Context& c) { return cmd_eval(c, ev); }; });

    EmitFlags sft;
    EmitFlags dpo;
    for (auto [name, flags, desc] : {std::tuple{"emit-sft", &sft, "Emit SFT prompt/completion records"},
                                     std::tuple{"emit-dpo", &dpo, "Emit DPO prompt/chosen/rejected records"}}) {
        auto* c = app.add_subcommand(name, desc);
        c->add_option("--questions", flags->questions);
        c->add_option("--target", flags->target, "Shipped target name");
        c->add_option("--beta", flags->beta, "Override the calibrated inverse temperature");
        c->add_option("--out", flags->out);
        if (flags == &sft) c->add_option("--label-mode", flags->label_mode, "sampled|argmax");
    }
    app.get_subcommand("emit-sft")->callback([&] { run = [&](const Context& c) { return cmd_emit_sft(c, sft); }; });
    app.get_subcommand("emit-dpo")->callback([&] { run = [&](const Context& c) { return cmd_emit_dpo(c, dpo); }; });

    SurveyFlags gl;
    auto* c_gl = app.add_subcommand("survey-gl", "Run and score the Grable & Lytton questionnaire");
    c_gl->add_option("--items", gl.items);
    c_gl->add_option("--repeats", gl.repeats);
    c_gl->add_option("--tones", gl.tones, "direct|cautious|aggressive|none|all, repeatable");
    c_gl->add_option("--log", gl.log, "Response log CSV");
    c_gl->add_option("--summary", gl.summary, "Summary JSON");
    c_gl->add_flag("--resume", gl.resume, "Keep rows already present in the log");
    add_agent_flags(c_gl, gl.agent);
    add_prompt_flags(c_gl, gl.prompt);
    c_gl->callback([&] { run = [&](const Context& c) { return cmd_survey_gl(c, gl); }; });

    SurveyFlags dos;
    auto* c_dos = app.add_subcommand("survey-dospert", "Run and score the DOSPERT questionnaire");
    c_dos->add_option("--items", dos.items);
    c_dos->add_option("--repeats", dos.repeats);
    c_dos->add_option("--log", dos.log, "Response log CSV");
    c_dos->add_option("--radar", dos.radar, "Domain means CSV");
    c_dos->add_flag("--resume", dos.resume, "Keep rows already present in the log");
    add_agent_flags(c_dos, dos.agent);
    c_dos->callback([&] { run = [&](const Context& c) { return cmd_survey_dospert(c, dos); }; });

    CalibrateFlags cal;
    auto* c_cal = app.add_subcommand("calibrate-beta", "Fit each target's inverse temperature to its oracle accuracy");
    c_cal->add_option("--target", cal.targets, "Target name, repeatable; default all");
    c_cal->add_option("--n", cal.n, "Calibration questions");
    c_cal->add_flag("--four", cal.four, "Four-option questions");
    c_cal->add_option("--mode", cal.mode, "Two-option question mode (default diff-ev)");
    c_cal->add_option("--out", cal.out);
    c_cal->callback([&] { run = [&](const Context& c) { return cmd_calibrate(c, cal); }; });

    CurveFlags cur;
    auto* c_cur = app.add_subcommand("export-curves", "Sample (x, u(x)) pairs for plotting");
    c_cur->add_option("--target", cur.targets, "Shipped target, repeatable");
    c_cur->add_option("--family", cur.agent.family, "Additional custom model family");
    c_cur->add_option("--param", cur.agent.params, "Parameter name=value for --family (repeatable)");
    c_cur->add_option("--x-min", cur.x_min);
    c_cur->add_option("--x-max", cur.x_max);
    c_cur->add_option("--points", cur.points);
    c_cur->add_option("--out", cur.out);
    c_cur->callback([&] { run = [&](const Context& c) { return cmd_export_curves(c, cur); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        Context ctx;
        ctx.cfg = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
        if (g.seed_opt->count() > 0) ctx.cfg.seed = g.seed;
        if (!g.out_dir.empty()) ctx.cfg.out_dir = g.out_dir;
        ctx.out_dir = ctx.cfg.out_dir;
        if (!run) throw std::invalid_argument("no subcommand");
        return run(ctx);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace riskpref

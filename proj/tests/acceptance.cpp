// Acceptance run: one PASS/FAIL line per criterion. Tolerances are pinned
// below. Exit status is nonzero when a criterion fails for any reason other
// than a sub-check listed as known-unattainable (printed as "FAIL (known: ...)").

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "riskpref/agents.hpp"
#include "riskpref/align_emit.hpp"
#include "riskpref/inference.hpp"
#include "riskpref/questionnaire.hpp"

// After Eigen: resolv.h (pulled in by httplib) defines a _res macro.
#include <httplib.h>

using namespace riskpref;

namespace {

constexpr double kTwoOptionTol = 0.03;
constexpr double kFourOptionTol = 0.04;
constexpr double kOracleRuntime = 120.0;
constexpr double kRecoveryCoverage = 0.90;
constexpr double kRecoveryAccuracyTol = 0.03;
constexpr double kRecoveryRuntime = 600.0;
constexpr double kSelectionTol = 0.02;
constexpr double kMaxRhat = 1.05;
constexpr double kToyBetaRel = 0.10;
constexpr double kSftAgreementTol = 0.03;

const std::string kData = RISKPREF_DATA_DIR;

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
    std::string known;  // non-empty: expected failure, with the reason
};

struct Criterion {
    int id = 0;
    std::string title;
    std::vector<Check> checks;

    void add(std::string name, bool pass, std::string detail = {}, std::string known = {}) {
        checks.push_back({std::move(name), pass, std::move(detail), std::move(known)});
    }
    [[nodiscard]] bool pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }
    [[nodiscard]] bool only_known_failures() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass || !c.known.empty(); });
    }
};

std::string fmt(double v, int digits = 2) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

std::string pct(double fraction) { return fmt(100.0 * fraction); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<ChoiceQuestion> questions(QuestionMode mode, std::size_t n, std::uint64_t seed) {
    GeneratorConfig g;
    g.seed = seed;
    return generate_dataset(g, mode, n);
}

FitData labelled(const ChoiceModelSpec& spec, std::vector<ChoiceQuestion> qs, std::uint64_t seed) {
    RandomStream rng(seed, 0xA11);
    FitData d;
    d.chosen = sample_choices(spec, qs, rng);
    d.questions = std::move(qs);
    return d;
}

SamplerConfig acceptance_sampler(std::uint64_t seed) {
    SamplerConfig c;
    c.seed = seed;
    c.chains = 4;
    c.tune = 500;
    c.draws = 500;
    return c;
}

// R-hat values of every Ok fit, checked under criterion 5.
std::vector<std::pair<std::string, double>> g_rhats;

void record_rhat(const std::string& label, const FitResult& r) {
    if (r.status == FitStatus::Ok) g_rhats.emplace_back(label, r.diagnostics.max_rhat);
}

// ---- 1 and 2 ---------------------------------------------------------------------

Criterion oracle_accuracy_criterion(bool four) {
    Criterion c{four ? 2 : 1, four ? "oracle accuracy, four-option" : "oracle accuracy, two-option", {}};
    const auto t0 = std::chrono::steady_clock::now();
    const QuestionMode mode = four ? QuestionMode::FourOption : QuestionMode::DiffEV;
    const double tol = four ? kFourOptionTol : kTwoOptionTol;
    const auto calib = questions(mode, 5000, 2024);
    const auto fresh = questions(mode, 2500, 7001);
    for (const auto& t : named_targets()) {
        const double ref = (four ? t.oracle_four : t.oracle_two) / 100.0;
        const auto cal = calibrate_beta(t.utility(), {}, calib, ref, 2024);
        RandomStream rng(7002, static_cast<std::uint64_t>(&t - named_targets().data()));
        const double acc = oracle_accuracy({t.utility(), {}, cal.beta}, fresh, rng);
        c.add(std::string(t.name), std::abs(acc - ref) <= tol,
              std::string(t.name) + " " + pct(acc) + " vs " + pct(ref));
    }
    const double secs = seconds_since(t0);
    c.add("runtime", secs < kOracleRuntime, fmt(secs, 1) + "s");
    return c;
}

// ---- 3 -----------------------------------------------------------------------------

Criterion recovery_criterion() {
    Criterion c{3, "CRRA parameter recovery", {}};
    const auto t0 = std::chrono::steady_clock::now();
    const auto target = make_target("crra-0.71");
    PriorOptions wide;
    wide.wide_crra_prior = true;
    int covered = 0;
    int accurate = 0;
    int failed = 0;
    const int reps = 20;
    double worst_gap = 0.0;
    for (int s = 1; s <= reps; ++s) {
        const auto seed = static_cast<std::uint64_t>(s);
        const auto train = labelled(target.model, questions(QuestionMode::DiffEV, 2000, 100 + seed), seed);
        const auto test = labelled(target.model, questions(QuestionMode::DiffEV, 500, 200 + seed), 1000 + seed);
        const auto fit = fit_model(make_fit_model(Family::CRRA, WeightingKind::None, train.max_reward(), wide), train,
                                   test, acceptance_sampler(seed));
        record_rhat("crra recovery seed " + std::to_string(s), fit);
        if (fit.status != FitStatus::Ok) {
            ++failed;
            continue;
        }
        const auto& g = fit.params.at(0);
        covered += g.hdi_3 <= 0.71 && 0.71 <= g.hdi_97;
        const double oracle = prediction_accuracy(target.model, test);
        const double gap = std::abs(*fit.held_out_accuracy - oracle);
        worst_gap = std::max(worst_gap, gap);
        accurate += gap <= kRecoveryAccuracyTol;
    }
    const double coverage = static_cast<double>(covered) / reps;
    c.add("hdi coverage", coverage >= kRecoveryCoverage,
          "94% HDI covers 0.71 in " + std::to_string(covered) + "/" + std::to_string(reps));
    c.add("held-out accuracy", accurate == reps,
          "within 3 pts of oracle in " + std::to_string(accurate) + "/" + std::to_string(reps) + " (worst " +
              pct(worst_gap) + " pts)");
    c.add("no failed fits", failed == 0, std::to_string(failed) + " failed");
    const double secs = seconds_since(t0);
    c.add("runtime", secs < kRecoveryRuntime, fmt(secs, 1) + "s");
    return c;
}

// ---- 4 -----------------------------------------------------------------------------

Criterion selection_criterion() {
    Criterion c{4, "model selection", {}};
    std::vector<FamilyRequest> all;
    for (Family f : kAllFamilies) all.push_back({f, WeightingKind::None});
    int k = 0;
    for (const auto& [name, family] : {std::pair{"prospect", Family::Prospect}, std::pair{"crra-0.71", Family::CRRA}}) {
        const auto target = make_target(name);
        const std::uint64_t seed = 4100 + static_cast<std::uint64_t>(k++);
        const auto train = labelled(target.model, questions(QuestionMode::DiffEV, 1000, seed), seed);
        const auto test = labelled(target.model, questions(QuestionMode::DiffEV, 500, seed + 50), seed + 50);
        SamplerConfig sampler = acceptance_sampler(seed);
        sampler.chains = 2;
        sampler.tune = 400;
        sampler.draws = 400;
        const auto board = fit_all_families(train, test, all, PriorOptions{}, sampler);
        for (const auto& r : board) record_rhat(std::string(name) + " " + std::string(family_name(r.family)), r);
        const double top = board.front().held_out_accuracy.value_or(0.0);
        const auto it = std::find_if(board.begin(), board.end(), [&](const FitResult& r) { return r.family == family; });
        const bool ok = it != board.end() && it->held_out_accuracy && top - *it->held_out_accuracy <= kSelectionTol;
        std::string detail = std::string(name) + " data: " + std::string(family_name(family)) + " ";
        detail += it != board.end() && it->held_out_accuracy ? pct(*it->held_out_accuracy) : "N/A";
        detail += ", top " + std::string(family_name(board.front().family)) + " " + pct(top);
        detail += "; board:";
        for (const auto& r : board) {
            detail += " " + std::string(family_name(r.family)) + "=" +
                      (r.held_out_accuracy ? pct(*r.held_out_accuracy) : "N/A(R-hat " + fmt(r.diagnostics.max_rhat, 2) + ")");
        }
        c.add(name, ok, detail);
    }
    return c;
}

// ---- 5 -----------------------------------------------------------------------------

Criterion mcmc_criterion() {
    Criterion c{5, "MCMC correctness", {}};
    // Linear utility, one repeated pair with utility gap 1: the posterior of
    // beta is HalfNormal(2) times sigma(beta)^k (1 - sigma(beta))^(n - k).
    const int n = 80;
    const int k = 52;
    FitData data;
    for (int i = 0; i < n; ++i) {
        data.questions.push_back(make_question("c" + std::to_string(i), QuestionMode::DiffEV,
                                               {Lottery({{101.0, 1.0}}), Lottery({{100.0, 1.0}})}, {'A', 'B'}));
        data.chosen.push_back(i < k ? 0 : 1);
    }
    double z = 0.0, m1 = 0.0, m2 = 0.0;
    const double step = 1e-4;
    for (double b = step / 2; b < 10.0; b += step) {
        const double s = 1.0 / (1.0 + std::exp(-b));
        const double w = std::exp(-b * b / 8.0 + k * std::log(s) + (n - k) * std::log1p(-s));
        z += w;
        m1 += w * b;
        m2 += w * b * b;
    }
    const double mean = m1 / z;
    const double sd = std::sqrt(m2 / z - mean * mean);
    const auto conj = run_mcmc(make_fit_model(Family::Linear, WeightingKind::None, 101.0), data, acceptance_sampler(51));
    const auto conj_summary = summarize(conj);
    const auto conj_diag = diagnostics(conj);
    const double mcse = sd / std::sqrt(conj_diag.min_ess);
    const double err = std::abs(conj_summary[0].mean - mean);
    c.add("conjugate oracle", conj.status == FitStatus::Ok && err <= 3.0 * mcse,
          "posterior mean " + fmt(conj_summary[0].mean, 4) + " vs analytic " + fmt(mean, 4) + " (3 MCSE = " +
              fmt(3.0 * mcse, 4) + ")");
    g_rhats.emplace_back("conjugate oracle", conj_diag.max_rhat);

    const ChoiceModelSpec toy{UtilityModel::make(Family::Linear), {}, 0.02};
    const auto toy_data = labelled(toy, questions(QuestionMode::DiffEV, 2000, 52), 52);
    const auto toy_fit = fit_model(make_fit_model(Family::Linear, WeightingKind::None, toy_data.max_reward()), toy_data,
                                   toy_data, acceptance_sampler(52));
    record_rhat("logistic toy", toy_fit);
    const double beta_hat = toy_fit.params.empty() ? 0.0 : toy_fit.params.back().mean;
    c.add("logistic toy", toy_fit.status == FitStatus::Ok && std::abs(beta_hat - 0.02) <= kToyBetaRel * 0.02,
          "beta " + fmt(beta_hat, 5) + " vs 0.02");

    double worst = 1.0;
    std::string where = "none";
    for (const auto& [label, r] : g_rhats) {
        if (r > worst) {
            worst = r;
            where = label;
        }
    }
    c.add("r-hat", worst < kMaxRhat,
          "max R-hat " + fmt(worst, 4) + " over " + std::to_string(g_rhats.size()) + " Ok fits (" + where + ")");
    return c;
}

// ---- 6 -----------------------------------------------------------------------------

Criterion generator_criterion() {
    Criterion c{6, "generator invariants", {}};
    const auto same = questions(QuestionMode::SameEV, 10000, 61);
    const auto diff = questions(QuestionMode::DiffEV, 10000, 62);
    double gap = 0.0;
    for (const auto& q : same) gap = std::max(gap, std::abs(q.moments[0].ev - q.moments[1].ev));
    c.add("same-ev", gap < 1e-6, "max |dEV| " + std::to_string(gap));
    const GeneratorConfig g;
    const auto bad = std::count_if(diff.begin(), diff.end(), [&](const ChoiceQuestion& q) {
        return !passes_difference_filter(q.moments[0], q.moments[1], g);
    });
    c.add("diff-ev filter", bad == 0, std::to_string(bad) + " of 10000 fail the 5%/10% predicate");
    std::size_t nonpositive = 0;
    for (const auto* set : {&same, &diff}) {
        for (const auto& q : *set) {
            for (const auto& l : q.options) {
                for (const auto& o : l.outcomes()) nonpositive += o.reward <= 0.0;
            }
        }
    }
    c.add("positive rewards", nonpositive == 0, std::to_string(nonpositive) + " non-positive rewards");
    const auto dir = std::filesystem::temp_directory_path() / "riskpref_acceptance";
    std::filesystem::create_directories(dir);
    write_questions_jsonl((dir / "a.jsonl").string(), questions(QuestionMode::FourOption, 2000, 63));
    write_questions_jsonl((dir / "b.jsonl").string(), questions(QuestionMode::FourOption, 2000, 63));
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    };
    c.add("byte-identical", slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"), "2000 four-option questions");
    std::filesystem::remove_all(dir);
    return c;
}

// ---- 7 -----------------------------------------------------------------------------

Criterion utility_criterion() {
    Criterion c{7, "utility properties", {}};
    std::mt19937_64 gen(71);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double c1 = 50.0 + 400.0 * u(gen);
        const double c2 = c1 + 10.0 + 500.0 * u(gen);
        const auto m = UtilityModel::make(Family::PiecewiseFS, {{"c1", c1},
                                                                {"c2", c2},
                                                                {"alpha1", 0.2 + 0.8 * u(gen)},
                                                                {"alpha2", 1.01 + u(gen)},
                                                                {"alpha3", 0.2 + 0.8 * u(gen)}});
        for (double x : {c1, c2}) {
            worst = std::max(worst, std::abs(eval_utility(m, std::nextafter(x, 0.0)) -
                                             eval_utility(m, std::nextafter(x, 1e300))));
        }
    }
    std::ostringstream w;
    w << std::scientific << std::setprecision(2) << worst;
    c.add("piecewise continuity", worst < 1e-9, "max one-sided gap " + w.str());

    const auto near_log = UtilityModel::make(Family::CRRA, {{"gamma", 1.001}});
    for (double x : {2.0, 10.0, 100.0}) {
        const double gap = std::abs(eval_utility(near_log, x) - std::log(x));
        const bool ok = gap < 1e-2;
        c.add("crra log-limit x=" + fmt(x, 0), ok, "|u - ln x| = " + fmt(gap, 5),
              ok ? "" : "(x^(1-g)-1)/(1-g) at g=1.001 differs from ln x by ~0.0005 (ln x)^2 = 0.0106 at x=100");
    }
    const auto cara0 = UtilityModel::make(Family::CARA, {{"alpha", 1e-6}});
    double cara_gap = 0.0;
    for (double x = 1.0; x <= 1000.0; x += 1.0) cara_gap = std::max(cara_gap, std::abs(eval_utility(cara0, x) - x / 250.0));
    c.add("cara linear-limit", cara_gap < 1e-4, "max gap " + fmt(cara_gap, 7));

    bool reflect = true;
    for (double a : {0.5, 0.88, 1.0}) {
        const auto pt = UtilityModel::make(Family::Prospect, {{"alpha", a}, {"beta", a}, {"lambda", 2.25}});
        for (double x : {0.1, 1.0, 37.5, 1000.0, 123456.0}) reflect = reflect && eval_utility(pt, -x) == -2.25 * eval_utility(pt, x);
    }
    c.add("prospect reflection", reflect);

    const std::vector<UtilityModel> models{
        UtilityModel::make(Family::Linear),
        UtilityModel::make(Family::Power, {{"alpha", 0.6}}),
        UtilityModel::make(Family::CRRA, {{"gamma", 0.71}}),
        UtilityModel::make(Family::CRRA, {{"gamma", -5.0}}),
        UtilityModel::make(Family::CARA, {{"alpha", 2.0}}),
        UtilityModel::make(Family::ExpoPower, {{"alpha", 0.05}, {"theta", 0.4}}),
        UtilityModel::make(Family::HARA, {{"a", 1.0}, {"b", 0.01}, {"gamma", 0.5}}),
        UtilityModel::make(Family::Quadratic, {{"a", 1.0}, {"b", 0.0001}}),
        UtilityModel::make(Family::PiecewiseFS, {{"c1", 200.0}, {"c2", 600.0}, {"alpha1", 0.6}, {"alpha2", 1.4}, {"alpha3", 0.5}}),
    };
    std::size_t violations = 0;
    std::uniform_real_distribution<double> r(0.5, 1500.0);
    for (const auto& m : models) {
        for (int i = 0; i < 500; ++i) {
            double a = r(gen), b = r(gen);
            if (a == b) continue;
            if (a > b) std::swap(a, b);
            if (!validate_params(m).ok()) continue;
            const auto [lo, hi] = std::pair{m.domain.lo, m.domain.hi};
            if (b > hi || a < lo) continue;
            violations += !(eval_utility(m, a) < eval_utility(m, b));
        }
    }
    c.add("monotonicity", violations == 0, std::to_string(violations) + " violations");
    return c;
}

// ---- 8 -----------------------------------------------------------------------------

Criterion questionnaire_criterion() {
    Criterion c{8, "questionnaire scoring", {}};
    const std::pair<int, GLCategory> bounds[] = {
        {18, GLCategory::Low},          {19, GLCategory::BelowAverage}, {22, GLCategory::BelowAverage},
        {23, GLCategory::Average},      {28, GLCategory::Average},      {29, GLCategory::AboveAverage},
        {32, GLCategory::AboveAverage}, {33, GLCategory::High},
    };
    bool ok = true;
    for (const auto& [total, cat] : bounds) ok = ok && classify_gl(total) == cat;
    c.add("G&L boundaries", ok);

    const std::pair<std::string, std::optional<int>> fixtures[] = {
        {"(3)", 3},
        {"I would give it a score of 4.", 4},
        {"On a scale of 1 (Extremely Unlikely) to 7 (Extremely Likely), my answer is 5.", 5},
        {"Between 1 and 7 I pick 2", 2},
        {"1-7: 6", 6},
        {"I cannot rate this.", std::nullopt},
    };
    int bad = 0;
    for (const auto& [text, want] : fixtures) bad += extract_likert(text) != want;
    c.add("likert fixtures", bad == 0, std::to_string(bad) + " mismatches");

    const auto items = load_dospert_items(kData + "/dospert_items.json");
    std::vector<SurveyResponse> log;
    std::map<std::pair<Domain, Dimension>, std::vector<double>> hand;
    std::mt19937_64 gen(81);
    std::uniform_int_distribution<int> likert(1, 7);
    for (const auto& it : items) {
        for (Dimension d : kAllDimensions) {
            double sum = 0.0;
            int valid = 0;
            for (int run = 0; run < 5; ++run) {
                SurveyResponse r;
                r.item_id = it.id;
                r.dimension = d;
                r.run_index = run;
                if ((run + it.id.size()) % 4 != 0) {
                    r.extracted = likert(gen);
                    sum += *r.extracted;
                    ++valid;
                }
                log.push_back(r);
            }
            if (valid > 0) hand[{*it.domain, d}].push_back(sum / valid);
        }
    }
    const auto scores = score_dospert(items, log);
    double diff = 0.0;
    for (const auto& [key, means] : hand) {
        double m = 0.0;
        for (double v : means) m += v;
        diff = std::max(diff, std::abs(scores.domains.at(key) - m / static_cast<double>(means.size())));
    }
    c.add("DOSPERT aggregation", items.size() == 30 && diff < 1e-12 && scores.domains.size() == hand.size(),
          "30 items, max deviation " + std::to_string(diff));
    return c;
}

// ---- 9 -----------------------------------------------------------------------------

Criterion emitter_criterion() {
    Criterion c{9, "alignment emitters", {}};
    const auto qs = questions(QuestionMode::DiffEV, 2500, 91);
    std::size_t violations = 0;
    std::size_t total = 0;
    bool schemas = true;
    for (const auto& t : named_targets()) {
        const auto target = make_target(t.name);
        const auto dpo = emit_dpo(qs, target);
        // Records follow question order with ties skipped.
        std::size_t k = 0;
        for (const auto& q : qs) {
            const auto u = option_utilities(target.model, q);
            if (u[0] == u[1]) continue;
            const auto& r = dpo.records.at(k++);
            violations += r.prompt != alignment_prompt(q) ||
                          !(u[q.option_for_label(r.chosen[0])] > u[q.option_for_label(r.rejected[0])]);
            schemas = schemas && is_valid_dpo_json(nlohmann::json::parse(dpo_to_json(r).dump()));
        }
        total += dpo.records.size();

        const auto sft = emit_sft(qs, target, 92);
        double agree = 0.0;
        ChoiceModelSpec argmax = target.model;
        argmax.beta_sensitivity = kArgmaxBeta;
        for (std::size_t i = 0; i < qs.size(); ++i) {
            agree += sft[i].completion[0] == qs[i].labels[predict(argmax, qs[i])];
            schemas = schemas && is_valid_sft_json(nlohmann::json::parse(sft_to_json(sft[i]).dump()));
        }
        agree /= static_cast<double>(qs.size());
        c.add(std::string("sft ") + std::string(t.name), std::abs(agree - t.oracle_two / 100.0) <= kSftAgreementTol,
              std::string(t.name) + " " + pct(agree) + " vs " + fmt(t.oracle_two));
    }
    c.add("dpo ordering", violations == 0,
          std::to_string(violations) + " of " + std::to_string(total) + " records violate U(chosen) > U(rejected)");
    c.add("schemas", schemas);
    return c;
}

// ---- 10 ----------------------------------------------------------------------------

Criterion http_criterion() {
    Criterion c{10, "HTTP agent against a scripted mock endpoint", {}};
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        const int n = ++hits;
        const auto body = nlohmann::json::parse(req.body, nullptr, false);
        const std::string user = body.is_discarded() ? "" : body["messages"].back()["content"].get<std::string>();
        std::string reply;
        if (user.find("[transport]") != std::string::npos && n % 3 == 1) {
            res.status = 500;
            return;
        }
        if (user.find("[refuse]") != std::string::npos) {
            reply = "I would rather not say.";
        } else if (user.find("On a scale of 1") != std::string::npos) {
            reply = "On a scale of 1 (Extremely Unlikely) to 7 (Extremely Likely) I would say (5).";
        } else {
            reply = "After some thought, the answer is B.";
        }
        res.set_content(nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", reply}}}}}}}.dump(),
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    AgentConfig cfg;
    cfg.kind = AgentKind::External;
    cfg.endpoint.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.endpoint.model = "mock";
    cfg.endpoint.backoff_seconds = 0.01;
    cfg.endpoint.max_concurrency = 2;
    auto agent = make_agent(cfg);

    auto make = [](std::string id, std::string tag) {
        auto q = make_question(std::move(id), QuestionMode::DiffEV,
                               {Lottery({{300.0, 0.5}, {100.0, 0.5}}), Lottery({{150.0, 1.0}})}, {'B', 'A'});
        q.text += tag;
        return q;
    };
    const std::vector<ChoiceQuestion> qs{make("ok", ""), make("flaky", " [transport]"), make("refuse", " [refuse]")};
    const auto session = run_choice_session(*agent, qs, PromptSpec{}, {}, 1);
    const bool extraction = session.records.size() == 2 && session.records[0].question_id == "ok" &&
                            session.records[0].chosen_index == 0;
    c.add("extraction", extraction, "letter B maps to option 0 under swapped labels");
    c.add("retry after transport failure",
          session.records.size() == 2 && session.records[1].question_id == "flaky");
    c.add("invalid after retries",
          session.invalid_question_ids == std::vector<std::string>{"refuse"}, std::to_string(hits.load()) + " requests");

    const auto items = load_dospert_items(kData + "/dospert_items.json");
    const std::vector<QuestionnaireItem> one{items.front()};
    const auto likert = run_dospert_session(*agent, one, PromptSpec{}, 1, 1);
    c.add("likert via endpoint", likert.size() == 2 && likert[0].extracted == 5 && likert[1].extracted == 5,
          likert.empty() ? "no rows" : likert[0].raw_text);

    server.stop();
    th.join();
    RandomStream rng(1);
    const auto down = agent->answer_choice(qs[0], PromptSpec{}, {}, rng);
    c.add("endpoint down", !down.value && down.attempts == cfg.max_retries);
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"riskpref acceptance run"};
    std::vector<int> only;
    app.add_option("--only", only, "Run just these criteria (1-10)")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);
    const std::set<int> wanted(only.begin(), only.end());
    auto want = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };

    const std::vector<std::pair<int, std::function<Criterion()>>> plan{
        {1, [] { return oracle_accuracy_criterion(false); }},
        {2, [] { return oracle_accuracy_criterion(true); }},
        {3, recovery_criterion},
        {4, selection_criterion},
        {5, mcmc_criterion},
        {6, generator_criterion},
        {7, utility_criterion},
        {8, questionnaire_criterion},
        {9, emitter_criterion},
        {10, http_criterion},
    };
    bool ok = true;
    for (const auto& [id, run] : plan) {
        if (!want(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Criterion c;
        try {
            c = run();
        } catch (const std::exception& e) {
            c = {id, "exception", {}};
            c.add("run", false, e.what());
        }
        std::string verdict = "PASS";
        if (!c.pass()) {
            verdict = "FAIL";
            if (c.only_known_failures()) {
                for (const auto& chk : c.checks) {
                    if (!chk.pass) verdict += " (known: " + chk.name + ": " + chk.known + ")";
                }
            } else {
                ok = false;
            }
        }
        std::cout << "criterion " << std::setw(2) << id << ": " << verdict << "  " << c.title << "  ["
                  << fmt(seconds_since(t0), 1) << "s]\n";
        for (const auto& chk : c.checks) {
            std::cout << "    " << (chk.pass ? "ok  " : "FAIL") << "  " << chk.name;
            if (!chk.detail.empty()) std::cout << ": " << chk.detail;
            std::cout << '\n';
        }
        std::cout.flush();
    }
    return ok ? 0 : 1;
}

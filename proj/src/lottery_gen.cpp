#include "riskpref/lottery_gen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace riskpref {

namespace {

constexpr const char* kQuestionHeader = "Which of the following options do you prefer?";
constexpr int kMaxLotteryRedraws = 100000;
constexpr int kMaxPairRedraws = 100000;

// Inverse of a modulo m (gcd(a, m) == 1), via the extended Euclid recursion.
std::int64_t mod_inverse(std::int64_t a, std::int64_t m) {
    std::int64_t t = 0, new_t = 1, r = m, new_r = ((a % m) + m) % m;
    while (new_r != 0) {
        const std::int64_t q = r / new_r;
        t = std::exchange(new_t, t - q * new_t);
        r = std::exchange(new_r, r - q * new_r);
    }
    return ((t % m) + m) % m;
}

std::string format_amount(double v) {
    std::ostringstream os;
    const double rounded = std::round(v);
    if (std::abs(v - rounded) < 1e-9) {
        os << static_cast<long long>(rounded);
    } else {
        os << std::fixed << std::setprecision(2) << v;
    }
    return os.str();
}

std::string format_percent(double p) { return format_amount(p * 100.0); }

void shuffle_labels(std::vector<char>& labels, RandomStream& rng) {
    for (std::size_t i = labels.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(labels[i - 1], labels[j]);
    }
}

std::vector<char> canonical_labels(std::size_t n) {
    std::vector<char> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<char>('A' + i);
    return labels;
}

}  // namespace

std::vector<std::string> GeneratorConfig::violations() const {
    std::vector<std::string> v;
    if (!(ev_lo > 0.0 && ev_lo <= ev_hi)) v.emplace_back("ev_range positive and ordered");
    if (!(p_lo > 0.0 && p_lo <= p_hi && p_hi < 1.0)) v.emplace_back("p_range inside (0,1)");
    if (!(low_fraction > 0.0 && low_fraction < 1.0)) v.emplace_back("0 < low_fraction < 1");
    if (!(ev_diff_min > 0.0 && ev_diff_min < 1.0)) v.emplace_back("ev_diff_min in (0,1)");
    if (!(var_diff_min > 0.0 && var_diff_min < 1.0)) v.emplace_back("var_diff_min in (0,1)");
    if (std::ceil(p_lo * 100.0 - 1e-9) > std::floor(p_hi * 100.0 + 1e-9)) {
        v.emplace_back("p_range must contain a whole percentage");
    }
    return v;
}

std::string_view mode_name(QuestionMode mode) {
    switch (mode) {
        case QuestionMode::SameEV: return "same-ev";
        case QuestionMode::DiffEV: return "diff-ev";
        case QuestionMode::FourOption: return "four";
    }
    return "diff-ev";
}

QuestionMode parse_mode(std::string_view name) {
    if (name == "same-ev" || name == "same_ev") return QuestionMode::SameEV;
    if (name == "diff-ev" || name == "diff_ev") return QuestionMode::DiffEV;
    if (name == "four" || name == "four-option") return QuestionMode::FourOption;
    throw std::invalid_argument("unknown question mode: " + std::string(name));
}

std::size_t ChoiceQuestion::option_for_label(char label) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) return i;
    }
    throw std::invalid_argument(std::string("question ") + id + " has no option labelled " + label);
}

std::vector<std::size_t> ChoiceQuestion::presentation_order() const {
    std::vector<std::size_t> order(options.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
    return order;
}

Moments lottery_moments(const Lottery& lottery) {
    Moments m;
    for (const auto& o : lottery.outcomes()) m.ev += o.probability * o.reward;
    for (const auto& o : lottery.outcomes()) {
        const double d = o.reward - m.ev;
        m.variance += o.probability * d * d;
    }
    return m;
}

ChoiceQuestion make_question(std::string id, QuestionMode mode, std::vector<Lottery> options,
                             std::vector<char> labels) {
    if (options.size() != 2 && options.size() != 4) {
        throw std::invalid_argument("a question has 2 or 4 options");
    }
    if (labels.empty()) labels = canonical_labels(options.size());
    auto sorted = labels;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != canonical_labels(options.size())) {
        throw std::invalid_argument("labels must be a permutation of the canonical letters");
    }
    ChoiceQuestion q;
    q.id = std::move(id);
    q.mode = mode;
    q.options = std::move(options);
    q.labels = std::move(labels);
    for (const auto& l : q.options) q.moments.push_back(lottery_moments(l));
    q.text = render_question(q);
    return q;
}

std::optional<Lottery> lottery_from_draws(double ev, double p, double r2) {
    const double r1 = (ev - (1.0 - p) * r2) / p;
    if (r1 < 0.0) return std::nullopt;
    return Lottery({{r1, p}, {r2, 1.0 - p}});
}

Lottery sample_lottery(const GeneratorConfig& config, RandomStream& rng, std::optional<double> fixed_ev) {
    const auto pct_lo = static_cast<std::int64_t>(std::ceil(config.p_lo * 100.0 - 1e-9));
    const auto pct_hi = static_cast<std::int64_t>(std::floor(config.p_hi * 100.0 + 1e-9));
    for (int attempt = 0; attempt < kMaxLotteryRedraws; ++attempt) {
        const auto ev = static_cast<std::int64_t>(
            fixed_ev ? std::llround(*fixed_ev) : std::llround(rng.uniform(config.ev_lo, config.ev_hi)));
        const std::int64_t pct = rng.uniform_int(pct_lo, pct_hi);
        // Integer r2 in [1, low_fraction*EV) such that r1 is a whole number:
        // (100 - pct) * r2 == 100 * EV (mod pct).
        const auto r2_max = static_cast<std::int64_t>(std::ceil(config.low_fraction * ev) - 1);
        if (r2_max < 1) continue;
        const std::int64_t g = std::gcd(100 - pct, pct);
        const std::int64_t m = pct / g;
        const std::int64_t residue =
            m == 1 ? 0 : ((100 * ev / g) % m) * mod_inverse((100 - pct) / g, m) % m;
        const std::int64_t first = residue >= 1 ? residue : residue + m;
        if (first > r2_max) continue;
        const std::int64_t steps = (r2_max - first) / m;
        const std::int64_t r2 = first + m * rng.uniform_int(0, steps);
        const std::int64_t r1_num = 100 * ev - (100 - pct) * r2;
        const double p = static_cast<double>(pct) / 100.0;
        if (r1_num < 0) continue;  // r1 < 0: resample
        const double r1 = static_cast<double>(r1_num / pct);
        return Lottery({{r1, p}, {static_cast<double>(r2), static_cast<double>(100 - pct) / 100.0}});
    }
    throw std::runtime_error("lottery sampler failed to find a valid draw");
}

bool passes_difference_filter(const Moments& a, const Moments& b, const GeneratorConfig& config) {
    const double ev_gap = std::abs(a.ev - b.ev) / std::min(a.ev, b.ev);
    const double min_var = std::min(a.variance, b.variance);
    const double var_gap = min_var > 0.0 ? std::abs(a.variance - b.variance) / min_var
                                         : (a.variance == b.variance ? 0.0 : INFINITY);
    return ev_gap >= config.ev_diff_min || var_gap >= config.var_diff_min;
}

QuestionDraw draw_question(const GeneratorConfig& config, QuestionMode mode, RandomStream& rng, std::string id) {
    if (auto bad = config.violations(); !bad.empty()) {
        throw std::invalid_argument("invalid generator config: " + bad.front());
    }
    QuestionDraw out;
    std::vector<Lottery> options;
    switch (mode) {
        case QuestionMode::SameEV: {
            const double ev = std::round(rng.uniform(config.ev_lo, config.ev_hi));
            options.push_back(sample_lottery(config, rng, ev));
            options.push_back(sample_lottery(config, rng, ev));
            break;
        }
        case QuestionMode::DiffEV: {
            for (int attempt = 0;; ++attempt) {
                if (attempt >= kMaxPairRedraws) throw std::runtime_error("difference filter never satisfied");
                Lottery a = sample_lottery(config, rng);
                Lottery b = sample_lottery(config, rng);
                if (passes_difference_filter(lottery_moments(a), lottery_moments(b), config)) {
                    options = {std::move(a), std::move(b)};
                    break;
                }
                ++out.rejected_pairs;
            }
            break;
        }
        case QuestionMode::FourOption:
            for (int i = 0; i < 4; ++i) options.push_back(sample_lottery(config, rng));
            break;
    }
    auto labels = canonical_labels(options.size());
    shuffle_labels(labels, rng);
    out.question = make_question(std::move(id), mode, std::move(options), std::move(labels));
    return out;
}

ChoiceQuestion build_question(const GeneratorConfig& config, QuestionMode mode, RandomStream& rng, std::string id) {
    return draw_question(config, mode, rng, std::move(id)).question;
}

std::vector<ChoiceQuestion> generate_dataset(const GeneratorConfig& config, QuestionMode mode, std::size_t n,
                                             std::size_t first_index) {
    const RandomStream root(config.seed, static_cast<std::uint64_t>(mode) + 1);
    std::vector<ChoiceQuestion> out;
    out.reserve(n);
    for (std::size_t i = first_index; i < first_index + n; ++i) {
        RandomStream rng = root.split(i);
        std::ostringstream id;
        id << mode_name(mode) << '-' << std::setw(6) << std::setfill('0') << i;
        out.push_back(build_question(config, mode, rng, id.str()));
    }
    return out;
}

std::string render_lottery(const Lottery& lottery) {
    std::string s;
    bool first = true;
    for (const auto& o : lottery.outcomes()) {
        s += first ? "A " : " and a ";
        s += format_percent(o.probability) + "% chance to win $" + format_amount(o.reward);
        first = false;
    }
    return s + ".";
}

std::string render_question(const ChoiceQuestion& question) {
    std::string s = kQuestionHeader;
    for (std::size_t idx : question.presentation_order()) {
        s += '\n';
        s += question.labels[idx];
        s += ": " + render_lottery(question.options[idx]);
    }
    return s;
}

nlohmann::json question_to_json(const ChoiceQuestion& q) {
    nlohmann::json options = nlohmann::json::array();
    nlohmann::json evs = nlohmann::json::array();
    nlohmann::json vars = nlohmann::json::array();
    nlohmann::json labels = nlohmann::json::array();
    for (std::size_t i = 0; i < q.options.size(); ++i) {
        nlohmann::json outcomes = nlohmann::json::array();
        for (const auto& o : q.options[i].outcomes()) outcomes.push_back({o.reward, o.probability});
        options.push_back({{"outcomes", outcomes}});
        labels.push_back(std::string(1, q.labels[i]));
        evs.push_back(q.moments[i].ev);
        vars.push_back(q.moments[i].variance);
    }
    nlohmann::json j;
    j["id"] = q.id;
    j["mode"] = std::string(mode_name(q.mode));
    j["options"] = std::move(options);
    j["labels"] = std::move(labels);
    j["ev"] = std::move(evs);
    j["variance"] = std::move(vars);
    j["text"] = q.text;
    return j;
}

ChoiceQuestion question_from_json(const nlohmann::json& j) {
    std::vector<Lottery> options;
    for (const auto& opt : j.at("options")) {
        std::vector<Outcome> outcomes;
        for (const auto& pair : opt.at("outcomes")) {
            outcomes.push_back({pair.at(0).get<double>(), pair.at(1).get<double>()});
        }
        options.emplace_back(std::move(outcomes));
    }
    std::vector<char> labels;
    for (const auto& l : j.at("labels")) {
        const auto s = l.get<std::string>();
        if (s.size() != 1) throw std::invalid_argument("labels are single letters");
        labels.push_back(s[0]);
    }
    auto q = make_question(j.at("id").get<std::string>(), parse_mode(j.value("mode", "diff-ev")),
                           std::move(options), std::move(labels));
    for (std::size_t i = 0; i < q.moments.size(); ++i) {
        if (j.contains("ev") && std::abs(j["ev"].at(i).get<double>() - q.moments[i].ev) > 1e-9 * std::max(1.0, q.moments[i].ev)) {
            throw std::invalid_argument("question " + q.id + ": stored EV inconsistent with outcomes");
        }
    }
    return q;
}

void write_questions_jsonl(const std::string& path, const std::vector<ChoiceQuestion>& questions) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& q : questions) out << question_to_json(q).dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<ChoiceQuestion> read_questions_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::vector<ChoiceQuestion> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(question_from_json(nlohmann::json::parse(line)));
    }
    return out;
}

void write_questions_csv(const std::string& path, const std::vector<ChoiceQuestion>& questions) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "id,mode,option,label,reward_1,prob_1,reward_2,prob_2,ev,variance\n";
    out << std::setprecision(17);
    for (const auto& q : questions) {
        for (std::size_t i = 0; i < q.options.size(); ++i) {
            out << q.id << ',' << mode_name(q.mode) << ',' << i << ',' << q.labels[i];
            const auto& outs = q.options[i].outcomes();
            for (std::size_t k = 0; k < 2; ++k) {
                if (k < outs.size()) {
                    out << ',' << outs[k].reward << ',' << outs[k].probability;
                } else {
                    out << ",,";
                }
            }
            out << ',' << q.moments[i].ev << ',' << q.moments[i].variance << '\n';
        }
    }
}

}  // namespace riskpref

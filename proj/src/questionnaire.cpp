#include "riskpref/questionnaire.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

namespace riskpref {

namespace {

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

// Splits CSV text into records, honouring quoted fields with embedded
// separators, quotes and newlines.
std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field += '"';
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && in.peek() == '\n') in.get();
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else {
            field += c;
        }
    }
    if (any) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_mean(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

std::string_view domain_name(Domain d) {
    switch (d) {
        case Domain::Ethical: return "ethical";
        case Domain::Financial: return "financial";
        case Domain::HealthSafety: return "health_safety";
        case Domain::Recreational: return "recreational";
        case Domain::Social: return "social";
    }
    return "?";
}

Domain parse_domain(std::string_view name) {
    for (auto d : kAllDomains) {
        if (domain_name(d) == name) return d;
    }
    if (name == "health/safety" || name == "health") return Domain::HealthSafety;
    throw std::invalid_argument("unknown domain: " + std::string(name));
}

std::string_view dimension_name(Dimension d) {
    return d == Dimension::RiskTaking ? "risk_taking" : "risk_perception";
}

Dimension parse_dimension(std::string_view name) {
    if (name == "risk_taking") return Dimension::RiskTaking;
    if (name == "risk_perception") return Dimension::RiskPerception;
    throw std::invalid_argument("unknown dimension: " + std::string(name));
}

std::string_view tone_name(PromptTone t) {
    switch (t) {
        case PromptTone::Direct: return "direct";
        case PromptTone::Cautious: return "cautious";
        case PromptTone::Aggressive: return "aggressive";
    }
    return "?";
}

PromptTone parse_tone(std::string_view name) {
    if (name == "direct") return PromptTone::Direct;
    if (name == "cautious") return PromptTone::Cautious;
    if (name == "aggressive") return PromptTone::Aggressive;
    throw std::invalid_argument("unknown prompt tone: " + std::string(name));
}

const ItemChoice* QuestionnaireItem::choice(char letter) const {
    for (const auto& c : choices) {
        if (lower(c.letter) == lower(letter)) return &c;
    }
    return nullptr;
}

int QuestionnaireItem::max_score() const {
    int m = 0;
    for (const auto& c : choices) m = std::max(m, c.score);
    return m;
}

int QuestionnaireItem::min_score() const {
    if (choices.empty()) return 0;
    int m = choices.front().score;
    for (const auto& c : choices) m = std::min(m, c.score);
    return m;
}

std::string QuestionnaireItem::letters() const {
    std::string s;
    for (const auto& c : choices) s += c.letter;
    return s;
}

QuestionnaireItem item_from_json(const nlohmann::json& j) {
    QuestionnaireItem item;
    item.id = j.at("id").get<std::string>();
    item.text = j.at("text").get<std::string>();
    item.placeholder = j.value("placeholder", false);
    if (j.contains("domain")) item.domain = parse_domain(j["domain"].get<std::string>());
    if (j.contains("choices")) {
        for (const auto& c : j["choices"]) {
            ItemChoice ch;
            const auto letter = c.at("letter").get<std::string>();
            if (letter.size() != 1) throw std::invalid_argument("choice letter must be one character in " + item.id);
            ch.letter = letter[0];
            ch.text = c.at("text").get<std::string>();
            ch.score = c.at("score").get<int>();
            if (c.contains("lottery")) {
                std::vector<Outcome> outs;
                for (const auto& o : c["lottery"]) outs.push_back({o.at(0).get<double>(), o.at(1).get<double>()});
                ch.lottery = Lottery(std::move(outs));
            }
            item.choices.push_back(std::move(ch));
        }
    }
    return item;
}

nlohmann::json item_to_json(const QuestionnaireItem& item) {
    nlohmann::json j{{"id", item.id}, {"text", item.text}, {"placeholder", item.placeholder}};
    if (item.domain) j["domain"] = domain_name(*item.domain);
    if (!item.choices.empty()) {
        auto arr = nlohmann::json::array();
        for (const auto& c : item.choices) {
            nlohmann::json cj{{"letter", std::string(1, c.letter)}, {"text", c.text}, {"score", c.score}};
            if (c.lottery) {
                auto l = nlohmann::json::array();
                for (const auto& o : c.lottery->outcomes()) l.push_back({o.reward, o.probability});
                cj["lottery"] = l;
            }
            arr.push_back(cj);
        }
        j["choices"] = arr;
    }
    return j;
}

std::vector<std::string> gl_item_violations(const QuestionnaireItem& item) {
    std::vector<std::string> v;
    if (item.choices.size() < 2 || item.choices.size() > 4) v.push_back(item.id + ": needs 2-4 choices");
    std::set<char> seen;
    for (const auto& c : item.choices) {
        if (c.score < 1 || c.score > 4) v.push_back(item.id + ": scores must lie in 1..4");
        if (!seen.insert(lower(c.letter)).second) v.push_back(item.id + ": duplicate letter");
    }
    return v;
}

namespace {

std::vector<QuestionnaireItem> load_items(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    const auto j = nlohmann::json::parse(in);
    if (!j.is_array()) throw std::invalid_argument(path + ": expected a JSON array of items");
    std::vector<QuestionnaireItem> items;
    std::set<std::string> ids;
    for (const auto& e : j) {
        items.push_back(item_from_json(e));
        if (!ids.insert(items.back().id).second) throw std::invalid_argument(path + ": duplicate id " + items.back().id);
    }
    return items;
}

}  // namespace

std::vector<QuestionnaireItem> load_gl_items(const std::string& path) {
    auto items = load_items(path);
    for (const auto& it : items) {
        if (auto v = gl_item_violations(it); !v.empty()) throw std::invalid_argument(v.front());
    }
    return items;
}

std::vector<QuestionnaireItem> load_dospert_items(const std::string& path) {
    auto items = load_items(path);
    for (const auto& it : items) {
        if (!it.domain) throw std::invalid_argument(it.id + ": DOSPERT item without domain");
        if (!it.choices.empty()) throw std::invalid_argument(it.id + ": DOSPERT items take Likert answers");
    }
    return items;
}

std::string_view category_name(GLCategory c) {
    switch (c) {
        case GLCategory::Low: return "Low";
        case GLCategory::BelowAverage: return "Below-average";
        case GLCategory::Average: return "Average";
        case GLCategory::AboveAverage: return "Above-average";
        case GLCategory::High: return "High";
    }
    return "?";
}

GLCategory classify_gl(int total) {
    if (total >= 33) return GLCategory::High;
    if (total >= 29) return GLCategory::AboveAverage;
    if (total >= 23) return GLCategory::Average;
    if (total >= 19) return GLCategory::BelowAverage;
    return GLCategory::Low;
}

GLScore score_grable_lytton(std::span<const QuestionnaireItem> items, const std::map<std::string, char>& answers) {
    GLScore s;
    for (const auto& item : items) {
        const auto it = answers.find(item.id);
        if (it == answers.end()) throw std::invalid_argument("missing answer for " + item.id);
        const ItemChoice* c = item.choice(it->second);
        if (c == nullptr) throw std::invalid_argument("invalid letter '" + std::string(1, it->second) + "' for " + item.id);
        s.total += c->score;
    }
    if (answers.size() != items.size()) throw std::invalid_argument("answers reference unknown items");
    s.category = classify_gl(s.total);
    return s;
}

std::vector<GLRunSummary> aggregate_gl_runs(std::span<const QuestionnaireItem> items,
                                            std::span<const SurveyResponse> responses) {
    using Key = std::pair<int, int>;  // (tone or -1, run index)
    std::map<Key, std::map<std::string, char>> runs;
    std::map<Key, bool> broken;
    for (const auto& r : responses) {
        const Key k{r.tone ? static_cast<int>(*r.tone) : -1, r.run_index};
        if (r.letter) {
            runs[k][r.item_id] = *r.letter;
        } else {
            broken[k] = true;
            runs[k];
        }
    }
    std::map<int, GLRunSummary> by_tone;
    for (const auto& [k, answers] : runs) {
        auto& summary = by_tone[k.first];
        if (k.first >= 0) summary.tone = static_cast<PromptTone>(k.first);
        if (broken[k]) {
            ++summary.dropped_runs;
            continue;
        }
        try {
            summary.totals.push_back(score_grable_lytton(items, answers).total);
        } catch (const std::invalid_argument&) {
            ++summary.dropped_runs;
        }
    }
    std::vector<GLRunSummary> out;
    for (auto& [tone, s] : by_tone) {
        if (!s.totals.empty()) {
            double sum = 0.0;
            for (int t : s.totals) sum += t;
            s.mean = sum / static_cast<double>(s.totals.size());
            double ss = 0.0;
            for (int t : s.totals) ss += (t - s.mean) * (t - s.mean);
            s.sd = s.totals.size() > 1 ? std::sqrt(ss / static_cast<double>(s.totals.size() - 1)) : 0.0;
            s.category = classify_gl(static_cast<int>(std::lround(s.mean)));
        }
        out.push_back(s);
    }
    return out;
}

DospertScores score_dospert(std::span<const QuestionnaireItem> items, std::span<const SurveyResponse> responses) {
    std::map<std::string, Domain> domain_of;
    for (const auto& it : items) {
        if (it.domain) domain_of[it.id] = *it.domain;
    }
    std::map<std::pair<std::string, Dimension>, std::pair<double, int>> sums;
    for (const auto& r : responses) {
        if (!r.dimension || !domain_of.contains(r.item_id)) continue;
        if (!r.extracted || *r.extracted < 1 || *r.extracted > 7) continue;
        auto& s = sums[{r.item_id, *r.dimension}];
        s.first += *r.extracted;
        ++s.second;
    }
    DospertScores out;
    std::map<std::pair<Domain, Dimension>, std::pair<double, int>> dom;
    for (const auto& [key, s] : sums) {
        const ItemMean m{s.first / s.second, s.second};
        out.items[key] = m;
        auto& d = dom[{domain_of[key.first], key.second}];
        d.first += m.mean;
        ++d.second;
    }
    for (const auto& [key, d] : dom) out.domains[key] = d.first / d.second;
    return out;
}

std::optional<int> extract_likert(std::string_view raw_text) {
    static const std::regex echo_ranges[] = {
        std::regex(R"([1-7]\s*\([^)]*\)\s*(to|-)\s*[1-7]\s*\([^)]*\))", std::regex::icase),
        std::regex(R"(between\s+1\s+and\s+7)", std::regex::icase),
        std::regex(R"(\b1\s*(to|-)\s*7\b)", std::regex::icase),
        std::regex(R"(\bscale of\s+1\b)", std::regex::icase),
    };
    static const std::regex parenthesised(R"(\(([1-7])\))");
    static const std::regex phrased(
        R"(\b(?:score|rating|answer|rate(?:\s+it)?|would\s+be|is)\s*(?:of|is|:|would\s+be)?\s*(?:an?\s+)?([1-7])\b)",
        std::regex::icase);
    static const std::regex bare(R"(\b([1-7])\b)");

    std::string text(raw_text);
    for (const auto& re : echo_ranges) text = std::regex_replace(text, re, " ");
    std::smatch m;
    for (const auto* re : {&parenthesised, &phrased, &bare}) {
        if (std::regex_search(text, m, *re)) return m[1].str()[0] - '0';
    }
    return std::nullopt;
}

std::optional<char> extract_choice_letter(std::string_view raw_text, std::string_view allowed) {
    if (allowed.empty()) throw std::invalid_argument("extract_choice_letter: empty allowed set");
    auto resolve = [&](char c) -> std::optional<char> {
        for (char a : allowed) {
            if (lower(a) == lower(c)) return a;
        }
        return std::nullopt;
    };
    const std::string text(raw_text);
    auto first_allowed = [&](const std::regex& re) -> std::optional<char> {
        for (std::sregex_iterator it(text.begin(), text.end(), re), end; it != end; ++it) {
            if (auto r = resolve((*it)[1].str()[0])) return r;
        }
        return std::nullopt;
    };

    static const std::regex anchored(R"(answer\s*(?:is)?\s*[:\-]?\s*\(?([A-Za-z])\)?(?![A-Za-z]))", std::regex::icase);
    static const std::regex named(R"((?:option|choice)\s*\(?([A-Za-z])\)?(?![A-Za-z])|\(([A-Za-z])\))",
                                  std::regex::icase);
    static const std::regex upper_standalone(R"(\b([A-Z])\b)");

    if (auto r = first_allowed(anchored)) return r;
    for (std::sregex_iterator it(text.begin(), text.end(), named), end; it != end; ++it) {
        const std::string g = (*it)[1].matched ? (*it)[1].str() : (*it)[2].str();
        if (auto r = resolve(g[0])) return r;
    }
    std::string trimmed;
    for (char c : text) {
        if (!std::isspace(static_cast<unsigned char>(c)) && c != '.' && c != ')' && c != '(' && c != ':') trimmed += c;
    }
    if (trimmed.size() == 1) {
        if (auto r = resolve(trimmed[0])) return r;
    }
    return first_allowed(upper_standalone);
}

void write_response_log_csv(const std::string& path, const std::vector<SurveyResponse>& responses) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "model_id,prompt_tone,variant,item_id,dimension,run_index,raw_answer,extracted,score,attempts\n";
    for (const auto& r : responses) {
        std::string extracted;
        if (r.letter) {
            extracted = std::string(1, *r.letter);
        } else if (r.extracted) {
            extracted = std::to_string(*r.extracted);
        }
        out << csv_field(r.model_id) << ',' << (r.tone ? tone_name(*r.tone) : "") << ',' << r.variant << ','
            << csv_field(r.item_id) << ',' << (r.dimension ? dimension_name(*r.dimension) : "") << ','
            << r.run_index << ',' << csv_field(r.raw_text) << ',' << extracted << ','
            << (r.extracted ? std::to_string(*r.extracted) : "") << ',' << r.attempts << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<SurveyResponse> read_response_log_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    auto rows = parse_csv(in);
    std::vector<SurveyResponse> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i];
        if (f.size() == 1 && f[0].empty()) continue;
        if (f.size() != 10) throw std::runtime_error(path + ": malformed row " + std::to_string(i));
        SurveyResponse r;
        r.model_id = f[0];
        if (!f[1].empty()) r.tone = parse_tone(f[1]);
        r.variant = std::stoi(f[2]);
        r.item_id = f[3];
        if (!f[4].empty()) r.dimension = parse_dimension(f[4]);
        r.run_index = std::stoi(f[5]);
        r.raw_text = f[6];
        if (!f[7].empty() && std::isalpha(static_cast<unsigned char>(f[7][0]))) r.letter = f[7][0];
        if (!f[8].empty()) r.extracted = std::stoi(f[8]);
        r.attempts = std::stoi(f[9]);
        out.push_back(std::move(r));
    }
    return out;
}

void write_radar_csv(const std::string& path, const DospertScores& scores) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "domain,dimension,mean\n";
    for (auto d : kAllDomains) {
        for (auto dim : kAllDimensions) {
            const auto it = scores.domains.find({d, dim});
            out << domain_name(d) << ',' << dimension_name(dim) << ','
                << (it == scores.domains.end() ? std::string() : format_mean(it->second)) << '\n';
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace riskpref

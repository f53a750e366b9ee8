// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#include "allocator.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace reca::alloc {

namespace {

bool is_word_byte(unsigned char ch) { return std::isalnum(ch) || ch == '_' || ch >= 0x80; }

std::set<std::string> word_set(std::string_view text) {
    std::set<std::string> out;
    std::string cur;
    for (unsigned char ch : text) {
        if (is_word_byte(ch)) {
            cur.push_back(static_cast<char>(std::tolower(ch)));
        } else if (!cur.empty()) {
            out.insert(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.insert(std::move(cur));
    return out;
}

}  // namespace

int ApproxTokenCounter::count(std::string_view text) const {
    int n = 0;
    bool in_word = false;
    for (unsigned char ch : text) {
        if (is_word_byte(ch)) {
            if (!in_word) ++n;
            in_word = true;
        } else {
            in_word = false;
            if (!std::isspace(ch)) ++n;
        }
    }
    return n;
}

const TokenCounter& default_counter() {
    static const ApproxTokenCounter counter;
    return counter;
}

const char* to_string(Section s) noexcept {
    switch (s) {
        case Section::current_beat: return "current_beat";
        case Section::anchor_locked_state: return "anchor_locked_state";
        case Section::active_entities: return "active_entities";
        case Section::local_action: return "local_action";
        case Section::camera_style_constraints: return "camera_style_constraints";
        case Section::transition_boundary: return "transition_boundary";
    }
    return "?";
}

Section section_from_string(const std::string& s) {
    for (auto sec : kSections) {
        if (s == to_string(sec)) return sec;
    }
    fail(ErrorCode::parse, "unknown prompt section \"" + s + "\"");
}

Section section_for(const state::VariableRecord& r) {
    using state::Category;
    if (r.tag && (*r.tag == "camera" || *r.tag == "style")) return Section::camera_style_constraints;
    switch (r.category) {
        case Category::visual:
            return r.provenance == state::Provenance::anchor ? Section::anchor_locked_state
                                                             : Section::active_entities;
        case Category::narrative: return Section::local_action;
        case Category::transition: return Section::transition_boundary;
    }
    return Section::active_entities;
}

double utility(const CandidateItem& item) { return item.support * item.salience * item.fresh; }

CandidateItem make_item(const std::string& key, const std::string& value, Section section,
                        double support, double salience, double fresh, const TokenCounter& counter) {
    CandidateItem it;
    it.key = key;
    it.value = value;
    it.text = key + " = " + value;
    it.section = section;
    it.token_cost = counter.count(it.text);
    it.support = support;
    it.salience = salience;
    it.fresh = fresh;
    return it;
}

double text_overlap(std::string_view a, std::string_view b) {
    auto sa = word_set(a);
    auto sb = word_set(b);
    if (sa.empty() && sb.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& w : sa) inter += sb.count(w);
    return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

namespace {

// Overlap is measured on the described value; keys of one entity share
// prefixes by construction and are not redundant with each other.
std::string_view overlap_text(const CandidateItem& it) {
    return it.value.empty() ? std::string_view(it.text) : std::string_view(it.value);
}

}  // namespace

Selection select(std::vector<CandidateItem> pool, int budget, const SelectOptions& opt) {
    require(budget > 0, ErrorCode::precondition, "select: budget must be > 0");
    require(opt.lambda_red >= 0.0, ErrorCode::precondition, "select: lambda_red must be >= 0");
    require(opt.scaffold_tokens >= 0, ErrorCode::precondition, "select: negative scaffolding");
    if (budget < opt.scaffold_tokens) {
        fail(ErrorCode::budget_too_small, "budget " + std::to_string(budget) +
                                              " is below the scaffolding minimum " +
                                              std::to_string(opt.scaffold_tokens));
    }
    for (const auto& it : pool) {
        require(it.token_cost > 0, ErrorCode::precondition, "select: item " + it.key + " has no cost");
    }
    std::stable_sort(pool.begin(), pool.end(), [](const CandidateItem& a, const CandidateItem& b) {
        const double ua = utility(a), ub = utility(b);
        if (ua != ub) return ua > ub;
        if (a.token_cost != b.token_cost) return a.token_cost < b.token_cost;
        if (a.key != b.key) return a.key < b.key;
        return a.text < b.text;
    });

    Selection sel;
    sel.budget = budget;
    sel.scaffold_tokens = opt.scaffold_tokens;
    const int usable = budget - opt.scaffold_tokens;
    std::set<std::string> keys;
    for (auto& it : pool) {
        const double u = utility(it);
        if (!(u > 0.0)) {
            sel.skipped.push_back({it.key, SkipReason::non_positive_utility});
            continue;
        }
        if (keys.count(it.key)) {
            sel.skipped.push_back({it.key, SkipReason::duplicate_key});
            continue;
        }
        if (sel.total_cost + it.token_cost > usable) {
            sel.skipped.push_back({it.key, SkipReason::over_budget});
            continue;
        }
        if (opt.lambda_red > 0.0 && !opt.pinned.count(it.key)) {
            double red = 0.0;
            for (const auto& s : sel.items) red += text_overlap(overlap_text(it), overlap_text(s));
            if (opt.lambda_red * red > u) {
                sel.skipped.push_back({it.key, SkipReason::redundant});
                continue;
            }
        }
        keys.insert(it.key);
        sel.total_cost += it.token_cost;
        sel.total_utility += u;
        sel.items.push_back(std::move(it));
    }
    return sel;
}

// ---- compile -------------------------------------------------------------------------

namespace {

std::string header(Section s) { return std::string("[") + to_string(s) + "]:"; }

CompiledPrompt render(const std::vector<CandidateItem>& items, const std::string& goal,
                      const Boundary& boundary, int budget, const TokenCounter& counter) {
    CompiledPrompt p;
    p.goal = goal;
    p.boundary = boundary;
    p.budget = budget;
    std::ostringstream out;
    int offset = 0;
    auto emit = [&](const std::string& line) {
        out << line << '\n';
        offset += counter.count(line);
    };
    for (auto sec : kSections) {
        std::string head = header(sec);
        if (sec == Section::current_beat && !goal.empty()) head += " " + goal;
        if (sec == Section::transition_boundary && !boundary.text.empty()) head += " " + boundary.text;
        emit(head);
        for (const auto& it : items) {
            if (it.section != sec) continue;
            PromptEntry e{sec, it.key, it.value, it.text, offset, it.token_cost, utility(it)};
            emit(it.text);
            p.entries.push_back(std::move(e));
            p.source_keys.insert(it.key);
        }
    }
    p.text = out.str();
    p.token_count = offset;
    return p;
}

}  // namespace

int scaffold_for(const std::string& goal, const Boundary& boundary, const TokenCounter& counter) {
    int n = 0;
    for (auto sec : kSections) n += counter.count(header(sec));
    return n + counter.count(goal) + counter.count(boundary.text);
}

std::vector<const PromptEntry*> CompiledPrompt::section(Section s) const {
    std::vector<const PromptEntry*> out;
    for (const auto& e : entries) {
        if (e.section == s) out.push_back(&e);
    }
    return out;
}

CompiledPrompt compile(const Selection& slice, const std::string& goal, const Boundary& boundary,
                       int budget, const TokenCounter& counter) {
    require(budget > 0, ErrorCode::precondition, "compile: budget must be > 0");
    std::vector<CandidateItem> items = slice.items;
    auto p = render(items, goal, boundary, budget, counter);
    while (p.token_count > budget && !items.empty()) {
        auto victim = std::min_element(items.begin(), items.end(),
                                       [](const CandidateItem& a, const CandidateItem& b) {
                                           const double ua = utility(a), ub = utility(b);
                                           if (ua != ub) return ua < ub;
                                           if (a.token_cost != b.token_cost) return a.token_cost > b.token_cost;
                                           return a.key > b.key;
                                       });
        log(LogLevel::warn, "compile: prompt of " + std::to_string(p.token_count) +
                                " tokens exceeds budget " + std::to_string(budget) + "; dropping " +
                                victim->key);
        items.erase(victim);
        p = render(items, goal, boundary, budget, counter);
    }
    if (p.token_count > budget) {
        fail(ErrorCode::budget_too_small, "compile: goal and boundary alone need " +
                                              std::to_string(p.token_count) + " tokens, budget " +
                                              std::to_string(budget));
    }
    return p;
}

Json to_json(const CompiledPrompt& p) {
    Json sections = Json::array();
    for (auto sec : kSections) {
        Json items = Json::array();
        for (const auto* e : p.section(sec)) {
            items.push_back({{"key", e->key},
                             {"value", e->value},
                             {"text", e->text},
                             {"start_token", e->start_token},
                             {"token_cost", e->token_cost},
                             {"utility", e->utility}});
        }
        sections.push_back({{"name", to_string(sec)}, {"items", std::move(items)}});
    }
    Json doc;
    doc["schema"] = kPromptSchema;
    doc["goal"] = p.goal;
    doc["boundary"] = {{"mode", plan::to_string(p.boundary.mode)},
                       {"ref", p.boundary.ref},
                       {"text", p.boundary.text}};
    doc["budget"] = p.budget;
    doc["token_count"] = p.token_count;
    doc["source_keys"] = Json(std::vector<std::string>(p.source_keys.begin(), p.source_keys.end()));
    doc["sections"] = std::move(sections);
    doc["text"] = p.text;
    return doc;
}

CompiledPrompt prompt_from_json(const Json& doc) {
    expect_schema(doc, kPromptSchema);
    try {
        std::vector<CandidateItem> items;
        for (const auto& s : doc.at("sections")) {
            auto sec = section_from_string(s.at("name").get<std::string>());
            for (const auto& e : s.at("items")) {
                CandidateItem it;
                it.key = e.at("key").get<std::string>();
                it.value = e.at("value").get<std::string>();
                it.text = e.at("text").get<std::string>();
                it.section = sec;
                it.token_cost = e.at("token_cost").get<int>();
                // Stored utility is reproduced exactly through the salience slot.
                it.support = 1.0;
                it.fresh = 1.0;
                it.salience = e.at("utility").get<double>();
                items.push_back(std::move(it));
            }
        }
        Boundary b;
        const auto& bj = doc.at("boundary");
        b.mode = plan::boundary_mode_from_string(bj.at("mode").get<std::string>());
        b.ref = bj.at("ref").get<std::string>();
        b.text = bj.at("text").get<std::string>();
        auto p = render(items, doc.at("goal").get<std::string>(), b, doc.at("budget").get<int>(),
                        default_counter());
        require(p.text == doc.at("text").get<std::string>(), ErrorCode::schema,
                "reca-prompt/1: rendered text does not match the stored sections");
        return p;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::parse, std::string("reca-prompt/1: ") + e.what());
    }
}

// ---- decomposition ----------------------------------------------------------------------

std::vector<UnitSpec> decompose_shot(const plan::ShotSpec& shot, int tau_g) {
    require(tau_g > 0, ErrorCode::precondition, "decompose_shot: tau_g must be > 0");
    std::vector<int> parts;
    if (!shot.units.empty()) {
        int sum = 0;
        for (int d : shot.units) {
            require(d > 0 && d <= tau_g, ErrorCode::precondition,
                    "shot " + std::to_string(shot.index) + ": explicit unit of " +
                        std::to_string(d) + " s exceeds tau_G " + std::to_string(tau_g));
            sum += d;
        }
        require(sum == shot.duration, ErrorCode::precondition,
                "shot " + std::to_string(shot.index) + ": units do not sum to the shot duration");
        parts = shot.units;
    } else {
        parts = plan::balanced_split(shot.duration, tau_g);
    }
    const auto m = static_cast<int>(parts.size());
    std::vector<UnitSpec> out;
    for (int j = 0; j < m; ++j) {
        UnitSpec u;
        u.shot_index = shot.index;
        u.unit_index = j + 1;
        u.goal = m == 1 ? shot.goal
                        : shot.goal + " (part " + std::to_string(j + 1) + " of " + std::to_string(m) + ")";
        u.duration = parts[static_cast<std::size_t>(j)];
        u.preserved_keys = shot.preserved_keys;
        u.salience = shot.salience;
        u.boundary_mode = j == 0 ? shot.boundary_mode : plan::BoundaryMode::prev_last_frame;
        out.push_back(std::move(u));
    }
    return out;
}

}  // namespace reca::alloc

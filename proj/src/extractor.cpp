#include "fstab/extractor.hpp"

#include "context_detail.hpp"
#include "fstab/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <stdexcept>
#include <unordered_map>
#include <variant>

namespace fstab {

language language_for(const std::filesystem::path& file) {
    auto ext = file.extension().string();
    std::ranges::transform(ext, ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".py" || ext == ".pyw") {
        return language::python;
    }
    if (ext == ".js" || ext == ".jsx" || ext == ".mjs" || ext == ".cjs") {
        return language::javascript;
    }
    if (ext == ".ts" || ext == ".tsx" || ext == ".mts" || ext == ".cts") {
        return language::typescript;
    }
    return language::other;
}

struct source_file::impl {
    std::string text;
    language lang;
    detail::line_table lines;
    std::variant<std::monostate, std::shared_ptr<const detail::python_model>,
                 std::shared_ptr<const detail::javascript_model>>
            model;

    impl(std::string t, language l) : text(std::move(t)), lang(l), lines(text) {
        switch (lang) {
        case language::python:
            if (auto m = detail::parse_python(lines)) {
                model = std::move(m);
            }
            break;
        case language::javascript:
        case language::typescript:
            if (auto m = detail::parse_javascript(lines)) {
                model = std::move(m);
            }
            break;
        case language::other:
            break;
        }
    }
};

source_file::source_file(std::string text, language lang) : impl_(std::make_unique<impl>(std::move(text), lang)) {}
source_file::~source_file() = default;
source_file::source_file(source_file&&) noexcept = default;
source_file& source_file::operator=(source_file&&) noexcept = default;

int source_file::line_count() const noexcept { return impl_->lines.count(); }

bool source_file::parsed() const noexcept {
    return impl_->lang == language::other || !std::holds_alternative<std::monostate>(impl_->model);
}

code_context source_file::context_at(int line) const {
    const auto& lines = impl_->lines;
    if (line < 1 || line > lines.count()) {
        throw std::out_of_range("line " + std::to_string(line) + " outside file of " +
                                std::to_string(lines.count()) + " lines");
    }
    switch (impl_->lang) {
    case language::python:
        if (const auto* m = std::get_if<std::shared_ptr<const detail::python_model>>(&impl_->model)) {
            return detail::python_context(lines, **m, line);
        }
        return detail::window_context(lines, line, true, true);
    case language::javascript:
    case language::typescript:
        if (const auto* m = std::get_if<std::shared_ptr<const detail::javascript_model>>(&impl_->model)) {
            return detail::javascript_context(lines, **m, line);
        }
        if (auto ctx = detail::javascript_pattern_context(lines, line)) {
            return std::move(*ctx);
        }
        return detail::window_context(lines, line, false, true);
    case language::other:
        break;
    }
    return detail::window_context(lines, line, false, false);
}

code_context extract_context(std::string_view source, int line, language lang) {
    return source_file(std::string(source), lang).context_at(line);
}

namespace {

    bool contains_icase(std::string_view haystack, std::string_view needle) {
        if (needle.empty()) {
            return false;
        }
        auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(), [](char a, char b) {
            return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
        });
        return it != haystack.end();
    }

    const std::regex& compiled(const std::string& pattern) {
        thread_local std::unordered_map<std::string, std::regex> cache;
        auto it = cache.find(pattern);
        if (it == cache.end()) {
            it = cache.emplace(pattern, std::regex(pattern, std::regex::ECMAScript | std::regex::icase)).first;
        }
        return it->second;
    }

    bool api_pattern_matches(const std::string& pattern, std::string_view text) {
        if (pattern.starts_with("re:")) {
            return std::regex_search(text.begin(), text.end(), compiled(pattern.substr(3)));
        }
        return contains_icase(text, pattern);
    }

    bool route_keyword_matches(std::string_view keyword, const std::set<std::string>& routes) {
        auto b = keyword.find_first_not_of('/');
        auto e = keyword.find_last_not_of('/');
        if (b == std::string_view::npos) {
            return false;
        }
        auto core = keyword.substr(b, e - b + 1);
        if (core.find('/') != std::string_view::npos) {
            std::string lowered(core);
            std::ranges::transform(lowered, lowered.begin(),
                                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            return routes.contains(lowered);
        }
        return keyword_matches(core, routes);
    }

    std::string normalized_keyword(std::string_view k) {
        auto pieces = split_identifier(k);
        std::string out;
        for (const auto& p : pieces) {
            if (!out.empty()) {
                out += '_';
            }
            out += p;
        }
        return out;
    }

}  // namespace

double score_action(const action_spec& action, const code_context& ctx, const weights& w) {
    double fn = 0.0;
    double id = 0.0;
    double str = 0.0;
    std::set<std::string> seen;
    for (const auto& k : action.keywords) {
        if (!seen.insert(normalized_keyword(k)).second) {
            continue;
        }
        if (keyword_matches(k, ctx.function_names)) {
            fn += w.w_fn;
        }
        if (keyword_matches(k, ctx.identifiers)) {
            id += w.w_id;
        }
        if (keyword_matches(k, ctx.string_literals)) {
            str += w.w_str;
        }
    }
    double score = fn + std::min(id, w.cap_id) + std::min(str, w.cap_str);

    if (std::ranges::any_of(action.route_keywords,
                            [&](const std::string& r) { return route_keyword_matches(r, ctx.route_tokens); })) {
        score += w.w_route;
    }
    if (std::ranges::any_of(action.api_patterns,
                            [&](const std::string& p) { return api_pattern_matches(p, ctx.raw_text); })) {
        score += w.w_api;
    }

    std::set<std::string> negatives;
    for (const auto& n : action.negative_keywords) {
        if (keyword_matches(n, ctx.identifiers) || keyword_matches(n, ctx.string_literals)) {
            negatives.insert(normalized_keyword(n));
        }
    }
    score -= w.w_neg * static_cast<double>(negatives.size());
    return score;
}

classification classify_line(const code_context& ctx, std::span<const action_spec> actions, const weights& w) {
    if (actions.empty()) {
        throw std::invalid_argument("classify_line: empty taxonomy");
    }
    const action_spec* best = nullptr;
    double best_score = 0.0;
    for (const auto& a : actions) {
        double s = score_action(a, ctx, w);
        if (best == nullptr || s > best_score || (s == best_score && a.action_id < best->action_id)) {
            best = &a;
            best_score = s;
        }
    }
    if (best_score <= w.assign_threshold) {
        return {std::string(unknown_action), best_score};
    }
    return {best->action_id, best_score};
}

}  // namespace fstab

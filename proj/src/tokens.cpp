#include "context_detail.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace fstab {

namespace {

    // Longest run of pieces joined into one match form. Keeps long string
    // literals from producing quadratic form sets.
    constexpr std::size_t max_ngram = 5;

    bool is_lower(char c) { return std::islower(static_cast<unsigned char>(c)) != 0; }
    bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
    bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
    bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

    std::string lowercase(std::string_view s) {
        std::string out(s);
        std::ranges::transform(out, out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return out;
    }

    std::string_view trim(std::string_view s) {
        auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string_view::npos) {
            return {};
        }
        auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

}  // namespace

std::vector<std::string> split_identifier(std::string_view ident) {
    std::vector<std::string> pieces;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            pieces.push_back(lowercase(cur));
            cur.clear();
        }
    };
    for (std::size_t i = 0; i < ident.size(); ++i) {
        char c = ident[i];
        if (!is_alnum(c)) {
            flush();
            continue;
        }
        if (!cur.empty()) {
            char prev = cur.back();
            bool lower_to_upper = (is_lower(prev) || is_digit(prev)) && is_upper(c);
            // "HTMLParser": split before the 'P' that starts a lowercase run.
            bool acronym_end = is_upper(prev) && is_upper(c) && i + 1 < ident.size() && is_lower(ident[i + 1]);
            if (lower_to_upper || acronym_end) {
                flush();
            }
        }
        cur.push_back(c);
    }
    flush();
    return pieces;
}

void add_match_forms(std::string_view raw, std::set<std::string>& out) {
    auto t = trim(raw);
    if (t.empty()) {
        return;
    }
    out.insert(lowercase(t));
    auto pieces = split_identifier(t);
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        std::string joined;
        for (std::size_t j = i; j < pieces.size() && j - i < max_ngram; ++j) {
            if (j > i) {
                joined.push_back('_');
            }
            joined += pieces[j];
            out.insert(joined);
        }
    }
}

bool keyword_matches(std::string_view keyword, const std::set<std::string>& forms) {
    auto lowered = lowercase(trim(keyword));
    if (lowered.empty()) {
        return false;
    }
    if (forms.contains(lowered)) {
        return true;
    }
    auto pieces = split_identifier(lowered);
    if (pieces.empty()) {
        return false;
    }
    std::string joined = pieces.front();
    for (std::size_t i = 1; i < pieces.size(); ++i) {
        joined += '_';
        joined += pieces[i];
    }
    return forms.contains(joined);
}

}  // namespace fstab

namespace fstab::detail {

line_table::line_table(std::string_view source) : source_(source) {
    // A trailing newline terminates the last line rather than opening a new one.
    std::size_t start = 0;
    while (start < source.size()) {
        auto nl = source.find('\n', start);
        auto end = nl == std::string_view::npos ? source.size() : nl;
        auto text = source.substr(start, end - start);
        if (!text.empty() && text.back() == '\r') {
            text.remove_suffix(1);
        }
        lines_.push_back(text);
        offsets_.push_back(start);
        start = end + 1;
    }
}

std::string_view line_table::text(int first, int last) const {
    auto b = offset(first);
    auto e = offset(last) + lines_.at(static_cast<std::size_t>(last - 1)).size();
    return source_.substr(b, e - b);
}

void add_route_tokens(const route_decl& route, std::set<std::string>& out) {
    std::vector<std::string> segments;
    std::string_view path = route.path;
    std::size_t start = 0;
    while (start <= path.size()) {
        auto slash = path.find('/', start);
        auto seg = path.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start);
        // Drop the query string and parameter placeholders like <int:id>, {id}, :id.
        if (auto q = seg.find('?'); q != std::string_view::npos) {
            seg = seg.substr(0, q);
        }
        bool placeholder = !seg.empty() && (seg.front() == '<' || seg.front() == '{' || seg.front() == ':' ||
                                            seg.front() == '$' || seg.front() == '[');
        if (!seg.empty() && !placeholder) {
            segments.push_back(lowercase(seg));
        }
        if (slash == std::string_view::npos) {
            break;
        }
        start = slash + 1;
    }
    for (std::size_t i = 0; i < segments.size(); ++i) {
        add_match_forms(segments[i], out);
        std::string sub = segments[i];
        for (std::size_t j = i + 1; j < segments.size(); ++j) {
            sub += '/';
            sub += segments[j];
            out.insert(sub);
        }
    }
    for (const auto& m : route.methods) {
        out.insert(lowercase(m));
    }
}

void collect_tolerant_tokens(std::string_view text, bool hash_comments, code_context& ctx) {
    std::size_t i = 0;
    const auto n = text.size();
    while (i < n) {
        char c = text[i];
        if (hash_comments && c == '#') {
            while (i < n && text[i] != '\n') {
                ++i;
            }
            continue;
        }
        if (!hash_comments && c == '/' && i + 1 < n && text[i + 1] == '/') {
            while (i < n && text[i] != '\n') {
                ++i;
            }
            continue;
        }
        if (!hash_comments && c == '/' && i + 1 < n && text[i + 1] == '*') {
            auto end = text.find("*/", i + 2);
            i = end == std::string_view::npos ? n : end + 2;
            continue;
        }
        if (c == '"' || c == '\'' || c == '`') {
            std::size_t j = i + 1;
            while (j < n && text[j] != c && (c == '`' || text[j] != '\n')) {
                j += text[j] == '\\' ? 2 : 1;
            }
            j = std::min(j, n);
            add_match_forms(text.substr(i + 1, j - i - 1), ctx.string_literals);
            i = j < n ? j + 1 : n;
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$') {
            std::size_t j = i;
            while (j < n && (is_alnum(text[j]) || text[j] == '_' || text[j] == '$')) {
                ++j;
            }
            auto word = text.substr(i, j - i);
            bool keyword = hash_comments ? is_python_keyword(word) : is_javascript_keyword(word);
            if (!keyword) {
                add_match_forms(word, ctx.identifiers);
            }
            i = j;
            continue;
        }
        ++i;
    }
}

code_context window_context(const line_table& lines, int line, bool hash_comments, bool fallback) {
    code_context ctx;
    ctx.first_line = std::max(1, line - window_radius);
    ctx.last_line = std::min(lines.count(), line + window_radius);
    ctx.raw_text = std::string(lines.text(ctx.first_line, ctx.last_line));
    ctx.window_fallback = fallback;
    collect_tolerant_tokens(ctx.raw_text, hash_comments, ctx);
    return ctx;
}

code_context module_context(const line_table& lines, bool hash_comments) {
    code_context ctx;
    ctx.first_line = 1;
    ctx.last_line = lines.count();
    ctx.raw_text = std::string(lines.text(1, lines.count()));
    collect_tolerant_tokens(ctx.raw_text, hash_comments, ctx);
    return ctx;
}

bool is_python_keyword(std::string_view word) noexcept {
    static constexpr std::array<std::string_view, 35> words{
            "False", "None",   "True",    "and",      "as",       "assert", "async", "await", "break",
            "class", "continue", "def",   "del",      "elif",     "else",   "except", "finally", "for",
            "from",  "global", "if",      "import",   "in",       "is",     "lambda", "nonlocal", "not",
            "or",    "pass",   "raise",   "return",   "try",      "while",  "with",  "yield"};
    return std::ranges::find(words, word) != words.end();
}

bool is_javascript_keyword(std::string_view word) noexcept {
    static constexpr std::array<std::string_view, 45> words{
            "async",  "await",    "break",   "case",      "catch",  "class",     "const",  "continue", "debugger",
            "default", "delete",  "do",      "else",      "export", "extends",   "false",  "finally",  "for",
            "from",   "function", "if",      "import",    "in",     "instanceof", "let",   "new",      "null",
            "of",     "return",   "static",  "super",     "switch", "this",      "throw",  "true",     "try",
            "typeof", "undefined", "var",    "void",      "while",  "with",      "yield",  "interface", "type"};
    return std::ranges::find(words, word) != words.end();
}

}  // namespace fstab::detail

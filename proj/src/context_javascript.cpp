#include "context_detail.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>

namespace fstab::detail {

namespace {

    enum class tok { ident, string, number, punct, regex };

    struct js_token {
        tok kind{};
        std::string text;
        int line{};
    };

    bool ident_start(char c) {
        return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '$';
    }
    bool ident_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '$';
    }

    bool regex_may_follow(const std::vector<js_token>& toks) {
        if (toks.empty()) {
            return true;
        }
        const auto& prev = toks.back();
        if (prev.kind == tok::punct) {
            return prev.text != ")" && prev.text != "]" && prev.text != "}";
        }
        if (prev.kind == tok::ident) {
            static constexpr std::array<std::string_view, 12> before_expr{
                    "return", "typeof", "case", "do", "else", "in", "of", "new", "delete", "void", "throw", "yield"};
            return std::ranges::find(before_expr, prev.text) != before_expr.end();
        }
        return false;
    }

    // Lexes JavaScript/TypeScript. Returns nullopt on unterminated literals.
    std::optional<std::vector<js_token>> lex(std::string_view text) {
        std::vector<js_token> toks;
        int line = 1;
        std::size_t i = 0;
        const auto n = text.size();

        auto skip_quoted = [&](std::size_t start, char q, std::string& content) -> std::optional<std::size_t> {
            std::size_t j = start + 1;
            while (j < n) {
                char c = text[j];
                if (c == '\\' && j + 1 < n) {
                    if (text[j + 1] == '\n') {
                        ++line;
                    }
                    content.push_back(text[j + 1]);
                    j += 2;
                    continue;
                }
                if (c == q) {
                    return j + 1;
                }
                if (c == '\n') {
                    return std::nullopt;
                }
                content.push_back(c);
                ++j;
            }
            return std::nullopt;
        };

        // Template literal; substitutions are skipped by brace counting.
        auto skip_template = [&](std::size_t start, std::string& content) -> std::optional<std::size_t> {
            std::size_t j = start + 1;
            while (j < n) {
                char c = text[j];
                if (c == '\\' && j + 1 < n) {
                    content.push_back(text[j + 1]);
                    j += 2;
                    continue;
                }
                if (c == '`') {
                    return j + 1;
                }
                if (c == '$' && j + 1 < n && text[j + 1] == '{') {
                    int depth = 1;
                    j += 2;
                    while (j < n && depth > 0) {
                        if (text[j] == '{') {
                            ++depth;
                        }
                        else if (text[j] == '}') {
                            --depth;
                        }
                        else if (text[j] == '\n') {
                            ++line;
                        }
                        ++j;
                    }
                    content.push_back(' ');
                    continue;
                }
                if (c == '\n') {
                    ++line;
                }
                content.push_back(c);
                ++j;
            }
            return std::nullopt;
        };

        while (i < n) {
            char c = text[i];
            if (c == '\n') {
                ++line;
                ++i;
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c)) != 0) {
                ++i;
                continue;
            }
            if (c == '/' && i + 1 < n && text[i + 1] == '/') {
                while (i < n && text[i] != '\n') {
                    ++i;
                }
                continue;
            }
            if (c == '/' && i + 1 < n && text[i + 1] == '*') {
                auto end = text.find("*/", i + 2);
                if (end == std::string_view::npos) {
                    return std::nullopt;
                }
                line += static_cast<int>(std::count(text.begin() + static_cast<std::ptrdiff_t>(i),
                                                    text.begin() + static_cast<std::ptrdiff_t>(end), '\n'));
                i = end + 2;
                continue;
            }
            if (c == '\'' || c == '"') {
                int start_line = line;
                std::string content;
                auto next = skip_quoted(i, c, content);
                if (!next) {
                    return std::nullopt;
                }
                toks.push_back({tok::string, std::move(content), start_line});
                i = *next;
                continue;
            }
            if (c == '`') {
                int start_line = line;
                std::string content;
                auto next = skip_template(i, content);
                if (!next) {
                    return std::nullopt;
                }
                toks.push_back({tok::string, std::move(content), start_line});
                i = *next;
                continue;
            }
            if (c == '/' && regex_may_follow(toks)) {
                std::size_t j = i + 1;
                bool in_class = false;
                while (j < n && (in_class || text[j] != '/')) {
                    if (text[j] == '\n') {
                        return std::nullopt;
                    }
                    if (text[j] == '\\') {
                        ++j;
                    }
                    else if (text[j] == '[') {
                        in_class = true;
                    }
                    else if (text[j] == ']') {
                        in_class = false;
                    }
                    ++j;
                }
                if (j >= n) {
                    return std::nullopt;
                }
                ++j;
                while (j < n && std::isalpha(static_cast<unsigned char>(text[j])) != 0) {
                    ++j;
                }
                toks.push_back({tok::regex, std::string(text.substr(i, j - i)), line});
                i = j;
                continue;
            }
            if (ident_start(c)) {
                std::size_t j = i;
                while (j < n && ident_char(text[j])) {
                    ++j;
                }
                toks.push_back({tok::ident, std::string(text.substr(i, j - i)), line});
                i = j;
                continue;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) != 0) {
                std::size_t j = i;
                while (j < n && (std::isalnum(static_cast<unsigned char>(text[j])) != 0 || text[j] == '.')) {
                    ++j;
                }
                toks.push_back({tok::number, std::string(text.substr(i, j - i)), line});
                i = j;
                continue;
            }
            if (c == '=' && i + 1 < n && text[i + 1] == '>') {
                toks.push_back({tok::punct, "=>", line});
                i += 2;
                continue;
            }
            if (c == '?' && i + 1 < n && text[i + 1] == '.') {
                toks.push_back({tok::punct, ".", line});
                i += 2;
                continue;
            }
            toks.push_back({tok::punct, std::string(1, c), line});
            ++i;
        }
        return toks;
    }

    bool is_punct(const js_token& t, std::string_view p) { return t.kind == tok::punct && t.text == p; }
    bool is_ident(const js_token& t) { return t.kind == tok::ident; }
    bool is_ident(const js_token& t, std::string_view word) { return t.kind == tok::ident && t.text == word; }

    bool is_control_keyword(std::string_view w) {
        static constexpr std::array<std::string_view, 10> words{"if",     "for",   "while", "switch", "catch",
                                                                "with",   "return", "function", "typeof", "new"};
        return std::ranges::find(words, w) != words.end();
    }

    bool is_route_method(std::string_view w) {
        static constexpr std::array<std::string_view, 10> words{"get",  "post", "put",   "patch", "delete",
                                                                "head", "options", "all", "use", "route"};
        return std::ranges::find(words, w) != words.end();
    }

    bool names_http_method(std::string_view w) { return w != "all" && w != "use" && w != "route"; }

    struct js_function {
        std::size_t start{};  // first token of the header, including an assignment target or route call
        std::size_t body_open{};
        std::size_t body_close{};
        std::string name;
    };

}  // namespace

struct javascript_model {
    std::vector<js_token> tokens;
    std::vector<js_function> functions;
};

namespace {

    // Walks back over `a.b.c` ending at `idx` (an identifier); returns the first token.
    std::size_t member_chain_start(const std::vector<js_token>& t, std::size_t idx) {
        while (idx >= 2 && is_punct(t[idx - 1], ".") && is_ident(t[idx - 2])) {
            idx -= 2;
        }
        return idx;
    }

    // For a header starting at `start`, picks up `name =` / `name:` naming and
    // moves `start` to the assignment target.
    void resolve_assignment(const std::vector<js_token>& t, js_function& fn) {
        auto s = fn.start;
        if (s >= 1 && is_ident(t[s - 1], "async")) {
            --s;
        }
        if (s >= 2 && (is_punct(t[s - 1], "=") || is_punct(t[s - 1], ":")) &&
            (is_ident(t[s - 2]) || t[s - 2].kind == tok::string)) {
            if (fn.name.empty()) {
                fn.name = t[s - 2].text;
            }
            s = is_ident(t[s - 2]) ? member_chain_start(t, s - 2) : s - 2;
        }
        fn.start = s;
    }

}  // namespace

std::shared_ptr<const javascript_model> parse_javascript(const line_table& lines) {
    auto lexed = lex(lines.count() == 0 ? std::string_view{} : lines.text(1, lines.count()));
    if (!lexed) {
        return nullptr;
    }
    auto model = std::make_shared<javascript_model>();
    model->tokens = std::move(*lexed);
    const auto& t = model->tokens;

    std::vector<std::size_t> match(t.size(), 0);
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i].kind != tok::punct) {
            continue;
        }
        const auto& p = t[i].text;
        if (p == "(" || p == "[" || p == "{") {
            stack.push_back(i);
        }
        else if (p == ")" || p == "]" || p == "}") {
            if (stack.empty()) {
                return nullptr;
            }
            auto open = stack.back();
            stack.pop_back();
            const auto& o = t[open].text;
            if ((p == ")" && o != "(") || (p == "]" && o != "[") || (p == "}" && o != "{")) {
                return nullptr;
            }
            match[open] = i;
            match[i] = open;
        }
    }
    if (!stack.empty()) {
        return nullptr;
    }

    // Innermost '(' that encloses each token, used to detect route registrations.
    std::vector<std::size_t> enclosing_paren(t.size(), t.size());
    {
        std::vector<std::size_t> open_parens;
        for (std::size_t i = 0; i < t.size(); ++i) {
            enclosing_paren[i] = open_parens.empty() ? t.size() : open_parens.back();
            if (is_punct(t[i], "(")) {
                open_parens.push_back(i);
            }
            else if (is_punct(t[i], ")") && !open_parens.empty()) {
                open_parens.pop_back();
            }
        }
    }

    for (std::size_t b = 0; b < t.size(); ++b) {
        if (!is_punct(t[b], "{") || b == 0) {
            continue;
        }
        js_function fn;
        fn.body_open = b;
        fn.body_close = match[b];
        bool found = false;

        // TypeScript return annotation: `) : Type {` or `) : Type =>`.
        auto close_paren_before = [&](std::size_t from) -> std::optional<std::size_t> {
            for (std::size_t k = from, steps = 0; k > 0 && steps < 24; --k, ++steps) {
                const auto& tk = t[k - 1];
                if (is_punct(tk, ")") && k < t.size() && is_punct(t[k], ":")) {
                    return k - 1;
                }
                if (is_punct(tk, ";") || is_punct(tk, "{") || is_punct(tk, "}") || is_punct(tk, "=")) {
                    break;
                }
            }
            return std::nullopt;
        };

        std::size_t prev = b - 1;
        if (is_punct(t[prev], "=>")) {
            std::size_t before = prev;
            if (before >= 1 && is_punct(t[before - 1], ")")) {
                fn.start = match[before - 1];
                found = true;
            }
            else if (before >= 1 && is_ident(t[before - 1]) && !(before >= 2 && is_punct(t[before - 2], ":"))) {
                fn.start = before - 1;
                found = true;
            }
            else if (auto cp = close_paren_before(before)) {
                fn.start = match[*cp];
                found = true;
            }
            if (found) {
                resolve_assignment(t, fn);
            }
        }
        else {
            std::optional<std::size_t> close;
            if (is_punct(t[prev], ")")) {
                close = prev;
            }
            else {
                close = close_paren_before(b);
            }
            if (close) {
                auto open = match[*close];
                if (open >= 1) {
                    const auto& callee = t[open - 1];
                    if (is_ident(callee, "function")) {
                        fn.start = open - 1;
                        found = true;
                        resolve_assignment(t, fn);
                    }
                    else if (is_punct(callee, "*") && open >= 2 && is_ident(t[open - 2], "function")) {
                        fn.start = open - 2;
                        found = true;
                        resolve_assignment(t, fn);
                    }
                    else if (is_ident(callee) && !is_control_keyword(callee.text)) {
                        bool declaration = open >= 2 && (is_ident(t[open - 2], "function") ||
                                                         (is_punct(t[open - 2], "*") && open >= 3 &&
                                                          is_ident(t[open - 3], "function")));
                        bool method = open < 2 || is_punct(t[open - 2], "{") || is_punct(t[open - 2], "}") ||
                                      is_punct(t[open - 2], ";") || is_punct(t[open - 2], ",") ||
                                      is_ident(t[open - 2], "async") || is_ident(t[open - 2], "static") ||
                                      is_ident(t[open - 2], "get") || is_ident(t[open - 2], "set") ||
                                      is_ident(t[open - 2], "public") || is_ident(t[open - 2], "private") ||
                                      is_ident(t[open - 2], "protected");
                        if (declaration) {
                            fn.name = callee.text;
                            fn.start = is_ident(t[open - 2], "function") ? open - 2 : open - 3;
                            found = true;
                            if (fn.start >= 1 && is_ident(t[fn.start - 1], "async")) {
                                --fn.start;
                            }
                        }
                        else if (method) {
                            fn.name = callee.text;
                            fn.start = open - 1;
                            found = true;
                        }
                    }
                }
            }
        }
        if (!found) {
            continue;
        }

        // Handler passed to `obj.method('/path', ...)`: the registration call joins the context.
        auto paren = enclosing_paren[fn.start];
        if (paren < t.size() && paren >= 3 && is_ident(t[paren - 1]) && is_route_method(t[paren - 1].text) &&
            is_punct(t[paren - 2], ".") && is_ident(t[paren - 3]) && paren + 1 < t.size() &&
            t[paren + 1].kind == tok::string && t[paren + 1].text.starts_with('/')) {
            fn.start = member_chain_start(t, paren - 3);
        }
        model->functions.push_back(std::move(fn));
    }
    return model;
}

code_context javascript_context(const line_table& lines, const javascript_model& model, int line) {
    const auto& t = model.tokens;
    const js_function* inner = nullptr;
    for (const auto& fn : model.functions) {
        int first = t[fn.start].line;
        int last = t[fn.body_close].line;
        if (first <= line && line <= last && (inner == nullptr || fn.body_open > inner->body_open)) {
            inner = &fn;
        }
    }

    code_context ctx;
    std::size_t lo = 0;
    std::size_t hi = t.size();
    if (inner == nullptr) {
        ctx.first_line = 1;
        ctx.last_line = lines.count();
    }
    else {
        lo = inner->start;
        hi = inner->body_close + 1;
        ctx.first_line = t[lo].line;
        ctx.last_line = t[inner->body_close].line;
        if (!inner->name.empty()) {
            add_match_forms(inner->name, ctx.function_names);
        }
    }
    ctx.raw_text = std::string(lines.text(ctx.first_line, ctx.last_line));

    for (std::size_t i = lo; i < hi; ++i) {
        const auto& tk = t[i];
        if (tk.kind == tok::string) {
            add_match_forms(tk.text, ctx.string_literals);
        }
        else if (tk.kind == tok::ident && !is_javascript_keyword(tk.text)) {
            add_match_forms(tk.text, ctx.identifiers);
        }
        // obj.method('/path', ...)
        if (tk.kind == tok::ident && i + 2 < hi && i >= 1 && is_route_method(tk.text) && is_punct(t[i - 1], ".") &&
            is_punct(t[i + 1], "(") && t[i + 2].kind == tok::string && t[i + 2].text.starts_with('/')) {
            route_decl route{t[i + 2].text, {}};
            if (names_http_method(tk.text)) {
                route.methods.push_back(tk.text);
            }
            add_route_tokens(route, ctx.route_tokens);
        }
    }
    return ctx;
}

std::optional<code_context> javascript_pattern_context(const line_table& lines, int line) {
    static const std::regex header(
            R"((?:function\s*\*?\s*([A-Za-z_$][\w$]*)\s*\()|(?:([A-Za-z_$][\w$]*)\s*[:=]\s*(?:async\s*)?(?:function\b|\([^)]*\)\s*=>|[A-Za-z_$][\w$]*\s*=>)))");
    static const std::regex route_call(R"(\.(get|post|put|patch|delete|head|options|all|use)\s*\(\s*['"`](/[^'"`]*)['"`])");
    constexpr int max_scan = 60;
    for (int h = line; h >= 1 && line - h <= max_scan; --h) {
        std::string text(lines.line(h));
        std::smatch m;
        if (!std::regex_search(text, m, header)) {
            continue;
        }
        code_context ctx;
        ctx.first_line = h;
        ctx.last_line = std::min(lines.count(), line + window_radius);
        ctx.raw_text = std::string(lines.text(ctx.first_line, ctx.last_line));
        ctx.window_fallback = true;
        add_match_forms(m[1].matched ? m[1].str() : m[2].str(), ctx.function_names);
        collect_tolerant_tokens(ctx.raw_text, false, ctx);
        for (std::sregex_iterator it(ctx.raw_text.begin(), ctx.raw_text.end(), route_call), end; it != end; ++it) {
            route_decl route{(*it)[2].str(), {}};
            if (names_http_method((*it)[1].str())) {
                route.methods.push_back((*it)[1].str());
            }
            add_route_tokens(route, ctx.route_tokens);
        }
        return ctx;
    }
    return std::nullopt;
}

}  // namespace fstab::detail

#include "context_detail.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace fstab::detail {

namespace {

    struct py_token {
        bool is_string{};
        std::string text;
        int line{};
    };

    struct py_scan {
        std::vector<char> logical_start;  // indexed by 1-based line
        std::vector<py_token> tokens;
    };

    bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_'; }
    bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

    bool is_string_prefix(std::string_view word) {
        if (word.size() > 2) {
            return false;
        }
        return std::ranges::all_of(word, [](char c) {
            switch (c) {
            case 'r': case 'R': case 'b': case 'B': case 'u': case 'U': case 'f': case 'F':
                return true;
            default:
                return false;
            }
        });
    }

    // Tokenizes the file and records which physical lines start a logical line.
    // Returns nullopt on unterminated strings or unbalanced brackets.
    std::optional<py_scan> scan(std::string_view text, int line_count) {
        py_scan out;
        out.logical_start.assign(static_cast<std::size_t>(line_count) + 2, 0);
        int line = 1;
        int depth = 0;
        bool continuation = false;
        bool at_line_start = true;
        std::size_t i = 0;
        const auto n = text.size();

        auto read_string = [&](std::size_t quote_pos) -> std::optional<std::size_t> {
            char q = text[quote_pos];
            bool triple = quote_pos + 2 < n && text[quote_pos + 1] == q && text[quote_pos + 2] == q;
            std::size_t j = quote_pos + (triple ? 3 : 1);
            int start_line = line;
            std::string content;
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
                if (triple && c == q && j + 2 < n && text[j + 1] == q && text[j + 2] == q) {
                    out.tokens.push_back({true, std::move(content), start_line});
                    return j + 3;
                }
                if (!triple && c == q) {
                    out.tokens.push_back({true, std::move(content), start_line});
                    return j + 1;
                }
                if (c == '\n') {
                    if (!triple) {
                        return std::nullopt;
                    }
                    ++line;
                }
                content.push_back(c);
                ++j;
            }
            return std::nullopt;
        };

        while (i < n) {
            if (at_line_start) {
                out.logical_start[static_cast<std::size_t>(line)] = depth == 0 && !continuation;
                continuation = false;
                at_line_start = false;
            }
            char c = text[i];
            if (c == '\n') {
                ++line;
                at_line_start = true;
                ++i;
                continue;
            }
            if (c == '\\' && i + 1 < n && (text[i + 1] == '\n' || text[i + 1] == '\r')) {
                continuation = true;
                ++i;
                continue;
            }
            if (c == '#') {
                while (i < n && text[i] != '\n') {
                    ++i;
                }
                continue;
            }
            if (c == '\'' || c == '"') {
                auto next = read_string(i);
                if (!next) {
                    return std::nullopt;
                }
                i = *next;
                continue;
            }
            if (ident_start(c)) {
                std::size_t j = i;
                while (j < n && ident_char(text[j])) {
                    ++j;
                }
                auto word = text.substr(i, j - i);
                if (j < n && (text[j] == '\'' || text[j] == '"') && is_string_prefix(word)) {
                    auto next = read_string(j);
                    if (!next) {
                        return std::nullopt;
                    }
                    i = *next;
                    continue;
                }
                out.tokens.push_back({false, std::string(word), line});
                i = j;
                continue;
            }
            if (c == '(' || c == '[' || c == '{') {
                ++depth;
            }
            else if (c == ')' || c == ']' || c == '}') {
                if (--depth < 0) {
                    return std::nullopt;
                }
            }
            ++i;
        }
        if (depth != 0) {
            return std::nullopt;
        }
        return out;
    }

    int indent_of(std::string_view line) {
        int col = 0;
        for (char c : line) {
            if (c == ' ') {
                ++col;
            }
            else if (c == '\t') {
                col = (col / 8 + 1) * 8;
            }
            else {
                break;
            }
        }
        return col;
    }

    std::string_view stripped(std::string_view line) {
        auto b = line.find_first_not_of(" \t");
        return b == std::string_view::npos ? std::string_view{} : line.substr(b);
    }

    struct block {
        int decorator_start{};
        int header{};
        int end{};
        std::string name;
    };

    std::optional<std::string> header_name(std::string_view s) {
        static const std::regex header(R"(^(?:async\s+)?(?:def|class)\s+([A-Za-z_]\w*))");
        std::match_results<std::string_view::const_iterator> m;
        if (std::regex_search(s.begin(), s.end(), m, header)) {
            return m[1].str();
        }
        return std::nullopt;
    }

    std::optional<route_decl> parse_decorator(std::string_view text) {
        static const std::regex callee(R"(^@\s*[\w.]*?\.?(route|get|post|put|patch|delete|head|options|api_route|websocket)\s*\()");
        static const std::regex first_arg(R"(\(\s*[rRuUbBfF]?(['"])(/[^'"]*)\1)");
        static const std::regex methods_kw(R"(methods\s*=\s*[\[\(\{]([^\]\)\}]*))");
        static const std::regex quoted(R"(['"]([A-Za-z]+)['"])");
        std::string s(text);
        std::smatch m;
        if (!std::regex_search(s, m, callee)) {
            return std::nullopt;
        }
        auto verb = m[1].str();
        std::smatch a;
        if (!std::regex_search(s, a, first_arg)) {
            return std::nullopt;
        }
        route_decl route{a[2].str(), {}};
        if (verb != "route" && verb != "api_route" && verb != "websocket") {
            route.methods.push_back(verb);
        }
        std::smatch mm;
        if (std::regex_search(s, mm, methods_kw)) {
            auto list = mm[1].str();
            for (std::sregex_iterator it(list.begin(), list.end(), quoted), end; it != end; ++it) {
                route.methods.push_back((*it)[1].str());
            }
        }
        return route;
    }

    void collect_routes(const line_table& lines, const py_scan& scan, int first, int last, code_context& ctx) {
        for (int l = first; l <= last; ++l) {
            if (!scan.logical_start[static_cast<std::size_t>(l)] || !stripped(lines.line(l)).starts_with('@')) {
                continue;
            }
            int e = l;
            while (e + 1 <= lines.count() && !scan.logical_start[static_cast<std::size_t>(e + 1)]) {
                ++e;
            }
            if (auto route = parse_decorator(stripped(lines.text(l, e)))) {
                add_route_tokens(*route, ctx.route_tokens);
            }
        }
    }

}  // namespace

struct python_model {
    py_scan scan;
    std::vector<block> blocks;
};

std::shared_ptr<const python_model> parse_python(const line_table& lines) {
    auto scanned = scan(lines.count() == 0 ? std::string_view{} : lines.text(1, lines.count()), lines.count());
    if (!scanned) {
        return nullptr;
    }
    auto model = std::make_shared<python_model>();
    model->scan = std::move(*scanned);
    const auto& sc = model->scan;

    std::vector<int> significant;
    for (int l = 1; l <= lines.count(); ++l) {
        auto s = stripped(lines.line(l));
        if (sc.logical_start[static_cast<std::size_t>(l)] && !s.empty() && !s.starts_with('#')) {
            significant.push_back(l);
        }
    }

    for (std::size_t idx = 0; idx < significant.size(); ++idx) {
        int h = significant[idx];
        auto name = header_name(stripped(lines.line(h)));
        if (!name) {
            continue;
        }
        int indent = indent_of(lines.line(h));
        int end = lines.count();
        for (std::size_t j = idx + 1; j < significant.size(); ++j) {
            if (indent_of(lines.line(significant[j])) <= indent) {
                end = significant[j] - 1;
                break;
            }
        }
        while (end > h && stripped(lines.line(end)).empty()) {
            --end;
        }
        int deco = h;
        for (std::size_t j = idx; j-- > 0;) {
            int k = significant[j];
            if (indent_of(lines.line(k)) == indent && stripped(lines.line(k)).starts_with('@')) {
                deco = k;
            }
            else {
                break;
            }
        }
        model->blocks.push_back({deco, h, end, std::move(*name)});
    }
    return model;
}

code_context python_context(const line_table& lines, const python_model& model, int line) {
    const auto& sc = model.scan;
    const block* inner = nullptr;
    for (const auto& b : model.blocks) {
        if (b.decorator_start <= line && line <= b.end && (inner == nullptr || b.header > inner->header)) {
            inner = &b;
        }
    }

    code_context ctx;
    if (inner == nullptr) {
        ctx.first_line = 1;
        ctx.last_line = lines.count();
    }
    else {
        ctx.first_line = inner->decorator_start;
        ctx.last_line = inner->end;
        add_match_forms(inner->name, ctx.function_names);
    }
    ctx.raw_text = std::string(lines.text(ctx.first_line, ctx.last_line));
    for (const auto& tok : sc.tokens) {
        if (tok.line < ctx.first_line || tok.line > ctx.last_line) {
            continue;
        }
        if (tok.is_string) {
            add_match_forms(tok.text, ctx.string_literals);
        }
        else if (!is_python_keyword(tok.text)) {
            add_match_forms(tok.text, ctx.identifiers);
        }
    }
    collect_routes(lines, sc, ctx.first_line, ctx.last_line, ctx);
    return ctx;
}

}  // namespace fstab::detail

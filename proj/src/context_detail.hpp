#pragma once

#include "fstab/extractor.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fstab::detail {

/// 1-based view over the lines of a source file.
class line_table {
  public:
    explicit line_table(std::string_view source);

    int count() const noexcept { return static_cast<int>(lines_.size()); }
    std::string_view line(int n) const { return lines_.at(static_cast<std::size_t>(n - 1)); }
    /// Offset of the first character of line `n` in the original source.
    std::size_t offset(int n) const { return offsets_.at(static_cast<std::size_t>(n - 1)); }
    std::string_view text(int first, int last) const;

  private:
    std::string_view source_;
    std::vector<std::string_view> lines_;
    std::vector<std::size_t> offsets_;
};

struct route_decl {
    std::string path;
    std::vector<std::string> methods;
};

/// Adds path segments, their match forms and contiguous sub-paths, plus methods.
void add_route_tokens(const route_decl& route, std::set<std::string>& out);

/// Identifier/string tokenization that tolerates broken code. Handles '#'
/// comments when `hash_comments` is set and '//' '/* */' comments otherwise.
void collect_tolerant_tokens(std::string_view text, bool hash_comments, code_context& ctx);

/// Fixed-radius window around `line`.
code_context window_context(const line_table& lines, int line, bool hash_comments, bool fallback);

/// Whole-file context for code outside any enclosure.
code_context module_context(const line_table& lines, bool hash_comments);

struct python_model;
struct javascript_model;

/// Parsed structure of a file; nullptr when the source does not parse.
std::shared_ptr<const python_model> parse_python(const line_table& lines);
std::shared_ptr<const javascript_model> parse_javascript(const line_table& lines);

code_context python_context(const line_table& lines, const python_model& model, int line);
code_context javascript_context(const line_table& lines, const javascript_model& model, int line);

/// Regex-based search for a function header above `line` when the JavaScript
/// lexer fails.
std::optional<code_context> javascript_pattern_context(const line_table& lines, int line);

bool is_python_keyword(std::string_view word) noexcept;
bool is_javascript_keyword(std::string_view word) noexcept;

}  // namespace fstab::detail

#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fstab {

enum class category { access_control, data_flow, business_logic, storage_io, observability };

inline constexpr std::array<category, 5> all_categories{category::access_control, category::data_flow,
                                                        category::business_logic, category::storage_io,
                                                        category::observability};

std::string_view to_string(category c) noexcept;
/// Accepts "AccessControl", "DataFlow", "BusinessLogic", "StorageIO", "Observability".
std::optional<category> parse_category(std::string_view name) noexcept;

/// One taxonomy action with its keyword, route, API-pattern and negative sets.
///
/// API patterns are case-insensitive substrings of the context text, or ECMAScript
/// regular expressions when written with an "re:" prefix.
struct action_spec {
    std::string action_id;
    std::vector<std::string> keywords;
    std::vector<std::string> route_keywords;
    std::vector<std::string> api_patterns;
    std::vector<std::string> negative_keywords;
    category group{category::business_logic};
};

struct weights {
    double w_fn{2.5};
    double w_route{2.0};
    double w_api{1.8};
    double w_id{0.5};
    double w_str{0.35};
    double w_neg{0.5};
    double cap_id{1.5};
    double cap_str{1.0};
    double assign_threshold{0.0};
};

struct taxonomy {
    std::string version;
    std::vector<action_spec> actions;

    const action_spec* find(std::string_view action_id) const;
    std::optional<category> category_of(std::string_view action_id) const;
};

/// Validates unique ids and non-empty keyword sets. Throws input_error.
taxonomy load_taxonomy(const std::filesystem::path& path);
void write_taxonomy(const std::filesystem::path& path, const taxonomy& tax);
void validate_taxonomy(const taxonomy& tax);

enum class language { python, javascript, typescript, other };

language language_for(const std::filesystem::path& file);

/// Evidence gathered around one source line. All sets hold lowercased forms.
struct code_context {
    std::set<std::string> function_names;
    std::set<std::string> identifiers;
    std::set<std::string> string_literals;
    std::set<std::string> route_tokens;
    std::string raw_text;
    int first_line{};
    int last_line{};
    bool window_fallback{};
};

/// Lines of context kept on each side of the target for the fixed-radius window.
inline constexpr int window_radius = 20;

/// A source file parsed once and queried for many lines.
class source_file {
  public:
    source_file(std::string text, language lang);
    ~source_file();
    source_file(source_file&&) noexcept;
    source_file& operator=(source_file&&) noexcept;

    int line_count() const noexcept;
    /// False when grammar-aware parsing failed and queries use the fallbacks.
    bool parsed() const noexcept;

    /// Throws std::out_of_range when `line` is outside [1, line_count()].
    code_context context_at(int line) const;

  private:
    struct impl;
    std::unique_ptr<impl> impl_;
};

/// Isolates the innermost enclosing function (or class, for Python) around `line`
/// and collects its evidence. Never throws on malformed source: it degrades to the
/// fixed-radius window and sets `window_fallback`.
code_context extract_context(std::string_view source, int line, language lang);

/// Lowercased identifier pieces split at underscores, dashes, dots and camelCase
/// boundaries: "verifyCredentials" -> {"verify", "credentials"}.
std::vector<std::string> split_identifier(std::string_view ident);

/// Matching forms for one raw name: its lowercase spelling plus every contiguous
/// run of its pieces joined with '_'.
void add_match_forms(std::string_view raw, std::set<std::string>& out);

/// True when any normalized form of `keyword` is in `forms`.
bool keyword_matches(std::string_view keyword, const std::set<std::string>& forms);

double score_action(const action_spec& action, const code_context& ctx, const weights& w);

struct classification {
    std::string action;
    double confidence{};

    bool operator==(const classification&) const = default;
};

/// Argmax over the taxonomy; ties go to the smallest action id. Scores at or below
/// the assignment threshold yield "unknown" with the best score.
classification classify_line(const code_context& ctx, std::span<const action_spec> actions, const weights& w);

}  // namespace fstab

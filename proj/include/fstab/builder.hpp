#pragma once

#include "fstab/corpus.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fstab {

/// Feature/rule co-occurrence tallies with their marginals.
class cooccurrence_counts {
  public:
    void add(const std::string& feature, const std::string& rule, std::int64_t n = 1);
    cooccurrence_counts& operator+=(const cooccurrence_counts& other);

    std::int64_t pair(std::string_view feature, std::string_view rule) const;
    std::int64_t feature_total(std::string_view feature) const;
    std::int64_t rule_total(std::string_view rule) const;
    std::int64_t grand_total() const noexcept { return grand_total_; }
    /// Number of distinct rules observed.
    std::size_t rule_universe_size() const noexcept { return rule_totals_.size(); }

    using row = std::map<std::string, std::int64_t, std::less<>>;
    /// feature -> rule -> C(f, r).
    const std::map<std::string, row, std::less<>>& pairs() const noexcept { return pair_counts_; }
    const std::map<std::string, std::int64_t, std::less<>>& feature_totals() const noexcept {
        return feature_totals_;
    }
    const std::map<std::string, std::int64_t, std::less<>>& rule_totals() const noexcept { return rule_totals_; }

    /// Rules with C(f, r) > 0, ascending by rule id.
    std::vector<std::string> candidates(std::string_view feature) const;

  private:
    std::map<std::string, row, std::less<>> pair_counts_;
    std::map<std::string, std::int64_t, std::less<>> feature_totals_;
    std::map<std::string, std::int64_t, std::less<>> rule_totals_;
    std::int64_t grand_total_{};
};

/// One count per element of `labeled`.
cooccurrence_counts count_cooccurrences(std::span<const labeled_vuln> labeled);

enum class count_mode { per_program, per_finding };

std::string_view to_string(count_mode m) noexcept;
std::optional<count_mode> parse_count_mode(std::string_view s) noexcept;

/// Training pairs from a corpus slice. per_program yields each program's
/// distinct (f, r) set once; per_finding yields one pair per finding.
/// "unknown" labels are dropped unless `include_unknown`.
std::vector<labeled_vuln> training_pairs(const std::vector<finding>& findings,
                                         const std::vector<feature_label>& labels,
                                         count_mode mode,
                                         bool include_unknown);

/// Laplace-smoothed P(r|f) = (C(f,r)+a) / (C(f)+a|R|).
double smoothed_conditional(std::string_view feature, std::string_view rule, const cooccurrence_counts& counts,
                            double alpha);
/// Laplace-smoothed P(r) = (C(r)+a) / (N+a|R|).
double smoothed_marginal(std::string_view rule, const cooccurrence_counts& counts, double alpha);

/// ln(P(r|f) / P(r)). Throws std::domain_error when C(f, r) = 0.
double pmi(std::string_view feature, std::string_view rule, const cooccurrence_counts& counts, double alpha);

/// pmi - ln(1 + lambda * usage).
double adjusted_score(double pmi_value, std::int64_t usage, double lambda_div);

/// Ratio-space discount 1 / (1 + lambda * m) after m prior uses.
double discount_factor(std::int64_t uses, double lambda_div);

/// Usage count above which a generic rule with PMI lead `delta` loses to a
/// fresh competitor: (e^delta - 1) / lambda. Throws std::domain_error for lambda <= 0.
double displacement_threshold(double delta, double lambda_div);

struct table_entry {
    std::string rule_id;
    double pmi{};
    double adjusted{};
    int rank{};

    bool operator==(const table_entry&) const = default;
};

struct build_params {
    double alpha{0.5};
    double lambda_div{0.8};
    int top_k{25};

    bool operator==(const build_params&) const = default;
};

/// Split that produced a table's training data, threaded through to the attack
/// stage so it can prove the test programs were never seen.
struct table_provenance {
    std::string mode{"all"};
    std::optional<std::string> target_domain;
    std::uint64_t seed{};
    double fraction{};
    std::vector<std::string> construction_programs;
    std::vector<std::string> construction_domains;

    bool operator==(const table_provenance&) const = default;
};

struct fstab_table {
    std::string model;
    std::string scanner;
    build_params params;
    count_mode mode{count_mode::per_program};
    std::string taxonomy_version;
    bool include_unknown{};
    table_provenance provenance;
    std::map<std::string, std::vector<table_entry>, std::less<>> entries;

    const std::vector<table_entry>* find(std::string_view feature) const;
    bool operator==(const fstab_table&) const = default;
};

/// Greedy diversity-penalized selection. Features are visited in ascending id
/// order and share one usage counter; ties fall to higher raw PMI, then the
/// smaller rule id.
fstab_table build_fstab(const cooccurrence_counts& counts, const build_params& params, std::string model);

/// Share of the smoothed conditional mass over `feature`'s candidates captured by
/// its table list. Throws std::domain_error when the feature has no candidates.
double coverage_k(const cooccurrence_counts& counts, const fstab_table& table, std::string_view feature);

struct concentration {
    std::int64_t max_use_1{};
    double gini_1{};
};

/// Concentration of the rank-1 rules. Throws std::domain_error when no feature
/// has an entry.
concentration concentration_stats(const fstab_table& table);

/// Gini coefficient sum_i sum_j |x_i - x_j| / (2 n sum x).
double gini(std::span<const std::int64_t> values);

struct sweep_row {
    int top_k{};
    double lambda_div{};
    double mean_coverage{};
    double mean_list_size{};
    std::int64_t max_use_1{};
    double gini_1{};
};

/// Builds a table for every (k, lambda) pair and summarizes it.
std::vector<sweep_row> sweep(const cooccurrence_counts& counts, double alpha, std::span<const int> ks,
                             std::span<const double> lambdas);

nlohmann::json to_json(const fstab_table& table);
fstab_table table_from_json(const nlohmann::json& doc);
void write_table(const std::filesystem::path& path, const fstab_table& table);
fstab_table load_table(const std::filesystem::path& path);

}  // namespace fstab

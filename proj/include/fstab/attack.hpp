#pragma once

#include "fstab/builder.hpp"
#include "fstab/corpus.hpp"
#include "fstab/extractor.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace fstab {

using rule_set = std::set<std::string>;

/// Union of the first `query_k` rules of each observed feature's list. Features
/// missing from the table add nothing; query_k = 0 predicts nothing. Throws
/// std::domain_error for negative query_k.
rule_set predict(const fstab_table& table, const std::set<std::string>& observed_features, int query_k);

struct program_score {
    bool success{};
    /// Undefined when the actual set is empty.
    std::optional<double> coverage;
};

program_score score_program(const rule_set& predicted, const rule_set& actual);

/// What the attacker sees (features) and what the scanner found (actual rules).
struct attack_target {
    std::string program_id;
    std::set<std::string> features;
    rule_set actual;
};

struct attack_result {
    std::string program_id;
    rule_set predicted;
    rule_set actual;
    bool success{};
    std::optional<double> coverage;
};

enum class empty_policy {
    /// Programs with no actual rules are left out of both means.
    exclude,
    /// They count as failures with zero coverage.
    as_failure,
};

struct evaluation {
    double asr{};
    double acr{};
    std::size_t n_scored{};
    std::size_t n_excluded{};
    std::vector<attack_result> results;
};

/// Throws undefined_metric when no program can be scored.
evaluation evaluate(const fstab_table& table, std::span<const attack_target> targets, int query_k,
                    empty_policy policy = empty_policy::exclude);

enum class split_mode { held_out, cross_domain };

std::string_view to_string(split_mode m) noexcept;
std::optional<split_mode> parse_split_mode(std::string_view s) noexcept;

struct split_plan {
    split_mode mode{split_mode::held_out};
    std::optional<std::string> target_domain;
    std::uint64_t seed{};
    double fraction{0.5};
    std::set<std::string> construction_programs;
    std::set<std::string> test_programs;
};

/// Task-level split: every rephrasing (and every model's version) of a task lands
/// on the same side. held_out draws round(fraction * tasks) construction tasks per
/// domain, keeping at least one task on each side when a domain has two or more;
/// a target domain restricts the test side to that domain. cross_domain trains on
/// every program outside the target domain and tests on the target domain's
/// held-out tasks.
///
/// Throws std::invalid_argument for a fraction outside (0, 1) or a cross_domain
/// split without a target, input_error for an empty manifest or a target domain
/// that does not occur.
split_plan make_split(const manifest& programs, split_mode mode, const std::optional<std::string>& target_domain,
                      std::uint64_t seed, double fraction);

/// Attack targets for the given programs of one scanner: features from the labels
/// (minus "unknown"), actual rules from every finding.
std::vector<attack_target> collect_targets(const std::set<std::string>& program_ids,
                                           const std::vector<finding>& findings,
                                           const std::vector<feature_label>& labels,
                                           std::string_view scanner);

nlohmann::json to_json(const attack_result& r);

struct synth_params {
    std::uint64_t seed{1};
    int n_domains{3};
    int tasks_per_domain{10};
    int rephrasings{3};
    int feature_pool{12};
    int rule_pool{40};
    double planted_recurrence_rate{1.0};
    double noise_rate{0.0};
    int features_per_task{3};
    int planted_per_feature{2};
    /// Each (feature, rule) pair is reported at this many lines.
    int findings_per_pair{1};
    std::string model{"synth-model"};
    std::string scanner{"synth-scanner"};
};

/// A generated corpus. Every program's sources are Python files whose functions
/// carry one unique keyword per feature, so the real extractor recovers the
/// planted labels.
struct synth_corpus {
    std::vector<program_record> programs;
    std::vector<finding> findings;
    std::vector<feature_label> labels;
    taxonomy tax;
    /// Relative path under the output root -> file text.
    std::map<std::string, std::string> sources;
    /// feature -> planted rules, in rank order.
    std::map<std::string, std::vector<std::string>> planted;
};

/// Deterministic in `params`. Throws std::invalid_argument for non-positive
/// sizes or rates outside [0, 1]. Noise rules are drawn without replacement from
/// a shuffled pool (cycling once exhausted), so noise pairs are all distinct
/// whenever the pool exceeds the number of draws. Source roots are relative to
/// `root`.
synth_corpus make_synth_corpus(const synth_params& params, const std::filesystem::path& root);

/// Writes manifest.jsonl, findings.jsonl, labels.jsonl, taxonomy.json, truth.json
/// and the source tree under `dir`.
void write_synth_corpus(const synth_corpus& corpus, const synth_params& params, const std::filesystem::path& dir);

}  // namespace fstab

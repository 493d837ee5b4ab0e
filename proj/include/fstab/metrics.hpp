#pragma once

#include "fstab/corpus.hpp"
#include "fstab/extractor.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace fstab {

/// One program's deduplicated vulnerabilities plus the features it exhibits.
struct program_vulns {
    std::string program_id;
    std::string task_id;
    int rephrase_index{};
    std::string domain;
    vuln_set vulns;
    /// Actions labeled anywhere in the program, with or without a vulnerability.
    std::set<std::string> features;
};

/// Distinct (f, v) pairs occurring in more than one program of the group, over
/// the distinct pairs occurring at all. nullopt when the group has no pairs.
std::optional<double> recurrence(std::span<const program_vulns> group);

/// A metric evaluated per group plus its mean over the defined groups.
struct metric_family {
    /// Every group considered, defined or not, in ascending order.
    std::vector<std::string> groups;
    /// Defined values only.
    std::map<std::string, double, std::less<>> values;
    std::optional<double> model;
};

/// Per feature: recurrence of the feature's pairs among programs containing it.
metric_family fvr(std::span<const program_vulns> programs);
/// Per task: pairs seen under more than one rephrasing over the task's union.
metric_family rvp(std::span<const program_vulns> programs);
/// Per domain: recurrence within the domain's programs.
metric_family dvr(std::span<const program_vulns> programs);
/// Per domain: share of the domain's pairs also seen in some other domain.
metric_family cdt(std::span<const program_vulns> programs);

/// cdt - dvr.
double universality_gap(double dvr_model, double cdt_model);

/// Mean FVR per category over features with a defined value. Features missing
/// from the taxonomy are skipped.
std::map<category, double> fingerprint(const std::map<std::string, double, std::less<>>& per_feature_fvr,
                                       const taxonomy& tax);

/// Programs of one (model, scanner) slice. Findings from other scanners are
/// ignored; "unknown" labels are dropped unless `include_unknown`.
std::vector<program_vulns> collect_programs(const manifest& programs,
                                            const std::vector<finding>& findings,
                                            const std::vector<feature_label>& labels,
                                            std::string_view model,
                                            std::string_view scanner,
                                            bool include_unknown);

struct recurrence_report {
    std::string model;
    std::string scanner;
    std::size_t n_programs{};
    metric_family fvr;
    metric_family rvp;
    metric_family dvr;
    metric_family cdt;
    std::optional<double> universality_gap;
    std::map<category, double> fingerprint;

    /// True when at least one model-level value is defined.
    bool any_defined() const;
};

recurrence_report make_report(std::string model, std::string scanner, std::span<const program_vulns> programs,
                              const taxonomy* tax);

/// Undefined per-group entries appear as null, or as 0 with `zero_fill`.
nlohmann::json to_json(const recurrence_report& report, bool zero_fill);

/// Percentage layout: one summary row per report, then per-feature FVR and the
/// category fingerprint.
std::string format_reports(std::span<const recurrence_report> reports, bool zero_fill);

}  // namespace fstab

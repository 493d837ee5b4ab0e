#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace fstab {

namespace fs = std::filesystem;

/// Reserved action id for locations the extractor could not attribute.
inline constexpr std::string_view unknown_action = "unknown";

/// Raised for malformed or inconsistent input files. Maps to exit code 3.
class input_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Raised when a metric has an empty denominator. Maps to exit code 4.
class undefined_metric : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct program_record {
    std::string program_id;
    std::string task_id;
    int rephrase_index{};
    std::string domain;
    std::string model;
    fs::path source_root;

    bool operator==(const program_record&) const = default;
};

struct finding {
    std::string program_id;
    std::string file;
    int line{};
    std::string rule_id;
    std::string scanner;

    bool operator==(const finding&) const = default;
};

struct feature_label {
    std::string program_id;
    std::string file;
    int line{};
    std::string action;
    double confidence{};
    bool window_fallback{};

    bool operator==(const feature_label&) const = default;
};

/// A distinct (feature, rule) pair. Identity ignores program, file and line.
struct labeled_vuln {
    std::string feature;
    std::string rule;

    auto operator<=>(const labeled_vuln&) const = default;
};

using vuln_set = std::set<labeled_vuln>;

/// Manifest indexed by program id, preserving file order in `records`.
class manifest {
  public:
    manifest() = default;
    explicit manifest(std::vector<program_record> records);

    const std::vector<program_record>& records() const noexcept { return records_; }
    const program_record* find(std::string_view program_id) const;
    bool contains(std::string_view program_id) const { return find(program_id) != nullptr; }
    bool empty() const noexcept { return records_.empty(); }
    std::size_t size() const noexcept { return records_.size(); }

  private:
    std::vector<program_record> records_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

// Loading. Each file holds one JSON object per line; blank lines are skipped.
// Errors carry the path and 1-based line number.
manifest load_manifest(const fs::path& path);
std::vector<finding> load_findings(const fs::path& path, const manifest& programs);
std::vector<feature_label> load_labels(const fs::path& path, const manifest& programs);

void write_manifest(const fs::path& path, const std::vector<program_record>& records);
void write_findings(const fs::path& path, const std::vector<finding>& findings);
void write_labels(const fs::path& path, const std::vector<feature_label>& labels);

/// Deduplicated (feature, rule) set of one program. Every finding of the program
/// needs a label at the same file and line; "unknown" labels are kept.
vuln_set distinct_vulns(std::string_view program_id,
                        const std::vector<finding>& findings,
                        const std::vector<feature_label>& labels);

/// distinct_vulns for every program with at least one finding, in one pass.
std::map<std::string, vuln_set, std::less<>> vulns_by_program(const std::vector<finding>& findings,
                                                               const std::vector<feature_label>& labels);

/// Label lookup keyed by (program, file, line).
class label_index {
  public:
    explicit label_index(const std::vector<feature_label>& labels);
    const feature_label* find(std::string_view program_id, std::string_view file, int line) const;

  private:
    std::map<std::tuple<std::string, std::string, int>, const feature_label*, std::less<>> by_location_;
};

/// Sorting keys used before any aggregation so that input order never matters.
void sort_findings(std::vector<finding>& findings);
void sort_labels(std::vector<feature_label>& labels);

}  // namespace fstab

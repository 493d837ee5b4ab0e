#include "fstab/builder.hpp"

#include <set>

#include "fstab/jsonl.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fstab {

void cooccurrence_counts::add(const std::string& feature, const std::string& rule, std::int64_t n) {
    pair_counts_[feature][rule] += n;
    feature_totals_[feature] += n;
    rule_totals_[rule] += n;
    grand_total_ += n;
}

cooccurrence_counts& cooccurrence_counts::operator+=(const cooccurrence_counts& other) {
    for (const auto& [feature, rules] : other.pair_counts_) {
        for (const auto& [rule, n] : rules) {
            add(feature, rule, n);
        }
    }
    return *this;
}

namespace {

    template <class Map, class Key>
    std::int64_t lookup(const Map& m, const Key& key) {
        auto it = m.find(key);
        return it == m.end() ? 0 : it->second;
    }

}  // namespace

std::int64_t cooccurrence_counts::pair(std::string_view feature, std::string_view rule) const {
    auto it = pair_counts_.find(feature);
    return it == pair_counts_.end() ? 0 : lookup(it->second, rule);
}

std::int64_t cooccurrence_counts::feature_total(std::string_view feature) const {
    return lookup(feature_totals_, feature);
}

std::int64_t cooccurrence_counts::rule_total(std::string_view rule) const { return lookup(rule_totals_, rule); }

std::vector<std::string> cooccurrence_counts::candidates(std::string_view feature) const {
    std::vector<std::string> out;
    auto it = pair_counts_.find(feature);
    if (it == pair_counts_.end()) {
        return out;
    }
    for (const auto& [rule, n] : it->second) {
        if (n > 0) {
            out.push_back(rule);
        }
    }
    return out;
}

cooccurrence_counts count_cooccurrences(std::span<const labeled_vuln> labeled) {
    cooccurrence_counts counts;
    for (const auto& v : labeled) {
        counts.add(v.feature, v.rule);
    }
    return counts;
}

std::string_view to_string(count_mode m) noexcept {
    return m == count_mode::per_program ? "per-program" : "per-finding";
}

std::optional<count_mode> parse_count_mode(std::string_view s) noexcept {
    if (s == "per-program" || s == "per_program") {
        return count_mode::per_program;
    }
    if (s == "per-finding" || s == "per_finding") {
        return count_mode::per_finding;
    }
    return std::nullopt;
}

std::vector<labeled_vuln> training_pairs(const std::vector<finding>& findings,
                                         const std::vector<feature_label>& labels,
                                         count_mode mode,
                                         bool include_unknown) {
    std::vector<labeled_vuln> out;
    auto keep = [&](const std::string& feature) { return include_unknown || feature != unknown_action; };
    if (mode == count_mode::per_program) {
        for (const auto& [program, vulns] : vulns_by_program(findings, labels)) {
            for (const auto& v : vulns) {
                if (keep(v.feature)) {
                    out.push_back(v);
                }
            }
        }
        return out;
    }
    label_index index(labels);
    for (const auto& f : findings) {
        const auto* label = index.find(f.program_id, f.file, f.line);
        if (label == nullptr) {
            throw input_error("missing label for finding " + f.program_id + ":" + f.file + ":" +
                              std::to_string(f.line) + " (" + f.rule_id + ")");
        }
        if (keep(label->action)) {
            out.push_back({label->action, f.rule_id});
        }
    }
    std::ranges::sort(out);
    return out;
}

namespace {

    void require_alpha(double alpha) {
        if (!(alpha > 0.0) || !std::isfinite(alpha)) {
            throw std::domain_error("alpha must be a positive finite number");
        }
    }

    void require_lambda(double lambda_div) {
        if (!(lambda_div >= 0.0) || !std::isfinite(lambda_div)) {
            throw std::domain_error("lambda must be a non-negative finite number");
        }
    }

}  // namespace

double smoothed_conditional(std::string_view feature, std::string_view rule, const cooccurrence_counts& counts,
                            double alpha) {
    require_alpha(alpha);
    auto universe = static_cast<double>(counts.rule_universe_size());
    return (static_cast<double>(counts.pair(feature, rule)) + alpha) /
           (static_cast<double>(counts.feature_total(feature)) + alpha * universe);
}

double smoothed_marginal(std::string_view rule, const cooccurrence_counts& counts, double alpha) {
    require_alpha(alpha);
    auto universe = static_cast<double>(counts.rule_universe_size());
    return (static_cast<double>(counts.rule_total(rule)) + alpha) /
           (static_cast<double>(counts.grand_total()) + alpha * universe);
}

double pmi(std::string_view feature, std::string_view rule, const cooccurrence_counts& counts, double alpha) {
    if (counts.pair(feature, rule) <= 0) {
        throw std::domain_error("pmi undefined: C(" + std::string(feature) + ", " + std::string(rule) + ") = 0");
    }
    return std::log(smoothed_conditional(feature, rule, counts, alpha) / smoothed_marginal(rule, counts, alpha));
}

double adjusted_score(double pmi_value, std::int64_t usage, double lambda_div) {
    require_lambda(lambda_div);
    if (usage < 0) {
        throw std::domain_error("usage must be non-negative");
    }
    return pmi_value - std::log1p(lambda_div * static_cast<double>(usage));
}

double discount_factor(std::int64_t uses, double lambda_div) {
    require_lambda(lambda_div);
    if (uses < 0) {
        throw std::domain_error("usage must be non-negative");
    }
    return 1.0 / (1.0 + lambda_div * static_cast<double>(uses));
}

double displacement_threshold(double delta, double lambda_div) {
    if (!(lambda_div > 0.0)) {
        throw std::domain_error("displacement threshold needs lambda > 0");
    }
    return std::expm1(delta) / lambda_div;
}

const std::vector<table_entry>* fstab_table::find(std::string_view feature) const {
    auto it = entries.find(feature);
    return it == entries.end() ? nullptr : &it->second;
}

fstab_table build_fstab(const cooccurrence_counts& counts, const build_params& params, std::string model) {
    require_alpha(params.alpha);
    require_lambda(params.lambda_div);
    if (params.top_k < 1) {
        throw std::domain_error("top_k must be >= 1");
    }

    fstab_table table;
    table.model = std::move(model);
    table.params = params;

    struct candidate {
        std::string rule;
        double pmi;
    };

    std::map<std::string, std::int64_t, std::less<>> usage;
    // feature_totals() iterates in ascending feature id, which fixes the visit order.
    for (const auto& [feature, total] : counts.feature_totals()) {
        if (total <= 0) {
            continue;
        }
        std::vector<candidate> pool;
        for (auto& rule : counts.candidates(feature)) {
            double p = pmi(feature, rule, counts, params.alpha);
            pool.push_back({std::move(rule), p});
        }
        auto& list = table.entries[feature];
        while (!pool.empty() && static_cast<int>(list.size()) < params.top_k) {
            std::size_t best = 0;
            double best_adj = 0.0;
            for (std::size_t i = 0; i < pool.size(); ++i) {
                double adj = adjusted_score(pool[i].pmi, lookup(usage, pool[i].rule), params.lambda_div);
                if (i == 0) {
                    best_adj = adj;
                    continue;
                }
                const auto& b = pool[best];
                bool better = adj > best_adj ||
                              (adj == best_adj && (pool[i].pmi > b.pmi || (pool[i].pmi == b.pmi && pool[i].rule < b.rule)));
                if (better) {
                    best = i;
                    best_adj = adj;
                }
            }
            auto chosen = std::move(pool[best]);
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
            ++usage[chosen.rule];
            list.push_back({std::move(chosen.rule), chosen.pmi, best_adj, static_cast<int>(list.size()) + 1});
        }
    }
    return table;
}

double coverage_k(const cooccurrence_counts& counts, const fstab_table& table, std::string_view feature) {
    auto candidates = counts.candidates(feature);
    if (candidates.empty()) {
        throw std::domain_error("coverage undefined: feature '" + std::string(feature) + "' has no candidates");
    }
    double alpha = table.params.alpha;
    double total = 0.0;
    for (const auto& r : candidates) {
        total += smoothed_conditional(feature, r, counts, alpha);
    }
    // Summed in candidate order so a complete list gives exactly 1.
    std::set<std::string_view> listed;
    if (const auto* list = table.find(feature)) {
        for (const auto& e : *list) {
            listed.insert(e.rule_id);
        }
    }
    double kept = 0.0;
    for (const auto& r : candidates) {
        if (listed.contains(r)) {
            kept += smoothed_conditional(feature, r, counts, alpha);
        }
    }
    return kept / total;
}

double gini(std::span<const std::int64_t> values) {
    if (values.empty()) {
        throw std::domain_error("gini of an empty distribution");
    }
    double sum = 0.0;
    for (auto v : values) {
        sum += static_cast<double>(v);
    }
    if (sum <= 0.0) {
        throw std::domain_error("gini of an all-zero distribution");
    }
    double diff = 0.0;
    for (auto a : values) {
        for (auto b : values) {
            diff += std::abs(static_cast<double>(a - b));
        }
    }
    return diff / (2.0 * static_cast<double>(values.size()) * sum);
}

concentration concentration_stats(const fstab_table& table) {
    std::map<std::string, std::int64_t, std::less<>> top1;
    for (const auto& [feature, list] : table.entries) {
        if (!list.empty()) {
            ++top1[list.front().rule_id];
        }
    }
    if (top1.empty()) {
        throw std::domain_error("concentration undefined: table has no rank-1 entries");
    }
    std::vector<std::int64_t> usage;
    for (const auto& [rule, n] : top1) {
        usage.push_back(n);
    }
    return {*std::ranges::max_element(usage), gini(usage)};
}

std::vector<sweep_row> sweep(const cooccurrence_counts& counts, double alpha, std::span<const int> ks,
                             std::span<const double> lambdas) {
    std::vector<sweep_row> rows;
    for (int k : ks) {
        for (double lambda_div : lambdas) {
            auto table = build_fstab(counts, {alpha, lambda_div, k}, {});
            sweep_row row{k, lambda_div, 0.0, 0.0, 0, 0.0};
            std::size_t n = 0;
            for (const auto& [feature, list] : table.entries) {
                row.mean_coverage += coverage_k(counts, table, feature);
                row.mean_list_size += static_cast<double>(list.size());
                ++n;
            }
            if (n > 0) {
                row.mean_coverage /= static_cast<double>(n);
                row.mean_list_size /= static_cast<double>(n);
                auto c = concentration_stats(table);
                row.max_use_1 = c.max_use_1;
                row.gini_1 = c.gini_1;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

nlohmann::json to_json(const fstab_table& table) {
    using json = nlohmann::json;
    const auto& prov = table.provenance;
    json split = {{"mode", prov.mode},
                  {"target_domain", prov.target_domain ? json(*prov.target_domain) : json(nullptr)},
                  {"seed", prov.seed},
                  {"fraction", prov.fraction},
                  {"construction_programs", prov.construction_programs},
                  {"construction_domains", prov.construction_domains}};
    json header = {{"model", table.model},
                   {"scanner", table.scanner},
                   {"alpha", table.params.alpha},
                   {"lambda", table.params.lambda_div},
                   {"top_k", table.params.top_k},
                   {"count_mode", std::string(to_string(table.mode))},
                   {"feature_order", "lexicographic"},
                   {"taxonomy_version", table.taxonomy_version},
                   {"include_unknown", table.include_unknown},
                   {"split", std::move(split)}};
    json entries = json::object();
    for (const auto& [feature, list] : table.entries) {
        json arr = json::array();
        for (const auto& e : list) {
            arr.push_back({{"rule_id", e.rule_id}, {"pmi", e.pmi}, {"adjusted", e.adjusted}, {"rank", e.rank}});
        }
        entries[feature] = std::move(arr);
    }
    return {{"header", std::move(header)}, {"entries", std::move(entries)}};
}

fstab_table table_from_json(const nlohmann::json& doc) {
    try {
        const auto& header = doc.at("header");
        fstab_table t;
        t.model = header.at("model").get<std::string>();
        t.scanner = header.at("scanner").get<std::string>();
        t.params.alpha = header.at("alpha").get<double>();
        t.params.lambda_div = header.at("lambda").get<double>();
        t.params.top_k = header.at("top_k").get<int>();
        auto mode = parse_count_mode(header.at("count_mode").get<std::string>());
        if (!mode) {
            throw input_error("table: unknown count_mode");
        }
        t.mode = *mode;
        t.taxonomy_version = header.value("taxonomy_version", std::string{});
        t.include_unknown = header.value("include_unknown", false);
        if (auto it = header.find("split"); it != header.end()) {
            auto& prov = t.provenance;
            prov.mode = it->at("mode").get<std::string>();
            if (auto td = it->find("target_domain"); td != it->end() && td->is_string()) {
                prov.target_domain = td->get<std::string>();
            }
            prov.seed = it->value("seed", std::uint64_t{0});
            prov.fraction = it->value("fraction", 0.0);
            prov.construction_programs = it->value("construction_programs", std::vector<std::string>{});
            prov.construction_domains = it->value("construction_domains", std::vector<std::string>{});
        }
        for (const auto& [feature, arr] : doc.at("entries").items()) {
            auto& list = t.entries[feature];
            for (const auto& e : arr) {
                list.push_back({e.at("rule_id").get<std::string>(), e.at("pmi").get<double>(),
                                e.at("adjusted").get<double>(), e.at("rank").get<int>()});
            }
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw input_error(std::string("malformed table: ") + e.what());
    }
}

void write_table(const std::filesystem::path& path, const fstab_table& table) {
    jsonl::write_document(path, to_json(table));
}

fstab_table load_table(const std::filesystem::path& path) {
    try {
        return table_from_json(jsonl::read_document(path));
    } catch (const input_error& e) {
        throw input_error(path.string() + ": " + e.what());
    }
}

}  // namespace fstab

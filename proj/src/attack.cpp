#include "fstab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace fstab {

rule_set predict(const fstab_table& table, const std::set<std::string>& observed_features, int query_k) {
    if (query_k < 0) {
        throw std::domain_error("query_k must be non-negative");
    }
    rule_set out;
    for (const auto& f : observed_features) {
        const auto* list = table.find(f);
        if (list == nullptr) {
            continue;
        }
        auto n = std::min(list->size(), static_cast<std::size_t>(query_k));
        for (std::size_t i = 0; i < n; ++i) {
            out.insert((*list)[i].rule_id);
        }
    }
    return out;
}

program_score score_program(const rule_set& predicted, const rule_set& actual) {
    std::size_t hit = 0;
    for (const auto& r : actual) {
        if (predicted.contains(r)) {
            ++hit;
        }
    }
    program_score s;
    s.success = hit > 0;
    if (!actual.empty()) {
        s.coverage = static_cast<double>(hit) / static_cast<double>(actual.size());
    }
    return s;
}

evaluation evaluate(const fstab_table& table, std::span<const attack_target> targets, int query_k,
                    empty_policy policy) {
    evaluation ev;
    double success_sum = 0.0;
    double coverage_sum = 0.0;
    for (const auto& t : targets) {
        attack_result r{t.program_id, predict(table, t.features, query_k), t.actual, false, std::nullopt};
        auto s = score_program(r.predicted, r.actual);
        r.success = s.success;
        r.coverage = s.coverage;
        if (r.coverage) {
            ++ev.n_scored;
            success_sum += r.success ? 1.0 : 0.0;
            coverage_sum += *r.coverage;
        } else if (policy == empty_policy::as_failure) {
            ++ev.n_scored;
        } else {
            ++ev.n_excluded;
        }
        ev.results.push_back(std::move(r));
    }
    std::ranges::sort(ev.results, {}, &attack_result::program_id);
    if (ev.n_scored == 0) {
        throw undefined_metric("ASR/ACR undefined: no test program has a nonempty actual set");
    }
    ev.asr = success_sum / static_cast<double>(ev.n_scored);
    ev.acr = coverage_sum / static_cast<double>(ev.n_scored);
    return ev;
}

std::string_view to_string(split_mode m) noexcept { return m == split_mode::held_out ? "held_out" : "cross_domain"; }

std::optional<split_mode> parse_split_mode(std::string_view s) noexcept {
    if (s == "held_out" || s == "held-out") {
        return split_mode::held_out;
    }
    if (s == "cross_domain" || s == "cross-domain") {
        return split_mode::cross_domain;
    }
    return std::nullopt;
}

namespace {

    // Fisher-Yates with a raw mt19937_64 draw; std::shuffle and the standard
    // distributions are implementation-defined, which would break reproducibility
    // across standard libraries.
    template <class T>
    void portable_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
        for (std::size_t i = v.size(); i > 1; --i) {
            auto j = static_cast<std::size_t>(rng() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

}  // namespace

split_plan make_split(const manifest& programs, split_mode mode, const std::optional<std::string>& target_domain,
                      std::uint64_t seed, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw std::invalid_argument("construction fraction must lie in (0, 1)");
    }
    if (mode == split_mode::cross_domain && !target_domain) {
        throw std::invalid_argument("cross_domain split needs a target domain");
    }
    if (programs.empty()) {
        throw input_error("cannot split an empty manifest");
    }

    std::map<std::string, std::set<std::string>> tasks_by_domain;
    for (const auto& r : programs.records()) {
        tasks_by_domain[r.domain].insert(r.task_id);
    }
    if (target_domain && !tasks_by_domain.contains(*target_domain)) {
        throw input_error("target domain '" + *target_domain + "' does not occur in the manifest");
    }

    std::mt19937_64 rng(seed);
    std::set<std::pair<std::string, std::string>> construction_tasks;
    for (const auto& [domain, tasks] : tasks_by_domain) {
        std::vector<std::string> order(tasks.begin(), tasks.end());
        portable_shuffle(order, rng);
        auto n = order.size();
        auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
        if (n >= 2) {
            take = std::clamp<std::size_t>(take, 1, n - 1);
        }
        for (std::size_t i = 0; i < take; ++i) {
            construction_tasks.emplace(domain, order[i]);
        }
    }

    split_plan plan;
    plan.mode = mode;
    plan.target_domain = target_domain;
    plan.seed = seed;
    plan.fraction = fraction;
    for (const auto& r : programs.records()) {
        bool construct_task = construction_tasks.contains({r.domain, r.task_id});
        bool in_target = target_domain && r.domain == *target_domain;
        if (mode == split_mode::cross_domain) {
            if (!in_target) {
                plan.construction_programs.insert(r.program_id);
            } else if (!construct_task) {
                plan.test_programs.insert(r.program_id);
            }
            continue;
        }
        if (construct_task) {
            plan.construction_programs.insert(r.program_id);
        } else if (!target_domain || in_target) {
            plan.test_programs.insert(r.program_id);
        }
    }
    return plan;
}

std::vector<attack_target> collect_targets(const std::set<std::string>& program_ids,
                                           const std::vector<finding>& findings,
                                           const std::vector<feature_label>& labels,
                                           std::string_view scanner) {
    std::map<std::string, attack_target, std::less<>> out;
    for (const auto& id : program_ids) {
        out.emplace(id, attack_target{id, {}, {}});
    }
    for (const auto& l : labels) {
        auto it = out.find(l.program_id);
        if (it != out.end() && l.action != unknown_action) {
            it->second.features.insert(l.action);
        }
    }
    for (const auto& f : findings) {
        auto it = out.find(f.program_id);
        if (it != out.end() && f.scanner == scanner) {
            it->second.actual.insert(f.rule_id);
        }
    }
    std::vector<attack_target> result;
    result.reserve(out.size());
    for (auto& [id, t] : out) {
        result.push_back(std::move(t));
    }
    return result;
}

nlohmann::json to_json(const attack_result& r) {
    return {{"program_id", r.program_id},
            {"predicted", r.predicted},
            {"actual", r.actual},
            {"success", r.success ? 1 : 0},
            {"coverage", r.coverage ? nlohmann::json(*r.coverage) : nlohmann::json(nullptr)}};
}

}  // namespace fstab

#include "fstab/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace fstab {

namespace {

    // Number of programs containing each pair; a program counts once per pair
    // because vuln_set is already deduplicated.
    template <class Pred>
    std::map<labeled_vuln, int> pair_frequency(std::span<const program_vulns> group, Pred keep) {
        std::map<labeled_vuln, int> freq;
        for (const auto& p : group) {
            for (const auto& v : p.vulns) {
                if (keep(v)) {
                    ++freq[v];
                }
            }
        }
        return freq;
    }

    std::optional<double> recurrent_share(const std::map<labeled_vuln, int>& freq) {
        if (freq.empty()) {
            return std::nullopt;
        }
        std::size_t recurrent = 0;
        for (const auto& [pair, n] : freq) {
            if (n > 1) {
                ++recurrent;
            }
        }
        return static_cast<double>(recurrent) / static_cast<double>(freq.size());
    }

    void finish(metric_family& m) {
        if (m.values.empty()) {
            return;
        }
        double sum = 0.0;
        for (const auto& [group, v] : m.values) {
            sum += v;
        }
        m.model = sum / static_cast<double>(m.values.size());
    }

    std::map<std::string, std::vector<program_vulns>> group_by(std::span<const program_vulns> programs,
                                                               std::string program_vulns::*key) {
        std::map<std::string, std::vector<program_vulns>> out;
        for (const auto& p : programs) {
            out[p.*key].push_back(p);
        }
        return out;
    }

}  // namespace

std::optional<double> recurrence(std::span<const program_vulns> group) {
    return recurrent_share(pair_frequency(group, [](const labeled_vuln&) { return true; }));
}

metric_family fvr(std::span<const program_vulns> programs) {
    std::set<std::string> features;
    for (const auto& p : programs) {
        features.insert(p.features.begin(), p.features.end());
        for (const auto& v : p.vulns) {
            features.insert(v.feature);
        }
    }
    metric_family m;
    m.groups.assign(features.begin(), features.end());
    for (const auto& f : features) {
        std::vector<program_vulns> members;
        for (const auto& p : programs) {
            bool has_pair = std::ranges::any_of(p.vulns, [&](const labeled_vuln& v) { return v.feature == f; });
            if (p.features.contains(f) || has_pair) {
                members.push_back(p);
            }
        }
        auto value = recurrent_share(pair_frequency(members, [&](const labeled_vuln& v) { return v.feature == f; }));
        if (value) {
            m.values.emplace(f, *value);
        }
    }
    finish(m);
    return m;
}

metric_family rvp(std::span<const program_vulns> programs) {
    metric_family m;
    for (const auto& [task, group] : group_by(programs, &program_vulns::task_id)) {
        m.groups.push_back(task);
        // Rephrasings are distinct programs of one task, so program frequency is
        // rephrasing frequency.
        if (auto value = recurrence(group)) {
            m.values.emplace(task, *value);
        }
    }
    finish(m);
    return m;
}

metric_family dvr(std::span<const program_vulns> programs) {
    metric_family m;
    for (const auto& [domain, group] : group_by(programs, &program_vulns::domain)) {
        m.groups.push_back(domain);
        if (auto value = recurrence(group)) {
            m.values.emplace(domain, *value);
        }
    }
    finish(m);
    return m;
}

metric_family cdt(std::span<const program_vulns> programs) {
    std::map<std::string, vuln_set> by_domain;
    for (const auto& p : programs) {
        by_domain[p.domain].insert(p.vulns.begin(), p.vulns.end());
    }
    // Number of domains in which each pair occurs.
    std::map<labeled_vuln, int> spread;
    for (const auto& [domain, pairs] : by_domain) {
        for (const auto& v : pairs) {
            ++spread[v];
        }
    }
    metric_family m;
    for (const auto& [domain, pairs] : by_domain) {
        m.groups.push_back(domain);
        if (pairs.empty()) {
            continue;
        }
        std::size_t shared = 0;
        for (const auto& v : pairs) {
            if (spread[v] > 1) {
                ++shared;
            }
        }
        m.values.emplace(domain, static_cast<double>(shared) / static_cast<double>(pairs.size()));
    }
    finish(m);
    return m;
}

double universality_gap(double dvr_model, double cdt_model) { return cdt_model - dvr_model; }

std::map<category, double> fingerprint(const std::map<std::string, double, std::less<>>& per_feature_fvr,
                                       const taxonomy& tax) {
    std::map<category, std::pair<double, int>> acc;
    for (const auto& [feature, value] : per_feature_fvr) {
        if (auto c = tax.category_of(feature)) {
            auto& [sum, n] = acc[*c];
            sum += value;
            ++n;
        }
    }
    std::map<category, double> out;
    for (const auto& [c, sn] : acc) {
        out.emplace(c, sn.first / sn.second);
    }
    return out;
}

std::vector<program_vulns> collect_programs(const manifest& programs,
                                            const std::vector<finding>& findings,
                                            const std::vector<feature_label>& labels,
                                            std::string_view model,
                                            std::string_view scanner,
                                            bool include_unknown) {
    std::map<std::string, program_vulns, std::less<>> out;
    for (const auto& r : programs.records()) {
        if (r.model == model) {
            out.emplace(r.program_id, program_vulns{r.program_id, r.task_id, r.rephrase_index, r.domain, {}, {}});
        }
    }
    auto keep = [&](std::string_view action) { return include_unknown || action != unknown_action; };
    for (const auto& l : labels) {
        auto it = out.find(l.program_id);
        if (it != out.end() && keep(l.action)) {
            it->second.features.insert(l.action);
        }
    }
    label_index index(labels);
    for (const auto& f : findings) {
        auto it = out.find(f.program_id);
        if (it == out.end() || f.scanner != scanner) {
            continue;
        }
        const auto* label = index.find(f.program_id, f.file, f.line);
        if (label == nullptr) {
            throw input_error("missing label for finding " + f.program_id + ":" + f.file + ":" +
                              std::to_string(f.line) + " (" + f.rule_id + ")");
        }
        if (keep(label->action)) {
            it->second.vulns.insert({label->action, f.rule_id});
        }
    }
    std::vector<program_vulns> result;
    result.reserve(out.size());
    for (auto& [id, p] : out) {
        result.push_back(std::move(p));
    }
    return result;
}

bool recurrence_report::any_defined() const {
    return fvr.model.has_value() || rvp.model.has_value() || dvr.model.has_value() || cdt.model.has_value();
}

recurrence_report make_report(std::string model, std::string scanner, std::span<const program_vulns> programs,
                              const taxonomy* tax) {
    recurrence_report r;
    r.model = std::move(model);
    r.scanner = std::move(scanner);
    r.n_programs = programs.size();
    r.fvr = fvr(programs);
    r.rvp = rvp(programs);
    r.dvr = dvr(programs);
    r.cdt = cdt(programs);
    if (r.dvr.model && r.cdt.model) {
        r.universality_gap = universality_gap(*r.dvr.model, *r.cdt.model);
    }
    if (tax != nullptr) {
        r.fingerprint = fingerprint(r.fvr.values, *tax);
    }
    return r;
}

namespace {

    using json = nlohmann::json;

    json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

    json family_json(const metric_family& m, bool zero_fill) {
        json per = json::object();
        for (const auto& g : m.groups) {
            auto it = m.values.find(g);
            if (it != m.values.end()) {
                per[g] = it->second;
            } else {
                per[g] = zero_fill ? json(0.0) : json(nullptr);
            }
        }
        return {{"per_group", std::move(per)}, {"model", optional_number(m.model)}};
    }

    std::string percent(const std::optional<double>& v) {
        if (!v) {
            return "--";
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
        return buf;
    }

    std::string pad(std::string s, std::size_t width) {
        if (s.size() < width) {
            s.append(width - s.size(), ' ');
        }
        return s;
    }

}  // namespace

nlohmann::json to_json(const recurrence_report& report, bool zero_fill) {
    json fp = json::object();
    for (const auto& [c, v] : report.fingerprint) {
        fp[std::string(to_string(c))] = v;
    }
    return {{"model", report.model},
            {"scanner", report.scanner},
            {"n_programs", report.n_programs},
            {"fvr", family_json(report.fvr, zero_fill)},
            {"rvp", family_json(report.rvp, zero_fill)},
            {"dvr", family_json(report.dvr, zero_fill)},
            {"cdt", family_json(report.cdt, zero_fill)},
            {"universality_gap", optional_number(report.universality_gap)},
            {"fingerprint", std::move(fp)}};
}

std::string format_reports(std::span<const recurrence_report> reports, bool zero_fill) {
    std::size_t model_w = 7;
    std::size_t scanner_w = 9;
    for (const auto& r : reports) {
        model_w = std::max(model_w, r.model.size() + 2);
        scanner_w = std::max(scanner_w, r.scanner.size() + 2);
    }
    std::ostringstream out;
    out << pad("Model", model_w) << pad("Scanner", scanner_w) << pad("FVR", 9) << pad("RVP", 9) << pad("DVR", 9)
        << pad("CDT", 9) << "Gap\n";
    for (const auto& r : reports) {
        out << pad(r.model, model_w) << pad(r.scanner, scanner_w) << pad(percent(r.fvr.model), 9)
            << pad(percent(r.rvp.model), 9)
            << pad(percent(r.dvr.model), 9) << pad(percent(r.cdt.model), 9) << percent(r.universality_gap) << '\n';
    }
    for (const auto& r : reports) {
        out << "\nFVR per feature (" << r.model << " / " << r.scanner << ")\n";
        for (const auto& f : r.fvr.groups) {
            auto it = r.fvr.values.find(f);
            std::optional<double> v;
            if (it != r.fvr.values.end()) {
                v = it->second;
            } else if (zero_fill) {
                v = 0.0;
            }
            out << "  " << pad(f, 40) << percent(v) << '\n';
        }
        if (!r.fingerprint.empty()) {
            out << "Fingerprint\n";
            for (auto c : all_categories) {
                auto it = r.fingerprint.find(c);
                out << "  " << pad(std::string(to_string(c)), 40)
                    << percent(it == r.fingerprint.end() ? std::optional<double>{} : it->second) << '\n';
            }
        }
    }
    return out.str();
}

}  // namespace fstab

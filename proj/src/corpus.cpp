#include "fstab/corpus.hpp"

#include "fstab/jsonl.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <tuple>

namespace fstab {

namespace {

    using json = nlohmann::json;

    std::string require_string(const json& obj, const char* key, const jsonl::position& pos) {
        auto it = obj.find(key);
        if (it == obj.end()) {
            throw input_error(pos.describe() + ": missing field '" + key + "'");
        }
        if (!it->is_string()) {
            throw input_error(pos.describe() + ": field '" + key + "' must be a string");
        }
        return it->get<std::string>();
    }

    long long require_integer(const json& obj, const char* key, const jsonl::position& pos) {
        auto it = obj.find(key);
        if (it == obj.end()) {
            throw input_error(pos.describe() + ": missing field '" + key + "'");
        }
        if (!it->is_number_integer()) {
            throw input_error(pos.describe() + ": field '" + key + "' must be an integer");
        }
        return it->get<long long>();
    }

    double require_number(const json& obj, const char* key, const jsonl::position& pos) {
        auto it = obj.find(key);
        if (it == obj.end()) {
            throw input_error(pos.describe() + ": missing field '" + key + "'");
        }
        if (!it->is_number()) {
            throw input_error(pos.describe() + ": field '" + key + "' must be a number");
        }
        return it->get<double>();
    }

    int require_line(const json& obj, const jsonl::position& pos) {
        auto line = require_integer(obj, "line", pos);
        if (line < 1) {
            throw input_error(pos.describe() + ": line must be >= 1, got " + std::to_string(line));
        }
        if (line > std::numeric_limits<int>::max()) {
            throw input_error(pos.describe() + ": line out of range");
        }
        return static_cast<int>(line);
    }

    void require_known_program(const manifest& programs, const std::string& id, const jsonl::position& pos) {
        if (!programs.contains(id)) {
            throw input_error(pos.describe() + ": unresolved program_id '" + id + "'");
        }
    }

}  // namespace

manifest::manifest(std::vector<program_record> records) : records_(std::move(records)) {
    std::set<std::tuple<std::string, int, std::string>> task_keys;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (r.program_id.empty()) {
            throw input_error("manifest record " + std::to_string(i + 1) + ": empty program_id");
        }
        if (r.domain.empty()) {
            throw input_error("manifest record '" + r.program_id + "': empty domain");
        }
        if (r.rephrase_index < 0) {
            throw input_error("manifest record '" + r.program_id + "': negative rephrase_index");
        }
        if (!index_.emplace(r.program_id, i).second) {
            throw input_error("duplicate program_id '" + r.program_id + "'");
        }
        if (!task_keys.emplace(r.task_id, r.rephrase_index, r.model).second) {
            throw input_error("duplicate (task_id, rephrase_index, model) = ('" + r.task_id + "', " +
                              std::to_string(r.rephrase_index) + ", '" + r.model + "') at program '" +
                              r.program_id + "'");
        }
    }
}

const program_record* manifest::find(std::string_view program_id) const {
    auto it = index_.find(program_id);
    return it == index_.end() ? nullptr : &records_[it->second];
}

manifest load_manifest(const fs::path& path) {
    std::vector<program_record> records;
    std::set<std::string> seen;
    jsonl::for_each_record(path, [&](const json& obj, const jsonl::position& pos) {
        program_record r;
        r.program_id = require_string(obj, "program_id", pos);
        r.task_id = require_string(obj, "task_id", pos);
        auto k = require_integer(obj, "rephrase_index", pos);
        if (k < 0 || k > std::numeric_limits<int>::max()) {
            throw input_error(pos.describe() + ": rephrase_index must be a non-negative integer");
        }
        r.rephrase_index = static_cast<int>(k);
        r.domain = require_string(obj, "domain", pos);
        r.model = require_string(obj, "model", pos);
        r.source_root = require_string(obj, "source_root", pos);
        if (r.program_id.empty()) {
            throw input_error(pos.describe() + ": empty program_id");
        }
        if (r.domain.empty()) {
            throw input_error(pos.describe() + ": empty domain");
        }
        if (!seen.insert(r.program_id).second) {
            throw input_error(pos.describe() + ": duplicate program_id '" + r.program_id + "'");
        }
        records.push_back(std::move(r));
    });
    return manifest(std::move(records));
}

std::vector<finding> load_findings(const fs::path& path, const manifest& programs) {
    std::vector<finding> out;
    jsonl::for_each_record(path, [&](const json& obj, const jsonl::position& pos) {
        finding f;
        f.program_id = require_string(obj, "program_id", pos);
        f.file = require_string(obj, "file", pos);
        f.line = require_line(obj, pos);
        f.rule_id = require_string(obj, "rule_id", pos);
        f.scanner = require_string(obj, "scanner", pos);
        if (f.rule_id.empty()) {
            throw input_error(pos.describe() + ": empty rule_id");
        }
        require_known_program(programs, f.program_id, pos);
        out.push_back(std::move(f));
    });
    return out;
}

std::vector<feature_label> load_labels(const fs::path& path, const manifest& programs) {
    std::vector<feature_label> out;
    jsonl::for_each_record(path, [&](const json& obj, const jsonl::position& pos) {
        feature_label l;
        l.program_id = require_string(obj, "program_id", pos);
        l.file = require_string(obj, "file", pos);
        l.line = require_line(obj, pos);
        l.action = require_string(obj, "action", pos);
        l.confidence = require_number(obj, "confidence", pos);
        if (auto it = obj.find("window_fallback"); it != obj.end() && it->is_boolean()) {
            l.window_fallback = it->get<bool>();
        }
        if (l.action.empty()) {
            throw input_error(pos.describe() + ": empty action");
        }
        require_known_program(programs, l.program_id, pos);
        out.push_back(std::move(l));
    });
    return out;
}

void write_manifest(const fs::path& path, const std::vector<program_record>& records) {
    jsonl::writer out(path);
    for (const auto& r : records) {
        out.write({{"program_id", r.program_id},
                   {"task_id", r.task_id},
                   {"rephrase_index", r.rephrase_index},
                   {"domain", r.domain},
                   {"model", r.model},
                   {"source_root", r.source_root.generic_string()}});
    }
}

void write_findings(const fs::path& path, const std::vector<finding>& findings) {
    jsonl::writer out(path);
    for (const auto& f : findings) {
        out.write({{"program_id", f.program_id},
                   {"file", f.file},
                   {"line", f.line},
                   {"rule_id", f.rule_id},
                   {"scanner", f.scanner}});
    }
}

void write_labels(const fs::path& path, const std::vector<feature_label>& labels) {
    jsonl::writer out(path);
    for (const auto& l : labels) {
        out.write({{"program_id", l.program_id},
                   {"file", l.file},
                   {"line", l.line},
                   {"action", l.action},
                   {"confidence", l.confidence},
                   {"window_fallback", l.window_fallback}});
    }
}

label_index::label_index(const std::vector<feature_label>& labels) {
    for (const auto& l : labels) {
        by_location_.emplace(std::tuple{l.program_id, l.file, l.line}, &l);
    }
}

const feature_label* label_index::find(std::string_view program_id, std::string_view file, int line) const {
    auto it = by_location_.find(std::tuple{program_id, file, line});
    return it == by_location_.end() ? nullptr : it->second;
}

vuln_set distinct_vulns(std::string_view program_id,
                        const std::vector<finding>& findings,
                        const std::vector<feature_label>& labels) {
    label_index index(labels);
    vuln_set out;
    for (const auto& f : findings) {
        if (f.program_id != program_id) {
            continue;
        }
        const auto* label = index.find(f.program_id, f.file, f.line);
        if (label == nullptr) {
            throw input_error("missing label for finding " + f.program_id + ":" + f.file + ":" +
                              std::to_string(f.line) + " (" + f.rule_id + ")");
        }
        out.insert({label->action, f.rule_id});
    }
    return out;
}

std::map<std::string, vuln_set, std::less<>> vulns_by_program(const std::vector<finding>& findings,
                                                               const std::vector<feature_label>& labels) {
    label_index index(labels);
    std::map<std::string, vuln_set, std::less<>> out;
    for (const auto& f : findings) {
        const auto* label = index.find(f.program_id, f.file, f.line);
        if (label == nullptr) {
            throw input_error("missing label for finding " + f.program_id + ":" + f.file + ":" +
                              std::to_string(f.line) + " (" + f.rule_id + ")");
        }
        out[f.program_id].insert({label->action, f.rule_id});
    }
    return out;
}

void sort_findings(std::vector<finding>& findings) {
    std::ranges::sort(findings, {}, [](const finding& f) {
        return std::tie(f.program_id, f.file, f.line, f.rule_id, f.scanner);
    });
}

void sort_labels(std::vector<feature_label>& labels) {
    std::ranges::sort(labels, {}, [](const feature_label& l) {
        return std::tie(l.program_id, l.file, l.line, l.action);
    });
}

}  // namespace fstab

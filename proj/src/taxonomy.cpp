#include "fstab/corpus.hpp"
#include "fstab/extractor.hpp"
#include "fstab/jsonl.hpp"

#include <set>

namespace fstab {

std::string_view to_string(category c) noexcept {
    switch (c) {
    case category::access_control:
        return "AccessControl";
    case category::data_flow:
        return "DataFlow";
    case category::business_logic:
        return "BusinessLogic";
    case category::storage_io:
        return "StorageIO";
    case category::observability:
        return "Observability";
    }
    return "BusinessLogic";
}

std::optional<category> parse_category(std::string_view name) noexcept {
    for (auto c : all_categories) {
        if (to_string(c) == name) {
            return c;
        }
    }
    return std::nullopt;
}

const action_spec* taxonomy::find(std::string_view action_id) const {
    for (const auto& a : actions) {
        if (a.action_id == action_id) {
            return &a;
        }
    }
    return nullptr;
}

std::optional<category> taxonomy::category_of(std::string_view action_id) const {
    if (const auto* a = find(action_id)) {
        return a->group;
    }
    return std::nullopt;
}

void validate_taxonomy(const taxonomy& tax) {
    std::set<std::string> ids;
    for (const auto& a : tax.actions) {
        if (a.action_id.empty()) {
            throw input_error("taxonomy: empty action_id");
        }
        if (a.action_id == unknown_action) {
            throw input_error("taxonomy: action_id 'unknown' is reserved");
        }
        if (!ids.insert(a.action_id).second) {
            throw input_error("taxonomy: duplicate action_id '" + a.action_id + "'");
        }
        if (a.keywords.empty()) {
            throw input_error("taxonomy: action '" + a.action_id + "' has no keywords");
        }
    }
}

namespace {

    std::vector<std::string> string_list(const nlohmann::json& obj, const char* key, const std::string& where,
                                         bool required) {
        auto it = obj.find(key);
        if (it == obj.end()) {
            if (required) {
                throw input_error(where + ": missing field '" + key + "'");
            }
            return {};
        }
        if (!it->is_array()) {
            throw input_error(where + ": field '" + key + "' must be an array of strings");
        }
        std::vector<std::string> out;
        for (const auto& v : *it) {
            if (!v.is_string()) {
                throw input_error(where + ": field '" + key + "' must be an array of strings");
            }
            out.push_back(v.get<std::string>());
        }
        return out;
    }

}  // namespace

taxonomy load_taxonomy(const std::filesystem::path& path) {
    auto doc = jsonl::read_document(path);
    if (!doc.is_object() || !doc.contains("actions") || !doc["actions"].is_array()) {
        throw input_error(path.string() + ": taxonomy must be an object with an 'actions' array");
    }
    taxonomy tax;
    tax.version = doc.value("version", std::string{});
    std::size_t idx = 0;
    for (const auto& entry : doc["actions"]) {
        ++idx;
        auto where = path.string() + ": action #" + std::to_string(idx);
        if (!entry.is_object() || !entry.contains("action_id") || !entry["action_id"].is_string()) {
            throw input_error(where + ": missing string field 'action_id'");
        }
        action_spec a;
        a.action_id = entry["action_id"].get<std::string>();
        where += " ('" + a.action_id + "')";
        a.keywords = string_list(entry, "keywords", where, true);
        a.route_keywords = string_list(entry, "route_keywords", where, false);
        a.api_patterns = string_list(entry, "api_patterns", where, false);
        a.negative_keywords = string_list(entry, "negative_keywords", where, false);
        auto cat = entry.value("category", std::string{});
        auto parsed = parse_category(cat);
        if (!parsed) {
            throw input_error(where + ": unknown category '" + cat + "'");
        }
        a.group = *parsed;
        tax.actions.push_back(std::move(a));
    }
    validate_taxonomy(tax);
    return tax;
}

void write_taxonomy(const std::filesystem::path& path, const taxonomy& tax) {
    nlohmann::json actions = nlohmann::json::array();
    for (const auto& a : tax.actions) {
        actions.push_back({{"action_id", a.action_id},
                           {"keywords", a.keywords},
                           {"route_keywords", a.route_keywords},
                           {"api_patterns", a.api_patterns},
                           {"negative_keywords", a.negative_keywords},
                           {"category", std::string(to_string(a.group))}});
    }
    jsonl::write_document(path, {{"version", tax.version}, {"actions", std::move(actions)}});
}

}  // namespace fstab

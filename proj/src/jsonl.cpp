#include "fstab/jsonl.hpp"

namespace fstab::jsonl {

void for_each_record(const std::filesystem::path& path,
                     const std::function<void(const nlohmann::json&, const position&)>& fn) {
    std::ifstream in(path);
    if (!in) {
        throw input_error("cannot open '" + path.string() + "'");
    }
    std::string text;
    position pos{path, 0};
    while (std::getline(in, text)) {
        ++pos.line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(text);
        }
        catch (const nlohmann::json::parse_error& e) {
            throw input_error(pos.describe() + ": malformed record: " + e.what());
        }
        if (!obj.is_object()) {
            throw input_error(pos.describe() + ": malformed record: expected a JSON object");
        }
        fn(obj, pos);
    }
}

nlohmann::json read_document(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw input_error("cannot open '" + path.string() + "'");
    }
    try {
        return nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::parse_error& e) {
        throw input_error(path.string() + ": malformed document: " + e.what());
    }
}

void write_document(const std::filesystem::path& path, const nlohmann::json& doc) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw input_error("cannot write '" + path.string() + "'");
    }
    out << doc.dump(2) << '\n';
}

writer::writer(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    out_.open(path, std::ios::binary);
    if (!out_) {
        throw input_error("cannot write '" + path.string() + "'");
    }
}

void writer::write(const nlohmann::json& record) {
    out_ << record.dump() << '\n';
}

}  // namespace fstab::jsonl

#pragma once

// Line-delimited JSON helpers shared by every on-disk format.

#include "fstab/corpus.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

namespace fstab::jsonl {

struct position {
    std::filesystem::path path;
    std::size_t line{};

    std::string describe() const { return path.string() + ":" + std::to_string(line); }
};

/// Calls `fn` for every non-blank line parsed as a JSON object.
void for_each_record(const std::filesystem::path& path,
                     const std::function<void(const nlohmann::json&, const position&)>& fn);

/// Reads a whole file as one JSON document.
nlohmann::json read_document(const std::filesystem::path& path);

/// Writes a JSON document with two-space indentation and a trailing newline.
void write_document(const std::filesystem::path& path, const nlohmann::json& doc);

class writer {
  public:
    explicit writer(const std::filesystem::path& path);
    void write(const nlohmann::json& record);

  private:
    std::filesystem::path path_;
    std::ofstream out_;
};

}  // namespace fstab::jsonl

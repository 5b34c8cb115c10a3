#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace flowrl {

using json = nlohmann::json;

/// Reads a line-delimited JSON file. Blank lines are skipped; a malformed
/// line raises ParseError naming the file and line number.
std::vector<json> read_jsonl(const std::filesystem::path& path);

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

/// Appends one record and flushes. Used by the append-only stores.
void append_jsonl(const std::filesystem::path& path, const json& record);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& value);

}  // namespace flowrl

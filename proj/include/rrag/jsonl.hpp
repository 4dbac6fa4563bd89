#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace rrag {

using json = nlohmann::json;

// Calls fn(line_number, parsed) for every non-blank line; 1-based line numbers.
// Throws DataError naming the line on parse failure or missing file.
void for_each_jsonl_line(const std::string& path,
                         const std::function<void(size_t, const json&)>& fn);

std::vector<json> read_jsonl(const std::string& path);

void write_jsonl(const std::string& path, const std::vector<json>& rows);

json read_json_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

} // namespace rrag

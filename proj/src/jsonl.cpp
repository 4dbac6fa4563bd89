#include "rrag/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "rrag/errors.hpp"
#include "rrag/strings.hpp"

namespace rrag {

void for_each_jsonl_line(const std::string& path,
                         const std::function<void(size_t, const json&)>& fn) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open file: " + path);
    }
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json parsed;
        try {
            parsed = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": malformed JSON record: " + e.what());
        }
        fn(line_no, parsed);
    }
}

std::vector<json> read_jsonl(const std::string& path) {
    std::vector<json> rows;
    for_each_jsonl_line(path, [&](size_t, const json& j) { rows.push_back(j); });
    return rows;
}

void write_jsonl(const std::string& path, const std::vector<json>& rows) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write file: " + path);
    }
    for (const auto& row : rows) {
        out << row.dump() << '\n';
    }
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open file: " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError(path + ": malformed JSON: " + e.what());
    }
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open file: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write file: " + path);
    }
    out << content;
}

} // namespace rrag

#include "rrag/strings.hpp"

#include <algorithm>
#include <cctype>

namespace rrag {

namespace {

bool is_space(char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

} // namespace

std::string trim(std::string_view s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(c);
    }
    return out;
}

std::string normalize_for_match(std::string_view s) {
    return collapse_whitespace(to_lower(s));
}

bool looks_numeric(std::string_view s) {
    std::string t = trim(s);
    if (t.empty()) return false;
    bool saw_digit = false;
    for (size_t i = 0; i < t.size(); ++i) {
        char c = t[i];
        if (c >= '0' && c <= '9') {
            saw_digit = true;
        } else if (c == ',' || c == '.') {
            // separators only between digits
            if (i == 0 || i + 1 == t.size()) return false;
        } else if (c == '-' || c == '+') {
            if (i != 0) return false;
        } else {
            return false;
        }
    }
    return saw_digit;
}

std::string strip_commas(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c != ',') out.push_back(c);
    }
    return out;
}

bool contains_answer(std::string_view haystack, std::string_view needle) {
    const std::string text = normalize_for_match(haystack);
    const std::string ans = normalize_for_match(needle);
    if (ans.empty()) return false;
    if (text.find(ans) != std::string::npos) return true;
    if (looks_numeric(ans)) {
        const std::string text_nc = strip_commas(text);
        const std::string ans_nc = strip_commas(ans);
        if (text_nc.find(ans_nc) != std::string::npos) return true;
    }
    return false;
}

std::vector<std::string> split(std::string_view s, std::string_view sep) {
    std::vector<std::string> out;
    if (sep.empty()) {
        out.emplace_back(s);
        return out;
    }
    size_t pos = 0;
    while (true) {
        size_t next = s.find(sep, pos);
        if (next == std::string_view::npos) {
            out.emplace_back(s.substr(pos));
            break;
        }
        out.emplace_back(s.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        cur.push_back(c);
        if (c == '.' || c == '!' || c == '?') {
            std::string t = trim(cur);
            if (!t.empty()) out.push_back(std::move(t));
            cur.clear();
        }
    }
    std::string t = trim(cur);
    if (!t.empty()) out.push_back(std::move(t));
    return out;
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

} // namespace rrag

#include "plvm/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "plvm/types.hpp"

namespace plvm::csv {

std::vector<std::string> read_lines(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        first = false;
        lines.push_back(std::move(line));
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

std::vector<std::string> split(std::string_view line)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

std::string format_double(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

bool parse_double(std::string_view text, double &out)
{
    if (text.empty()) return false;
    if (text == "inf") { out = std::numeric_limits<double>::infinity(); return true; }
    if (text == "-inf") { out = -std::numeric_limits<double>::infinity(); return true; }
    if (text == "nan") { out = std::numeric_limits<double>::quiet_NaN(); return true; }
    const char *begin = text.data();
    if (*begin == '+') ++begin;
    const auto res = std::from_chars(begin, text.data() + text.size(), out);
    return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

bool parse_int(std::string_view text, long long &out)
{
    if (text.empty()) return false;
    const char *begin = text.data();
    if (*begin == '+') ++begin;
    const auto res = std::from_chars(begin, text.data() + text.size(), out);
    return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

void write_file(const std::filesystem::path &path, const std::string &text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

}  // namespace plvm::csv

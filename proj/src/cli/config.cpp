#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "tweezerlab/cli.hpp"
#include "tweezerlab/errors.hpp"

namespace tweezerlab::cli {

namespace {

std::string type_name(const Json& v)
{
    return std::string(v.type_name());
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

Json parse_json(const std::string& text, const std::string& source)
{
    try {
        return Json::parse(text);
    }
    catch (const Json::parse_error& e) {
        std::size_t line = 1, column = 1;
        const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t i = 0; i < end; ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            }
            else {
                ++column;
            }
        }
        std::string detail = e.what();
        const auto pos = detail.find("parse error");
        if (pos != std::string::npos)
            detail = detail.substr(pos);
        throw ConfigError("malformed JSON in " + source + " at line " + std::to_string(line) + ", column " +
                          std::to_string(column) + ": " + detail);
    }
}

Json load_json_file(const std::filesystem::path& path)
{
    return parse_json(read_file(path), "'" + path.string() + "'");
}

void apply_override(Json& config, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    Json value;
    try {
        value = Json::parse(text);
    }
    catch (const Json::parse_error&) {
        value = text;
    }
    if (!config.is_object())
        throw ConfigError("--set needs a JSON object at the top level");
    Json* node = &config;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty())
            throw ConfigError("--set key '" + key + "' has an empty component");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        Json& next = (*node)[part];
        if (next.is_null())
            next = Json::object();
        if (!next.is_object())
            throw ConfigError("--set key '" + key + "': '" + part + "' is not an object");
        node = &next;
        start = dot + 1;
    }
}

ConfigReader::ConfigReader(Json node, std::string path) : node_(std::move(node)), path_(std::move(path))
{
    if (node_.is_null())
        node_ = Json::object();
    if (!node_.is_object())
        throw ConfigError("'" + (path_.empty() ? std::string("<root>") : path_) + "' must be a JSON object, got " +
                          type_name(node_));
}

std::string ConfigReader::qualified(const std::string& key) const
{
    return path_.empty() ? key : path_ + "." + key;
}

bool ConfigReader::has(const std::string& key) const { return node_.contains(key); }

bool ConfigReader::is_null(const std::string& key) const { return !node_.contains(key) || node_.at(key).is_null(); }

const Json& ConfigReader::get(const std::string& key)
{
    if (!node_.contains(key))
        throw ConfigError("missing required key '" + qualified(key) + "'");
    return node_.at(key);
}

void ConfigReader::record(const std::string& key, Json value)
{
    if (std::find(order_.begin(), order_.end(), key) == order_.end())
        order_.push_back(key);
    scalars_[key] = std::move(value);
}

double ConfigReader::number(const std::string& key, double fallback)
{
    if (is_null(key)) {
        record(key, fallback);
        return fallback;
    }
    return number(key);
}

double ConfigReader::number(const std::string& key)
{
    const Json& v = get(key);
    if (!v.is_number())
        throw ConfigError("key '" + qualified(key) + "' must be a number, got " + type_name(v));
    const double x = v.get<double>();
    if (!std::isfinite(x))
        throw ConfigError("key '" + qualified(key) + "' must be finite");
    record(key, v);
    return x;
}

long long ConfigReader::integer(const std::string& key, long long fallback)
{
    if (!has(key)) {
        record(key, fallback);
        return fallback;
    }
    const Json& v = get(key);
    if (!v.is_number_integer())
        throw ConfigError("key '" + qualified(key) + "' must be an integer, got " + type_name(v));
    record(key, v);
    return v.get<long long>();
}

bool ConfigReader::boolean(const std::string& key, bool fallback)
{
    if (!has(key)) {
        record(key, fallback);
        return fallback;
    }
    const Json& v = get(key);
    if (!v.is_boolean())
        throw ConfigError("key '" + qualified(key) + "' must be true or false, got " + type_name(v));
    record(key, v);
    return v.get<bool>();
}

std::string ConfigReader::string(const std::string& key, const std::string& fallback)
{
    if (!has(key)) {
        record(key, fallback);
        return fallback;
    }
    return string(key);
}

std::string ConfigReader::string(const std::string& key)
{
    const Json& v = get(key);
    if (!v.is_string())
        throw ConfigError("key '" + qualified(key) + "' must be a string, got " + type_name(v));
    record(key, v);
    return v.get<std::string>();
}

std::vector<double> ConfigReader::numbers(const std::string& key)
{
    const Json& v = get(key);
    if (!v.is_array())
        throw ConfigError("key '" + qualified(key) + "' must be an array of numbers, got " + type_name(v));
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number())
            throw ConfigError("key '" + qualified(key) + "[" + std::to_string(i) + "]' must be a number");
        out.push_back(v[i].get<double>());
    }
    record(key, v);
    return out;
}

std::vector<double> ConfigReader::nullable_numbers(const std::string& key)
{
    const Json& v = get(key);
    if (!v.is_array())
        throw ConfigError("key '" + qualified(key) + "' must be an array, got " + type_name(v));
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i].is_null())
            out.push_back(std::numeric_limits<double>::quiet_NaN());
        else if (v[i].is_number())
            out.push_back(v[i].get<double>());
        else
            throw ConfigError("key '" + qualified(key) + "[" + std::to_string(i) + "]' must be a number or null");
    }
    record(key, v);
    return out;
}

ConfigReader& ConfigReader::object(const std::string& key)
{
    auto it = children_.find(key);
    if (it != children_.end())
        return *it->second;
    Json node = has(key) ? node_.at(key) : Json::object();
    if (!node.is_null() && !node.is_object())
        throw ConfigError("key '" + qualified(key) + "' must be an object, got " + type_name(node));
    if (std::find(order_.begin(), order_.end(), key) == order_.end())
        order_.push_back(key);
    auto child = std::make_unique<ConfigReader>(std::move(node), qualified(key));
    return *children_.emplace(key, std::move(child)).first->second;
}

std::vector<ConfigReader*> ConfigReader::objects(const std::string& key)
{
    const Json& v = get(key);
    if (!v.is_array())
        throw ConfigError("key '" + qualified(key) + "' must be an array of objects, got " + type_name(v));
    auto& slot = arrays_[key];
    slot.clear();
    std::vector<ConfigReader*> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        slot.push_back(std::make_unique<ConfigReader>(v[i], qualified(key) + "[" + std::to_string(i) + "]"));
        out.push_back(slot.back().get());
    }
    if (std::find(order_.begin(), order_.end(), key) == order_.end())
        order_.push_back(key);
    return out;
}

void ConfigReader::finish() const
{
    for (auto it = node_.begin(); it != node_.end(); ++it)
        if (std::find(order_.begin(), order_.end(), it.key()) == order_.end())
            throw ConfigError("unknown key '" + qualified(it.key()) + "'");
    for (const auto& [key, child] : children_)
        child->finish();
    for (const auto& [key, list] : arrays_)
        for (const auto& child : list)
            child->finish();
}

Json ConfigReader::resolved() const
{
    Json out = Json::object();
    for (const auto& key : order_) {
        if (auto c = children_.find(key); c != children_.end()) {
            out[key] = c->second->resolved();
        }
        else if (auto a = arrays_.find(key); a != arrays_.end()) {
            Json arr = Json::array();
            for (const auto& child : a->second)
                arr.push_back(child->resolved());
            out[key] = std::move(arr);
        }
        else if (auto s = scalars_.find(key); s != scalars_.end()) {
            out[key] = s->second;
        }
    }
    return out;
}

std::string format_number(double value)
{
    if (std::isnan(value))
        return "nan";
    if (std::isinf(value))
        return value > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", value);
    return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size())
{
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells)
{
    if (cells.size() != columns_)
        throw std::logic_error("csv row has " + std::to_string(cells.size()) + " cells, header has " +
                               std::to_string(columns_));
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i > 0)
            text_ += ',';
        text_ += cells[i];
    }
    text_ += '\n';
}

void CsvWriter::row(const std::vector<double>& values)
{
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values)
        cells.push_back(format_number(v));
    row(cells);
}

bool CsvTable::has_column(const std::string& name) const
{
    return std::find(header.begin(), header.end(), name) != header.end();
}

std::vector<double> CsvTable::column(const std::string& name) const
{
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
        throw ConfigError("CSV has no column '" + name + "'");
    const auto j = static_cast<std::size_t>(it - header.begin());
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows)
        out.push_back(r[j]);
    return out;
}

CsvTable read_csv(const std::filesystem::path& path)
{
    const std::string text = read_file(path);
    std::istringstream in(text);
    CsvTable table;
    std::string line;
    int line_no = 0;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        if (!s.empty() && s.back() == ',')
            cells.emplace_back();
        for (auto& c : cells) {
            const auto b = c.find_first_not_of(" \t\r");
            const auto e = c.find_last_not_of(" \t\r");
            c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
        }
        return cells;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#')
            continue;
        auto cells = split(line);
        if (table.header.empty()) {
            table.header = std::move(cells);
            continue;
        }
        if (cells.size() != table.header.size())
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(table.header.size()) + " cells, got " + std::to_string(cells.size()));
        std::vector<double> row;
        for (const auto& c : cells) {
            std::size_t used = 0;
            double v = 0;
            try {
                v = std::stod(c, &used);
            }
            catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != c.size())
                throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": '" + c + "' is not a number");
            row.push_back(v);
        }
        table.rows.push_back(std::move(row));
    }
    if (table.header.empty())
        throw ConfigError("CSV '" + path.string() + "' is empty");
    return table;
}

}  // namespace tweezerlab::cli

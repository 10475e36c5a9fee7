#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace tweezerlab::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitComputation = 1;
inline constexpr int kExitConfig = 2;

// Parses JSON text; syntax errors become ConfigError naming line and column.
Json parse_json(const std::string& text, const std::string& source);
Json load_json_file(const std::filesystem::path& path);

// Applies `a.b.c=value`. The value is parsed as JSON when possible and taken
// as a string otherwise; intermediate objects are created as needed.
void apply_override(Json& config, const std::string& assignment);

// Typed view over one JSON object. Every key read is recorded, defaults are
// written into the resolved copy, and finish() rejects keys nobody asked for.
class ConfigReader {
public:
    ConfigReader(Json node, std::string path);
    ConfigReader(ConfigReader&&) = default;
    ConfigReader& operator=(ConfigReader&&) = default;

    [[nodiscard]] bool has(const std::string& key) const;
    [[nodiscard]] bool is_null(const std::string& key) const;

    double number(const std::string& key, double fallback);
    double number(const std::string& key);  // required
    long long integer(const std::string& key, long long fallback);
    bool boolean(const std::string& key, bool fallback);
    std::string string(const std::string& key, const std::string& fallback);
    std::string string(const std::string& key);  // required
    std::vector<double> numbers(const std::string& key);  // required array
    // Array of numbers where null entries are allowed (returned as NaN).
    std::vector<double> nullable_numbers(const std::string& key);
    // Nested object; an empty one when absent. The reference stays valid for
    // the lifetime of this reader.
    ConfigReader& object(const std::string& key);
    // Required array of objects.
    std::vector<ConfigReader*> objects(const std::string& key);

    // Throws ConfigError for keys that were never read, recursively.
    void finish() const;

    // Input with defaults filled in for every key that was read.
    [[nodiscard]] Json resolved() const;
    [[nodiscard]] std::string qualified(const std::string& key) const;

private:
    const Json& get(const std::string& key);
    void record(const std::string& key, Json value);

    Json node_;
    std::string path_;
    std::vector<std::string> order_;
    std::map<std::string, Json> scalars_;
    std::map<std::string, std::unique_ptr<ConfigReader>> children_;
    std::map<std::string, std::vector<std::unique_ptr<ConfigReader>>> arrays_;
};

std::string sha256_file(const std::filesystem::path& path);
std::string sha256_string(const std::string& data);

std::string utc_timestamp();

// One per output directory; written last so the output list is complete.
struct RunManifest {
    std::string tool_version;
    std::string subcommand;
    Json config;
    std::optional<unsigned long long> seed;     // master seed of stochastic subcommands
    std::map<std::string, std::string> input_hashes;   // path -> sha256
    std::string started;
    std::string finished;
    std::vector<std::string> outputs;                 // relative to the output dir
    std::map<std::string, std::string> output_hashes;

    [[nodiscard]] Json to_json() const;
};

// Output directory with single-owner file writing and a manifest.
class OutputDir {
public:
    explicit OutputDir(std::filesystem::path dir);

    void write_text(const std::string& name, const std::string& content);
    void write_json(const std::string& name, const Json& value);
    void write_binary(const std::string& name, const std::string& bytes);
    void write_manifest(RunManifest manifest) const;

    [[nodiscard]] const std::filesystem::path& path() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> written_;
};

// CSV with a header row, "," delimiter, "." decimals and LF line endings.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void row(const std::vector<double>& values);
    void row(const std::vector<std::string>& cells);
    [[nodiscard]] const std::string& str() const { return text_; }

private:
    std::size_t columns_;
    std::string text_;
};

std::string format_number(double value);

// Numeric CSV with a header row; columns looked up by name.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    [[nodiscard]] std::vector<double> column(const std::string& name) const;
    [[nodiscard]] bool has_column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

std::vector<std::string> subcommands();

// Full command line handling; returns the process exit status.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tweezerlab::cli

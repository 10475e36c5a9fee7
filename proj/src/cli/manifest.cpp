#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "tweezerlab/cli.hpp"
#include "tweezerlab/errors.hpp"
#include "tweezerlab/parallel.hpp"

namespace tweezerlab::cli {

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new())
    {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
            throw std::runtime_error("sha256: digest initialization failed");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const char* data, std::size_t n)
    {
        if (EVP_DigestUpdate(ctx_, data, n) != 1)
            throw std::runtime_error("sha256: update failed");
    }

    std::string hex()
    {
        unsigned char digest[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_, digest, &len) != 1)
            throw std::runtime_error("sha256: finalization failed");
        std::ostringstream ss;
        for (unsigned int i = 0; i < len; ++i)
            ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
        return ss.str();
    }

private:
    EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_string(const std::string& data)
{
    Sha256 h;
    h.update(data.data(), data.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open file '" + path.string() + "' for hashing");
    Sha256 h;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

Json RunManifest::to_json() const
{
    Json j;
    j["manifest_version"] = 1;
    j["tool"] = "tweezerlab";
    j["tool_version"] = tool_version;
    j["subcommand"] = subcommand;
    j["seed"] = seed ? Json(*seed) : Json(nullptr);
    j["workers"] = worker_count();
    j["started"] = started;
    j["finished"] = finished;
    j["input_hashes"] = Json::object();
    for (const auto& [path, hash] : input_hashes)
        j["input_hashes"][path] = hash;
    j["outputs"] = Json::array();
    for (const auto& name : outputs) {
        Json o;
        o["file"] = name;
        if (auto it = output_hashes.find(name); it != output_hashes.end())
            o["sha256"] = it->second;
        j["outputs"].push_back(o);
    }
    j["config"] = config;
    return j;
}

OutputDir::OutputDir(std::filesystem::path dir) : dir_(std::move(dir))
{
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_))
        throw ConfigError("cannot create output directory '" + dir_.string() + "'");
}

void OutputDir::write_binary(const std::string& name, const std::string& bytes)
{
    const auto path = dir_ / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw ConfigError("cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw ComputationError("write to '" + path.string() + "' failed");
    written_.push_back(name);
}

void OutputDir::write_text(const std::string& name, const std::string& content) { write_binary(name, content); }

void OutputDir::write_json(const std::string& name, const Json& value) { write_binary(name, value.dump(2) + "\n"); }

void OutputDir::write_manifest(RunManifest manifest) const
{
    manifest.outputs = written_;
    for (const auto& name : written_)
        manifest.output_hashes[name] = sha256_file(dir_ / name);
    const auto path = dir_ / "manifest.json";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw ConfigError("cannot write '" + path.string() + "'");
    out << manifest.to_json().dump(2) << "\n";
}

}  // namespace tweezerlab::cli

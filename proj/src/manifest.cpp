#include "nlv/manifest.hpp"

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "nlv/error.hpp"
#include "nlv/report.hpp"

namespace nlv {

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 initialisation failed");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, std::size_t n) {
        if (EVP_DigestUpdate(ctx_, data, n) != 1) throw Error("SHA-256 update failed");
    }
    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned len = 0;
        if (EVP_DigestFinal_ex(ctx_, md.data(), &len) != 1) throw Error("SHA-256 finalisation failed");
        std::string out;
        for (unsigned i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
        return out;
    }

private:
    EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read input file '" + path.string() + "'");
    Sha256 h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

std::string utc_timestamp() {
    const auto now = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                       tm.tm_hour, tm.tm_min, tm.tm_sec);
}

void RunManifest::add_input(const std::string& role, const std::filesystem::path& path) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec) throw ValidationError("input file '" + path.string() + "' is not readable: " + ec.message());
    inputs.push_back({role, path.string(), sha256_file(path), size});
}

std::string RunManifest::inputs_digest() const {
    std::string joined;
    for (const auto& in : inputs) joined += in.role + "\t" + in.sha256 + "\n";
    return sha256_hex(joined);
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json ins = nlohmann::json::array();
    for (const auto& in : inputs) {
        ins.push_back({{"role", in.role}, {"path", in.path}, {"sha256", in.sha256}, {"bytes", in.bytes}});
    }
    nlohmann::json j = {{"tool_version", tool_version},
                        {"seed", seed},
                        {"threads", threads},
                        {"started_at", started_at},
                        {"finished_at", finished_at},
                        {"status", status},
                        {"failed_stage", failed_stage ? nlohmann::json(*failed_stage) : nlohmann::json(nullptr)},
                        {"exit_code", exit_code ? nlohmann::json(*exit_code) : nlohmann::json(nullptr)},
                        {"message", message},
                        {"stages_completed", stages_completed},
                        {"inputs", ins},
                        {"inputs_digest", inputs_digest()},
                        {"outputs", outputs}};
    return j;
}

void RunManifest::write(const std::filesystem::path& path) const { write_json_file(path, to_json()); }

}  // namespace nlv

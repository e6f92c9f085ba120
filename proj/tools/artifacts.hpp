// Artifact bookkeeping for the command-line tool: hashing, never-overwrite
// output paths and run manifests.

#ifndef RECOLL_TOOLS_ARTIFACTS_HPP
#define RECOLL_TOOLS_ARTIFACTS_HPP

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "recoll/io.hpp"
#include "recoll/parallel.hpp"

namespace recoll::cli {

namespace fs = std::filesystem;

inline std::string sha256_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot hash " + path);
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
    std::vector<char> buf(1 << 16);
    while (f) {
        f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (f.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(f.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx.get(), md, &len);
    std::ostringstream hex;
    for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return hex.str();
}

/// `path` if free, otherwise the first free of stem.1.ext, stem.2.ext, ...
inline std::string versioned_path(const std::string& path) {
    if (!fs::exists(path)) return path;
    const fs::path p(path);
    const fs::path dir = p.parent_path();
    std::string stem = p.stem().string(), ext = p.extension().string();
    if (fs::is_directory(p)) {
        stem = p.filename().string();
        ext.clear();
    }
    for (int v = 1;; ++v) {
        const fs::path c = dir / (stem + "." + std::to_string(v) + ext);
        if (!fs::exists(c)) return c.string();
    }
}

inline void ensure_parent(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

/// Collects inputs and outputs of one command and writes the manifest.
class Run {
  public:
    Run(std::string command, std::vector<std::string> argv, SystemConfig cfg, IntegratorSettings settings)
        : command_(std::move(command)), argv_(std::move(argv)), cfg_(cfg), settings_(settings),
          start_(std::chrono::steady_clock::now()) {}

    /// Reserves a fresh path for an output file (never an existing one).
    std::string output(const std::string& requested) {
        const std::string p = versioned_path(requested);
        ensure_parent(p);
        std::ofstream{p};  // claim the name so a second request in this run moves on
        outputs_.push_back(p);
        return p;
    }

    /// Reserves a fresh directory. Files written inside must be registered with add_output.
    std::string output_dir(const std::string& requested) {
        const std::string p = versioned_path(requested);
        fs::create_directories(p);
        return p;
    }

    void add_output(const std::string& p) { outputs_.push_back(p); }
    void add_input(const std::string& p) { inputs_.push_back(p); }
    void note(const std::string& key, json value) { extra_[key] = std::move(value); }

    const std::vector<std::string>& outputs() const { return outputs_; }

    json manifest() const {
        json ins = json::array(), outs = json::array();
        for (const auto& p : inputs_) ins.push_back({{"path", p}, {"sha256", sha256_file(p)}});
        for (const auto& p : outputs_) outs.push_back({{"path", p}, {"sha256", sha256_file(p)}});
        const char* env = std::getenv(kThreadEnvVar);
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        return {{"version", RECOLL_VERSION},
                {"command", command_},
                {"argv", argv_},
                {"config", to_json(cfg_)},
                {"integrator", to_json(settings_)},
                {"threads", {{"env", env ? json(env) : json(nullptr)}, {"effective", thread_budget()}}},
                {"inputs", ins},
                {"outputs", outs},
                {"wall_time_s",
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count()},
                {"finished_utc", stamp},
                {"details", extra_}};
    }

    /// Writes <anchor>.manifest.json (versioned) next to the first output.
    std::string write_manifest() const {
        if (outputs_.empty()) return {};
        const std::string path = versioned_path(outputs_.front() + ".manifest.json");
        std::ofstream f(path);
        f << manifest().dump(2) << '\n';
        return path;
    }

  private:
    std::string command_;
    std::vector<std::string> argv_;
    SystemConfig cfg_;
    IntegratorSettings settings_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> inputs_, outputs_;
    json extra_ = json::object();
};

}  // namespace recoll::cli

#endif

#pragma once

#include <fbm/autodiff/checkpoint.hpp>
#include <fbm/core/config.hpp>
#include <fbm/core/hash.hpp>
#include <fbm/data/dataset.hpp>

#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>

namespace fbm::cli {

inline constexpr int kManifestSchema = 1;
inline constexpr int kScoresSchema = 1;
inline constexpr const char* kManifestName = "manifest.json";

inline std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Reproducibility record written once per output directory.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), argv_(std::move(argv)), start_(std::chrono::system_clock::now()),
        clock_(std::chrono::steady_clock::now()) {}

  void set_config(const Config& c) { config_text_ = c.to_text(); }
  void set_resolved(nlohmann::json j) { resolved_ = std::move(j); }
  void set_seed(std::uint64_t s) { seed_ = s; }
  void add_input(const std::string& path) { inputs_[path] = file_hash(path); }

  // Hashes every regular file under `dir` except the manifest itself.
  void write(const std::string& dir) const {
    namespace fs = std::filesystem;
    nlohmann::json artifacts = nlohmann::json::object();
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().filename() != kManifestName) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& p : files) artifacts[fs::relative(p, dir).generic_string()] = file_hash(p.string());
    const auto end = std::chrono::system_clock::now();
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_).count();
    const nlohmann::json j = {
        {"command", command_},
        {"command_line", argv_},
        {"config", config_text_},
        {"resolved", resolved_},
        {"seed", seed_},
        {"schema",
         {{"manifest", kManifestSchema},
          {"dataset", data::kDatasetSchema},
          {"checkpoint", ad::kCheckpointSchema},
          {"scores", kScoresSchema}}},
        {"inputs", inputs_},
        {"artifacts", artifacts},
        {"wall_clock", {{"start", utc_timestamp(start_)}, {"end", utc_timestamp(end)}, {"seconds", seconds}}}};
    const std::string path = (fs::path(dir) / kManifestName).string();
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << j.dump(2) << '\n';
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::string config_text_;
  nlohmann::json resolved_ = nlohmann::json::object();
  nlohmann::json inputs_ = nlohmann::json::object();
  std::uint64_t seed_ = 0;
  std::chrono::system_clock::time_point start_;
  std::chrono::steady_clock::time_point clock_;
};

inline nlohmann::json read_manifest(const std::string& dir) {
  const std::string path = (std::filesystem::path(dir) / kManifestName).string();
  std::ifstream is(path);
  if (!is) throw std::runtime_error("no manifest in " + dir);
  return nlohmann::json::parse(is);
}

}  // namespace fbm::cli

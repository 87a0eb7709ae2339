#include "manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>

#include "dirsurf/errors.hpp"
#include "dirsurf/io.hpp"
#include "version.hpp"

namespace dirsurf::app {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("SHA-256 unavailable");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  if (in.bad()) throw IoError("read error on " + file.string());
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::string hex;
  hex.reserve(2 * len);
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

std::vector<FileEntry> inventory(const fs::path& dir) {
  std::vector<FileEntry> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel == kManifestName || rel.ends_with(".tmp")) continue;
    out.push_back({rel, e.file_size(), sha256_hex(e.path())});
  }
  std::sort(out.begin(), out.end(), [](const FileEntry& a, const FileEntry& b) { return a.path < b.path; });
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& dir, const Manifest& m) {
  json files = json::array();
  for (const auto& f : inventory(dir)) files.push_back({{"path", f.path}, {"bytes", f.bytes}, {"sha256", f.sha256}});
  const json j = {{"format", "dirsurf-manifest"},
                  {"version", 1},
                  {"tool_version", kVersion},
                  {"command", m.command},
                  {"config", m.config},
                  {"started", m.started},
                  {"finished", m.finished},
                  {"final_metrics", m.final_metrics},
                  {"files", files}};
  io::write_text_atomic(dir / kManifestName, j.dump(2) + "\n");
}

std::vector<std::string> verify_manifest(const fs::path& dir) {
  json j;
  try {
    j = json::parse(io::read_text(dir / kManifestName));
  } catch (const json::exception& e) {
    throw IoError("bad manifest in " + dir.string() + ": " + e.what());
  }
  std::vector<std::string> bad;
  for (const auto& f : j.at("files")) {
    const std::string rel = f.at("path");
    const fs::path p = dir / rel;
    if (!fs::exists(p) || sha256_hex(p) != f.at("sha256").get<std::string>()) bad.push_back(rel);
  }
  return bad;
}

}  // namespace dirsurf::app

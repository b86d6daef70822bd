#include "cprec/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "cprec/text_io.hpp"
#include "cprec/types.hpp"

namespace cprec {

namespace {

using Json = nlohmann::ordered_json;

Json digests_to_json(const std::vector<FileDigest>& files) {
  Json a = Json::array();
  for (const auto& f : files) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
  return a;
}

std::vector<FileDigest> digests_from_json(const Json& a) {
  std::vector<FileDigest> files;
  for (const auto& f : a) files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
  return files;
}

}  // namespace

std::string RunManifest::to_json() const {
  Json j;
  j["tool"] = "cprec";
  j["version"] = tool_version;
  j["command"] = command;
  j["args"] = args;
  j["config"] = Json::object();
  for (const auto& [k, v] : config) j["config"][k] = v;
  j["seeds"] = Json::object();
  for (const auto& [k, v] : seeds) j["seeds"][k] = v;
  j["inputs"] = digests_to_json(inputs);
  j["outputs"] = digests_to_json(outputs);
  j["volatile_outputs"] = volatile_outputs;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  const Json j = Json::parse(text);
  RunManifest m;
  m.tool_version = j.at("version").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.args = j.at("args").get<std::vector<std::string>>();
  for (const auto& [k, v] : j.at("config").items()) m.config.emplace_back(k, v.get<std::string>());
  for (const auto& [k, v] : j.at("seeds").items()) m.seeds.emplace_back(k, v.get<std::uint64_t>());
  m.inputs = digests_from_json(j.at("inputs"));
  m.outputs = digests_from_json(j.at("outputs"));
  m.volatile_outputs = j.at("volatile_outputs").get<std::vector<std::string>>();
  m.started_at = j.at("started_at").get<std::string>();
  m.finished_at = j.at("finished_at").get<std::string>();
  return m;
}

void RunManifest::save(const std::filesystem::path& path) const {
  auto out = open_output(path);
  out << to_json();
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return from_json(text.str());
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIo, "sha256 initialisation failed");
  }
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md;
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int k = 0; k < len; ++k) {
    char byte[3];
    std::snprintf(byte, sizeof(byte), "%02x", md[k]);
    hex += byte;
  }
  return hex;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

}  // namespace cprec

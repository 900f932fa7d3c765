#include "sitrec_cli/manifest.hpp"

#include <array>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"
#include "sitrec/error.hpp"

namespace sitrec::cli {

using json = nlohmann::ordered_json;

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 initialisation failed");
  }
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), in.gcount());
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md;
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return hex.str();
}

void RunManifest::add_input(const std::filesystem::path& path) {
  const auto abs = std::filesystem::absolute(path).lexically_normal();
  inputs.push_back({abs.string(), sha256_file(abs)});
}

void RunManifest::add_output(const std::filesystem::path& out_dir,
                             const std::filesystem::path& path, bool reproducible) {
  const auto rel = std::filesystem::relative(path, out_dir);
  outputs.push_back({rel.generic_string(), sha256_file(path), reproducible});
}

namespace {

json artifacts_json(const std::vector<Artifact>& list) {
  json arr = json::array();
  for (const auto& a : list) {
    json entry = {{"path", a.path}, {"sha256", a.sha256}};
    if (!a.reproducible) entry["reproducible"] = false;
    arr.push_back(entry);
  }
  return arr;
}

std::vector<Artifact> artifacts_from(const json& arr) {
  std::vector<Artifact> out;
  for (const auto& a : arr) {
    out.push_back({a.at("path").get<std::string>(), a.at("sha256").get<std::string>(),
                   a.value("reproducible", true)});
  }
  return out;
}

}  // namespace

std::string RunManifest::to_json() const {
  json cfg = json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  json j;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = cfg;
  j["inputs"] = artifacts_json(inputs);
  j["outputs"] = artifacts_json(outputs);
  j["wall_seconds"] = wall_seconds;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  RunManifest m;
  try {
    const auto j = json::parse(text);
    m.command = j.at("command").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [k, v] : j.at("config").items()) m.config.emplace_back(k, v.get<std::string>());
    m.inputs = artifacts_from(j.at("inputs"));
    m.outputs = artifacts_from(j.at("outputs"));
    m.wall_seconds = j.at("wall_seconds").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad manifest: ") + e.what(), 0);
  }
  return m;
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json();
}

RunManifest RunManifest::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

VerifyResult verify_manifest(const std::filesystem::path& path) {
  const auto m = RunManifest::read(path);
  const auto base = path.parent_path();
  VerifyResult result;
  auto check = [&](const std::filesystem::path& file, const Artifact& a) {
    if (!std::filesystem::exists(file)) {
      result.missing.push_back(a.path);
    } else if (sha256_file(file) != a.sha256) {
      result.mismatched.push_back(a.path);
    }
  };
  for (const auto& a : m.inputs) check(a.path, a);
  for (const auto& a : m.outputs) check(base / a.path, a);
  return result;
}

}  // namespace sitrec::cli

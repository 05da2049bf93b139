#include <openssl/evp.h>

#include <fstream>
#include <iterator>
#include <memory>

#include "cli_internal.hpp"
#include "relprop/error.hpp"
#include "relprop/nnwb.hpp"

namespace relprop::cli {

std::string_view tool_version() { return RELPROP_VERSION; }

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &length) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

std::string sha256_file(const fs::path& path) {
  const auto bytes = nnwb::read_file(path);
  return sha256_hex({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

void RunManifest::input(const fs::path& path) { inputs_[path.string()] = sha256_file(path); }

json RunManifest::to_json() const {
  json out;
  out["command"] = command_;
  out["tool_version"] = tool_version();
  out["options"] = options_;
  out["seeds"] = seeds_;
  json inputs = json::object();
  for (const auto& [path, digest] : inputs_) inputs[path] = {{"sha256", digest}};
  out["inputs"] = inputs;
  out["warnings"] = warnings_;
  return out;
}

void RunManifest::write(const fs::path& out_dir) const {
  write_json(out_dir / "manifest.json", to_json());
}

}  // namespace relprop::cli

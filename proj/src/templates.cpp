#include "prefpo/templates.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstddef>
#include <memory>
#include <set>

#include "prefpo/error.hpp"
#include "prefpo/text.hpp"

namespace prefpo::templates::detail {
struct Resource {
  const char* name;
  const unsigned char* data;
  std::size_t size;
};
extern const Resource kResources[];
extern const std::size_t kResourceCount;
}  // namespace prefpo::templates::detail

namespace prefpo::templates {

namespace {

constexpr std::string_view kSumsName = "SHA256SUMS";

std::string_view lookup(std::string_view name) {
  for (std::size_t i = 0; i < detail::kResourceCount; ++i) {
    const auto& r = detail::kResources[i];
    if (name == r.name) return {reinterpret_cast<const char*>(r.data), r.size};
  }
  throw TemplateError("unknown template '" + std::string(name) + "'");
}

}  // namespace

std::string_view get(std::string_view name) {
  if (name == kSumsName) throw TemplateError("SHA256SUMS is not a template");
  return lookup(name);
}

std::vector<std::string> names() {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < detail::kResourceCount; ++i) {
    if (detail::kResources[i].name != kSumsName) out.emplace_back(detail::kResources[i].name);
  }
  return out;
}

std::string render(std::string_view tpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tpl.size());
  std::set<std::string> used;
  std::size_t pos = 0;
  while (true) {
    const auto open = tpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = tpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw TemplateError("unterminated placeholder");
    const std::string key(tpl.substr(open + 2, close - open - 2));
    auto it = vars.find(key);
    if (it == vars.end()) throw TemplateError("no value for placeholder '" + key + "'");
    out.append(tpl.substr(pos, open - pos));
    out.append(it->second);
    used.insert(key);
    pos = close + 2;
  }
  out.append(tpl.substr(pos));
  for (const auto& [key, _] : vars) {
    if (!used.count(key)) throw TemplateError("template has no placeholder '" + key + "'");
  }
  return out;
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::map<std::string, std::string> checksums() {
  std::map<std::string, std::string> out;
  for (const auto& n : names()) out[n] = sha256_hex(get(n));
  return out;
}

std::vector<std::string> integrity_violations() {
  std::map<std::string, std::string> expected;
  for (auto line : text::lines(lookup(kSumsName))) {
    line = text::trim(line);
    if (line.empty()) continue;
    const auto sep = line.find("  ");
    if (sep == std::string_view::npos) return {"malformed SHA256SUMS line"};
    expected[std::string(line.substr(sep + 2))] = std::string(line.substr(0, sep));
  }
  std::vector<std::string> out;
  const auto actual = checksums();
  for (const auto& [name, sum] : actual) {
    auto it = expected.find(name);
    if (it == expected.end()) {
      out.push_back(name + ": not listed in SHA256SUMS");
    } else if (it->second != sum) {
      out.push_back(name + ": checksum mismatch");
    }
  }
  for (const auto& [name, _] : expected) {
    if (!actual.count(name)) out.push_back(name + ": listed but missing");
  }
  return out;
}

void verify_integrity() {
  const auto v = integrity_violations();
  if (v.empty()) return;
  std::string msg = "template resources modified:";
  for (const auto& m : v) msg += " " + m + ";";
  throw TemplateError(msg);
}

}  // namespace prefpo::templates

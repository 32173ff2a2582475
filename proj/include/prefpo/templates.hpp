#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace prefpo::templates {

/// Embedded template text by file name (e.g. "variant_user.txt").
/// Throws TemplateError for unknown names.
std::string_view get(std::string_view name);
std::vector<std::string> names();

/// Replaces every {{key}} in one left-to-right pass; substituted values are
/// never rescanned. Unknown placeholders and unused variables throw
/// TemplateError.
std::string render(std::string_view tpl, const std::map<std::string, std::string>& vars);

std::string sha256_hex(std::string_view data);

/// name -> sha256 of every embedded template.
std::map<std::string, std::string> checksums();

/// Compares the embedded templates against the committed SHA256SUMS list.
/// Returns one message per mismatch; empty means intact.
std::vector<std::string> integrity_violations();

/// Throws TemplateError if integrity_violations() is non-empty.
void verify_integrity();

}  // namespace prefpo::templates

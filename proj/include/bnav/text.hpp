#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace bnav {

/// Lowercases, splits punctuation into separate tokens and maps inflected
/// forms through a small built-in lemma table ("rooms" -> "room",
/// "turning" -> "turn"). Hyphens inside a word are kept.
std::vector<std::string> normalize_text(std::string_view instruction);

std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace bnav

#include "bnav/text.hpp"

#include <cctype>
#include <string_view>
#include <unordered_map>

namespace bnav {

namespace {

// No value may itself be a key, so lemmatization is idempotent.
const std::unordered_map<std::string_view, std::string_view>& lemma_table() {
  static const std::unordered_map<std::string_view, std::string_view> table = {
      {"rooms", "room"},           {"labs", "lab"},
      {"offices", "office"},       {"kitchens", "kitchen"},
      {"bathrooms", "bathroom"},   {"halls", "hall"},
      {"hallways", "hallway"},     {"corridors", "corridor"},
      {"intersections", "intersection"}, {"junctions", "junction"},
      {"corners", "corner"},       {"doors", "door"},
      {"turns", "turn"},           {"turning", "turn"},
      {"turned", "turn"},          {"exits", "exit"},
      {"exiting", "exit"},         {"exited", "exit"},
      {"goes", "go"},              {"going", "go"},
      {"went", "go"},              {"gone", "go"},
      {"enters", "enter"},         {"entering", "enter"},
      {"entered", "enter"},        {"passes", "pass"},
      {"passing", "pass"},         {"passed", "pass"},
      {"follows", "follow"},       {"following", "follow"},
      {"followed", "follow"},      {"walks", "walk"},
      {"walking", "walk"},         {"walked", "walk"},
      {"crosses", "cross"},        {"crossing", "cross"},
      {"crossed", "cross"},        {"makes", "make"},
      {"making", "make"},          {"made", "make"},
      {"takes", "take"},           {"taking", "take"},
      {"took", "take"},            {"leaves", "leave"},
      {"leaving", "leave"},        {"continues", "continue"},
      {"continuing", "continue"},  {"continued", "continue"},
      {"keeps", "keep"},           {"keeping", "keep"},
      {"kept", "keep"},            {"advances", "advance"},
      {"advancing", "advance"},    {"advanced", "advance"},
      {"sees", "see"},             {"seeing", "see"},
      {"saw", "see"},              {"vases", "vase"},
      {"tables", "table"},         {"paintings", "painting"},
      {"bookshelves", "bookshelf"}, {"chairs", "chair"},
      {"sofas", "sofa"},           {"plants", "plant"},
      {"lamps", "lamp"},           {"whiteboards", "whiteboard"},
      {"windows", "window"},       {"clocks", "clock"},
      {"posters", "poster"},       {"cabinets", "cabinet"},
      {"printers", "printer"},     {"couches", "couch"},
      {"mirrors", "mirror"},       {"rugs", "rug"},
      {"cans", "can"},             {"fountains", "fountain"},
      {"extinguishers", "extinguisher"},
  };
  return table;
}

void flush(std::string& word, std::vector<std::string>& out) {
  if (word.empty()) return;
  // Hyphens only glue letters together.
  while (!word.empty() && word.back() == '-') word.pop_back();
  std::size_t lead = 0;
  while (lead < word.size() && word[lead] == '-') ++lead;
  word.erase(0, lead);
  if (!word.empty()) {
    const auto& table = lemma_table();
    if (auto it = table.find(word); it != table.end()) word = std::string(it->second);
    out.push_back(std::move(word));
  }
  word.clear();
}

}  // namespace

std::vector<std::string> normalize_text(std::string_view instruction) {
  std::vector<std::string> out;
  std::string word;
  for (char raw : instruction) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush(word, out);
    } else if (std::isalnum(c) || c >= 0x80) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '-' && !word.empty()) {
      word.push_back('-');
    } else {
      flush(word, out);
      out.emplace_back(1, static_cast<char>(c));
    }
  }
  flush(word, out);
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

}  // namespace bnav

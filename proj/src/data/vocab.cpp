// SPDX-License-Identifier: Apache-2.0
#include <sstream>

#include "s2s/data.hpp"
#include "s2s/errors.hpp"

namespace s2s::data {

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<s>", "</s>", "<unk>"}) insert(t);
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
  for (const auto& t : tokens) insert(t);
}

Vocabulary Vocabulary::numbered(std::size_t size) {
  if (size <= kReserved) fail(ErrorKind::ConfigInvalid, "vocabulary needs more than the reserved ids");
  std::vector<std::string> tokens;
  for (std::size_t i = kReserved; i < size; ++i) tokens.push_back("w" + std::to_string(i));
  return Vocabulary(tokens);
}

void Vocabulary::insert(const std::string& token) {
  if (index_.count(token) != 0) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

int Vocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    fail(ErrorKind::TargetOutOfRange, "token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::string& line) const {
  std::istringstream in(line);
  std::vector<int> ids;
  for (std::string word; in >> word;) ids.push_back(id(word));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

}  // namespace s2s::data

#pragma once
// Closed whitespace-token vocabulary with fixed reserved slots.

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace kehrl {

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kMask = 1;
  static constexpr int kUnk = 2;
  static constexpr int kCls = 3;
  static constexpr int kSep = 4;

  Vocab() {
    for (const char* t : {"<pad>", "<mask>", "<unk>", "<cls>", "<sep>"}) add(t);
  }

  int add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
  }

  // kUnk for unknown tokens; reserved words resolve to their own ids.
  int lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw std::invalid_argument("vocab: id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
  }

  int size() const { return static_cast<int>(tokens_.size()); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Whitespace split (no empty pieces).
inline std::vector<std::string> split_ws(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace kehrl

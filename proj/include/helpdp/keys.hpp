#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace helpdp {

enum class TerminalFlag { none, success, failure };

std::string_view to_string(TerminalFlag flag);

// A state key is a canonical "field=value;field=value" string with fields in
// lexicographic order. Terminal states carry a `term` field.
class KeyBuilder {
 public:
  KeyBuilder& set(std::string field, std::string value);
  KeyBuilder& set(std::string field, long long value);
  KeyBuilder& terminal(TerminalFlag flag);
  std::string str() const;

 private:
  std::map<std::string, std::string> fields_;
};

std::map<std::string, std::string> parse_key(std::string_view key);

// Terminal flag encoded in the key, TerminalFlag::none when absent.
TerminalFlag terminal_flag(std::string_view key);

inline bool is_terminal(std::string_view key) {
  return terminal_flag(key) != TerminalFlag::none;
}

// Shorthand for hand-built MDPs: id=<name>[;term=...].
std::string named_state(std::string_view name,
                        TerminalFlag flag = TerminalFlag::none);

// nohelp is index 0, help_i is index i (1-based, dense).
class ActionKind {
 public:
  constexpr ActionKind() = default;
  static constexpr ActionKind nohelp() { return ActionKind(0); }
  static ActionKind help(int i) {
    if (i < 1) throw std::invalid_argument("help index must be >= 1");
    return ActionKind(i);
  }
  static ActionKind from_index(int i) {
    return i == 0 ? nohelp() : help(i);
  }
  static ActionKind parse(std::string_view text);

  constexpr int index() const { return index_; }
  constexpr bool is_help() const { return index_ > 0; }
  std::string str() const;

  friend constexpr auto operator<=>(ActionKind, ActionKind) = default;

 private:
  constexpr explicit ActionKind(int i) : index_(i) {}
  int index_ = 0;
};

}  // namespace helpdp

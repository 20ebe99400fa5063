#include "helpdp/keys.hpp"

#include <charconv>

namespace helpdp {

std::string_view to_string(TerminalFlag flag) {
  switch (flag) {
    case TerminalFlag::success: return "success";
    case TerminalFlag::failure: return "failure";
    case TerminalFlag::none: break;
  }
  return "none";
}

namespace {

void check_token(std::string_view token) {
  if (token.empty() || token.find_first_of(";=") != std::string_view::npos) {
    throw std::invalid_argument("invalid key token '" + std::string(token) +
                                "'");
  }
}

}  // namespace

KeyBuilder& KeyBuilder::set(std::string field, std::string value) {
  check_token(field);
  check_token(value);
  if (field == "term") throw std::invalid_argument("'term' is reserved");
  fields_[std::move(field)] = std::move(value);
  return *this;
}

KeyBuilder& KeyBuilder::set(std::string field, long long value) {
  return set(std::move(field), std::to_string(value));
}

KeyBuilder& KeyBuilder::terminal(TerminalFlag flag) {
  if (flag == TerminalFlag::none) {
    fields_.erase("term");
  } else {
    fields_["term"] = std::string(to_string(flag));
  }
  return *this;
}

std::string KeyBuilder::str() const {
  std::string out;
  for (const auto& [field, value] : fields_) {
    if (!out.empty()) out += ';';
    out += field;
    out += '=';
    out += value;
  }
  return out;
}

std::map<std::string, std::string> parse_key(std::string_view key) {
  std::map<std::string, std::string> fields;
  while (!key.empty()) {
    const auto end = key.find(';');
    const auto item = key.substr(0, end);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw std::invalid_argument("malformed key field '" + std::string(item) +
                                  "'");
    }
    fields.emplace(std::string(item.substr(0, eq)),
                   std::string(item.substr(eq + 1)));
    if (end == std::string_view::npos) break;
    key.remove_prefix(end + 1);
  }
  return fields;
}

TerminalFlag terminal_flag(std::string_view key) {
  // "term" sorts after most fields, so scan for the field rather than parse.
  std::size_t pos = 0;
  while (pos < key.size()) {
    const auto end = key.find(';', pos);
    const auto item = key.substr(pos, end == std::string_view::npos
                                          ? std::string_view::npos
                                          : end - pos);
    if (item == "term=success") return TerminalFlag::success;
    if (item == "term=failure") return TerminalFlag::failure;
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return TerminalFlag::none;
}

std::string named_state(std::string_view name, TerminalFlag flag) {
  return KeyBuilder().set("id", std::string(name)).terminal(flag).str();
}

ActionKind ActionKind::parse(std::string_view text) {
  if (text == "nohelp") return nohelp();
  if (text == "help") return help(1);
  if (text.starts_with("help")) {
    int i = 0;
    const auto digits = text.substr(4);
    const auto [ptr, ec] =
        std::from_chars(digits.data(), digits.data() + digits.size(), i);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && i >= 1) {
      return help(i);
    }
  }
  throw std::invalid_argument("unknown action '" + std::string(text) + "'");
}

std::string ActionKind::str() const {
  return index_ == 0 ? std::string("nohelp") : "help" + std::to_string(index_);
}

}  // namespace helpdp

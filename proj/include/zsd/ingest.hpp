#pragma once

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "zsd/detail/json_text.hpp"
#include "zsd/error.hpp"
#include "zsd/types.hpp"

namespace zsd {

namespace detail {

inline constexpr std::array<std::string_view, 10> kEventKeys = {
    "ts", "entity", "kind", "path", "ext_before", "ext_after", "bytes", "entropy", "dst", "truth"};

inline bool is_event_key(std::string_view k) {
  for (auto key : kEventKeys) {
    if (key == k) return true;
  }
  return false;
}

inline std::optional<std::string> opt_string(const nlohmann::json& j, const char* key,
                                             std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ParseError(line_no, std::string(key) + " must be a string");
  return it->get<std::string>();
}

}  // namespace detail

/// Parses one JSON Lines record into an Event and checks its invariants.
/// Malformed records raise ParseError; invariant violations raise SchemaError.
/// Unknown keys are ignored unless `strict`.
inline Event parse_event_line(std::string_view line, std::size_t line_no = 1,
                              bool strict = false) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line.begin(), line.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(line_no, "record must be a JSON object");
  if (strict) {
    for (const auto& item : j.items()) {
      if (!detail::is_event_key(item.key())) {
        throw ParseError(line_no, "unknown field '" + item.key() + "'");
      }
    }
  }

  Event e;
  auto ts = j.find("ts");
  if (ts == j.end()) throw ParseError(line_no, "missing ts");
  if (!ts->is_number_integer()) throw ParseError(line_no, "ts must be an integer");
  if (ts->is_number_unsigned()) {
    const auto u = ts->get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(INT64_MAX)) throw SchemaError(line_no, "ts out of range");
    e.ts = static_cast<std::int64_t>(u);
  } else {
    e.ts = ts->get<std::int64_t>();
  }

  auto entity = j.find("entity");
  if (entity == j.end()) throw ParseError(line_no, "missing entity");
  if (!entity->is_string()) throw ParseError(line_no, "entity must be a string");
  e.entity = entity->get<std::string>();

  auto kind = j.find("kind");
  if (kind == j.end()) throw ParseError(line_no, "missing kind");
  if (!kind->is_string()) throw ParseError(line_no, "kind must be a string");
  const auto parsed_kind = parse_event_kind(kind->get_ref<const std::string&>());
  if (!parsed_kind) {
    throw ParseError(line_no, "unknown kind '" + kind->get<std::string>() + "'");
  }
  e.kind = *parsed_kind;

  e.path = detail::opt_string(j, "path", line_no);
  e.ext_before = detail::opt_string(j, "ext_before", line_no);
  e.ext_after = detail::opt_string(j, "ext_after", line_no);
  e.dst = detail::opt_string(j, "dst", line_no);

  if (auto it = j.find("bytes"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw ParseError(line_no, "bytes must be an integer");
    if (!it->is_number_unsigned() && it->get<std::int64_t>() < 0) {
      throw SchemaError(line_no, "bytes must be non-negative");
    }
    e.bytes = it->get<std::uint64_t>();
  }
  if (auto it = j.find("entropy"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) throw ParseError(line_no, "entropy must be a number");
    e.entropy = it->get<double>();
  }
  if (auto truth = detail::opt_string(j, "truth", line_no)) {
    const auto t = parse_label(*truth);
    if (!t) throw SchemaError(line_no, "truth must be benign or malicious");
    e.truth = *t;
  }

  validate_event(e, line_no);
  return e;
}

/// Serializes an event as one JSON Lines record (no trailing newline).
/// Entropy is written with 4 fractional digits; callers that need the
/// in-memory value to survive a round trip should quantize to that grid.
inline std::string format_event_line(const Event& e) {
  std::string out;
  out.reserve(160);
  out += "{\"ts\":";
  out += std::to_string(e.ts);
  out += ",\"entity\":";
  detail::append_json_string(out, e.entity);
  out += ",\"kind\":\"";
  out += to_string(e.kind);
  out += '"';
  auto put_str = [&](const char* key, const std::optional<std::string>& v) {
    if (!v) return;
    out += ",\"";
    out += key;
    out += "\":";
    detail::append_json_string(out, *v);
  };
  put_str("path", e.path);
  put_str("ext_before", e.ext_before);
  put_str("ext_after", e.ext_after);
  if (e.bytes) {
    out += ",\"bytes\":";
    out += std::to_string(*e.bytes);
  }
  if (e.entropy) {
    out += ",\"entropy\":";
    out += detail::format_fixed(*e.entropy, 4);
  }
  put_str("dst", e.dst);
  if (e.truth) {
    out += ",\"truth\":\"";
    out += to_string(*e.truth);
    out += '"';
  }
  out += '}';
  return out;
}

/// Lazy reader over a JSON Lines event stream (a file, or "-" for stdin).
/// Non-strict mode skips bad lines and counts them; strict mode rethrows the
/// first error. Events are delivered in input order and never reordered.
class EventStream {
 public:
  static constexpr std::string_view kStdin = "-";

  EventStream(const std::string& source, bool strict) : source_(source), strict_(strict) {
    if (source == kStdin) {
      in_ = &std::cin;
    } else {
      file_ = std::make_unique<std::ifstream>(source);
      if (!*file_) throw IoError("cannot open " + source);
      in_ = file_.get();
    }
  }

  /// Reads from an existing stream (not owned).
  EventStream(std::istream& in, bool strict) : source_("<stream>"), strict_(strict), in_(&in) {}

  std::optional<Event> next() {
    std::string line;
    while (std::getline(*in_, line)) {
      ++cursor_;
      if (detail::trim(line).empty()) continue;
      try {
        Event e = parse_event_line(line, cursor_, strict_);
        if (have_last_ts_ && e.ts < last_ts_) ++out_of_order_;
        last_ts_ = e.ts;
        have_last_ts_ = true;
        return e;
      } catch (const ParseError&) {
        if (strict_) throw;
        ++skipped_;
      }
    }
    if (in_->bad()) throw IoError("read failure on " + source_);
    return std::nullopt;
  }

  std::vector<Event> read_all() {
    std::vector<Event> events;
    while (auto e = next()) events.push_back(std::move(*e));
    return events;
  }

  std::size_t cursor() const noexcept { return cursor_; }
  std::size_t skipped_count() const noexcept { return skipped_; }
  /// Records whose ts went backwards relative to the previous record.
  std::size_t out_of_order_count() const noexcept { return out_of_order_; }
  bool strict() const noexcept { return strict_; }
  const std::string& source() const noexcept { return source_; }

 private:
  std::string source_;
  bool strict_;
  std::unique_ptr<std::ifstream> file_;
  std::istream* in_ = nullptr;
  std::size_t cursor_ = 0;
  std::size_t skipped_ = 0;
  std::size_t out_of_order_ = 0;
  std::int64_t last_ts_ = 0;
  bool have_last_ts_ = false;
};

}  // namespace zsd

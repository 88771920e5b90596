#pragma once

// Trace schema and dataset types plus the line-delimited trace file format.
//
// A trace file holds one executable. Line 1 is the schema object, every
// following line is one invocation as a JSON array ordered like "elements".

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "scd/error.hpp"

namespace scd {

using json = nlohmann::json;

enum class DataType { Integer, Float, Text };

enum class ElementRole {
  ParameterIn,
  PropertyRead,
  InvocationResultIn,
  ResultOut,
  PropertyWrite,
  ParameterOut,
};

constexpr bool is_input(ElementRole role) {
  return role == ElementRole::ParameterIn || role == ElementRole::PropertyRead ||
         role == ElementRole::InvocationResultIn;
}

constexpr bool is_output(ElementRole role) { return !is_input(role); }

constexpr std::string_view to_token(DataType t) {
  switch (t) {
    case DataType::Integer: return "int";
    case DataType::Float: return "float";
    case DataType::Text: return "text";
  }
  return "?";
}

constexpr std::string_view to_token(ElementRole r) {
  switch (r) {
    case ElementRole::ParameterIn: return "param_in";
    case ElementRole::PropertyRead: return "prop_read";
    case ElementRole::InvocationResultIn: return "result_in";
    case ElementRole::ResultOut: return "result_out";
    case ElementRole::PropertyWrite: return "prop_write";
    case ElementRole::ParameterOut: return "param_out";
  }
  return "?";
}

inline std::optional<DataType> parse_data_type(std::string_view token) {
  for (auto t : {DataType::Integer, DataType::Float, DataType::Text})
    if (to_token(t) == token) return t;
  return std::nullopt;
}

inline std::optional<ElementRole> parse_role(std::string_view token) {
  for (auto r : {ElementRole::ParameterIn, ElementRole::PropertyRead, ElementRole::InvocationResultIn,
                 ElementRole::ResultOut, ElementRole::PropertyWrite, ElementRole::ParameterOut})
    if (to_token(r) == token) return r;
  return std::nullopt;
}

struct AtomicElement {
  std::string name;
  ElementRole role = ElementRole::ParameterIn;
  DataType dtype = DataType::Integer;

  bool operator==(const AtomicElement&) const = default;
};

/// An executable's atomic code elements. Element order defines column order.
struct ExecutableSchema {
  std::string id;
  std::string display_name;
  std::optional<std::string> owner_type;
  std::vector<AtomicElement> elements;

  bool operator==(const ExecutableSchema&) const = default;
};

/// One (input element, output element) combination of a single executable.
struct IOPair {
  std::size_t input_index = 0;
  std::size_t output_index = 0;

  auto operator<=>(const IOPair&) const = default;
};

using Value = std::variant<std::int64_t, double, std::string>;
using Row = std::vector<Value>;

struct TraceDataset {
  ExecutableSchema schema;
  std::vector<Row> rows;

  bool operator==(const TraceDataset&) const = default;
};

struct IOElements {
  std::vector<std::size_t> inputs;
  std::vector<std::size_t> outputs;
};

inline IOElements io_elements(const ExecutableSchema& schema) {
  IOElements out;
  for (std::size_t i = 0; i < schema.elements.size(); ++i)
    (is_input(schema.elements[i].role) ? out.inputs : out.outputs).push_back(i);
  return out;
}

/// Cartesian product inputs x outputs, input-major.
inline std::vector<IOPair> io_pairs(const ExecutableSchema& schema) {
  auto io = io_elements(schema);
  std::vector<IOPair> pairs;
  pairs.reserve(io.inputs.size() * io.outputs.size());
  for (auto i : io.inputs)
    for (auto o : io.outputs) pairs.push_back({i, o});
  return pairs;
}

inline DataType dtype_of(const Value& v) {
  switch (v.index()) {
    case 0: return DataType::Integer;
    case 1: return DataType::Float;
    default: return DataType::Text;
  }
}

inline std::vector<Value> column(const TraceDataset& ds, std::size_t j) {
  std::vector<Value> out;
  out.reserve(ds.rows.size());
  for (const auto& r : ds.rows) out.push_back(r.at(j));
  return out;
}

// ---------------------------------------------------------------------------
// JSON conversion

inline json schema_to_json(const ExecutableSchema& s) {
  json elements = json::array();
  for (const auto& e : s.elements)
    elements.push_back({{"name", e.name}, {"role", to_token(e.role)}, {"dtype", to_token(e.dtype)}});
  json j;
  j["id"] = s.id;
  j["name"] = s.display_name;
  j["owner"] = s.owner_type ? json(*s.owner_type) : json(nullptr);
  j["elements"] = std::move(elements);
  return j;
}

inline ExecutableSchema schema_from_json(const json& j, const std::string& context = "schema") {
  auto fail = [&](const std::string& why) -> ExecutableSchema {
    throw Error(Errc::MalformedHeader, context + ": " + why);
  };
  if (!j.is_object()) return fail("expected a schema object");
  if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty())
    return fail("missing or empty \"id\"");
  if (!j.contains("elements") || !j["elements"].is_array()) return fail("missing \"elements\" array");

  ExecutableSchema s;
  s.id = j["id"].get<std::string>();
  s.display_name = j.contains("name") && j["name"].is_string() ? j["name"].get<std::string>() : s.id;
  if (j.contains("owner") && j["owner"].is_string()) s.owner_type = j["owner"].get<std::string>();

  std::set<std::pair<std::string, ElementRole>> seen;
  for (const auto& e : j["elements"]) {
    if (!e.is_object() || !e.contains("name") || !e["name"].is_string() || !e.contains("role") ||
        !e["role"].is_string() || !e.contains("dtype") || !e["dtype"].is_string())
      return fail("element needs string fields name, role, dtype");
    auto role = parse_role(e["role"].get<std::string>());
    if (!role) return fail("unknown role \"" + e["role"].get<std::string>() + "\"");
    auto dtype = parse_data_type(e["dtype"].get<std::string>());
    if (!dtype) return fail("unknown dtype \"" + e["dtype"].get<std::string>() + "\"");
    AtomicElement el{e["name"].get<std::string>(), *role, *dtype};
    if (!seen.insert({el.name, el.role}).second)
      return fail("duplicate element \"" + el.name + "\" with role " + std::string(to_token(el.role)));
    s.elements.push_back(std::move(el));
  }
  return s;
}

inline json value_to_json(const Value& v) {
  return std::visit([](const auto& x) { return json(x); }, v);
}

inline Value value_from_json(const json& j, DataType dtype, const std::string& context) {
  switch (dtype) {
    case DataType::Integer:
      if (j.is_number_integer() && !j.is_number_unsigned()) return j.get<std::int64_t>();
      if (j.is_number_unsigned()) {
        auto u = j.get<std::uint64_t>();
        if (u <= static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
          return static_cast<std::int64_t>(u);
      }
      break;
    case DataType::Float:
      if (j.is_number()) return j.get<double>();
      break;
    case DataType::Text:
      if (j.is_string()) return j.get<std::string>();
      break;
  }
  throw Error(Errc::TypeMismatch, context + ": value " + j.dump() + " is not a valid " +
                                      std::string(to_token(dtype)));
}

/// Checks the dataset invariants; throws on the first violation.
inline void validate_dataset(const TraceDataset& ds, const std::string& context = "dataset") {
  const auto& els = ds.schema.elements;
  for (std::size_t r = 0; r < ds.rows.size(); ++r) {
    const auto& row = ds.rows[r];
    if (row.size() != els.size())
      throw Error(Errc::RowArityMismatch, context + ": row " + std::to_string(r) + " has " +
                                              std::to_string(row.size()) + " values, schema declares " +
                                              std::to_string(els.size()));
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (dtype_of(row[c]) != els[c].dtype)
        throw Error(Errc::TypeMismatch, context + ": row " + std::to_string(r) + " column \"" +
                                            els[c].name + "\" expects " + std::string(to_token(els[c].dtype)));
      if (auto* d = std::get_if<double>(&row[c]); d && !std::isfinite(*d))
        throw Error(Errc::TypeMismatch, context + ": non-finite float in column \"" + els[c].name + "\"");
    }
  }
}

// ---------------------------------------------------------------------------
// Trace files

/// Parses a trace stream. The first non-empty line must be the schema.
inline TraceDataset parse_trace(std::istream& in, const std::string& context = "trace") {
  TraceDataset ds;
  std::string line;
  std::size_t line_no = 0;
  bool have_schema = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = context + ":" + std::to_string(line_no);
    json j = json::parse(line, nullptr, false);
    if (!have_schema) {
      if (j.is_discarded() || !j.is_object())
        throw Error(Errc::MalformedHeader, where + ": first record is not a schema object");
      ds.schema = schema_from_json(j, where);
      have_schema = true;
      continue;
    }
    if (j.is_discarded() || !j.is_array())
      throw Error(Errc::RowArityMismatch, where + ": row is not a JSON array");
    const auto& els = ds.schema.elements;
    if (j.size() != els.size())
      throw Error(Errc::RowArityMismatch, where + ": row has " + std::to_string(j.size()) +
                                              " values, schema declares " + std::to_string(els.size()));
    Row row;
    row.reserve(els.size());
    for (std::size_t c = 0; c < els.size(); ++c)
      row.push_back(value_from_json(j[c], els[c].dtype, where + " column \"" + els[c].name + "\""));
    ds.rows.push_back(std::move(row));
  }
  if (!have_schema) throw Error(Errc::MalformedHeader, context + ": file is empty");
  if (ds.rows.empty()) throw Error(Errc::EmptyTrace, context + ": no invocation rows");
  validate_dataset(ds, context);
  return ds;
}

inline TraceDataset parse_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open trace file " + path.string());
  return parse_trace(in, path.string());
}

/// Writes the trace format. `extra` keys (e.g. a run manifest) are merged into
/// the schema line; readers ignore them.
inline void write_trace(std::ostream& out, const TraceDataset& ds, const json& extra = json::object()) {
  json header = schema_to_json(ds.schema);
  for (auto it = extra.begin(); it != extra.end(); ++it) header[it.key()] = it.value();
  out << header.dump() << '\n';
  for (const auto& row : ds.rows) {
    json arr = json::array();
    for (const auto& v : row) arr.push_back(value_to_json(v));
    out << arr.dump() << '\n';
  }
}

inline std::string to_trace_string(const TraceDataset& ds, const json& extra = json::object()) {
  std::ostringstream os;
  write_trace(os, ds, extra);
  return os.str();
}

inline void write_trace_file(const std::filesystem::path& path, const TraceDataset& ds,
                             const json& extra = json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write trace file " + path.string());
  write_trace(out, ds, extra);
}

}  // namespace scd

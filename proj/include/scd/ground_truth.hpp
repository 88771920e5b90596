#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "scd/error.hpp"

namespace scd {

using json = nlohmann::json;

/// Clone-class label per executable id.
struct GroundTruth {
  std::map<std::string, std::string> labels;

  bool has(const std::string& id) const { return labels.count(id) != 0; }

  bool is_clone(const std::string& a, const std::string& b) const { return labels.at(a) == labels.at(b); }

  std::map<std::string, std::vector<std::string>> classes() const {
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& [id, label] : labels) out[label].push_back(id);
    return out;
  }

  bool operator==(const GroundTruth&) const = default;
};

inline json truth_to_json(const GroundTruth& t) {
  json classes = json::object();
  for (const auto& [label, ids] : t.classes()) classes[label] = ids;
  return {{"classes", classes}};
}

inline GroundTruth truth_from_json(const json& j, const std::string& context = "truth") {
  if (!j.is_object() || !j.contains("classes") || !j["classes"].is_object())
    throw Error(Errc::MalformedReport, context + ": expected {\"classes\": {label: [ids]}}");
  GroundTruth t;
  for (auto it = j["classes"].begin(); it != j["classes"].end(); ++it) {
    if (!it.value().is_array()) throw Error(Errc::MalformedReport, context + ": class members must be an array");
    for (const auto& id : it.value()) {
      if (!id.is_string()) throw Error(Errc::MalformedReport, context + ": ids must be strings");
      if (!t.labels.emplace(id.get<std::string>(), it.key()).second)
        throw Error(Errc::DuplicateId, context + ": id \"" + id.get<std::string>() + "\" labeled twice");
    }
  }
  return t;
}

inline GroundTruth load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open ground-truth file " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::MalformedReport, path.string() + ": not valid JSON");
  return truth_from_json(j, path.string());
}

}  // namespace scd

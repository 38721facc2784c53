#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdcsrn/harness/io.hpp"

namespace mdcsrn {

enum class Split { kTrain, kValidation, kEvaluation, kTest };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kEvaluation: return "evaluation";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  for (Split v : {Split::kTrain, Split::kValidation, Split::kEvaluation, Split::kTest})
    if (s == split_name(v)) return v;
  throw ConfigError("unknown split '" + s + "'");
}

struct SubjectEntry {
  std::string id;
  std::string hr_path;  // relative paths resolve against the manifest's directory
  Split split = Split::kTrain;
};

struct DatasetManifest {
  std::vector<SubjectEntry> subjects;
  std::string note;
  std::string base_dir;  // set on load

  /// Subject ids and volume files must be unique, so the splits are disjoint.
  void validate() const {
    std::set<std::string> ids, paths;
    for (const auto& s : subjects) {
      if (s.id.empty()) throw ConfigError("manifest: empty subject id");
      if (!ids.insert(s.id).second) throw ConfigError("manifest: subject '" + s.id + "' listed more than once");
      if (!paths.insert(s.hr_path).second)
        throw ConfigError("manifest: volume '" + s.hr_path + "' is shared by two subjects");
    }
  }

  std::vector<SubjectEntry> in(Split split) const {
    std::vector<SubjectEntry> out;
    for (const auto& s : subjects)
      if (s.split == split) out.push_back(s);
    return out;
  }

  std::string resolve(const SubjectEntry& s) const {
    std::filesystem::path p(s.hr_path);
    if (p.is_absolute() || base_dir.empty()) return p.string();
    return (std::filesystem::path(base_dir) / p).string();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["note"] = note;
    j["subjects"] = nlohmann::json::array();
    for (const auto& s : subjects) j["subjects"].push_back({{"id", s.id}, {"hr", s.hr_path}, {"split", split_name(s.split)}});
    return j;
  }

  void save(const std::string& path) const {
    validate();
    io::write_atomically(path, [&](std::ofstream& f) { f << to_json().dump(2) << '\n'; });
  }

  static DatasetManifest load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read manifest " + path);
    DatasetManifest m;
    try {
      const auto j = nlohmann::json::parse(f);
      m.note = j.value("note", "");
      for (const auto& s : j.at("subjects"))
        m.subjects.push_back({s.at("id").get<std::string>(), s.at("hr").get<std::string>(),
                              parse_split(s.at("split").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
      throw IoError("manifest " + path + ": " + e.what());
    }
    m.base_dir = std::filesystem::path(path).parent_path().string();
    m.validate();
    return m;
  }
};

}  // namespace mdcsrn

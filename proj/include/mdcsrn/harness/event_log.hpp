#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdcsrn/tensor/error.hpp"

namespace mdcsrn {

struct Event {
  std::int64_t step = 0;
  std::string kind;  // d_step, g_step, val, ckpt, ...
  double value = 0;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const {
    nlohmann::json j = {{"step", step}, {"kind", kind}, {"value", value}};
    for (const auto& [k, v] : extra.items()) j[k] = v;
    return j;
  }
  static Event from_json(const nlohmann::json& j) {
    Event e{j.at("step").get<std::int64_t>(), j.at("kind").get<std::string>(), j.at("value").get<double>(), {}};
    e.extra = nlohmann::json::object();
    for (const auto& [k, v] : j.items())
      if (k != "step" && k != "kind" && k != "value") e.extra[k] = v;
    return e;
  }
};

/// Line-delimited JSON records, kept in memory as well. Holds no wall-clock
/// data, so two seeded runs produce identical files.
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(const std::string& path) : path_(path), out_(path, std::ios::trunc) {
    if (!out_) throw IoError("cannot open event log " + path);
  }

  void record(Event e) {
    if (out_.is_open()) {
      out_ << e.to_json().dump() << '\n';
      out_.flush();
      if (!out_) throw IoError("event log write failed: " + path_);
    }
    events_.push_back(std::move(e));
  }
  void record(std::int64_t step, const std::string& kind, double value, nlohmann::json extra = nlohmann::json::object()) {
    record(Event{step, kind, value, std::move(extra)});
  }

  const std::vector<Event>& events() const { return events_; }
  const std::string& path() const { return path_; }

  static std::vector<Event> read(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read event log " + path);
    std::vector<Event> out;
    std::string line;
    while (std::getline(f, line))
      if (!line.empty()) out.push_back(Event::from_json(nlohmann::json::parse(line)));
    return out;
  }

 private:
  std::string path_;
  std::ofstream out_;
  std::vector<Event> events_;
};

}  // namespace mdcsrn

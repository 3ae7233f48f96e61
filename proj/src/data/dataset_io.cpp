#include "mbcal/data/dataset_io.hpp"

#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "mbcal/error.hpp"

namespace mbcal::data {

namespace {

using nlohmann::json;

json header_json(const BehaviorSpace& space, int horizon) {
  return {{"format", "mbcal-dataset"},
          {"version", kDatasetFormatVersion},
          {"behaviors", space.size()},
          {"rewards", space.rewards()},
          {"horizon", horizon}};
}

json trajectory_json(const Trajectory& t) {
  json steps = json::array();
  for (const auto& s : t.steps) {
    json js = {{"a", s.action}, {"b", s.behavior}};
    if (s.masked) js["m"] = true;
    steps.push_back(std::move(js));
  }
  json j = {{"id", t.id}, {"user", t.user}, {"steps", std::move(steps)}};
  if (!t.candidates.empty()) j["candidates"] = t.candidates;
  j["policy"] = t.policy;
  j["round"] = t.round;
  return j;
}

Trajectory parse_trajectory(const json& j) {
  Trajectory t;
  t.id = j.at("id").get<std::string>();
  t.user = j.at("user").get<int>();
  for (const auto& js : j.at("steps")) {
    Step s;
    s.action = js.at("a").get<int>();
    s.behavior = js.at("b").get<int>();
    s.masked = js.value("m", false);
    t.steps.push_back(s);
  }
  if (j.contains("candidates")) t.candidates = j.at("candidates").get<std::vector<std::vector<int>>>();
  t.policy = j.at("policy").get<std::string>();
  t.round = j.at("round").get<int>();
  return t;
}

void write_lines(std::ostream& out, std::span<const Trajectory> trajectories) {
  for (const auto& t : trajectories) out << trajectory_json(t).dump() << '\n';
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  out << header_json(dataset.space, dataset.horizon).dump() << '\n';
  write_lines(out, dataset.trajectories);
  if (!out) throw std::runtime_error("write failed for dataset " + path.string());
}

void append_dataset(const std::filesystem::path& path, const BehaviorSpace& space, int horizon,
                    std::span<const Trajectory> trajectories) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to dataset " + path.string());
  if (fresh) out << header_json(space, horizon).dump() << '\n';
  write_lines(out, trajectories);
  if (!out) throw std::runtime_error("write failed for dataset " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset " + path.string());

  Dataset ds;
  std::optional<json> header;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("malformed record: ") + e.what(), lineno);
    }
    if (j.contains("format")) {
      if (j.at("format") != "mbcal-dataset") throw FormatError("not an mbcal dataset header", lineno);
      if (j.value("version", -1) != kDatasetFormatVersion) {
        throw FormatError("dataset format version " + j.value("version", json()).dump() +
                              " is not supported (expected " + std::to_string(kDatasetFormatVersion) + ")",
                          lineno);
      }
      if (!header) {
        header = j;
        try {
          ds.space = BehaviorSpace(j.at("rewards").get<std::vector<double>>());
          ds.horizon = j.at("horizon").get<int>();
        } catch (const std::exception& e) {
          throw FormatError(std::string("bad header: ") + e.what(), lineno);
        }
        if (j.at("behaviors").get<int>() != ds.space.size()) {
          throw FormatError("header behavior count disagrees with reward map", lineno);
        }
      } else if (j != *header) {
        throw FormatError("header disagrees with the first header of the file", lineno);
      }
      continue;
    }
    if (!header) throw FormatError("session record before dataset header", lineno);
    Trajectory t;
    try {
      t = parse_trajectory(j);
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed record: ") + e.what(), lineno);
    }
    if (t.horizon() != ds.horizon) {
      throw FormatError("partial session '" + t.id + "' with " + std::to_string(t.horizon()) +
                            " of " + std::to_string(ds.horizon) + " steps",
                        lineno);
    }
    for (const auto& s : t.steps) {
      if (s.behavior < 0 || s.behavior >= ds.space.size()) {
        throw FormatError("behavior " + std::to_string(s.behavior) + " outside behavior space", lineno);
      }
    }
    if (!t.candidates.empty() && static_cast<int>(t.candidates.size()) != ds.horizon) {
      throw FormatError("candidate sets do not cover every step", lineno);
    }
    ds.trajectories.push_back(std::move(t));
  }
  if (!header) throw FormatError("dataset has no header line");
  return ds;
}

}  // namespace mbcal::data

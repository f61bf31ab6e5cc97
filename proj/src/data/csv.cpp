// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/data/csv.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "cfdhar/data/preprocess.hpp"
#include "cfdhar/error.hpp"
#include "cfdhar/io.hpp"

namespace cfdhar::data {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<long long> parse_int(std::string_view s) {
  s = trim(s);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::vector<double> parse_double_list(const std::string& key, std::string_view value) {
  std::vector<double> out;
  if (trim(value).empty()) return out;
  for (const auto& f : split_fields(value, ',')) {
    auto v = parse_double(f);
    if (!v) throw Error(ErrorCode::kParse, "schema key " + key + ": bad number \"" + f + "\"");
    out.push_back(*v);
  }
  return out;
}

std::size_t parse_count(const std::string& key, std::string_view value) {
  auto v = parse_int(value);
  if (!v || *v < 1) throw Error(ErrorCode::kParse, "schema key " + key + " must be a positive integer");
  return static_cast<std::size_t>(*v);
}

// Labels that all parse as non-negative integers keep their value; anything
// else is numbered in sorted order.
std::map<std::string, int> label_codes(const std::set<std::string>& labels) {
  std::map<std::string, int> codes;
  bool numeric = true;
  for (const auto& l : labels) {
    auto v = parse_int(l);
    numeric = numeric && v && *v >= 0;
  }
  int next = 0;
  for (const auto& l : labels) codes[l] = numeric ? static_cast<int>(*parse_int(l)) : next++;
  return codes;
}

}  // namespace

CsvSchema parse_csv_schema(std::string_view text) {
  CsvSchema schema;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kParse, "schema line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key(trim(t.substr(0, eq)));
    const std::string_view value = trim(t.substr(eq + 1));
    if (key == "sensor_columns") {
      schema.sensor_columns = split_fields(value, ',');
    } else if (key == "user_column") {
      schema.user_column = value;
    } else if (key == "activity_column") {
      schema.activity_column = value;
    } else if (key == "recording_column") {
      schema.recording_column = value;
    } else if (key == "window_length") {
      schema.window_length = parse_count(key, value);
    } else if (key == "stride") {
      schema.stride = parse_count(key, value);
    } else if (key == "split") {
      if (value == "window") {
        schema.split_mode = SplitMode::kByWindow;
      } else if (value == "user") {
        schema.split_mode = SplitMode::kByUser;
      } else {
        throw Error(ErrorCode::kParse, "schema key split must be window or user");
      }
    } else if (key == "split_seed") {
      auto v = parse_int(value);
      if (!v) throw Error(ErrorCode::kParse, "schema key split_seed must be an integer");
      schema.split_seed = static_cast<std::uint64_t>(*v);
    } else {
      bool matched = false;
      for (std::size_t j = 0; j < kNumAttributes; ++j) {
        const std::string name(kAttributeNames[j]);
        if (key == name + "_column") {
          schema.attribute_columns[j] = value;
          matched = true;
        } else if (key == name + "_thresholds") {
          schema.attribute_thresholds[j] = parse_double_list(key, value);
          matched = true;
        }
      }
      if (!matched) throw Error(ErrorCode::kParse, "unknown schema key \"" + key + "\"");
    }
  }
  if (schema.sensor_columns.empty()) {
    throw Error(ErrorCode::kSchema, "schema must list sensor_columns");
  }
  return schema;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  return load_csv_text(io::read_file(path), schema);
}

Dataset load_csv_text(std::string_view text, const CsvSchema& schema) {
  if (schema.sensor_columns.empty()) throw Error(ErrorCode::kSchema, "no sensor columns in schema");
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kSchema, "missing header row");
  const auto header = split_fields(line, ',');
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::kSchema, "missing column \"" + name + "\"");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> sensor_idx;
  for (const auto& c : schema.sensor_columns) sensor_idx.push_back(column(c));
  const std::size_t user_idx = column(schema.user_column);
  const std::size_t activity_idx = column(schema.activity_column);
  std::optional<std::size_t> recording_idx;
  if (!schema.recording_column.empty()) recording_idx = column(schema.recording_column);
  std::array<std::size_t, kNumAttributes> attr_idx{};
  for (std::size_t j = 0; j < kNumAttributes; ++j) attr_idx[j] = column(schema.attribute_columns[j]);

  struct Row {
    std::string user, activity, recording;
    std::vector<double> sensors;
    std::array<double, kNumAttributes> attrs{};
    int line_no = 0;
  };
  std::vector<Row> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, ',');
    if (fields.size() < header.size()) {
      throw Error(ErrorCode::kParse, "row " + std::to_string(line_no) + ": expected " +
                                         std::to_string(header.size()) + " fields");
    }
    Row r;
    r.line_no = line_no;
    r.user = fields[user_idx];
    r.activity = fields[activity_idx];
    if (recording_idx) r.recording = fields[*recording_idx];
    for (std::size_t k = 0; k < sensor_idx.size(); ++k) {
      auto v = parse_double(fields[sensor_idx[k]]);
      if (!v) {
        throw Error(ErrorCode::kParse, "row " + std::to_string(line_no) + ": non-numeric value in \"" +
                                           schema.sensor_columns[k] + "\"");
      }
      r.sensors.push_back(*v);
    }
    for (std::size_t j = 0; j < kNumAttributes; ++j) {
      auto v = parse_double(fields[attr_idx[j]]);
      if (!v) {
        throw Error(ErrorCode::kParse, "row " + std::to_string(line_no) + ": non-numeric value in \"" +
                                           schema.attribute_columns[j] + "\"");
      }
      r.attrs[j] = *v;
    }
    rows.push_back(std::move(r));
  }

  Dataset ds;
  ds.channels = schema.sensor_columns.size();
  ds.length = schema.window_length;
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    ds.attribute_classes[j] = static_cast<int>(schema.attribute_thresholds[j].size()) + 1;
  }
  ds.stats = {std::vector<double>(ds.channels, 0.0), std::vector<double>(ds.channels, 1.0)};
  ds.provenance = "csv window_length=" + std::to_string(schema.window_length) +
                  " stride=" + std::to_string(schema.stride);

  std::set<std::string> users, activities;
  for (const auto& r : rows) {
    users.insert(r.user);
    activities.insert(r.activity);
  }
  const auto user_codes = label_codes(users);
  const auto activity_codes = label_codes(activities);
  ds.n_activities = 0;
  for (const auto& [label, code] : activity_codes) ds.n_activities = std::max(ds.n_activities, code + 1);

  auto bucket = [&](std::size_t j, double v) {
    const auto& th = schema.attribute_thresholds[j];
    return static_cast<int>(std::count_if(th.begin(), th.end(), [v](double t) { return t <= v; }));
  };

  // Group rows by (user, recording, activity), keeping first-seen order.
  std::vector<std::tuple<std::string, std::string, std::string>> group_order;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto key = std::make_tuple(rows[i].user, rows[i].recording, rows[i].activity);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) group_order.push_back(key);
    it->second.push_back(i);
  }

  std::map<std::uint32_t, AttributeVector> profile_attrs;
  for (const auto& r : rows) {
    const auto uid = static_cast<std::uint32_t>(user_codes.at(r.user));
    AttributeVector a{};
    for (std::size_t j = 0; j < kNumAttributes; ++j) a[j] = bucket(j, r.attrs[j]);
    auto [it, inserted] = profile_attrs.try_emplace(uid, a);
    if (!inserted && it->second != a) {
      throw Error(ErrorCode::kParse, "row " + std::to_string(r.line_no) + ": attributes of user \"" +
                                         r.user + "\" change between rows");
    }
  }
  for (const auto& [uid, a] : profile_attrs) ds.profiles.push_back({uid, a});

  for (const auto& key : group_order) {
    const auto& idx = groups.at(key);
    nn::Matrix series(ds.channels, idx.size());
    for (std::size_t t = 0; t < idx.size(); ++t) {
      for (std::size_t c = 0; c < ds.channels; ++c) series(c, t) = rows[idx[t]].sensors[c];
    }
    const auto uid = static_cast<std::uint32_t>(user_codes.at(std::get<0>(key)));
    const int activity = activity_codes.at(std::get<2>(key));
    for (auto& values : window_signal(series, schema.window_length, schema.stride)) {
      SensorWindow w;
      w.values = std::move(values);
      w.user_id = uid;
      w.activity = activity;
      w.attributes = profile_attrs.at(uid);
      ds.windows.push_back(std::move(w));
    }
  }
  assign_split(ds, schema.split_mode, schema.split_seed);
  return ds;
}

}  // namespace cfdhar::data

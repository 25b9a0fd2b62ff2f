#include "windgp/scada.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "windgp/csv.hpp"
#include "windgp/errors.hpp"

namespace windgp {

namespace {

// days since 1970-01-01 for a civil date (proleptic Gregorian)
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

bool parse_int(const std::string& s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = 0; i < len; ++i) {
    const char c = s[pos + i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

char detect_delim(const std::string& header) {
  return header.find('\t') != std::string::npos ? '\t' : ',';
}

// column index by exact header name, then case-insensitive fallback
std::size_t find_column(const std::vector<std::string>& header, const std::string& name,
                        const std::string& path) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (trim(header[i]) == name) return i;
  }
  const std::string want = lower(name);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (lower(trim(header[i])) == want) return i;
  }
  throw SchemaMismatch("column \"" + name + "\" not found in " + path);
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path);
  return in;
}

bool parse_field_double(const std::string& field, double& out) {
  const std::string t = trim(field);
  if (t.empty()) return false;
  try {
    std::size_t used = 0;
    out = std::stod(t, &used);
    if (used != t.size()) return false;
  } catch (const std::exception&) {
    return false;
  }
  return std::isfinite(out);
}

// reads a logical header line, tolerating a UTF-8 BOM and CR line endings
bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

void strip_bom(std::string& line) {
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB &&
      static_cast<unsigned char>(line[2]) == 0xBF) {
    line.erase(0, 3);
  }
}

// half-open intervals, merged; lookup by binary search on starts
class IntervalSet {
public:
  explicit IntervalSet(std::vector<std::pair<std::int64_t, std::int64_t>> raw) {
    std::sort(raw.begin(), raw.end());
    for (const auto& iv : raw) {
      if (iv.second <= iv.first) continue;  // empty interval excludes nothing
      if (!merged_.empty() && iv.first <= merged_.back().second) {
        merged_.back().second = std::max(merged_.back().second, iv.second);
      } else {
        merged_.push_back(iv);
      }
    }
  }

  bool contains(std::int64_t t) const {
    auto it = std::upper_bound(merged_.begin(), merged_.end(), t,
                               [](std::int64_t v, const auto& iv) { return v < iv.first; });
    if (it == merged_.begin()) return false;
    --it;
    return t >= it->first && t < it->second;
  }

private:
  std::vector<std::pair<std::int64_t, std::int64_t>> merged_;
};

}  // namespace

const char* to_string(EventCategory c) {
  switch (c) {
    case EventCategory::Standby: return "standby";
    case EventCategory::Warning: return "warning";
    case EventCategory::Stop: return "stop";
    case EventCategory::ForcedOutage: return "forced_outage";
    case EventCategory::Normal: return "normal";
    case EventCategory::Other: return "other";
  }
  return "other";
}

const CategoryMap& default_category_map() {
  static const CategoryMap map = {
      {"standby", EventCategory::Standby},
      {"warning", EventCategory::Warning},
      {"stop", EventCategory::Stop},
      {"forced outage", EventCategory::ForcedOutage},
      {"forced_outage", EventCategory::ForcedOutage},
      {"normal", EventCategory::Normal},
      {"full performance", EventCategory::Normal},
      {"informational", EventCategory::Other},
  };
  return map;
}

bool parse_timestamp(const std::string& text, std::int64_t& out) {
  const std::string s = trim(text);
  // minimal shape: "YYYY-MM-DD HH:MM"
  if (s.size() < 16 || s[4] != '-' || s[7] != '-' || (s[10] != ' ' && s[10] != 'T') ||
      s[13] != ':') {
    return false;
  }
  int y, mo, d, h, mi, se = 0;
  if (!parse_int(s, 0, 4, y) || !parse_int(s, 5, 2, mo) || !parse_int(s, 8, 2, d) ||
      !parse_int(s, 11, 2, h) || !parse_int(s, 14, 2, mi)) {
    return false;
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59) return false;

  std::size_t pos = 16;
  if (pos < s.size() && s[pos] == ':') {
    if (!parse_int(s, pos + 1, 2, se) || se > 60) return false;
    pos += 3;
    if (pos < s.size() && s[pos] == '.') {  // fractional seconds: truncate
      ++pos;
      while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    }
  }

  std::int64_t offset = 0;
  if (pos < s.size()) {
    if (s[pos] == 'Z' && pos + 1 == s.size()) {
      pos += 1;
    } else if ((s[pos] == '+' || s[pos] == '-') && pos + 6 == s.size() && s[pos + 3] == ':') {
      int oh, om;
      if (!parse_int(s, pos + 1, 2, oh) || !parse_int(s, pos + 4, 2, om)) return false;
      offset = (s[pos] == '+' ? 1 : -1) * (oh * 3600 + om * 60);
      pos += 6;
    } else {
      return false;
    }
  }

  out = days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + se - offset;
  return true;
}

ScadaParse parse_scada(const std::string& path, const ScadaSchema& schema) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  if (!next_line(in, line)) throw SchemaMismatch("empty file: " + path);
  strip_bom(line);
  const char delim = detect_delim(line);
  const std::vector<std::string> header = csv::split_line(line, delim);
  const std::size_t c_ts = find_column(header, schema.timestamp, path);
  const std::size_t c_ws = find_column(header, schema.wind_speed, path);
  const std::size_t c_ap = find_column(header, schema.active_power, path);
  const std::size_t need = std::max({c_ts, c_ws, c_ap}) + 1;

  ScadaParse out;
  while (next_line(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> row = csv::split_line(line, delim);
    ScadaRecord rec;
    if (row.size() < need || !parse_timestamp(row[c_ts], rec.timestamp) ||
        !parse_field_double(row[c_ws], rec.wind_speed) ||
        !parse_field_double(row[c_ap], rec.active_power) || rec.wind_speed < 0.0) {
      ++out.dropped_malformed;
      continue;
    }
    out.records.push_back(rec);
  }
  return out;
}

std::vector<StatusEvent> parse_events(const std::string& path, const EventSchema& schema,
                                      const CategoryMap& categories) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  if (!next_line(in, line)) throw SchemaMismatch("empty file: " + path);
  strip_bom(line);
  const char delim = detect_delim(line);
  const std::vector<std::string> header = csv::split_line(line, delim);
  const std::size_t c_start = find_column(header, schema.start, path);
  const std::size_t c_end = find_column(header, schema.end, path);
  const std::size_t c_label = find_column(header, schema.label, path);
  const std::size_t need = std::max({c_start, c_end, c_label}) + 1;

  // lowercase keys once so label matching is case-insensitive
  CategoryMap folded;
  for (const auto& [k, v] : categories) folded[lower(k)] = v;

  std::vector<StatusEvent> events;
  while (next_line(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> row = csv::split_line(line, delim);
    if (row.size() < need) continue;
    StatusEvent ev;
    if (!parse_timestamp(row[c_start], ev.start) || !parse_timestamp(row[c_end], ev.end) ||
        ev.start > ev.end) {
      continue;
    }
    auto it = folded.find(lower(trim(row[c_label])));
    ev.category = it == folded.end() ? EventCategory::Other : it->second;
    events.push_back(ev);
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const StatusEvent& a, const StatusEvent& b) { return a.start < b.start; });
  return events;
}

std::string FilterAudit::to_json() const {
  nlohmann::ordered_json j;
  j["input_rows"] = input_rows;
  j["kept_rows"] = kept_rows;
  j["removed_by_event"] = removed_by_event;
  j["removed_pre_outage"] = removed_pre_outage;
  j["dropped_malformed"] = dropped_malformed;
  return j.dump(2) + "\n";
}

FilterAudit FilterAudit::from_json(const std::string& text) {
  FilterAudit a;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    a.input_rows = j.at("input_rows").get<std::size_t>();
    a.kept_rows = j.at("kept_rows").get<std::size_t>();
    a.removed_by_event = j.at("removed_by_event").get<std::size_t>();
    a.removed_pre_outage = j.at("removed_pre_outage").get<std::size_t>();
    a.dropped_malformed = j.at("dropped_malformed").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("filter audit JSON: ") + e.what());
  }
  return a;
}

FilterResult filter_operational(const std::vector<ScadaRecord>& records,
                                const std::vector<StatusEvent>& events,
                                std::int64_t pre_outage_window_s) {
  if (pre_outage_window_s < 0) {
    throw OutOfRange("pre-outage window must be non-negative");
  }
  std::vector<std::pair<std::int64_t, std::int64_t>> rule_a;
  std::vector<std::pair<std::int64_t, std::int64_t>> rule_b;
  for (const StatusEvent& ev : events) {
    switch (ev.category) {
      case EventCategory::Standby:
      case EventCategory::Warning:
      case EventCategory::Stop:
        rule_a.emplace_back(ev.start, ev.end);
        break;
      case EventCategory::ForcedOutage:
        rule_b.emplace_back(ev.start - pre_outage_window_s, ev.start);
        break;
      default:
        break;
    }
  }
  const IntervalSet exclude(std::move(rule_a));
  const IntervalSet pre_outage(std::move(rule_b));

  FilterResult out;
  out.audit.input_rows = records.size();
  for (const ScadaRecord& rec : records) {
    if (exclude.contains(rec.timestamp)) {
      ++out.audit.removed_by_event;
    } else if (pre_outage.contains(rec.timestamp)) {
      ++out.audit.removed_pre_outage;
    } else {
      out.kept.push_back(rec);
    }
  }
  out.audit.kept_rows = out.kept.size();
  return out;
}

FeatureSet feature_set_from_string(const std::string& name) {
  const std::string n = lower(trim(name));
  if (n == "time") return FeatureSet::Time;
  if (n == "wind_speed" || n == "wind") return FeatureSet::WindSpeed;
  if (n == "time_wind_speed" || n == "time,wind_speed" || n == "time+wind_speed") {
    return FeatureSet::TimeAndWindSpeed;
  }
  throw ConfigError("unknown feature set \"" + name +
                    "\" (expected time, wind_speed or time_wind_speed)");
}

const char* to_string(FeatureSet f) {
  switch (f) {
    case FeatureSet::Time: return "time";
    case FeatureSet::WindSpeed: return "wind_speed";
    case FeatureSet::TimeAndWindSpeed: return "time_wind_speed";
  }
  return "time";
}

Dataset to_dataset(const std::vector<ScadaRecord>& records, FeatureSet features,
                   double rated_power_kw) {
  std::vector<ScadaRecord> sorted = records;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScadaRecord& a, const ScadaRecord& b) {
                     return a.timestamp < b.timestamp;
                   });
  sorted.erase(std::unique(sorted.begin(), sorted.end(),
                           [](const ScadaRecord& a, const ScadaRecord& b) {
                             return a.timestamp == b.timestamp;
                           }),
               sorted.end());

  const Eigen::Index n = static_cast<Eigen::Index>(sorted.size());
  const int dim = features == FeatureSet::TimeAndWindSpeed ? 2 : 1;
  std::vector<std::int64_t> ts(sorted.size());
  Eigen::MatrixXd x(n, dim);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const ScadaRecord& r = sorted[static_cast<std::size_t>(i)];
    ts[static_cast<std::size_t>(i)] = r.timestamp;
    switch (features) {
      case FeatureSet::Time:
        x(i, 0) = static_cast<double>(r.timestamp);
        break;
      case FeatureSet::WindSpeed:
        x(i, 0) = r.wind_speed;
        break;
      case FeatureSet::TimeAndWindSpeed:
        x(i, 0) = static_cast<double>(r.timestamp);
        x(i, 1) = r.wind_speed;
        break;
    }
    y[i] = r.active_power;
  }
  return Dataset(std::move(ts), std::move(x), std::move(y), rated_power_kw);
}

std::string scada_records_to_csv(const std::vector<ScadaRecord>& records) {
  std::string out = "timestamp,wind_speed_ms,power_kw\n";
  for (const ScadaRecord& r : records) {
    out += std::to_string(r.timestamp) + "," + csv::format_double(r.wind_speed) + "," +
           csv::format_double(r.active_power) + "\n";
  }
  return out;
}

std::vector<ScadaRecord> scada_records_from_csv(const std::string& text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || rows[0].size() != 3 || rows[0][0] != "timestamp") {
    throw SchemaMismatch("record csv: unexpected header");
  }
  std::vector<ScadaRecord> records;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 3) throw SchemaMismatch("record csv: ragged row");
    ScadaRecord r;
    r.timestamp = std::stoll(rows[i][0]);
    r.wind_speed = csv::parse_double(rows[i][1]);
    r.active_power = csv::parse_double(rows[i][2]);
    records.push_back(r);
  }
  return records;
}

}  // namespace windgp

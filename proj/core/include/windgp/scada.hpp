#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "windgp/dataset.hpp"

namespace windgp {

/// One well-formed SCADA row.
struct ScadaRecord {
  std::int64_t timestamp = 0;  // seconds since epoch, UTC
  double wind_speed = 0.0;     // m/s
  double active_power = 0.0;   // kW
};

enum class EventCategory { Standby, Warning, Stop, ForcedOutage, Normal, Other };

const char* to_string(EventCategory c);

struct StatusEvent {
  std::int64_t start = 0;
  std::int64_t end = 0;  // start <= end
  EventCategory category = EventCategory::Other;
};

/// Column-name mapping for the measurement file. Defaults follow the
/// Kelmarsh SCADA export headers.
struct ScadaSchema {
  std::string timestamp = "Date and time";
  std::string wind_speed = "Wind speed (m/s)";
  std::string active_power = "Power (kW)";
};

/// Column-name mapping for the status/event file.
struct EventSchema {
  std::string start = "Timestamp start";
  std::string end = "Timestamp end";
  std::string label = "Status";
};

using CategoryMap = std::map<std::string, EventCategory>;

/// Label -> category mapping targeting the Kelmarsh/Senvion status labels
/// (matched case-insensitively). Vendor taxonomies vary, so callers can
/// override any entry; unmapped labels fall through to Other.
const CategoryMap& default_category_map();

struct ScadaParse {
  std::vector<ScadaRecord> records;    // file order preserved
  std::size_t dropped_malformed = 0;   // unparseable timestamp / missing field
};

/// Parse "YYYY-MM-DD HH:MM[:SS]" or ISO-8601 (T separator, optional
/// fractional seconds, optional Z or +-HH:MM offset) to epoch seconds.
/// Returns false when the text does not parse.
bool parse_timestamp(const std::string& text, std::int64_t& out);

/// Delimiter is auto-detected from the header line (tab when present,
/// comma otherwise). Rows with unparseable timestamps, missing wind/power
/// cells or negative wind speed are dropped and counted.
ScadaParse parse_scada(const std::string& path, const ScadaSchema& schema = {});

/// Events sorted by start time. Rows whose timestamps do not parse or with
/// start > end are skipped. Labels absent from the map become Other.
std::vector<StatusEvent> parse_events(const std::string& path, const EventSchema& schema = {},
                                      const CategoryMap& categories = default_category_map());

/// Removal accounting for filter_operational. A record matching both rules
/// counts once, attributed to the event rule. dropped_malformed is carried
/// from parsing so one audit object describes the whole ingestion.
struct FilterAudit {
  std::size_t input_rows = 0;
  std::size_t kept_rows = 0;
  std::size_t removed_by_event = 0;    // rule (a): Standby/Warning/Stop interval
  std::size_t removed_pre_outage = 0;  // rule (b): [outage start - window, start)
  std::size_t dropped_malformed = 0;

  std::string to_json() const;
  static FilterAudit from_json(const std::string& text);
};

struct FilterResult {
  std::vector<ScadaRecord> kept;
  FilterAudit audit;
};

/// Rule (a): timestamp in any [start, end) of a Standby/Warning/Stop event.
/// Rule (b): timestamp in [start - pre_outage_window, start) of a
/// ForcedOutage event. Half-open on both rules; (a) wins attribution.
FilterResult filter_operational(const std::vector<ScadaRecord>& records,
                                const std::vector<StatusEvent>& events,
                                std::int64_t pre_outage_window_s = 7 * 86400);

/// Feature columns extracted from SCADA records.
enum class FeatureSet { Time, WindSpeed, TimeAndWindSpeed };

FeatureSet feature_set_from_string(const std::string& name);
const char* to_string(FeatureSet f);

/// Records -> Dataset. Time features are raw epoch seconds (standardization
/// at split time maps them to a normalized index). Records are sorted by
/// timestamp; exact duplicates keep the first occurrence.
Dataset to_dataset(const std::vector<ScadaRecord>& records, FeatureSet features,
                   double rated_power_kw = 2050.0);

/// Filtered-record export (the ingest artifact); numbers round-trip exactly.
std::string scada_records_to_csv(const std::vector<ScadaRecord>& records);
std::vector<ScadaRecord> scada_records_from_csv(const std::string& text);

}  // namespace windgp

#pragma once

#include "csvqr/core.hpp"
#include "csvqr/scaler.hpp"

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csvqr {

/// Calendar hour, UTC.
using Hour = std::chrono::sys_time<std::chrono::hours>;
using YearMonth = std::chrono::year_month;

Hour parse_hour(std::string_view text);
std::string format_hour(Hour h);
YearMonth parse_month(std::string_view text);  // YYYY-MM
std::string format_month(YearMonth ym);
Hour month_start(YearMonth ym);
long hours_in_month(YearMonth ym);

/// One hourly observation. power is absent on forecast-horizon rows.
struct TimeSeriesRecord {
  Hour timestamp;
  int zone = 1;
  std::optional<double> power;
  double u10 = 0, v10 = 0, u100 = 0, v100 = 0;

  bool has_power() const noexcept { return power.has_value(); }
  bool operator==(const TimeSeriesRecord&) const = default;
};

/// Column names; defaults follow the GEFCom2014 wind-track release.
struct CsvSchema {
  std::string timestamp = "TIMESTAMP";
  std::string zone = "ZONEID";
  std::string power = "TARGETVAR";
  std::string u10 = "U10";
  std::string v10 = "V10";
  std::string u100 = "U100";
  std::string v100 = "V100";
};

/// Parses records and sorts them by (zone, timestamp). Accepts timestamps as
/// "YYYY-MM-DD HH:MM" or the competition's "YYYYMMDD H:MM".
std::vector<TimeSeriesRecord> read_csv(std::istream& in, const CsvSchema& schema = {});
std::vector<TimeSeriesRecord> load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
void write_csv(std::ostream& out, std::span<const TimeSeriesRecord> records, const CsvSchema& schema = {});
void save_csv(const std::filesystem::path& path, std::span<const TimeSeriesRecord> records,
              const CsvSchema& schema = {});

/// Records of one zone, in timestamp order.
std::vector<TimeSeriesRecord> select_zone(std::span<const TimeSeriesRecord> records, int zone);

/// 3 calendar months of training immediately followed by one test month.
struct SlidingWindowSplit {
  YearMonth test_month;
  Hour train_begin;
  Hour train_end;  // == test_begin
  Hour test_begin;
  Hour test_end;

  long train_hours() const { return (train_end - train_begin).count(); }
  long test_hours() const { return (test_end - test_begin).count(); }
  bool in_train(Hour h) const { return h >= train_begin && h < train_end; }
  bool in_test(Hour h) const { return h >= test_begin && h < test_end; }
};

/// One split per test month in [first, last]; every training month must
/// hold at least one observed power value.
std::vector<SlidingWindowSplit> make_windows(std::span<const TimeSeriesRecord> series, YearMonth first,
                                             YearMonth last, int train_months = 3);

}  // namespace csvqr

#include "csvqr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace csvqr {

namespace {

using namespace std::chrono;

constexpr double kPowerTolerance = 1e-9;

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<Hour> try_parse_hour(std::string_view text) {
  text = trim(text);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  const auto space = text.find(' ');
  if (space == std::string_view::npos) return std::nullopt;
  const auto date = text.substr(0, space);
  const auto time = trim(text.substr(space + 1));
  if (date.size() == 10 && date[4] == '-' && date[7] == '-') {
    if (!parse_int(date.substr(0, 4), y) || !parse_int(date.substr(5, 2), mo) || !parse_int(date.substr(8, 2), d))
      return std::nullopt;
  } else if (date.size() == 8) {
    if (!parse_int(date.substr(0, 4), y) || !parse_int(date.substr(4, 2), mo) || !parse_int(date.substr(6, 2), d))
      return std::nullopt;
  } else {
    return std::nullopt;
  }
  const auto colon = time.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  if (!parse_int(time.substr(0, colon), h) || !parse_int(time.substr(colon + 1), mi)) return std::nullopt;
  if (mi != 0 || h < 0 || h > 24) return std::nullopt;
  const year_month_day ymd{year{y}, month{unsigned(mo)}, day{unsigned(d)}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd} + hours{h};
}

double parse_double(std::string_view s, std::size_t line, const std::string& column) {
  double v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw ParseError(line, "column " + column + ": cannot parse '" + std::string(s) + "' as a number");
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Hour parse_hour(std::string_view text) {
  if (auto h = try_parse_hour(text)) return *h;
  throw ValidationError("cannot parse timestamp '" + std::string(text) + "'");
}

std::string format_hour(Hour h) {
  const auto day = floor<days>(h);
  const year_month_day ymd{day};
  const auto hh = (h - day).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02lld:00", int(ymd.year()), unsigned(ymd.month()),
                unsigned(ymd.day()), static_cast<long long>(hh));
  return buf;
}

YearMonth parse_month(std::string_view text) {
  text = trim(text);
  int y = 0, m = 0;
  if (text.size() != 7 || text[4] != '-' || !parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), m) ||
      m < 1 || m > 12)
    throw ValidationError("cannot parse month '" + std::string(text) + "' (expected YYYY-MM)");
  return year{y} / month{unsigned(m)};
}

std::string format_month(YearMonth ym) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u", int(ym.year()), unsigned(ym.month()));
  return buf;
}

Hour month_start(YearMonth ym) { return sys_days{ym / day{1}} + hours{0}; }

long hours_in_month(YearMonth ym) { return (month_start(ym + months{1}) - month_start(ym)).count(); }

std::vector<TimeSeriesRecord> read_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "missing header row");
  ++line_no;
  const auto header = split_fields(line);
  auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    throw ParseError(1, "header lacks column " + name);
  };
  const std::size_t c_ts = column(schema.timestamp), c_zone = column(schema.zone), c_pow = column(schema.power),
                    c_u10 = column(schema.u10), c_v10 = column(schema.v10), c_u100 = column(schema.u100),
                    c_v100 = column(schema.v100);

  // Keep file line numbers for the integrity check below.
  std::vector<std::pair<TimeSeriesRecord, std::size_t>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != header.size())
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    TimeSeriesRecord r;
    const auto ts = try_parse_hour(f[c_ts]);
    if (!ts) throw ParseError(line_no, "cannot parse timestamp '" + std::string(f[c_ts]) + "'");
    r.timestamp = *ts;
    if (!parse_int(f[c_zone], r.zone)) throw ParseError(line_no, "cannot parse zone '" + std::string(f[c_zone]) + "'");
    if (!f[c_pow].empty() && f[c_pow] != "NA" && f[c_pow] != "NaN") {
      double p = parse_double(f[c_pow], line_no, schema.power);
      if (p < -kPowerTolerance || p > 1.0 + kPowerTolerance)
        throw ValidationError("dataset: line " + std::to_string(line_no) + ": power " + format_double(p) +
                              " outside [0,1]");
      r.power = std::clamp(p, 0.0, 1.0);
    }
    r.u10 = parse_double(f[c_u10], line_no, schema.u10);
    r.v10 = parse_double(f[c_v10], line_no, schema.v10);
    r.u100 = parse_double(f[c_u100], line_no, schema.u100);
    r.v100 = parse_double(f[c_v100], line_no, schema.v100);
    rows.emplace_back(r, line_no);
  }

  // Within a zone, file order must already be strictly increasing hour by hour.
  std::map<int, std::pair<Hour, std::size_t>> last;
  for (const auto& [r, ln] : rows) {
    auto it = last.find(r.zone);
    if (it != last.end()) {
      const auto [prev, prev_line] = it->second;
      if (r.timestamp <= prev)
        throw IntegrityError("dataset: line " + std::to_string(ln) + ": zone " + std::to_string(r.zone) + " timestamp " +
                             format_hour(r.timestamp) + " does not follow " + format_hour(prev) + " (line " +
                             std::to_string(prev_line) + ")");
      if (r.timestamp - prev != hours{1})
        throw IntegrityError("dataset: line " + std::to_string(ln) + ": zone " + std::to_string(r.zone) + " gap between " +
                             format_hour(prev) + " and " + format_hour(r.timestamp));
    }
    last[r.zone] = {r.timestamp, ln};
  }

  std::vector<TimeSeriesRecord> out;
  out.reserve(rows.size());
  for (auto& [r, ln] : rows) out.push_back(r);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.zone != b.zone ? a.zone < b.zone : a.timestamp < b.timestamp;
  });
  return out;
}

std::vector<TimeSeriesRecord> load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("dataset: cannot open " + path.string());
  try {
    return read_csv(in, schema);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + std::string(e.what()).substr(std::string(e.what()).find(':') + 2));
  }
}

void write_csv(std::ostream& out, std::span<const TimeSeriesRecord> records, const CsvSchema& schema) {
  out << schema.timestamp << ',' << schema.zone << ',' << schema.power << ',' << schema.u10 << ',' << schema.v10 << ','
      << schema.u100 << ',' << schema.v100 << '\n';
  for (const auto& r : records) {
    out << format_hour(r.timestamp) << ',' << r.zone << ',' << (r.power ? format_double(*r.power) : std::string()) << ','
        << format_double(r.u10) << ',' << format_double(r.v10) << ',' << format_double(r.u100) << ','
        << format_double(r.v100) << '\n';
  }
}

void save_csv(const std::filesystem::path& path, std::span<const TimeSeriesRecord> records, const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw IoError("dataset: cannot write " + path.string());
  write_csv(out, records, schema);
}

std::vector<TimeSeriesRecord> select_zone(std::span<const TimeSeriesRecord> records, int zone) {
  std::vector<TimeSeriesRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out), [&](const auto& r) { return r.zone == zone; });
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  return out;
}

std::vector<SlidingWindowSplit> make_windows(std::span<const TimeSeriesRecord> series, YearMonth first, YearMonth last,
                                             int train_months) {
  if (!first.ok() || !last.ok()) throw ValidationError("make_windows: invalid month");
  if (last < first) throw ValidationError("make_windows: last test month precedes the first");
  if (train_months < 1) throw ValidationError("make_windows: train_months must be positive");

  std::vector<SlidingWindowSplit> out;
  for (YearMonth ym = first; ym <= last; ym += months{1}) {
    SlidingWindowSplit s;
    s.test_month = ym;
    s.test_begin = month_start(ym);
    s.test_end = month_start(ym + months{1});
    s.train_begin = month_start(ym - months{train_months});
    s.train_end = s.test_begin;
    for (int k = train_months; k >= 1; --k) {
      const YearMonth need = ym - months{k};
      const Hour b = month_start(need), e = month_start(need + months{1});
      const bool covered = std::any_of(series.begin(), series.end(), [&](const auto& r) {
        return r.timestamp >= b && r.timestamp < e && r.has_power();
      });
      if (!covered)
        throw CoverageError("make_windows: no observed power in " + format_month(need) + " (training month for " +
                            format_month(ym) + ")");
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace csvqr

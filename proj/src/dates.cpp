#include "spex/dates.hpp"

#include <chrono>
#include <cstdio>

#include "spex/errors.hpp"

namespace spex {

namespace {

std::chrono::year_month_day to_ymd(Date d) {
  return std::chrono::year_month_day(
      std::chrono::sys_days(std::chrono::days(d)));
}

}  // namespace

Date make_date(int year, int month, int day) {
  const std::chrono::year_month_day ymd(
      std::chrono::year(year), std::chrono::month(static_cast<unsigned>(month)),
      std::chrono::day(static_cast<unsigned>(day)));
  if (!ymd.ok()) throw DataError("invalid calendar date");
  return static_cast<Date>(
      std::chrono::sys_days(ymd).time_since_epoch().count());
}

Date parse_date(const std::string& iso) {
  int y = 0, m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(iso.c_str(), "%d-%d-%d%c", &y, &m, &d, &tail) != 3) {
    throw DataError("unparseable date: '" + iso + "' (expected YYYY-MM-DD)");
  }
  return make_date(y, m, d);
}

std::string format_date(Date d) {
  const auto ymd = to_ymd(d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", int(ymd.year()),
                static_cast<int>(unsigned(ymd.month())),
                static_cast<int>(unsigned(ymd.day())));
  return buf;
}

int year_of(Date d) { return int(to_ymd(d).year()); }
int month_of(Date d) {
  return static_cast<int>(unsigned(to_ymd(d).month()));
}
int day_of_month(Date d) {
  return static_cast<int>(unsigned(to_ymd(d).day()));
}

int day_of_year(Date d) {
  const auto ymd = to_ymd(d);
  const Date jan1 = make_date(int(ymd.year()), 1, 1);
  return d - jan1 + 1;
}

int calendar_day_index(Date d) {
  const auto ymd = to_ymd(d);
  const int doy = day_of_year(d);
  const bool leap = ymd.year().is_leap();
  // Common years skip slot 60 (Feb 29).
  if (!leap && doy >= 60) return doy + 1;
  return doy;
}

Season season_of(Date d) {
  switch (month_of(d)) {
    case 12:
    case 1:
    case 2:
      return Season::Winter;
    case 3:
    case 4:
    case 5:
      return Season::Spring;
    case 6:
    case 7:
    case 8:
      return Season::Summer;
    default:
      return Season::Fall;
  }
}

std::string season_name(Season s) {
  switch (s) {
    case Season::Winter:
      return "Winter";
    case Season::Spring:
      return "Spring";
    case Season::Summer:
      return "Summer";
    default:
      return "Fall";
  }
}

Season parse_season(const std::string& name) {
  if (name == "Winter") return Season::Winter;
  if (name == "Spring") return Season::Spring;
  if (name == "Summer") return Season::Summer;
  if (name == "Fall") return Season::Fall;
  throw DataError("unknown season label: '" + name + "'");
}

}  // namespace spex

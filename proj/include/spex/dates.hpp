#pragma once

#include <cstdint>
#include <string>

namespace spex {

/// Calendar date stored as days since 1970-01-01 (proleptic Gregorian).
using Date = std::int32_t;

enum class Season { Winter, Spring, Summer, Fall };
inline constexpr int kNumSeasons = 4;

Date make_date(int year, int month, int day);
Date parse_date(const std::string& iso);  // "YYYY-MM-DD"
std::string format_date(Date d);

int year_of(Date d);
int month_of(Date d);
int day_of_month(Date d);

/// 1-based ordinal day within its own year (1..365 or 366).
int day_of_year(Date d);

/// 1-based position in a fixed 366-slot calendar where Mar 1 is always slot
/// 61; lets the same slot mean the same calendar day across leap and common
/// years.
int calendar_day_index(Date d);

/// Meteorological season by month: DJF, MAM, JJA, SON.
Season season_of(Date d);
std::string season_name(Season s);
Season parse_season(const std::string& name);

}  // namespace spex

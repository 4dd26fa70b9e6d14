#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace exr::fhir {

using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::year_month_day;

/// Parses a FHIR date or dateTime ("2019", "2019-02", "2019-02-03",
/// "2019-02-03T10:12:00-05:00", fractional seconds allowed) into UTC.
/// Partial dates resolve to the first instant of the period.
std::optional<Timestamp> parse_datetime(std::string_view text);

std::optional<Date> parse_date(std::string_view text);

/// "YYYY-MM-DDThh:mm:ssZ"
std::string format_timestamp(Timestamp t);

/// "YYYY-MM-DD"
std::string format_date(Date d);

/// Fractional days since the Unix epoch.
double to_days(Timestamp t);

}  // namespace exr::fhir

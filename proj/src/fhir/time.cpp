#include "exr/fhir/time.hpp"

#include <charconv>
#include <cstdio>

namespace exr::fhir {

namespace {

bool read_int(std::string_view text, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > text.size()) return false;
  const char* first = text.data() + pos;
  const char* last = first + len;
  for (const char* p = first; p != last; ++p) {
    if (*p < '0' || *p > '9') return false;
  }
  return std::from_chars(first, last, out).ec == std::errc{};
}

}  // namespace

std::optional<Date> parse_date(std::string_view text) {
  int y = 0, m = 1, d = 1;
  if (!read_int(text, 0, 4, y)) return std::nullopt;
  if (text.size() > 4) {
    if (text[4] != '-' || !read_int(text, 5, 2, m)) return std::nullopt;
    if (text.size() > 7) {
      if (text[7] != '-' || !read_int(text, 8, 2, d)) return std::nullopt;
    }
  }
  Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
            std::chrono::day{static_cast<unsigned>(d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

std::optional<Timestamp> parse_datetime(std::string_view text) {
  using namespace std::chrono;
  const auto t_pos = text.find('T');
  auto date = parse_date(text.substr(0, t_pos == std::string_view::npos ? text.size() : t_pos));
  if (!date) return std::nullopt;
  if (t_pos == std::string_view::npos) {
    if (text.size() != 4 && text.size() != 7 && text.size() != 10) return std::nullopt;
    return sys_days{*date};
  }
  if (t_pos != 10) return std::nullopt;

  int hh = 0, mm = 0, ss = 0;
  const std::size_t base = t_pos + 1;
  if (!read_int(text, base, 2, hh) || text.size() < base + 5 || text[base + 2] != ':' ||
      !read_int(text, base + 3, 2, mm)) {
    return std::nullopt;
  }
  std::size_t pos = base + 5;
  if (pos < text.size() && text[pos] == ':') {
    if (!read_int(text, pos + 1, 2, ss)) return std::nullopt;
    pos += 3;
  }
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
  }
  if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;

  int offset_minutes = 0;
  if (pos < text.size()) {
    const char sign = text[pos];
    if (sign == 'Z') {
      ++pos;
    } else if (sign == '+' || sign == '-') {
      int oh = 0, om = 0;
      if (!read_int(text, pos + 1, 2, oh) || text.size() < pos + 6 || text[pos + 3] != ':' ||
          !read_int(text, pos + 4, 2, om)) {
        return std::nullopt;
      }
      offset_minutes = (oh * 60 + om) * (sign == '+' ? 1 : -1);
      pos += 6;
    } else {
      return std::nullopt;
    }
  }
  if (pos != text.size()) return std::nullopt;

  return sys_days{*date} + hours{hh} + minutes{mm} + seconds{ss} - minutes{offset_minutes};
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

double to_days(Timestamp t) {
  return static_cast<double>(t.time_since_epoch().count()) / 86400.0;
}

}  // namespace exr::fhir

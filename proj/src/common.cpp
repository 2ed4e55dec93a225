#include "tastesim/common.hpp"

#include <cstdio>

namespace tastesim {

// Howard Hinnant's days-from-civil algorithm (public domain).
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& year, unsigned& month, unsigned& day) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    day = doy - (153 * mp + 2) / 5 + 1;
    month = mp + (mp < 10 ? 3 : -9);
    year = static_cast<int>(y + (month <= 2));
}

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Parses exactly n digits at text[pos..]; advances pos.
bool take_digits(std::string_view text, std::size_t& pos, int n, long& out) {
    if (pos + n > text.size()) return false;
    long v = 0;
    for (int i = 0; i < n; ++i) {
        char c = text[pos + i];
        if (!is_digit(c)) return false;
        v = v * 10 + (c - '0');
    }
    pos += n;
    out = v;
    return true;
}

constexpr int kDaysInMonth[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

}  // namespace

std::optional<EpochSeconds> parse_iso8601_utc(std::string_view text) {
    std::size_t p = 0;
    long y, mo, d, h, mi, s;
    if (!take_digits(text, p, 4, y)) return std::nullopt;
    if (p >= text.size() || text[p] != '-') return std::nullopt;
    ++p;
    if (!take_digits(text, p, 2, mo)) return std::nullopt;
    if (p >= text.size() || text[p] != '-') return std::nullopt;
    ++p;
    if (!take_digits(text, p, 2, d)) return std::nullopt;
    if (p >= text.size() || (text[p] != 'T' && text[p] != ' ')) return std::nullopt;
    ++p;
    if (!take_digits(text, p, 2, h)) return std::nullopt;
    if (p >= text.size() || text[p] != ':') return std::nullopt;
    ++p;
    if (!take_digits(text, p, 2, mi)) return std::nullopt;
    if (p >= text.size() || text[p] != ':') return std::nullopt;
    ++p;
    if (!take_digits(text, p, 2, s)) return std::nullopt;

    if (mo < 1 || mo > 12) return std::nullopt;
    int dim = kDaysInMonth[mo - 1] + (mo == 2 && is_leap(static_cast<int>(y)) ? 1 : 0);
    if (d < 1 || d > dim) return std::nullopt;
    if (h > 23 || mi > 59 || s > 59) return std::nullopt;

    // Optional fractional seconds, truncated.
    if (p < text.size() && text[p] == '.') {
        ++p;
        if (p >= text.size() || !is_digit(text[p])) return std::nullopt;
        while (p < text.size() && is_digit(text[p])) ++p;
    }

    long offset = 0;
    if (p < text.size() && (text[p] == 'Z' || text[p] == 'z')) {
        ++p;
    } else if (p < text.size() && (text[p] == '+' || text[p] == '-')) {
        int sign = text[p] == '+' ? 1 : -1;
        ++p;
        long oh, om;
        if (!take_digits(text, p, 2, oh)) return std::nullopt;
        if (p < text.size() && text[p] == ':') ++p;
        if (!take_digits(text, p, 2, om)) return std::nullopt;
        if (oh > 23 || om > 59) return std::nullopt;
        offset = sign * (oh * 3600 + om * 60);
    } else {
        return std::nullopt;  // zone designator required
    }
    if (p != text.size()) return std::nullopt;

    std::int64_t days = days_from_civil(static_cast<int>(y), static_cast<unsigned>(mo),
                                        static_cast<unsigned>(d));
    return days * 86400 + h * 3600 + mi * 60 + s - offset;
}

std::string format_iso8601_utc(EpochSeconds t) {
    std::int64_t days = t / 86400;
    std::int64_t sod = t % 86400;
    if (sod < 0) {
        sod += 86400;
        --days;
    }
    int y;
    unsigned mo, d;
    civil_from_days(days, y, mo, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y, mo, d,
                  static_cast<long long>(sod / 3600), static_cast<long long>((sod / 60) % 60),
                  static_cast<long long>(sod % 60));
    return buf;
}

std::int64_t week_index_of(EpochSeconds t) {
    std::int64_t days = t / 86400;
    if (t % 86400 < 0) --days;
    std::int64_t shifted = days + 3;  // 1969-12-29 was a Monday
    return shifted >= 0 ? shifted / 7 : (shifted - 6) / 7;
}

EpochSeconds week_start_of(std::int64_t week_index) {
    return (week_index * 7 - 3) * 86400;
}

}  // namespace tastesim

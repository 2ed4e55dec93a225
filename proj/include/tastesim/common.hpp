#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tastesim {

// Bad user-supplied configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (CLI exit code 1).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem / stream failures (CLI exit code 1).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Seconds since the Unix epoch, UTC.
using EpochSeconds = std::int64_t;

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(int year, unsigned month, unsigned day);
void civil_from_days(std::int64_t days, int& year, unsigned& month, unsigned& day);

// Accepts "YYYY-MM-DDTHH:MM:SS" with optional fractional seconds (ignored)
// and a "Z" or "+HH:MM"/"-HH:MM" zone suffix. Space instead of 'T' is allowed.
std::optional<EpochSeconds> parse_iso8601_utc(std::string_view text);
std::string format_iso8601_utc(EpochSeconds t);

// Monday-aligned week counter; week 0 starts 1969-12-29T00:00:00Z.
std::int64_t week_index_of(EpochSeconds t);
EpochSeconds week_start_of(std::int64_t week_index);

}  // namespace tastesim

#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lfp {

/// Calendar date with a day-serial representation (days since 1970-01-01).
struct Date {
    std::int32_t serial = 0;

    Date() = default;
    explicit Date(std::int32_t s) : serial(s) {}
    Date(int y, int m, int d) : serial(days_from_civil(y, m, d)) {}

    auto operator<=>(const Date&) const = default;

    // Howard Hinnant's civil-date algorithms.
    static std::int32_t days_from_civil(int y, int m, int d) {
        y -= m <= 2;
        const int era = (y >= 0 ? y : y - 399) / 400;
        const unsigned yoe = static_cast<unsigned>(y - era * 400);
        const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
        const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        return era * 146097 + static_cast<int>(doe) - 719468;
    }

    void civil(int& y, int& m, int& d) const {
        std::int32_t z = serial + 719468;
        const int era = (z >= 0 ? z : z - 146096) / 146097;
        const unsigned doe = static_cast<unsigned>(z - era * 146097);
        const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        const int yy = static_cast<int>(yoe) + era * 400;
        const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const unsigned mp = (5 * doy + 2) / 153;
        d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
        m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
        y = yy + (m <= 2);
    }

    int year() const { int y, m, d; civil(y, m, d); return y; }
    int month() const { int y, m, d; civil(y, m, d); return m; }
    int day() const { int y, m, d; civil(y, m, d); return d; }

    /// Months since year 0; used to group observations by calendar month.
    int month_index() const { int y, m, d; civil(y, m, d); return y * 12 + (m - 1); }

    std::string iso() const {
        int y, m, d;
        civil(y, m, d);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
        return buf;
    }

    static Date parse(std::string_view s) {
        auto fail = [&] { throw std::invalid_argument("bad ISO date: " + std::string(s)); };
        if (s.size() != 10 || s[4] != '-' || s[7] != '-') fail();
        int y = 0, m = 0, d = 0;
        auto num = [&](std::string_view part, int& out) {
            auto r = std::from_chars(part.data(), part.data() + part.size(), out);
            if (r.ec != std::errc{} || r.ptr != part.data() + part.size()) fail();
        };
        num(s.substr(0, 4), y);
        num(s.substr(5, 2), m);
        num(s.substr(8, 2), d);
        if (m < 1 || m > 12 || d < 1 || d > 31) fail();
        return Date(y, m, d);
    }
};

/// First day of the month `n` months after the month containing `d`.
inline Date add_months_floor(Date d, int n) {
    int mi = d.month_index() + n;
    int y = mi / 12, m = mi % 12;
    if (m < 0) { m += 12; --y; }
    return Date(y, m + 1, 1);
}

}  // namespace lfp

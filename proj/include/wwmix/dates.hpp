#pragma once
#ifndef WWMIX_DATES_HPP_
#define WWMIX_DATES_HPP_

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "wwmix/errors.hpp"

namespace wwmix {

/// Calendar date stored as days since the Unix epoch. Ordered, hashable-free,
/// round-trips through ISO-8601 (YYYY-MM-DD).
class Date {
  public:
    Date() = default;
    explicit Date(long days) : days_{days} {}

    static Date parse(const std::string& iso) {
        int y = 0;
        unsigned m = 0, d = 0;
        char dash1 = 0, dash2 = 0;
        if (std::sscanf(iso.c_str(), "%d%c%u%c%u", &y, &dash1, &m, &dash2, &d) != 5 ||
            dash1 != '-' || dash2 != '-') {
            throw ParseError("Date: expected ISO-8601 YYYY-MM-DD, got '" + iso + "'");
        }
        std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
        if (!ymd.ok()) throw ParseError("Date: invalid calendar date '" + iso + "'");
        return Date{std::chrono::sys_days{ymd}.time_since_epoch().count()};
    }

    std::string iso() const {
        std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days_}}};
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
        return buf;
    }

    long days() const { return days_; }

    friend bool operator==(Date a, Date b) { return a.days_ == b.days_; }
    friend bool operator!=(Date a, Date b) { return a.days_ != b.days_; }
    friend bool operator<(Date a, Date b) { return a.days_ < b.days_; }
    friend bool operator<=(Date a, Date b) { return a.days_ <= b.days_; }
    friend bool operator>(Date a, Date b) { return a.days_ > b.days_; }

  private:
    long days_ = 0;
};

inline bool strictly_increasing(const std::vector<Date>& dates) {
    for (std::size_t i = 1; i < dates.size(); ++i)
        if (!(dates[i - 1] < dates[i])) return false;
    return true;
}

/// Affine map of dates onto [0,1]; a single date maps to 0.
inline std::vector<double> unit_interval_times(const std::vector<Date>& dates) {
    std::vector<double> out(dates.size(), 0.0);
    if (dates.size() < 2) return out;
    const double lo = static_cast<double>(dates.front().days());
    const double hi = static_cast<double>(dates.back().days());
    for (std::size_t i = 0; i < dates.size(); ++i)
        out[i] = (static_cast<double>(dates[i].days()) - lo) / (hi - lo);
    return out;
}

}  // namespace wwmix

#endif  // WWMIX_DATES_HPP_

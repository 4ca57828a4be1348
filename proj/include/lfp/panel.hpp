#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lfp/dates.hpp"

namespace lfp {

struct Asset {
    std::string code;
    std::string asset_class;
};

/// Date-indexed matrix of daily simple returns, one column per asset.
/// Immutable after construction; rows align with `dates`.
class ReturnsPanel {
public:
    ReturnsPanel() = default;
    ReturnsPanel(std::vector<Date> dates, std::vector<Asset> assets, Eigen::MatrixXd values)
        : dates_(std::move(dates)), assets_(std::move(assets)), values_(std::move(values)) {
        validate();
    }

    const std::vector<Date>& dates() const { return dates_; }
    const std::vector<Asset>& assets() const { return assets_; }
    const Eigen::MatrixXd& values() const { return values_; }
    Eigen::Index rows() const { return values_.rows(); }
    Eigen::Index cols() const { return values_.cols(); }

    /// Index of the first date >= d, or rows() if none.
    Eigen::Index lower_bound(Date d) const {
        auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
        return it - dates_.begin();
    }

    ReturnsPanel slice(Eigen::Index begin, Eigen::Index end) const {
        if (begin < 0 || end > rows() || begin > end)
            throw std::out_of_range("panel slice out of range");
        std::vector<Date> d(dates_.begin() + begin, dates_.begin() + end);
        return ReturnsPanel(std::move(d), assets_, values_.middleRows(begin, end - begin));
    }

private:
    void validate() const {
        if (static_cast<Eigen::Index>(dates_.size()) != values_.rows())
            throw std::invalid_argument("panel: dates/rows mismatch");
        if (static_cast<Eigen::Index>(assets_.size()) != values_.cols())
            throw std::invalid_argument("panel: assets/cols mismatch");
        for (size_t i = 1; i < dates_.size(); ++i)
            if (!(dates_[i - 1] < dates_[i]))
                throw std::invalid_argument("panel: dates not strictly increasing at row " +
                                            std::to_string(i));
        std::vector<std::string> codes;
        for (const auto& a : assets_) codes.push_back(a.code);
        std::sort(codes.begin(), codes.end());
        if (std::adjacent_find(codes.begin(), codes.end()) != codes.end())
            throw std::invalid_argument("panel: duplicate asset codes");
        if (!values_.allFinite())
            throw std::invalid_argument("panel: non-finite values");
    }

    std::vector<Date> dates_;
    std::vector<Asset> assets_;
    Eigen::MatrixXd values_;
};

/// Per-column centering/scaling parameters fitted on a training window.
struct Normalizer {
    Eigen::VectorXd mu;
    Eigen::VectorXd sigma;

    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        return (x.rowwise() - mu.transpose()).array().rowwise() / sigma.transpose().array();
    }
    Eigen::MatrixXd invert(const Eigen::MatrixXd& z) const {
        return (z.array().rowwise() * sigma.transpose().array()).matrix().rowwise() +
               mu.transpose();
    }
    Eigen::VectorXd apply_row(const Eigen::VectorXd& x) const {
        return (x - mu).cwiseQuotient(sigma);
    }
};

struct SplitPlan {
    Date train_end;
    std::vector<std::pair<Date, Date>> validation_windows;  // [start, end) month windows
    Date test_start;
};

enum class CsvFormat { Prices, Returns };

struct LoadResult {
    ReturnsPanel panel;
    int dropped_rows = 0;  // rows discarded for missing values
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline bool parse_cell(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return false;
    return std::isfinite(out);
}

}  // namespace detail

/// Load a returns panel from CSV (first column `date`, one column per asset).
/// `classes` maps asset code -> asset class; unmapped codes get class "unknown".
inline LoadResult load_panel(const std::string& path, CsvFormat format,
                             const std::map<std::string, std::string>& classes = {}) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty CSV: " + path);
    auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "date")
        throw std::invalid_argument("CSV header must start with 'date': " + path);

    std::vector<Asset> assets;
    for (size_t j = 1; j < header.size(); ++j) {
        auto it = classes.find(header[j]);
        assets.push_back({header[j], it != classes.end() ? it->second : "unknown"});
    }
    const size_t d = assets.size();

    std::vector<Date> dates;
    std::vector<Eigen::VectorXd> rows;
    int dropped = 0;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != d + 1)
            throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(d + 1) + " cells, got " +
                                     std::to_string(cells.size()));
        Eigen::VectorXd row(d);
        bool ok = true;
        for (size_t j = 0; j < d; ++j) ok = ok && detail::parse_cell(cells[j + 1], row[j]);
        if (!ok) {
            ++dropped;
            continue;
        }
        Date dt = Date::parse(cells[0]);
        if (!dates.empty() && !(dates.back() < dt))
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                     ": dates not strictly increasing");
        dates.push_back(dt);
        rows.push_back(std::move(row));
    }
    if (rows.size() < 2) throw std::invalid_argument(path + ": fewer than 2 usable rows");

    Eigen::MatrixXd values(rows.size(), d);
    for (size_t i = 0; i < rows.size(); ++i) values.row(i) = rows[i];

    if (format == CsvFormat::Prices) {
        if ((values.array() <= 0.0).any())
            throw std::invalid_argument(path + ": prices must be strictly positive");
        Eigen::MatrixXd rets =
            values.bottomRows(values.rows() - 1).cwiseQuotient(values.topRows(values.rows() - 1));
        rets.array() -= 1.0;
        dates.erase(dates.begin());
        values = std::move(rets);
    }
    return {ReturnsPanel(std::move(dates), std::move(assets), std::move(values)), dropped};
}

/// Sample mean / standard deviation (ddof 1) over rows [begin, end).
inline Normalizer fit_normalizer(const ReturnsPanel& panel, Eigen::Index begin, Eigen::Index end) {
    if (end - begin < 2) throw std::invalid_argument("fit_normalizer: window needs >= 2 rows");
    const auto x = panel.values().middleRows(begin, end - begin);
    Normalizer n;
    n.mu = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - n.mu.transpose();
    n.sigma = (centered.array().square().colwise().sum() / double(x.rows() - 1)).sqrt();
    for (Eigen::Index j = 0; j < n.sigma.size(); ++j)
        if (!(n.sigma[j] > 0.0))
            throw std::invalid_argument("fit_normalizer: zero-variance column " +
                                        panel.assets()[j].code);
    return n;
}

inline Normalizer fit_normalizer(const ReturnsPanel& panel) {
    return fit_normalizer(panel, 0, panel.rows());
}

/// Resample with contiguous blocks of `block_length` rows, random start points,
/// last block truncated so the output length equals the input length.
inline ReturnsPanel block_bootstrap(const ReturnsPanel& panel, Eigen::Index block_length,
                                    std::uint64_t seed) {
    const Eigen::Index t = panel.rows();
    if (block_length <= 0) throw std::invalid_argument("block_bootstrap: block_length must be > 0");
    if (block_length > t) throw std::invalid_argument("block_bootstrap: block_length > T");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> start(0, t - block_length);
    Eigen::MatrixXd out(t, panel.cols());
    Eigen::Index pos = 0;
    while (pos < t) {
        Eigen::Index s = start(rng);
        Eigen::Index len = std::min(block_length, t - pos);
        out.middleRows(pos, len) = panel.values().middleRows(s, len);
        pos += len;
    }
    return ReturnsPanel(panel.dates(), panel.assets(), std::move(out));
}

/// Raw block-bootstrap of a matrix (used for per-epoch training resamples).
inline Eigen::MatrixXd block_bootstrap_matrix(const Eigen::MatrixXd& x, Eigen::Index block_length,
                                              std::mt19937_64& rng) {
    const Eigen::Index t = x.rows();
    if (block_length > t) block_length = t;
    std::uniform_int_distribution<Eigen::Index> start(0, t - block_length);
    Eigen::MatrixXd out(t, x.cols());
    Eigen::Index pos = 0;
    while (pos < t) {
        Eigen::Index s = start(rng);
        Eigen::Index len = std::min(block_length, t - pos);
        out.middleRows(pos, len) = x.middleRows(s, len);
        pos += len;
    }
    return out;
}

/// Same day-of-month `n` months away, clamped to the target month's length.
inline Date shift_month(Date d, int n) {
    int y, m, day;
    d.civil(y, m, day);
    int mi = (y * 12 + m - 1) + n;
    int ny = mi / 12, nm = mi % 12;
    if (nm < 0) { nm += 12; --ny; }
    static const int mdays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    int maxd = mdays[nm];
    if (nm == 1 && ((ny % 4 == 0 && ny % 100 != 0) || ny % 400 == 0)) maxd = 29;
    return Date(ny, nm + 1, std::min(day, maxd));
}

/// Back-to-back one-calendar-month validation windows ending at train_end.
/// The matching train set for each window is everything before its start.
inline SplitPlan make_splits(const ReturnsPanel& panel, Date train_end, int n_val_months,
                             Date test_start) {
    if (n_val_months < 1) throw std::invalid_argument("make_splits: n_val_months must be >= 1");
    if (!(train_end < test_start))
        throw std::invalid_argument("make_splits: test_start must follow train_end");
    if (panel.dates().empty() || train_end < panel.dates().front() ||
        panel.dates().back() < train_end)
        throw std::invalid_argument("make_splits: train_end outside panel range");

    SplitPlan plan;
    plan.train_end = train_end;
    plan.test_start = test_start;
    for (int k = n_val_months; k >= 1; --k)
        plan.validation_windows.push_back({shift_month(train_end, -k), shift_month(train_end, -k + 1)});
    if (plan.validation_windows.front().first < panel.dates().front())
        throw std::invalid_argument("make_splits: insufficient history for " +
                                    std::to_string(n_val_months) + " validation months");
    return plan;
}

}  // namespace lfp

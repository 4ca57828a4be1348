#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfp/engine.hpp"
#include "lfp/panel.hpp"

namespace lfp {

/// Flat `key = value` run configuration with `#` comments.
class Config {
public:
    Config() = default;

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config not readable: " + path);
        Config c;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto eq = line.find('=');
            if (eq == std::string::npos) {
                if (line.find_first_not_of(" \t\r") != std::string::npos)
                    throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                             ": expected key = value");
                continue;
            }
            c.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
        return c;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string str(const std::string& key, const std::string& fallback = "") const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double num(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t used = 0;
            double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("trailing text");
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error("config key '" + key + "': bad number '" + it->second + "'");
        }
    }

    int integer(const std::string& key, int fallback) const {
        double v = num(key, double(fallback));
        int i = int(v);
        if (double(i) != v) throw std::runtime_error("config key '" + key + "': expected integer");
        return i;
    }

    const std::map<std::string, std::string>& all() const { return values_; }

private:
    static std::string trim(std::string s) {
        auto a = s.find_first_not_of(" \t\r");
        auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? "" : s.substr(a, b - a + 1);
    }
    std::map<std::string, std::string> values_;
};

namespace io {

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

/// One row per metric, one column per strategy; deterministic ordering.
inline void write_metric_table(const std::filesystem::path& path,
                               const std::vector<BacktestReport>& reports) {
    auto out = open_out(path);
    out << "metric";
    for (const auto& r : reports) out << "," << r.strategy;
    out << "\n";
    if (reports.empty()) return;
    for (const auto& [key, unused] : reports.front().metrics) {
        out << key;
        for (const auto& r : reports) out << "," << fmt(r.metrics.at(key));
        out << "\n";
    }
}

/// date column plus cumulative total return per strategy.
inline void write_nav(const std::filesystem::path& path,
                      const std::vector<BacktestReport>& reports) {
    auto out = open_out(path);
    out << "date";
    for (const auto& r : reports) out << "," << r.strategy;
    out << "\n";
    if (reports.empty()) return;
    std::vector<double> nav(reports.size(), 1.0);
    for (size_t t = 0; t < reports.front().dates.size(); ++t) {
        out << reports.front().dates[t].iso();
        for (size_t s = 0; s < reports.size(); ++s) {
            nav[s] *= 1.0 + reports[s].returns[Eigen::Index(t)];
            out << "," << fmt(nav[s]);
        }
        out << "\n";
    }
}

/// Long format: date, asset, weight (the levered drifted weights).
inline void write_weights(const std::filesystem::path& path, const BacktestReport& report,
                          const std::vector<Asset>& assets) {
    auto out = open_out(path);
    out << "date,asset,weight\n";
    for (size_t t = 0; t < report.dates.size(); ++t)
        for (size_t i = 0; i < assets.size(); ++i)
            out << report.dates[t].iso() << "," << assets[i].code << ","
                << fmt(report.daily_weights[t][Eigen::Index(i)]) << "\n";
}

inline void write_diagnostics(const std::filesystem::path& r2_path,
                              const std::filesystem::path& corr_path,
                              const BacktestReport& report, const std::vector<Asset>& assets) {
    if (report.r2.size() > 0) {
        auto out = open_out(r2_path);
        out << "asset,r2\n";
        for (size_t i = 0; i < assets.size(); ++i)
            out << assets[i].code << "," << fmt(report.r2[Eigen::Index(i)]) << "\n";
    }
    if (report.factor_corr.size() > 0) {
        auto out = open_out(corr_path);
        out << "asset,factor,corr\n";
        for (Eigen::Index i = 0; i < report.factor_corr.rows(); ++i)
            for (Eigen::Index k = 0; k < report.factor_corr.cols(); ++k)
                out << assets[size_t(i)].code << "," << k << ","
                    << fmt(report.factor_corr(i, k)) << "\n";
    }
}

/// date, factor, probability, predicted signal, realized class.
inline void write_signals(const std::filesystem::path& path, const std::vector<Date>& dates,
                          const FactorDiagnostics& diag) {
    auto out = open_out(path);
    out << "date,factor,prob,signal,class\n";
    for (Eigen::Index t = 0; t < diag.probs.rows(); ++t)
        for (Eigen::Index k = 0; k < diag.probs.cols(); ++k)
            out << dates[size_t(t)].iso() << "," << k << "," << fmt(diag.probs(t, k)) << ","
                << diag.signals(t, k) << "," << diag.realized(t, k) << "\n";
}

inline void write_validation(const std::filesystem::path& path, const FactorDiagnostics& diag) {
    auto out = open_out(path);
    out << "factor,threshold,auc,predicted_rate,true_rate,excess_exceedance,fpr,fnr\n";
    for (size_t k = 0; k < diag.validation.size(); ++k) {
        const auto& v = diag.validation[k];
        out << k << "," << fmt(diag.thresholds[k]) << ","
            << (v.auc ? fmt(*v.auc) : std::string("")) << "," << fmt(v.predicted_rate) << ","
            << fmt(v.true_rate) << "," << fmt(v.excess_exceedance) << "," << fmt(v.fpr) << ","
            << fmt(v.fnr) << "\n";
    }
}

/// Minimal polyline chart of the NAV curves; purely cosmetic output.
inline void write_nav_svg(const std::filesystem::path& path,
                          const std::vector<BacktestReport>& reports) {
    auto out = open_out(path);
    const int w = 900, h = 420, pad = 40;
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
    double lo = 1.0, hi = 1.0;
    std::vector<std::vector<double>> navs;
    for (const auto& r : reports) {
        std::vector<double> nav;
        double v = 1.0;
        for (Eigen::Index t = 0; t < r.returns.size(); ++t) {
            v *= 1.0 + r.returns[t];
            nav.push_back(v);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        navs.push_back(std::move(nav));
    }
    if (hi <= lo) hi = lo + 1.0;
    for (size_t s = 0; s < navs.size(); ++s) {
        out << "<polyline fill='none' stroke='" << colors[s % 8] << "' points='";
        for (size_t t = 0; t < navs[s].size(); ++t) {
            double x = pad + double(t) / std::max<size_t>(navs[s].size() - 1, 1) * (w - 2 * pad);
            double y = h - pad - (navs[s][t] - lo) / (hi - lo) * (h - 2 * pad);
            out << x << "," << y << " ";
        }
        out << "'/>\n";
        out << "<text x='" << (pad + 4) << "' y='" << (pad + 14 + 14 * s) << "' fill='"
            << colors[s % 8] << "' font-size='12'>" << reports[s].strategy << "</text>\n";
    }
    out << "</svg>\n";
}

struct Manifest {
    nlohmann::json j = nlohmann::json::object();

    void add_file(const std::string& stage, const std::filesystem::path& p) {
        j["outputs"][stage].push_back(p.string());
    }
    void set_config(const Config& cfg) {
        for (const auto& [k, v] : cfg.all()) j["config"][k] = v;
    }
    void save(const std::filesystem::path& path) const {
        auto out = open_out(path);
        out << j.dump(2) << "\n";
    }
};

}  // namespace io
}  // namespace lfp

// lfp command line: model selection, rolling backtests, tail hedging and
// report/plot-data generation, driven by a flat key=value config file.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lfp/engine.hpp"
#include "lfp/io.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct CommonArgs {
    std::string config_path;
    std::string data_path;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string out_dir = "out";
    bool plots = false;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "run configuration file")->required();
    cmd->add_option("--data", a.data_path, "returns/prices CSV");
    cmd->add_option("--seed", a.seed, "base random seed");
    cmd->add_option("--jobs", a.jobs, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--out-dir", a.out_dir, "output directory");
    cmd->add_flag("--plots", a.plots, "also render SVG charts");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto a = item.find_first_not_of(" \t");
        auto b = item.find_last_not_of(" \t");
        if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
    }
    return out;
}

lfp::Config load_config(const CommonArgs& args) {
    if (!fs::exists(args.config_path))
        throw CLI::ValidationError("--config", "no such file: " + args.config_path);
    return lfp::Config::load(args.config_path);
}

lfp::ReturnsPanel load_data(const lfp::Config& cfg, const CommonArgs& args) {
    std::string path = args.data_path.empty() ? cfg.str("data") : args.data_path;
    if (path.empty()) throw CLI::ValidationError("--data", "no data file given");
    if (!fs::exists(path)) throw CLI::ValidationError("--data", "no such file: " + path);
    auto format = cfg.str("format", "returns") == "prices" ? lfp::CsvFormat::Prices
                                                           : lfp::CsvFormat::Returns;
    std::map<std::string, std::string> classes;
    for (const auto& [k, v] : cfg.all())
        if (k.rfind("class.", 0) == 0) classes[k.substr(6)] = v;
    auto loaded = lfp::load_panel(path, format, classes);
    if (loaded.dropped_rows > 0)
        std::cerr << "note: dropped " << loaded.dropped_rows << " rows with missing values\n";
    return loaded.panel;
}

lfp::EngineConfig engine_config(const lfp::Config& cfg, const CommonArgs& args) {
    lfp::EngineConfig e;
    e.p = cfg.integer("p", 4);
    e.seed = args.seed;
    e.jobs = args.jobs;
    e.test_start = lfp::Date::parse(cfg.str("test_start"));
    e.train.lambda1 = cfg.num("lambda1", 1e-3);
    e.train.lambda2 = cfg.num("lambda2", 1e-2);
    e.train.lambda3 = cfg.num("lambda3", 1e-2);
    e.train.eta = cfg.num("eta", 1e-3);
    e.train.epochs = cfg.integer("epochs", 1000);
    e.train.batch_size = cfg.integer("batch_size", 32);
    e.train.patience = cfg.integer("patience", std::min(100, e.train.epochs));
    e.train.n_seeds = cfg.integer("n_seeds", 15);
    e.train.block_length = cfg.integer("block_length", 60);
    e.backtest.cost_bps = cfg.num("cost_bps", 2.0);
    e.backtest.estimation_window = cfg.integer("estimation_window", 252);
    e.backtest.vol_target = cfg.num("vol_target", 0.05);
    e.backtest.max_leverage = cfg.num("max_leverage", 3.0);
    e.backtest.risk_free = cfg.num("risk_free", 0.0);
    e.backtest.risk_aversion = cfg.num("risk_aversion", 1.0);
    e.nmf_max_iter = cfg.integer("nmf_max_iter", 500);
    return e;
}

lfp::HedgeConfig hedge_config(const lfp::Config& cfg) {
    lfp::HedgeConfig h;
    h.grid.max_ar = cfg.integer("garch_max_ar", 1);
    h.grid.max_ma = cfg.integer("garch_max_ma", 1);
    h.grid.max_garch_sig = cfg.integer("garch_max_sig", 1);
    h.grid.max_garch_eps = cfg.integer("garch_max_eps", 1);
    h.grid.window = cfg.integer("garch_window", 250);
    h.reduction = cfg.num("hedge_reduction", 1.0);
    h.refit_daily = cfg.integer("garch_refit_daily", 1) != 0;
    if (cfg.str("garch_families") == "normal")
        h.grid.families = {lfp::InnovationFamily::Normal};
    return h;
}

int cmd_select(const CommonArgs& args) {
    auto cfg = load_config(args);
    auto panel = load_data(cfg, args);
    auto train_end = lfp::Date::parse(cfg.str("train_end"));
    auto test_start = lfp::Date::parse(cfg.str("test_start"));
    auto plan = lfp::make_splits(panel, train_end, cfg.integer("n_val_months", 6), test_start);

    std::vector<lfp::SelectionCandidate> candidates;
    for (const auto& tok : split_list(cfg.str("candidates", "2,3,4,5")))
        candidates.push_back(lfp::nmf_candidate(std::stoi(tok), cfg.integer("nmf_max_iter", 500)));
    auto report = lfp::select_model(panel, plan, candidates, cfg.integer("n_runs", 10),
                                    cfg.integer("block_length", 60), args.seed,
                                    cfg.num("ari_floor", 0.95));

    fs::path dir = fs::path(args.out_dir) / "select";
    lfp::io::Manifest manifest;
    manifest.set_config(cfg);
    {
        auto out = lfp::io::open_out(dir / "scores.csv");
        out << "candidate,mean_rmse,mean_ari,chosen\n";
        for (size_t i = 0; i < report.scores.size(); ++i)
            out << report.scores[i].name << "," << lfp::io::fmt(report.scores[i].mean_rmse)
                << "," << lfp::io::fmt(report.scores[i].mean_ari) << ","
                << (report.chosen && *report.chosen == i ? 1 : 0) << "\n";
        manifest.add_file("select", dir / "scores.csv");
    }
    if (!report.chosen) {
        std::cerr << "error: no candidate met the stability floor "
                  << report.ari_floor << "\n";
        return kExitNumeric;
    }
    {
        auto out = lfp::io::open_out(dir / "chosen.cfg");
        const std::string& name = report.scores[*report.chosen].name;
        out << "# selected by lfp select\n";
        out << "p = " << name.substr(name.find('=') + 1) << "\n";
        manifest.add_file("select", dir / "chosen.cfg");
    }
    manifest.save(dir / "manifest.json");
    std::cout << "chosen: " << report.scores[*report.chosen].name << "\n";
    return kExitOk;
}

int cmd_backtest(const CommonArgs& args) {
    auto cfg = load_config(args);
    auto panel = load_data(cfg, args);
    auto ecfg = engine_config(cfg, args);
    auto strategies = split_list(cfg.str("strategies", "equal"));
    if (strategies.empty()) throw CLI::ValidationError("strategies", "empty strategy list");
    for (const auto& s : strategies) {
        const auto& names = lfp::strategy_names();
        if (std::find(names.begin(), names.end(), s) == names.end())
            throw CLI::ValidationError("strategies", "unknown strategy: " + s);
    }

    std::vector<lfp::BacktestReport> reports;
    for (const auto& s : strategies)
        reports.push_back(lfp::run_backtest(panel, s, ecfg).unhedged);

    fs::path dir = fs::path(args.out_dir) / "backtest";
    lfp::io::Manifest manifest;
    manifest.set_config(cfg);
    lfp::io::write_metric_table(dir / "metrics.csv", reports);
    manifest.add_file("backtest", dir / "metrics.csv");
    lfp::io::write_nav(dir / "nav.csv", reports);
    manifest.add_file("backtest", dir / "nav.csv");
    for (const auto& r : reports) {
        lfp::io::write_weights(dir / (r.strategy + "_weights.csv"), r, panel.assets());
        manifest.add_file("backtest", dir / (r.strategy + "_weights.csv"));
        lfp::io::write_diagnostics(dir / (r.strategy + "_r2.csv"),
                                   dir / (r.strategy + "_factor_corr.csv"), r, panel.assets());
        for (const auto& line : r.log) std::cerr << line << "\n";
    }
    if (args.plots) {
        lfp::io::write_nav_svg(dir / "nav.svg", reports);
        manifest.add_file("backtest", dir / "nav.svg");
    }
    manifest.save(dir / "manifest.json");
    return kExitOk;
}

int cmd_hedge(const CommonArgs& args) {
    auto cfg = load_config(args);
    fs::path prior = fs::path(args.out_dir) / "backtest" / "metrics.csv";
    if (!fs::exists(prior)) {
        std::cerr << "error: run `lfp backtest` first (missing " << prior.string() << ")\n";
        return kExitData;
    }
    auto panel = load_data(cfg, args);
    auto ecfg = engine_config(cfg, args);
    auto hcfg = hedge_config(cfg);
    std::string strategy = cfg.str("hedge_strategy", "aerp");

    auto run = lfp::run_backtest(panel, strategy, ecfg, &hcfg);

    fs::path dir = fs::path(args.out_dir) / "hedge";
    lfp::io::Manifest manifest;
    manifest.set_config(cfg);
    std::vector<lfp::BacktestReport> pair{run.unhedged, run.hedged};
    lfp::io::write_metric_table(dir / "metrics.csv", pair);
    lfp::io::write_nav(dir / "nav.csv", pair);
    lfp::io::write_signals(dir / "signals.csv", run.unhedged.dates, run.diagnostics);
    lfp::io::write_validation(dir / "validation.csv", run.diagnostics);
    for (const char* f : {"metrics.csv", "nav.csv", "signals.csv", "validation.csv"})
        manifest.add_file("hedge", dir / f);
    if (args.plots) {
        lfp::io::write_nav_svg(dir / "nav.svg", pair);
        manifest.add_file("hedge", dir / "nav.svg");
    }
    manifest.save(dir / "manifest.json");
    return kExitOk;
}

int cmd_report(const CommonArgs& args) {
    fs::path root(args.out_dir);
    fs::path backtest_nav = root / "backtest" / "nav.csv";
    fs::path hedge_signals = root / "hedge" / "signals.csv";
    if (!fs::exists(backtest_nav) && !fs::exists(hedge_signals)) {
        std::cerr << "error: no run artifacts under " << root.string() << "\n";
        return kExitData;
    }
    fs::path dir = root / "report";
    lfp::io::Manifest manifest;
    if (fs::exists(backtest_nav)) {
        fs::create_directories(dir);
        fs::copy_file(backtest_nav, dir / "total_return.csv",
                      fs::copy_options::overwrite_existing);
        manifest.add_file("report", dir / "total_return.csv");
    }
    if (fs::exists(hedge_signals)) {
        // probability overlay: date, factor, prob, class
        std::ifstream in(hedge_signals);
        auto out = lfp::io::open_out(dir / "probability_overlay.csv");
        std::string line;
        std::getline(in, line);
        out << "date,factor,prob,class\n";
        while (std::getline(in, line)) {
            auto cells = lfp::detail::split_csv_line(line);
            if (cells.size() == 5)
                out << cells[0] << "," << cells[1] << "," << cells[2] << "," << cells[4] << "\n";
        }
        manifest.add_file("report", dir / "probability_overlay.csv");
    }
    manifest.save(dir / "manifest.json");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"factor-based long-only portfolio allocation"};
    app.require_subcommand(1);
    CommonArgs args;

    auto* select = app.add_subcommand("select", "factor-count / hyperparameter selection");
    auto* backtest = app.add_subcommand("backtest", "rolling monthly backtest");
    auto* hedge = app.add_subcommand("hedge", "tail-event hedging overlay");
    auto* report = app.add_subcommand("report", "plot-ready data files");
    for (auto* cmd : {select, backtest, hedge, report}) add_common(cmd, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (select->parsed()) return cmd_select(args);
        if (backtest->parsed()) return cmd_backtest(args);
        if (hedge->parsed()) return cmd_hedge(args);
        return cmd_report(args);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::runtime_error& e) {
        std::cerr << "numeric/runtime failure: " << e.what() << "\n";
        return kExitNumeric;
    }
}

// wwmix — command-line front end composing the library modules into the
// preprocess → fit → scan → compare → plot workflows.
//
// Exit codes: 0 success, 2 usage error (unknown flag, missing required flag,
// bad subcommand), 1 runtime error (missing files, malformed data, infeasible
// configuration).  Every run writes a `run.meta` key=value file into the
// output location echoing the full configuration, the seed, and the artifact
// version; the timestamp line is the only output that varies between
// identically configured runs.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "wwmix/bayes_models.hpp"
#include "wwmix/ingest.hpp"
#include "wwmix/io.hpp"
#include "wwmix/lineage_defs.hpp"
#include "wwmix/nmf.hpp"
#include "wwmix/provoc.hpp"
#include "wwmix/report.hpp"
#include "wwmix/synth.hpp"

using namespace wwmix;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string timestamp_utc() {
    const std::time_t tt = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_run_meta(const fs::path& dir, const std::string& subcommand, io::MetaMap config) {
    fs::create_directories(dir);
    config["artifact_version"] = kVersion;
    config["subcommand"] = subcommand;
    config["timestamp"] = timestamp_utc();
    io::write_file(dir / "run.meta", io::meta_string(config));
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

/// "4..13" (inclusive range) or "2,3,5" (explicit list).
std::vector<std::size_t> parse_ranks(const std::string& text) {
    std::vector<std::size_t> out;
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
        const long lo = io::parse_long(text.substr(0, dots), "--ranks");
        const long hi = io::parse_long(text.substr(dots + 2), "--ranks");
        detail::require(lo >= 1 && hi >= lo, "--ranks: need 1 <= lo <= hi in '" + text + "'");
        for (long r = lo; r <= hi; ++r) out.push_back(static_cast<std::size_t>(r));
    } else {
        for (const auto& tok : io::split(text, ',')) {
            const long r = io::parse_long(tok, "--ranks");
            detail::require(r >= 1, "--ranks: ranks must be >= 1 in '" + text + "'");
            out.push_back(static_cast<std::size_t>(r));
        }
    }
    return out;
}

std::vector<std::string> date_labels(const MutationPanel& panel) {
    std::vector<std::string> out;
    for (const auto& d : panel.dates()) out.push_back(d.iso());
    return out;
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

struct PreprocessFlags {
    std::string input, out, site;
    FilterConfig cfg;
};

int run_preprocess(const PreprocessFlags& f) {
    FilterConfig cfg = f.cfg;
    cfg.site = f.site;
    cfg.validate();
    const auto rows = read_mutation_tsv(f.input);
    const MutationPanel panel = preprocess(rows, cfg);
    io::MetaMap meta{{"input", f.input},
                     {"min_depth", std::to_string(cfg.min_depth)},
                     {"dynamics_d", std::to_string(cfg.dynamics_d)},
                     {"low_freq", io::format_double(cfg.low_freq)},
                     {"high_freq", io::format_double(cfg.high_freq)},
                     {"zero_depth_replacement", std::to_string(cfg.zero_depth_replacement)}};
    io::write_panel(panel, f.out, meta);
    write_run_meta(f.out, "preprocess", meta);
    return 0;
}

// ---------------------------------------------------------------------------
// fit-provoc
// ---------------------------------------------------------------------------

struct ProvocFlags {
    std::string panel, barcodes, lineages, out, constraint = "le1";
    ProvocOptions opts;
};

ConstraintKind parse_constraint(const std::string& name) {
    if (name == "le1") return ConstraintKind::SumLEOne;
    if (name == "eq1") return ConstraintKind::SumEqOne;
    throw ConfigError("--constraint must be 'le1' or 'eq1', got '" + name + "'");
}

int run_fit_provoc(const ProvocFlags& f) {
    const MutationPanel panel = io::read_panel(f.panel);
    ReferenceCatalog catalog = load_barcode_csv(f.barcodes, stem_of(f.barcodes));
    const auto wanted = io::split(f.lineages, ',');
    catalog = catalog.subset(wanted);
    std::vector<std::string> universe;
    for (const auto& m : catalog.vocabulary()) universe.push_back(m);
    const auto defs = LineageDefinitionSet::from_sets(catalog.definitions, universe);

    ProvocOptions opts = f.opts;
    opts.constraint = parse_constraint(f.constraint);
    const ProvocSeriesFit fit = fit_series(panel, defs, opts);

    fs::create_directories(f.out);
    io::write_file(f.out + "/abundance.csv",
                   io::matrix_csv("lineage", fit.abundance.lineage_names(), date_labels(panel),
                                  fit.abundance.values()));
    nlohmann::json doc;
    doc["model"] = "provoc";
    doc["constraint"] = f.constraint;
    doc["lineages"] = fit.abundance.lineage_names();
    doc["dropped_mutations"] = fit.dropped_mutations;
    doc["samples"] = nlohmann::json::array();
    for (std::size_t t = 0; t < panel.n_dates(); ++t) {
        nlohmann::json s;
        s["date"] = panel.dates()[t].iso();
        s["loglik"] = fit.fits[t].loglik;
        s["converged"] = fit.fits[t].converged;
        s["iterations"] = fit.fits[t].iterations;
        s["warnings"] = fit.fits[t].warnings;
        nlohmann::json rho;
        for (std::size_t j = 0; j < defs.n_lineages(); ++j)
            rho[fit.abundance.lineage_names()[j]] = fit.fits[t].rho[j];
        s["rho"] = rho;
        doc["samples"].push_back(s);
    }
    io::write_file(f.out + "/fits.json", doc.dump(2) + "\n");
    write_run_meta(f.out, "fit-provoc",
                   {{"panel", f.panel},
                    {"barcodes", f.barcodes},
                    {"lineages", f.lineages},
                    {"constraint", f.constraint},
                    {"multistarts", std::to_string(opts.multistarts)},
                    {"seed", std::to_string(opts.seed)}});
    return 0;
}

// ---------------------------------------------------------------------------
// fit-nmf / rank-scan
// ---------------------------------------------------------------------------

struct NmfFlags {
    std::string panel, out;
    std::size_t rank = 0;
    double rescale_q = 0.99;
    std::uint64_t seed = 1;
    int max_iter = 2000;
    double tol = 1e-9;
};

int run_fit_nmf(const NmfFlags& f) {
    const MutationPanel panel = io::read_panel(f.panel);
    NmfResult res = fit_nmf(frequency_matrix(panel), f.rank, f.seed, f.max_iter, f.tol);
    res = percentile_rescale(res, f.rescale_q);
    std::vector<std::string> lineages;
    for (std::size_t j = 1; j <= f.rank; ++j) lineages.push_back(std::to_string(j));
    fs::create_directories(f.out);
    io::write_file(f.out + "/Z.csv",
                   io::matrix_csv("mutation", panel.mutations(), lineages, res.z));
    io::write_file(f.out + "/G.csv",
                   io::matrix_csv("lineage", lineages, date_labels(panel), res.g));
    io::write_file(f.out + "/fit_stats.txt",
                   io::meta_string({{"residual_sse", io::format_double(res.residual_sse)},
                                    {"n_iter", std::to_string(res.n_iter)}}));
    write_run_meta(f.out, "fit-nmf",
                   {{"panel", f.panel},
                    {"rank", std::to_string(f.rank)},
                    {"rescale_q", io::format_double(f.rescale_q)},
                    {"seed", std::to_string(f.seed)},
                    {"max_iter", std::to_string(f.max_iter)},
                    {"tol", io::format_double(f.tol)}});
    return 0;
}

struct RankScanFlags {
    std::string panel, ranks, out;
    int runs = 30;
    std::uint64_t seed = 1;
    int max_iter = 2000;
    double tol = 1e-9;
};

int run_rank_scan(const RankScanFlags& f) {
    const MutationPanel panel = io::read_panel(f.panel);
    const auto ranks = parse_ranks(f.ranks);
    const auto rows = rank_scan(frequency_matrix(panel), ranks, f.runs, f.seed, f.max_iter, f.tol);
    const std::vector<std::string> cols{"cophenetic", "dispersion",      "evar",
                                        "rss",        "silhouette_basis", "silhouette_coef",
                                        "n_runs"};
    std::vector<std::string> row_labels;
    MatrixD table(rows.size(), cols.size(), 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        row_labels.push_back(std::to_string(rows[i].rank));
        table(i, 0) = rows[i].cophenetic;
        table(i, 1) = rows[i].dispersion;
        table(i, 2) = rows[i].evar;
        table(i, 3) = rows[i].rss;
        table(i, 4) = rows[i].silhouette_basis;
        table(i, 5) = rows[i].silhouette_coef;
        table(i, 6) = static_cast<double>(rows[i].n_runs);
    }
    fs::create_directories(f.out);
    io::write_file(f.out + "/rank_scores.csv", io::matrix_csv("rank", row_labels, cols, table));
    write_run_meta(f.out, "rank-scan",
                   {{"panel", f.panel},
                    {"ranks", f.ranks},
                    {"runs", std::to_string(f.runs)},
                    {"seed", std::to_string(f.seed)}});
    return 0;
}

// ---------------------------------------------------------------------------
// Bayesian fits and the WAIC scan
// ---------------------------------------------------------------------------

struct BayesFlags {
    std::string panel, out;
    std::size_t rank = 0;
    std::size_t basis_m = 10;
    int basis_degree = 3;
    int chains = 4;
    int iters = 20000;
    int burnin = 10000;
    int thin = 10;
    std::uint64_t seed = 1;
    bool no_smart_init = false;
    bool progress = false;

    SamplerConfig sampler() const {
        SamplerConfig cfg;
        cfg.n_chains = chains;
        cfg.n_iter = iters;
        cfg.n_burnin = burnin;
        cfg.thin = thin;
        cfg.seed = seed;
        cfg.progress = progress;
        return cfg;
    }
    BayesOptions options() const {
        BayesOptions opts;
        opts.smart_init = !no_smart_init;
        return opts;
    }
    io::MetaMap meta(ModelKind kind) const {
        io::MetaMap m{{"panel", panel},        {"model", to_string(kind)},
                      {"rank", std::to_string(rank)}, {"chains", std::to_string(chains)},
                      {"iters", std::to_string(iters)}, {"burnin", std::to_string(burnin)},
                      {"thin", std::to_string(thin)},  {"seed", std::to_string(seed)},
                      {"smart_init", no_smart_init ? "0" : "1"}};
        if (kind != ModelKind::Bnmf) {
            m["basis_m"] = std::to_string(basis_m);
            m["basis_degree"] = std::to_string(basis_degree);
        }
        return m;
    }
};

BayesFit run_bayes_model(ModelKind kind, const MutationPanel& panel, std::size_t rank,
                         const BayesFlags& f) {
    const SamplerConfig cfg = f.sampler();
    const BayesOptions opts = f.options();
    switch (kind) {
        case ModelKind::Bnmf: return bnmf_fit(panel, rank, cfg, opts);
        case ModelKind::TbnmfLe1:
            return tbnmf_le1_fit(panel, rank, build_basis(panel.dates(), f.basis_m, f.basis_degree),
                                 cfg, opts);
        case ModelKind::TbnmfEq1:
            return tbnmf_eq1_fit(panel, rank, build_basis(panel.dates(), f.basis_m, f.basis_degree),
                                 cfg, opts);
        default: throw ConfigError("not a Bayesian model");
    }
}

void write_bayes_outputs(const BayesFit& fit, const MutationPanel& panel, const fs::path& out) {
    fs::create_directories(out);
    io::write_file(out / "Z_mode.csv", definition_table(fit.report.point_definitions));
    const auto& abundance = fit.report.point_abundance;
    io::write_file(out / "G_mean.csv",
                   io::matrix_csv("lineage", abundance.lineage_names(), date_labels(panel),
                                  abundance.values()));
    const WaicResult w = waic(fit.draws.loglik_matrix());
    io::write_file(out / "waic.txt",
                   io::meta_string({{"waic", io::format_double(w.waic)},
                                    {"lppd", io::format_double(w.lppd)},
                                    {"p_waic", io::format_double(w.p_waic)}}));

    // Draw archive: one row per stored draw, flattened column-labelled cells.
    const fs::path draws_dir = out / "draws";
    fs::create_directories(draws_dir);
    const std::size_t s_total = fit.draws.size();
    const std::size_t r = fit.draws.n_lineages(), t = fit.draws.n_dates(),
                      n = fit.draws.n_mutations();
    std::vector<std::string> draw_labels(s_total);
    for (std::size_t s = 0; s < s_total; ++s) draw_labels[s] = std::to_string(s);

    MatrixD chains(s_total, 1, 0.0);
    for (std::size_t s = 0; s < s_total; ++s)
        chains(s, 0) = static_cast<double>(fit.draws[s].chain);
    io::write_file(draws_dir / "chains.csv",
                   io::matrix_csv("draw", draw_labels, {"chain"}, chains));

    std::vector<std::string> gcols;
    for (std::size_t j = 0; j < r; ++j)
        for (std::size_t c = 0; c < t; ++c)
            gcols.push_back(abundance.lineage_names()[j] + "@" + panel.dates()[c].iso());
    MatrixD gflat(s_total, r * t, 0.0);
    for (std::size_t s = 0; s < s_total; ++s)
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t c = 0; c < t; ++c) gflat(s, j * t + c) = fit.draws[s].g(j, c);
    io::write_file(draws_dir / "g_draws.csv",
                   io::matrix_csv("draw", draw_labels, gcols, gflat));

    std::vector<std::string> zcols;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < r; ++j)
            zcols.push_back(panel.mutations()[i] + "@" + abundance.lineage_names()[j]);
    Matrix<std::uint8_t> zflat(s_total, n * r, 0);
    for (std::size_t s = 0; s < s_total; ++s)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < r; ++j) zflat(s, i * r + j) = fit.draws[s].z(i, j);
    io::write_file(draws_dir / "z_draws.csv",
                   io::matrix_csv("draw", draw_labels, zcols, zflat, [](std::uint8_t v) {
                       return std::to_string(static_cast<int>(v));
                   }));
}

int run_fit_bayes(ModelKind kind, const BayesFlags& f) {
    const MutationPanel panel = io::read_panel(f.panel);
    const BayesFit fit = run_bayes_model(kind, panel, f.rank, f);
    write_bayes_outputs(fit, panel, f.out);
    const char* name = kind == ModelKind::Bnmf        ? "fit-bnmf"
                       : kind == ModelKind::TbnmfLe1 ? "fit-tbnmf-le1"
                                                      : "fit-tbnmf-eq1";
    write_run_meta(f.out, name, f.meta(kind));
    return 0;
}

struct WaicScanFlags {
    BayesFlags bayes;
    std::string model, ranks;
};

ModelKind parse_model(const std::string& name) {
    if (name == "bnmf") return ModelKind::Bnmf;
    if (name == "tbnmf-le1") return ModelKind::TbnmfLe1;
    if (name == "tbnmf-eq1") return ModelKind::TbnmfEq1;
    throw ConfigError("--model must be bnmf, tbnmf-le1, or tbnmf-eq1, got '" + name + "'");
}

/// Smallest rank r with WAIC(r) < WAIC(r+1) and WAIC(r) <= every earlier
/// WAIC; if the series never turns upward, the global minimizer (ties to the
/// smaller rank) wins.
std::size_t select_rank_index(const std::vector<double>& waics) {
    double best_so_far = waics[0];
    for (std::size_t i = 0; i + 1 < waics.size(); ++i) {
        if (waics[i] < waics[i + 1] && waics[i] <= best_so_far) return i;
        best_so_far = std::min(best_so_far, waics[i]);
    }
    std::size_t arg = 0;
    for (std::size_t i = 1; i < waics.size(); ++i)
        if (waics[i] < waics[arg]) arg = i;
    return arg;
}

int run_waic_scan(const WaicScanFlags& f) {
    const ModelKind kind = parse_model(f.model);
    const MutationPanel panel = io::read_panel(f.bayes.panel);
    const auto ranks = parse_ranks(f.ranks);
    std::vector<double> waics, lppds, pwaics;
    for (const std::size_t rank : ranks) {
        const BayesFit fit = run_bayes_model(kind, panel, rank, f.bayes);
        write_bayes_outputs(fit, panel, fs::path(f.bayes.out) / ("rank_" + std::to_string(rank)));
        const WaicResult w = waic(fit.draws.loglik_matrix());
        waics.push_back(w.waic);
        lppds.push_back(w.lppd);
        pwaics.push_back(w.p_waic);
    }
    std::vector<std::string> row_labels;
    MatrixD table(ranks.size(), 3, 0.0);
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        row_labels.push_back(std::to_string(ranks[i]));
        table(i, 0) = waics[i];
        table(i, 1) = lppds[i];
        table(i, 2) = pwaics[i];
    }
    fs::create_directories(f.bayes.out);
    io::write_file(fs::path(f.bayes.out) / "waic_scan.csv",
                   io::matrix_csv("rank", row_labels, {"waic", "lppd", "p_waic"}, table));
    const std::size_t pick = select_rank_index(waics);
    io::write_file(fs::path(f.bayes.out) / "selected.txt",
                   io::meta_string({{"selected_rank", std::to_string(ranks[pick])},
                                    {"selected_waic", io::format_double(waics[pick])},
                                    {"rule", "pre-increase-minimizer"}}));
    io::MetaMap meta = f.bayes.meta(kind);
    meta.erase("rank");
    meta["ranks"] = f.ranks;
    meta["selected_rank"] = std::to_string(ranks[pick]);
    write_run_meta(f.bayes.out, "waic-scan", meta);
    return 0;
}

// ---------------------------------------------------------------------------
// compare / plot / simulate
// ---------------------------------------------------------------------------

struct CompareFlags {
    std::vector<std::string> inputs;
    std::string barcodes, lineages, reference, out;
};

int run_compare(const CompareFlags& f) {
    ReferenceCatalog catalog;
    bool have_catalog = false;
    if (!f.barcodes.empty()) {
        catalog = load_barcode_csv(f.barcodes, stem_of(f.barcodes));
        if (!f.lineages.empty()) catalog = catalog.subset(io::split(f.lineages, ','));
        have_catalog = true;
    }
    std::set<std::string> reference_set;
    if (!f.reference.empty()) {
        detail::require(have_catalog, "--reference needs --barcodes to resolve the lineage name");
        const auto it = catalog.definitions.find(f.reference);
        detail::require(it != catalog.definitions.end(),
                        "--reference lineage '" + f.reference + "' not found in the barcodes");
        reference_set = it->second;
    }

    std::vector<DefinitionView> views;
    std::map<std::string, int> label_counts;
    for (const auto& path : f.inputs) {
        LineageDefinitionSet defs = parse_definition_table(io::read_file(path));
        if (!reference_set.empty())
            defs = defs.reorder(align_to_reference(defs, reference_set));
        std::string label = stem_of(path);
        const int k = ++label_counts[label];
        if (k > 1) label += "_" + std::to_string(k);
        views.push_back(make_view(defs, label));
    }
    if (have_catalog) views.push_back(make_view(catalog));
    const ComparisonGrid grid = comparison_grid(views);
    write_comparison_grid(grid, f.out);

    io::MetaMap meta{{"reference", f.reference}, {"barcodes", f.barcodes}};
    for (std::size_t i = 0; i < f.inputs.size(); ++i)
        meta["input_" + std::to_string(i)] = f.inputs[i];
    write_run_meta(f.out, "compare", meta);
    return 0;
}

struct PlotFlags {
    std::vector<std::string> abundance;
    std::string out;
};

int run_plot(const PlotFlags& f) {
    std::vector<AbundanceSeries> series;
    std::vector<std::string> labels;
    for (const auto& path : f.abundance) {
        const io::LabeledMatrix lm = io::read_matrix_csv(path);
        std::vector<Date> dates;
        for (const auto& c : lm.col_labels) dates.push_back(Date::parse(c));
        bool all_one = true;
        for (std::size_t t = 0; t < lm.values.cols() && all_one; ++t) {
            double sum = 0.0;
            for (std::size_t j = 0; j < lm.values.rows(); ++j) sum += lm.values(j, t);
            all_one = std::abs(sum - 1.0) <= kProportionTol;
        }
        series.emplace_back(lm.values,
                            all_one ? ConstraintKind::SumEqOne : ConstraintKind::SumLEOne,
                            std::move(dates), lm.row_labels);
        labels.push_back(stem_of(path));
    }
    io::write_file(f.out, abundance_plot(series, labels));
    io::MetaMap meta{{"out", f.out}};
    for (std::size_t i = 0; i < f.abundance.size(); ++i)
        meta["abundance_" + std::to_string(i)] = f.abundance[i];
    const fs::path parent = fs::path(f.out).parent_path();
    write_run_meta(parent.empty() ? fs::path{"."} : parent, "plot", meta);
    return 0;
}

struct SimulateFlags {
    std::string spec, out;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

io::MetaMap scenario_meta(const ScenarioSpec& s) {
    io::MetaMap m{{"n_mutations", std::to_string(s.n_mutations)},
                  {"n_dates", std::to_string(s.n_dates)},
                  {"r_true", std::to_string(s.r_true)},
                  {"overlap", io::format_double(s.overlap)},
                  {"wave_shape", to_string(s.wave_shape)},
                  {"residual_mass", io::format_double(s.residual_mass)},
                  {"seed", std::to_string(s.seed)}};
    if (s.depth_law.kind == DepthLaw::Kind::Fixed) {
        m["depth"] = std::to_string(s.depth_law.fixed);
    } else {
        m["depth_lo"] = std::to_string(s.depth_law.lo);
        m["depth_hi"] = std::to_string(s.depth_law.hi);
    }
    return m;
}

int run_simulate(const SimulateFlags& f) {
    ScenarioSpec spec;
    if (!f.spec.empty()) spec = parse_scenario(io::read_meta(f.spec));
    if (f.seed_given) spec.seed = f.seed;
    spec.validate();
    const SyntheticData data = generate(spec);
    const io::MetaMap meta = scenario_meta(spec);
    io::write_panel(data.panel, f.out, meta);
    io::write_file(fs::path(f.out) / "Z_true.csv",
                   io::matrix_csv("mutation", data.panel.mutations(), data.lineage_names,
                                  data.z_true, [](std::uint8_t v) {
                                      return std::to_string(static_cast<int>(v));
                                  }));
    io::write_file(fs::path(f.out) / "G_true.csv",
                   io::matrix_csv("lineage", data.lineage_names, date_labels(data.panel),
                                  data.g_true));
    write_run_meta(f.out, "simulate", meta);
    return 0;
}

void add_sampler_flags(CLI::App* sub, BayesFlags& f) {
    sub->add_option("--chains", f.chains, "Number of chains")->capture_default_str();
    sub->add_option("--iters", f.iters, "Iterations per chain")->capture_default_str();
    sub->add_option("--burnin", f.burnin, "Burn-in iterations")->capture_default_str();
    sub->add_option("--thin", f.thin, "Post-burn-in thinning stride")->capture_default_str();
    sub->add_option("--seed", f.seed, "Base RNG seed")->capture_default_str();
    sub->add_flag("--no-smart-init", f.no_smart_init,
                  "Start chains from prior draws instead of an NMF point estimate");
    sub->add_flag("--progress", f.progress, "Progress lines on stderr");
}

void add_basis_flags(CLI::App* sub, BayesFlags& f) {
    sub->add_option("--basis-m", f.basis_m, "Number of B-spline basis functions")
        ->capture_default_str();
    sub->add_option("--basis-degree", f.basis_degree, "B-spline degree")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wwmix: lineage definitions and abundances from wastewater mutation panels"};
    app.require_subcommand(1);

    PreprocessFlags pre;
    auto* sub_pre = app.add_subcommand("preprocess",
                                       "Filter a raw mutation TSV into a panel directory");
    sub_pre->add_option("--input", pre.input, "Raw TSV (sample_id date mutation position count coverage)")
        ->required();
    sub_pre->add_option("--out", pre.out, "Output panel directory")->required();
    sub_pre->add_option("--min-depth", pre.cfg.min_depth, "Depth for a date to count")
        ->capture_default_str();
    sub_pre->add_option("--dynamics-d", pre.cfg.dynamics_d, "Dates required per condition")
        ->capture_default_str();
    sub_pre->add_option("--low-freq", pre.cfg.low_freq, "Presence threshold")
        ->capture_default_str();
    sub_pre->add_option("--high-freq", pre.cfg.high_freq, "Fixation threshold (strict)")
        ->capture_default_str();
    sub_pre->add_option("--zero-depth-replacement", pre.cfg.zero_depth_replacement,
                        "Depth substituted for missing cells")
        ->capture_default_str();
    sub_pre->add_option("--site", pre.site, "Free-form site label");

    ProvocFlags pv;
    auto* sub_pv = app.add_subcommand("fit-provoc",
                                      "Per-date constrained binomial GLM with fixed definitions");
    sub_pv->add_option("--panel", pv.panel, "Panel directory")->required();
    sub_pv->add_option("--barcodes", pv.barcodes, "Barcode CSV of reference definitions")
        ->required();
    sub_pv->add_option("--lineages", pv.lineages, "Comma-separated lineage names")->required();
    sub_pv->add_option("--out", pv.out, "Output directory")->required();
    sub_pv->add_option("--constraint", pv.constraint, "le1 (sum<=1) or eq1 (sum=1)")
        ->capture_default_str();
    sub_pv->add_option("--multistarts", pv.opts.multistarts, "Optimizer restarts")
        ->capture_default_str();
    sub_pv->add_option("--seed", pv.opts.seed, "RNG seed for starts")->capture_default_str();

    NmfFlags nf;
    auto* sub_nf = app.add_subcommand("fit-nmf", "Classic NMF of the frequency matrix");
    sub_nf->add_option("--panel", nf.panel, "Panel directory")->required();
    sub_nf->add_option("--rank", nf.rank, "Number of lineages")->required();
    sub_nf->add_option("--out", nf.out, "Output directory")->required();
    sub_nf->add_option("--rescale-q", nf.rescale_q, "Percentile for post-scaling")
        ->capture_default_str();
    sub_nf->add_option("--seed", nf.seed, "RNG seed")->capture_default_str();
    sub_nf->add_option("--max-iter", nf.max_iter, "Update iterations")->capture_default_str();

    RankScanFlags rs;
    auto* sub_rs = app.add_subcommand("rank-scan", "NMF stability diagnostics over ranks");
    sub_rs->add_option("--panel", rs.panel, "Panel directory")->required();
    sub_rs->add_option("--ranks", rs.ranks, "Range a..b or comma list")->required();
    sub_rs->add_option("--out", rs.out, "Output directory")->required();
    sub_rs->add_option("--runs", rs.runs, "NMF runs per rank")->capture_default_str();
    sub_rs->add_option("--seed", rs.seed, "Base RNG seed")->capture_default_str();

    BayesFlags bn, tl, te;
    auto* sub_bn = app.add_subcommand("fit-bnmf", "Bayesian binomial NMF");
    sub_bn->add_option("--panel", bn.panel, "Panel directory")->required();
    sub_bn->add_option("--rank", bn.rank, "Number of lineages")->required();
    sub_bn->add_option("--out", bn.out, "Output directory")->required();
    add_sampler_flags(sub_bn, bn);

    auto* sub_tl = app.add_subcommand("fit-tbnmf-le1",
                                      "Temporal Bayesian NMF, column sums <= 1");
    sub_tl->add_option("--panel", tl.panel, "Panel directory")->required();
    sub_tl->add_option("--rank", tl.rank, "Number of lineages")->required();
    sub_tl->add_option("--out", tl.out, "Output directory")->required();
    add_basis_flags(sub_tl, tl);
    add_sampler_flags(sub_tl, tl);

    auto* sub_te = app.add_subcommand("fit-tbnmf-eq1",
                                      "Temporal Bayesian NMF, column sums = 1");
    sub_te->add_option("--panel", te.panel, "Panel directory")->required();
    sub_te->add_option("--rank", te.rank, "Number of lineages")->required();
    sub_te->add_option("--out", te.out, "Output directory")->required();
    add_basis_flags(sub_te, te);
    add_sampler_flags(sub_te, te);

    WaicScanFlags ws;
    auto* sub_ws = app.add_subcommand("waic-scan",
                                      "Fit one Bayesian model per rank and pick by WAIC");
    sub_ws->add_option("--panel", ws.bayes.panel, "Panel directory")->required();
    sub_ws->add_option("--model", ws.model, "bnmf, tbnmf-le1, or tbnmf-eq1")->required();
    sub_ws->add_option("--ranks", ws.ranks, "Range a..b or comma list")->required();
    sub_ws->add_option("--out", ws.bayes.out, "Output directory")->required();
    add_basis_flags(sub_ws, ws.bayes);
    add_sampler_flags(sub_ws, ws.bayes);

    CompareFlags cp;
    auto* sub_cp = app.add_subcommand("compare", "Pairwise similarity grid over definition sets");
    sub_cp->add_option("--inputs", cp.inputs, "Definition-table CSVs")
        ->required()
        ->expected(-1);
    sub_cp->add_option("--out", cp.out, "Output directory")->required();
    sub_cp->add_option("--barcodes", cp.barcodes, "Barcode CSV joined as an extra source");
    sub_cp->add_option("--lineages", cp.lineages, "Subset of barcode lineages (comma list)");
    sub_cp->add_option("--reference", cp.reference,
                       "Barcode lineage whose mutation set orders every input's columns");

    PlotFlags pl;
    auto* sub_pl = app.add_subcommand("plot", "Render abundance series to SVG");
    sub_pl->add_option("--abundance", pl.abundance, "Abundance CSVs (lineages x dates)")
        ->required()
        ->expected(-1);
    sub_pl->add_option("--out", pl.out, "Output SVG path")->required();

    SimulateFlags sim;
    auto* sub_sim = app.add_subcommand("simulate", "Generate a synthetic ground-truth panel");
    sub_sim->add_option("--out", sim.out, "Output directory")->required();
    sub_sim->add_option("--spec", sim.spec, "Scenario key=value file (defaults when omitted)");
    auto* seed_opt = sub_sim->add_option("--seed", sim.seed, "Override the scenario seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    sim.seed_given = seed_opt->count() > 0;

    try {
        if (sub_pre->parsed()) return run_preprocess(pre);
        if (sub_pv->parsed()) return run_fit_provoc(pv);
        if (sub_nf->parsed()) return run_fit_nmf(nf);
        if (sub_rs->parsed()) return run_rank_scan(rs);
        if (sub_bn->parsed()) return run_fit_bayes(ModelKind::Bnmf, bn);
        if (sub_tl->parsed()) return run_fit_bayes(ModelKind::TbnmfLe1, tl);
        if (sub_te->parsed()) return run_fit_bayes(ModelKind::TbnmfEq1, te);
        if (sub_ws->parsed()) return run_waic_scan(ws);
        if (sub_cp->parsed()) return run_compare(cp);
        if (sub_pl->parsed()) return run_plot(pl);
        if (sub_sim->parsed()) return run_simulate(sim);
        std::fprintf(stderr, "wwmix: no subcommand\n");
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "wwmix: error: %s\n", e.what());
        return 1;
    }
}

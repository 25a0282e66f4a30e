// lerkit: batch analysis tool for notch-port superconducting resonator data.
//
// Subcommands: simulate, fit, mbfit, tlsfit, nlfit, compare, report.
// Exit codes: 0 success, 1 usage, 2 parse/input, 3 fit degeneracy.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lerkit/lerkit.hpp"

namespace fs = std::filesystem;
using namespace lerkit;

namespace {

constexpr const char* tool_version = "lerkit 0.1.0";

void diag(const std::string& level, const std::string& type, const std::string& message) {
    Json j = Json::object();
    j.set("level", level);
    j.set("type", type);
    j.set("message", message);
    std::string line = j.dump(0);
    for (auto& c : line)
        if (c == '\n') c = ' ';
    std::cerr << line << "\n";
}

struct CommonOpts {
    std::string manifest_path;
    std::string config_path;
    std::string out_dir;
    int jobs = 1;
};

Config load_config(const CommonOpts& o) {
    Config cfg;
    if (!o.config_path.empty()) cfg = Config::parse_file(o.config_path);
    return cfg;
}

void ensure_out(const CommonOpts& o) {
    if (o.out_dir.empty()) throw parse_error("--out directory is required");
    fs::create_directories(o.out_dir);
    fs::create_directories(fs::path(o.out_dir) / "plot");
}

Json config_echo(const Config& cfg) {
    Json j = Json::object();
    for (const auto& [k, v] : cfg.values()) j.set(k, v);
    return j;
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateOpts {
    std::string preset = "paper-chip";
    std::string material = "both";
    std::string sweep = "none";
    std::string design = "";
    std::uint64_t seed = 0;
    bool seed_set = false;
    double power_dBm = -96.0;  // at chip
    std::size_t points = 2001;
    double span_linewidths = 10.0;
    std::size_t chip_points = 200001;
    double noise_sigma = 1e-3;
    double attenuation_dB = 60.0;
};

struct PlannedTrace {
    const SynthResonator* res;
    std::string material;
    double temperature_K;
    double power_dBm;  // at chip
    SweepDirection dir;
    std::string filename;
    std::string kind;  // single | chip
};

int cmd_simulate(const CommonOpts& common, const SimulateOpts& so) {
    if (!so.seed_set) throw parse_error("--seed is mandatory for simulate");
    ensure_out(common);
    const Config cfg = load_config(common);
    const double noise_sigma = cfg.get_double("simulate.noise_sigma", so.noise_sigma);
    const double atten = cfg.get_double("simulate.attenuation_dB", so.attenuation_dB);
    const std::size_t points = static_cast<std::size_t>(cfg.get_int("simulate.points", so.points));
    const double span_lw = cfg.get_double("simulate.span_linewidths", so.span_linewidths);

    std::vector<std::string> materials;
    if (so.material == "both") {
        materials = {"Nb", "Nb/Au"};
    } else {
        materials = {so.material};
    }

    std::vector<ChipSpec> chips;
    for (const auto& m : materials) {
        ChipSpec chip = make_paper_chip(m, so.seed);
        chip.noise.additive_sigma = noise_sigma;
        chip.attenuation_dB = atten;
        chips.push_back(std::move(chip));
    }

    const fs::path out(common.out_dir);
    fs::create_directories(out / "traces");

    // Plan every trace first so RNG streams key off a stable global index.
    std::vector<PlannedTrace> plan;
    std::vector<std::pair<const ChipSpec*, std::string>> chip_traces;
    for (const auto& chip : chips) {
        const std::string mtag = sanitize(chip.material_tag);
        if (so.sweep == "none") {
            for (const auto& r : chip.resonators)
                plan.push_back({&r, chip.material_tag, chip.t_ref_K, so.power_dBm,
                                SweepDirection::up, mtag + "_" + r.label + "_base.csv", "single"});
            chip_traces.emplace_back(&chip, mtag + "_chip.csv");
        } else if (so.sweep == "temperature") {
            const std::string design = so.design.empty() ? "LER8" : so.design;
            for (const auto& r : chip.resonators) {
                if (r.label != design) continue;
                for (int i = 0; i < 30; ++i) {
                    const double T = 0.015 + (4.0 - 0.015) * i / 29.0;
                    char name[128];
                    std::snprintf(name, sizeof(name), "%s_%s_T%02d.csv", mtag.c_str(),
                                  r.label.c_str(), i);
                    plan.push_back({&r, chip.material_tag, T, -100.0, SweepDirection::up, name,
                                    "single"});
                }
            }
        } else if (so.sweep == "power") {
            const std::string design = so.design.empty() ? "LER8" : so.design;
            for (const auto& r : chip.resonators) {
                if (r.label != design) continue;
                for (int p = -120; p <= -40; p += 2) {
                    char name[128];
                    std::snprintf(name, sizeof(name), "%s_%s_P%+04d.csv", mtag.c_str(),
                                  r.label.c_str(), p);
                    plan.push_back({&r, chip.material_tag, chip.t_ref_K, static_cast<double>(p),
                                    SweepDirection::up, name, "single"});
                }
            }
        } else if (so.sweep == "nonlinear") {
            const std::string design = so.design.empty() ? "LER1" : so.design;
            for (const auto& r : chip.resonators) {
                if (r.label != design) continue;
                plan.push_back({&r, chip.material_tag, chip.t_ref_K, -80.0, SweepDirection::up,
                                mtag + "_" + r.label + "_ref.csv", "single"});
                for (int p = -52; p <= -44; p += 2) {
                    char name[128];
                    std::snprintf(name, sizeof(name), "%s_%s_P%+04d.csv", mtag.c_str(),
                                  r.label.c_str(), p);
                    plan.push_back({&r, chip.material_tag, chip.t_ref_K, static_cast<double>(p),
                                    SweepDirection::up, name, "single"});
                }
            }
        } else {
            throw parse_error("unknown --sweep mode " + so.sweep);
        }
    }
    if (plan.empty()) throw parse_error("simulation plan is empty; check --design");

    std::vector<ComplexTrace> traces(plan.size());
    parallel_for(plan.size(), common.jobs, [&](std::size_t i) {
        const auto& pt = plan[i];
        Rng rng(stream_seed(so.seed, i));
        NoiseSpec noise;
        noise.additive_sigma = noise_sigma;
        traces[i] = simulate_trace_auto(*pt.res, pt.temperature_K, pt.power_dBm, pt.dir, noise,
                                        rng, span_lw, points);
    });
    for (std::size_t i = 0; i < plan.size(); ++i)
        write_trace_csv((out / "traces" / plan[i].filename).string(), traces[i]);

    // Chip overview traces use stream indices after the singles.
    std::vector<ComplexTrace> chip_out(chip_traces.size());
    parallel_for(chip_traces.size(), common.jobs, [&](std::size_t i) {
        const auto& [chip, name] = chip_traces[i];
        Rng rng(stream_seed(so.seed, plan.size() + i));
        double f_lo = 1e300, f_hi = 0.0;
        for (const auto& r : chip->resonators) {
            f_lo = std::min(f_lo, r.f_r0);
            f_hi = std::max(f_hi, r.f_r0);
        }
        const double margin = 0.02 * (f_hi - f_lo);
        const auto grid = make_grid(0.5 * (f_lo + f_hi), (f_hi - f_lo) + 2 * margin,
                                    static_cast<std::size_t>(cfg.get_int("simulate.chip_points",
                                                                         so.chip_points)));
        chip_out[i] = simulate_chip(*chip, grid, chip->t_ref_K, so.power_dBm, rng);
    });
    for (std::size_t i = 0; i < chip_traces.size(); ++i)
        write_trace_csv((out / "traces" / chip_traces[i].second).string(), chip_out[i]);

    // Manifest.
    Json m = Json::object();
    m.set("dataset", so.preset + "-seed" + std::to_string(so.seed) + "-" + so.sweep);
    m.set("tool", tool_version);
    m.set("seed", static_cast<std::int64_t>(so.seed));
    m.set("rng", rng_algorithm);
    m.set("attenuation_dB", atten);
    Json designs = Json::array();
    for (const auto& chip : chips)
        for (const auto& r : chip.resonators) {
            Json d = Json::object();
            d.set("label", r.label);
            d.set("material", chip.material_tag);
            d.set("l_g_pH", r.l_g * 1e12);
            d.set("f_sim_hz", r.f_sim);
            designs.push(std::move(d));
        }
    m.set("designs", std::move(designs));
    Json traces_j = Json::array();
    auto trace_entry = [&](const std::string& file, const std::string& label,
                           const std::string& material, double T, double p_chip,
                           const std::string& kind, const std::string& dir) {
        Json t = Json::object();
        t.set("path", "traces/" + file);
        t.set("label", label);
        t.set("material", material);
        t.set("temperature_K", T);
        t.set("source_power_dBm", p_chip + atten);
        t.set("attenuation_dB", atten);
        t.set("kind", kind);
        t.set("sweep_dir", dir);
        return t;
    };
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const auto& pt = plan[i];
        traces_j.push(trace_entry(pt.filename, pt.res->label, pt.material, pt.temperature_K,
                                  pt.power_dBm, pt.kind,
                                  pt.dir == SweepDirection::up ? "up" : "down"));
    }
    for (std::size_t i = 0; i < chip_traces.size(); ++i)
        traces_j.push(trace_entry(chip_traces[i].second, "chip", chip_traces[i].first->material_tag,
                                  chip_traces[i].first->t_ref_K, so.power_dBm, "chip", "up"));
    m.set("traces", std::move(traces_j));
    write_text_file((out / "manifest.json").string(), m.dump());
    diag("info", "simulate", "wrote " + std::to_string(plan.size() + chip_traces.size()) +
                                 " traces to " + (out / "traces").string());
    return 0;
}

// ---------------------------------------------------------------------------
// shared fitting pass
// ---------------------------------------------------------------------------

struct FittedTrace {
    TraceRef ref;
    ComplexTrace trace;
    FitResult fit;
    bool ok = false;
    std::string error;
};

std::vector<FittedTrace> fit_singles(const SweepManifest& m, int jobs) {
    std::vector<const TraceRef*> singles;
    for (const auto& t : m.traces)
        if (t.kind == "single") singles.push_back(&t);
    std::vector<FittedTrace> out(singles.size());
    parallel_for(singles.size(), jobs, [&](std::size_t i) {
        auto& rec = out[i];
        rec.ref = *singles[i];
        rec.trace = ingest_trace(m, rec.ref);
        try {
            rec.fit = fit_resonance(rec.trace);
            rec.ok = true;
        } catch (const error& e) {
            rec.error = e.what();
        }
    });
    return out;
}

Json fit_record_json(const FittedTrace& r) {
    Json j = Json::object();
    j.set("label", r.ref.label);
    j.set("material", r.ref.material);
    if (r.ref.temperature_K) j.set("temperature_K", *r.ref.temperature_K);
    if (r.ref.source_power_dBm)
        j.set("power_dBm_at_chip", *r.ref.source_power_dBm - r.ref.attenuation_dB);
    if (!r.ok) {
        j.set("error", r.error);
        return j;
    }
    const auto& f = r.fit;
    j.set("f_r", quantity(f.params.f_r, f.sigmas.f_r, "Hz"));
    j.set("q_i", quantity(f.params.q_i, f.sigmas.q_i, "1"));
    j.set("q_c", quantity(f.params.q_c(), f.sigmas.q_c, "1"));
    j.set("q_e_mag", quantity(f.params.q_e_mag, f.sigmas.q_e_mag, "1"));
    j.set("phi", quantity(f.params.phi, f.sigmas.phi, "rad"));
    j.set("amp", quantity(f.params.amp, f.sigmas.amp, "1"));
    j.set("tau", quantity(f.params.tau, f.sigmas.tau, "s"));
    j.set("rms_residual", quantity(f.rms_residual, "1"));
    j.set("n_points", static_cast<std::int64_t>(f.n_points));
    j.set("converged", f.converged);
    j.set("advisory", !f.converged);
    if (f.q_i_clamped) j.set("q_i_clamped", true);
    return j;
}

void write_fragment(const CommonOpts& common, const std::string& name, Json fragment) {
    write_text_file((fs::path(common.out_dir) / name).string(), fragment.dump());
}

Json fragment_header(const std::string& kind, const SweepManifest& m, const std::string& manifest_path,
                     const Config& cfg) {
    Json j = Json::object();
    j.set("tool", tool_version);
    j.set("kind", kind);
    j.set("dataset", m.dataset_id);
    j.set("seed", static_cast<std::int64_t>(m.seed));
    j.set("rng", m.rng);
    j.set("manifest_hash", file_hash_hex(manifest_path));
    j.set("config", config_echo(cfg));
    return j;
}

void write_spectrum_plot(const CommonOpts& common, const std::string& id, const ComplexTrace& tr,
                         const std::vector<cplx>& model) {
    std::string txt = "# freq_hz  s21_abs_data  s21_phase_data  s21_abs_fit  s21_phase_fit\n";
    char buf[256];
    for (std::size_t i = 0; i < tr.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.12g %.12g %.12g %.12g %.12g\n", tr.freqs[i],
                      std::abs(tr.s21[i]), std::arg(tr.s21[i]), std::abs(model[i]),
                      std::arg(model[i]));
        txt += buf;
    }
    const fs::path base = fs::path(common.out_dir) / "plot" / ("spectrum_" + sanitize(id));
    write_text_file(base.string() + ".txt", txt);
    Json meta = Json::object();
    meta.set("figure", "spectrum_overlay");
    meta.set("columns", "freq_hz s21_abs_data s21_phase_data s21_abs_fit s21_phase_fit");
    meta.set("source", id);
    write_text_file(base.string() + ".meta.json", meta.dump());
}

int cmd_fit(const CommonOpts& common) {
    ensure_out(common);
    const Config cfg = load_config(common);
    const auto m = read_manifest(common.manifest_path);
    auto res = fit_singles(m, common.jobs);

    Json frag = fragment_header("fit", m, common.manifest_path, cfg);
    Json results = Json::array();
    const bool plots = cfg.get_bool("fit.plots", true);
    for (const auto& r : res) {
        results.push(fit_record_json(r));
        if (r.ok && plots) {
            const auto model = s21_notch(r.trace.freqs, r.fit.params);
            write_spectrum_plot(common, r.ref.material + "_" + r.ref.label + "_" +
                                           fs::path(r.ref.path).stem().string(),
                                r.trace, model);
        }
    }

    // Chip traces: dip segmentation, then per-window fits.
    Json chips = Json::array();
    for (const auto& t : m.traces) {
        if (t.kind != "chip") continue;
        ComplexTrace chip = ingest_trace(m, t);
        chip.label = t.label;
        const auto dips = find_dips(chip, cfg.get_double("fit.prominence_db", 3.0),
                                    cfg.get_double("fit.min_separation_linewidths", 20.0));
        Json cj = Json::object();
        cj.set("material", t.material);
        cj.set("path", t.path);
        cj.set("n_dips", static_cast<std::int64_t>(dips.size()));
        Json windows = Json::array();
        std::vector<ComplexTrace> slices;
        for (const auto& w : dips) slices.push_back(extract_window(chip, w));
        std::vector<FitResult> wfits(slices.size());
        std::vector<std::string> werr(slices.size());
        parallel_for(slices.size(), common.jobs, [&](std::size_t i) {
            try {
                wfits[i] = fit_resonance(slices[i]);
            } catch (const error& e) {
                werr[i] = e.what();
            }
        });
        for (std::size_t i = 0; i < dips.size(); ++i) {
            Json wj = Json::object();
            wj.set("f_min", quantity(dips[i].f_min, "Hz"));
            wj.set("depth_db", quantity(dips[i].depth_db, "dB"));
            if (werr[i].empty()) {
                wj.set("f_r", quantity(wfits[i].params.f_r, wfits[i].sigmas.f_r, "Hz"));
                wj.set("q_i", quantity(wfits[i].params.q_i, wfits[i].sigmas.q_i, "1"));
                wj.set("q_c", quantity(wfits[i].params.q_c(), wfits[i].sigmas.q_c, "1"));
                wj.set("converged", wfits[i].converged);
            } else {
                wj.set("error", werr[i]);
            }
            windows.push(std::move(wj));
        }
        cj.set("windows", std::move(windows));
        chips.push(std::move(cj));
    }

    frag.set("results", std::move(results));
    frag.set("chips", std::move(chips));
    write_fragment(common, "fit.json", std::move(frag));
    return 0;
}

// ---------------------------------------------------------------------------
// mbfit
// ---------------------------------------------------------------------------

int cmd_mbfit(const CommonOpts& common) {
    ensure_out(common);
    const Config cfg = load_config(common);
    const auto m = read_manifest(common.manifest_path);
    auto res = fit_singles(m, common.jobs);

    std::map<std::pair<std::string, std::string>, std::vector<const FittedTrace*>> groups;
    for (const auto& r : res)
        if (r.ok && r.ref.temperature_K)
            groups[{r.ref.material, r.ref.label}].push_back(&r);

    Json frag = fragment_header("mbfit", m, common.manifest_path, cfg);
    Json blocks = Json::array();
    MBSweepOptions opts;
    opts.gap_ratio = cfg.get_double("mb.gap_ratio", default_gap_ratio);
    opts.include_low_t = cfg.get_bool("mb.include_low_t", false);

    for (auto& [key, rows] : groups) {
        if (rows.size() < 6) continue;
        std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) {
            return *a->ref.temperature_K < *b->ref.temperature_K;
        });
        std::vector<MBSweepPoint> pts;
        for (const auto* r : rows)
            pts.push_back({*r->ref.temperature_K, r->fit.params.f_r, r->fit.params.q_i});
        const double f_r0 = rows.front()->fit.params.f_r;

        Json b = Json::object();
        b.set("material", key.first);
        b.set("label", key.second);
        b.set("f_r0", quantity(f_r0, "Hz"));
        try {
            const auto mb = fit_mb_sweep(pts, f_r0, opts);
            b.set("alpha_k", quantity(mb.alpha_k, mb.alpha_k_sigma, "1"));
            b.set("t_c", quantity(mb.t_c, mb.t_c_sigma, "K"));
            b.set("loss_floor", quantity(mb.loss_floor, "1"));
            b.set("n_used", static_cast<std::int64_t>(mb.n_used));
            b.set("rms", quantity(mb.rms, "1"));
            b.set("converged", mb.converged);

            // Fig 2b/2c style plot data with the fitted model overlaid.
            MBMaterial mat = MBMaterial::bcs(mb.t_c, mb.alpha_k, opts.gap_ratio);
            const double t_ref = pts.front().temperature_K;
            std::string txt =
                "# temperature_K  dfr_data  dfr_model  qi_inv_data  qi_inv_model\n";
            char buf[256];
            for (const auto& p : pts) {
                const auto obs = mb_observables(mat, p.temperature_K, f_r0, t_ref);
                std::snprintf(buf, sizeof(buf), "%.12g %.12g %.12g %.12g %.12g\n",
                              p.temperature_K, (p.f_r - f_r0) / f_r0, obs.delta_fr, 1.0 / p.q_i,
                              obs.q_i_inv + mb.loss_floor);
                txt += buf;
            }
            const fs::path base = fs::path(common.out_dir) / "plot" /
                                  ("mb_sweep_" + sanitize(key.first + "_" + key.second));
            write_text_file(base.string() + ".txt", txt);
            Json meta = Json::object();
            meta.set("figure", "mb_temperature_sweep");
            meta.set("columns", "temperature_K dfr_data dfr_model qi_inv_data qi_inv_model");
            write_text_file(base.string() + ".meta.json", meta.dump());
        } catch (const error& e) {
            b.set("error", std::string(e.what()));
        }
        blocks.push(std::move(b));
    }
    frag.set("mb_fits", std::move(blocks));
    write_fragment(common, "mb.json", std::move(frag));
    return 0;
}

// ---------------------------------------------------------------------------
// tlsfit
// ---------------------------------------------------------------------------

int cmd_tlsfit(const CommonOpts& common) {
    ensure_out(common);
    const Config cfg = load_config(common);
    const auto m = read_manifest(common.manifest_path);
    auto res = fit_singles(m, common.jobs);

    std::map<std::pair<std::string, std::string>, std::vector<const FittedTrace*>> groups;
    for (const auto& r : res)
        if (r.ok && r.ref.source_power_dBm) groups[{r.ref.material, r.ref.label}].push_back(&r);

    Json frag = fragment_header("tlsfit", m, common.manifest_path, cfg);
    Json blocks = Json::array();
    const double excl_factor = cfg.get_double("tls.exclusion_factor", 5.0);

    for (auto& [key, rows] : groups) {
        if (rows.size() < 8) continue;
        std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) {
            return *a->ref.source_power_dBm < *b->ref.source_power_dBm;
        });

        // Exclude the nonlinear regime: everything above the first power
        // whose fit residual exceeds excl_factor times the low-power median.
        std::vector<double> low_rms;
        for (std::size_t i = 0; i < std::min<std::size_t>(5, rows.size()); ++i)
            low_rms.push_back(rows[i]->fit.rms_residual);
        std::nth_element(low_rms.begin(), low_rms.begin() + low_rms.size() / 2, low_rms.end());
        const double med = low_rms[low_rms.size() / 2];
        std::size_t cutoff = rows.size();
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i]->fit.rms_residual > excl_factor * med) {
                cutoff = i;
                break;
            }

        std::vector<TLSSweepPoint> pts;
        std::vector<std::pair<double, double>> n_fr;
        for (std::size_t i = 0; i < cutoff; ++i) {
            const auto& f = rows[i]->fit;
            const double p_chip_W =
                dbm_to_watts(*rows[i]->ref.source_power_dBm - rows[i]->ref.attenuation_dB);
            const double n = photon_number(f.params, p_chip_W);
            pts.push_back({n, f.params.q_i});
            n_fr.emplace_back(n, f.params.f_r);
        }

        Json b = Json::object();
        b.set("material", key.first);
        b.set("label", key.second);
        b.set("n_powers_used", static_cast<std::int64_t>(pts.size()));
        b.set("n_powers_excluded", static_cast<std::int64_t>(rows.size() - cutoff));
        const double T = rows.front()->ref.temperature_K.value_or(0.015);
        const double f_r = rows.front()->fit.params.f_r;
        try {
            const auto tl = fit_tls_sweep(pts, T, f_r);
            b.set("n_c", quantity(tl.params.n_c, tl.sigmas.n_c, "1"));
            b.set("beta", quantity(tl.params.beta, tl.sigmas.beta, "1"));
            b.set("f_delta0", quantity(tl.params.f_delta0, tl.sigmas.f_delta0, "1"));
            b.set("q_i_sat", quantity(tl.params.q_i_sat, tl.sigmas.q_i_sat, "1"));
            b.set("f_r", quantity(f_r, "Hz"));
            b.set("temperature_K", quantity(T, "K"));
            b.set("rms_log", quantity(tl.rms_log, "1"));
            b.set("converged", tl.converged);
            if (tl.degenerate) {
                b.set("degenerate", true);
                Json dp = Json::array();
                for (const auto& p : tl.degenerate_params) dp.push(p);
                b.set("degenerate_params", std::move(dp));
            }

            std::string txt = "# n_photons  tan_delta_data  tan_delta_model  dfr_data\n";
            char buf[256];
            const auto shifts = delta_fr_vs_power(n_fr);
            for (std::size_t i = 0; i < pts.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.12g %.12g %.12g %.12g\n", pts[i].n,
                              1.0 / pts[i].q_i, tls_loss(pts[i].n, tl.params, T, f_r),
                              shifts[i].delta_fr);
                txt += buf;
            }
            const fs::path base = fs::path(common.out_dir) / "plot" /
                                  ("tls_sweep_" + sanitize(key.first + "_" + key.second));
            write_text_file(base.string() + ".txt", txt);
            Json meta = Json::object();
            meta.set("figure", "tls_power_sweep");
            meta.set("columns", "n_photons tan_delta_data tan_delta_model dfr_data");
            write_text_file(base.string() + ".meta.json", meta.dump());
        } catch (const error& e) {
            b.set("error", std::string(e.what()));
        }
        blocks.push(std::move(b));
    }
    frag.set("tls_fits", std::move(blocks));
    write_fragment(common, "tls.json", std::move(frag));
    return 0;
}

// ---------------------------------------------------------------------------
// nlfit
// ---------------------------------------------------------------------------

int cmd_nlfit(const CommonOpts& common) {
    ensure_out(common);
    const Config cfg = load_config(common);
    const auto m = read_manifest(common.manifest_path);
    auto res = fit_singles(m, common.jobs);

    std::map<std::pair<std::string, std::string>, std::vector<const FittedTrace*>> groups;
    for (const auto& r : res)
        if (r.ref.source_power_dBm) groups[{r.ref.material, r.ref.label}].push_back(&r);

    Json frag = fragment_header("nlfit", m, common.manifest_path, cfg);
    Json blocks = Json::array();

    for (auto& [key, rows] : groups) {
        if (rows.size() < 5) continue;
        std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) {
            return *a->ref.source_power_dBm < *b->ref.source_power_dBm;
        });
        const auto* ref_row = rows.front();
        if (!ref_row->ok) continue;
        const ResonatorParams ref = ref_row->fit.params;

        Json b = Json::object();
        b.set("material", key.first);
        b.set("label", key.second);
        b.set("ref_power_dBm_at_chip",
              *ref_row->ref.source_power_dBm - ref_row->ref.attenuation_dB);
        b.set("f_r0", quantity(ref.f_r, "Hz"));

        std::vector<NonlinearTraceFit> nfits;
        Json powers = Json::array();
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const auto& row = *rows[i];
            ComplexTrace tr = row.trace;
            const auto dir =
                row.ref.sweep_dir == "down" ? SweepDirection::down : SweepDirection::up;
            auto nf = fit_nonlinear_trace(tr, ref, dir);
            Json pj = Json::object();
            const double p_chip = *row.ref.source_power_dBm - row.ref.attenuation_dB;
            pj.set("power_dBm_at_chip", p_chip);
            pj.set("power_W", quantity(dbm_to_watts(p_chip), "W"));
            pj.set("a", quantity(nf.a_param, nf.a_sigma, "1"));
            pj.set("flagged_linear", nf.flagged_linear);
            pj.set("converged", nf.converged);
            pj.set("rms_residual", quantity(nf.rms_residual, "1"));
            powers.push(std::move(pj));
            nf.power_W = dbm_to_watts(p_chip);
            nfits.push_back(nf);

            ResonatorParams mp = ref;
            mp.f_r = ref.f_r + nf.f_r_shift;
            mp.amp = ref.amp * nf.amp_scale;
            auto model = s21_nonlinear(tr.freqs, mp, nf.a_param, dir);
            const cplx rot = std::polar(1.0, nf.phase_offset);
            for (auto& z : model) z *= rot;
            write_spectrum_plot(common,
                                "nl_" + key.first + "_" + key.second + "_" +
                                    fs::path(row.ref.path).stem().string(),
                                tr, model);
        }
        b.set("powers", std::move(powers));

        try {
            auto scale = fit_a_vs_power(nfits, ref);
            b.set("slope", quantity(scale.slope, scale.slope_sigma, "1/W"));
            b.set("e_star", quantity(scale.e_star, scale.e_star_sigma, "J"));
            b.set("model_violation", scale.model_violation);

            // L_k / alpha_k from the chip metadata and the measured f_r.
            const DesignMeta* meta = nullptr;
            for (const auto& d : m.designs)
                if (d.label == key.second && d.material == key.first) meta = &d;
            if (meta && meta->f_sim > 0.0 && meta->l_g > 0.0) {
                const auto kin = extract_kinetic(meta->f_sim, ref.f_r, meta->l_g);
                b.set("l_k", quantity(kin.l_k * 1e12, "pH/sq"));
                b.set("alpha_k", quantity(kin.alpha_k, "1"));
                const double area = cfg.get_double("geometry.area_m2", 0.0);
                const double length = cfg.get_double("geometry.length_m", 0.0);
                if (!(area > 0.0) || !(length > 0.0))
                    throw parameter_domain_error(
                        "geometry",
                        "set geometry.area_m2 and geometry.length_m in the config");
                const double jstar =
                    j_star_from_e_star(scale.e_star, kin.l_k, kin.alpha_k, {area, length});
                b.set("j_star", quantity(jstar, "A/cm^2"));
            }

            std::string txt = "# power_W  a  a_sigma  a_line\n";
            char buf[256];
            for (const auto& nf : nfits) {
                std::snprintf(buf, sizeof(buf), "%.12g %.12g %.12g %.12g\n", nf.power_W,
                              nf.a_param, nf.a_sigma, scale.slope * nf.power_W);
                txt += buf;
            }
            const fs::path base = fs::path(common.out_dir) / "plot" /
                                  ("a_vs_power_" + sanitize(key.first + "_" + key.second));
            write_text_file(base.string() + ".txt", txt);
            Json meta_j = Json::object();
            meta_j.set("figure", "a_vs_power");
            meta_j.set("columns", "power_W a a_sigma a_line");
            write_text_file(base.string() + ".meta.json", meta_j.dump());
        } catch (const error& e) {
            b.set("error", std::string(e.what()));
        }
        blocks.push(std::move(b));
    }
    frag.set("nonlinear_fits", std::move(blocks));
    write_fragment(common, "nl.json", std::move(frag));
    return 0;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

int cmd_compare(const CommonOpts& common) {
    ensure_out(common);
    const Config cfg = load_config(common);
    const auto m = read_manifest(common.manifest_path);
    auto res = fit_singles(m, common.jobs);

    const double target_p = cfg.get_double("compare.power_dBm", -100.0);
    std::set<std::string> materials;
    for (const auto& r : res)
        if (r.ok) materials.insert(r.ref.material);
    if (materials.size() != 2)
        throw degenerate_fit_error("material", "need exactly two materials to compare");
    const std::string mat_a = *materials.begin();
    const std::string mat_b = *std::next(materials.begin());

    // One Q_i per (material, label): the converged fit closest to the
    // comparison power.
    auto pick = [&](const std::string& mat) {
        std::map<std::string, const FittedTrace*> best;
        for (const auto& r : res) {
            if (!r.ok || r.ref.material != mat) continue;
            const double p = r.ref.source_power_dBm
                                 ? *r.ref.source_power_dBm - r.ref.attenuation_dB
                                 : target_p;
            auto it = best.find(r.ref.label);
            auto dist = [&](const FittedTrace* f) {
                const double pp = f->ref.source_power_dBm
                                      ? *f->ref.source_power_dBm - f->ref.attenuation_dB
                                      : target_p;
                return std::abs(pp - target_p);
            };
            if (it == best.end() || std::abs(p - target_p) < dist(it->second))
                best[r.ref.label] = &r;
        }
        return best;
    };
    const auto a_map = pick(mat_a);
    const auto b_map = pick(mat_b);

    PairedSample sample;
    for (const auto& [label, fa] : a_map) {
        auto it = b_map.find(label);
        if (it == b_map.end()) continue;
        sample.labels.push_back(label);
        sample.group_a.push_back(fa->fit.params.q_i);
        sample.group_b.push_back(it->second->fit.params.q_i);
    }

    Json frag = fragment_header("compare", m, common.manifest_path, cfg);
    frag.set("group_a_material", mat_a);
    frag.set("group_b_material", mat_b);
    const auto t = paired_t_test(sample);
    frag.set("n_pairs", static_cast<std::int64_t>(sample.labels.size()));
    frag.set("t_statistic", quantity(t.t_statistic, "1"));
    frag.set("dof", quantity(t.dof, "1"));
    frag.set("p_value", quantity(t.p_value, "1"));
    frag.set("stars", significance_stars(t.p_value));
    frag.set("mean_difference", quantity(t.mean_difference, "1"));
    Json ci = Json::array();
    ci.push(t.ci95_lo);
    ci.push(t.ci95_hi);
    frag.set("ci95", std::move(ci));
    frag.set("degenerate", t.degenerate);
    Json pairs = Json::array();
    for (std::size_t i = 0; i < sample.labels.size(); ++i) {
        Json pj = Json::object();
        pj.set("label", sample.labels[i]);
        pj.set("q_i_a", quantity(sample.group_a[i], "1"));
        pj.set("q_i_b", quantity(sample.group_b[i], "1"));
        pairs.push(std::move(pj));
    }
    frag.set("pairs", std::move(pairs));
    write_fragment(common, "compare.json", std::move(frag));
    return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report(const CommonOpts& common) {
    ensure_out(common);
    const Config cfg = load_config(common);
    const fs::path out(common.out_dir);

    nlohmann::ordered_json report;
    report["tool"] = tool_version;
    report["kind"] = "report";
    nlohmann::ordered_json prov;
    prov["config"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : cfg.values()) prov["config"][k] = v;

    const std::vector<std::pair<std::string, std::string>> fragments = {
        {"fit", "fit.json"},       {"mattis_bardeen", "mb.json"}, {"tls", "tls.json"},
        {"nonlinear", "nl.json"},  {"comparison", "compare.json"},
    };
    nlohmann::ordered_json hashes = nlohmann::ordered_json::object();
    for (const auto& [key, file] : fragments) {
        const fs::path p = out / file;
        if (!fs::exists(p)) continue;
        hashes[file] = file_hash_hex(p.string());
        try {
            report[key] = nlohmann::ordered_json::parse(read_file(p.string()));
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(std::string("fragment ") + file + ": " + e.what());
        }
    }
    prov["fragment_hashes"] = std::move(hashes);
    report["provenance"] = std::move(prov);
    write_text_file((out / "report.json").string(), report.dump(2) + "\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(tool_version) +
                 " - superconducting resonator characterization toolkit"};
    app.require_subcommand(1);

    CommonOpts common;
    SimulateOpts so;

    auto add_common = [&](CLI::App* cmd, bool manifest) {
        cmd->add_option("--out", common.out_dir, "output directory")->required();
        cmd->add_option("--config", common.config_path, "TOML-style key=value config file");
        cmd->add_option("--jobs", common.jobs, "worker threads");
        if (manifest)
            cmd->add_option("--manifest", common.manifest_path, "dataset manifest")->required();
    };

    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    add_common(sim, false);
    sim->add_option("--preset", so.preset, "dataset preset (paper-chip)");
    sim->add_option("--material", so.material, "Nb, Nb/Au or both");
    sim->add_option("--sweep", so.sweep, "none|temperature|power|nonlinear");
    sim->add_option("--design", so.design, "design label for sweeps (e.g. LER8)");
    sim->add_option("--seed", so.seed, "master RNG seed")->each([&](const std::string&) {
        so.seed_set = true;
    });
    sim->add_option("--power", so.power_dBm, "chip power for single traces, dBm");
    sim->add_option("--points", so.points, "points per trace");
    sim->add_option("--span-linewidths", so.span_linewidths, "trace span in linewidths");
    sim->add_option("--noise-sigma", so.noise_sigma, "additive noise sigma");

    auto* fit = app.add_subcommand("fit", "fit every trace in the manifest");
    add_common(fit, true);
    auto* mbf = app.add_subcommand("mbfit", "Mattis-Bardeen temperature-sweep analysis");
    add_common(mbf, true);
    auto* tls = app.add_subcommand("tlsfit", "TLS power-sweep analysis");
    add_common(tls, true);
    auto* nlf = app.add_subcommand("nlfit", "nonlinear-regime analysis");
    add_common(nlf, true);
    auto* cmp = app.add_subcommand("compare", "paired statistics across materials");
    add_common(cmp, true);
    auto* rep = app.add_subcommand("report", "merge analysis fragments into report.json");
    add_common(rep, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // usage
    }

    try {
        if (sim->parsed()) return cmd_simulate(common, so);
        if (fit->parsed()) return cmd_fit(common);
        if (mbf->parsed()) return cmd_mbfit(common);
        if (tls->parsed()) return cmd_tlsfit(common);
        if (nlf->parsed()) return cmd_nlfit(common);
        if (cmp->parsed()) return cmd_compare(common);
        if (rep->parsed()) return cmd_report(common);
    } catch (const parse_error& e) {
        diag("error", "parse", e.what());
        return 2;
    } catch (const parameter_domain_error& e) {
        diag("error", "parameter", e.what());
        return 2;
    } catch (const simulation_error& e) {
        diag("error", "simulation", e.what());
        return 2;
    } catch (const degenerate_fit_error& e) {
        diag("error", "fit-degeneracy", e.what());
        return 3;
    } catch (const unfittable_trace_error& e) {
        diag("error", "fit-degeneracy", e.what());
        return 3;
    } catch (const geometry_error& e) {
        diag("error", "fit-degeneracy", e.what());
        return 3;
    } catch (const error& e) {
        diag("error", "fit", e.what());
        return 3;
    } catch (const std::exception& e) {
        diag("error", "internal", e.what());
        return 3;
    }
    return 1;
}

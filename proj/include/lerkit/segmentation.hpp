#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "lerkit/errors.hpp"
#include "lerkit/types.hpp"

namespace lerkit {

struct DipWindow {
    std::size_t lo = 0, hi = 0;  // inclusive index range
    std::size_t min_index = 0;
    double f_min = 0.0;          // frequency at the dip minimum
    double depth_db = 0.0;
    double linewidth = 0.0;      // FWHM estimate, Hz
};

// Dip detection on a multi-resonance feedline trace: local minima with a
// prominence above `prominence_db`, separated by at least
// `min_separation_linewidths` local linewidths. Deepest dips win ties.
inline std::vector<DipWindow> find_dips(const ComplexTrace& chip, double prominence_db = 3.0,
                                        double min_separation_linewidths = 20.0) {
    chip.validate();
    const std::size_t n = chip.size();
    std::vector<double> db(n);
    for (std::size_t i = 0; i < n; ++i)
        db[i] = 20.0 * std::log10(std::max(std::abs(chip.s21[i]), 1e-300));

    std::vector<double> sorted = db;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double base_db = sorted[sorted.size() / 2];

    // Candidate minima below the prominence threshold.
    std::vector<std::size_t> cands;
    for (std::size_t i = 1; i + 1 < n; ++i)
        if (db[i] < db[i - 1] && db[i] <= db[i + 1] && base_db - db[i] >= prominence_db)
            cands.push_back(i);
    std::sort(cands.begin(), cands.end(), [&](std::size_t a, std::size_t b) { return db[a] < db[b]; });

    auto linewidth_at = [&](std::size_t idx) {
        const double half = 0.5 * (base_db + db[idx]);
        std::size_t l = idx, r = idx;
        while (l > 0 && db[l] < half) --l;
        while (r + 1 < n && db[r] < half) ++r;
        return std::max(chip.freqs[r] - chip.freqs[l], chip.freqs[1] - chip.freqs[0]);
    };

    std::vector<DipWindow> out;
    for (std::size_t idx : cands) {
        const double lw = linewidth_at(idx);
        bool clash = false;
        for (const auto& w : out) {
            const double sep = std::abs(chip.freqs[idx] - w.f_min);
            if (sep < min_separation_linewidths * std::max(lw, w.linewidth)) {
                clash = true;
                break;
            }
        }
        if (clash) continue;
        DipWindow w;
        w.min_index = idx;
        w.f_min = chip.freqs[idx];
        w.depth_db = base_db - db[idx];
        w.linewidth = lw;
        out.push_back(w);
    }

    std::sort(out.begin(), out.end(), [](const DipWindow& a, const DipWindow& b) {
        return a.f_min < b.f_min;
    });

    // Window extents: half the separation budget on each side, clipped at
    // the midpoint towards the neighbouring dip.
    for (std::size_t k = 0; k < out.size(); ++k) {
        auto& w = out[k];
        double lo_f = w.f_min - 0.5 * min_separation_linewidths * w.linewidth;
        double hi_f = w.f_min + 0.5 * min_separation_linewidths * w.linewidth;
        if (k > 0) lo_f = std::max(lo_f, 0.5 * (out[k - 1].f_min + w.f_min));
        if (k + 1 < out.size()) hi_f = std::min(hi_f, 0.5 * (w.f_min + out[k + 1].f_min));
        w.lo = std::lower_bound(chip.freqs.begin(), chip.freqs.end(), lo_f) - chip.freqs.begin();
        w.hi = std::upper_bound(chip.freqs.begin(), chip.freqs.end(), hi_f) - chip.freqs.begin();
        if (w.hi > 0) --w.hi;
        if (w.hi >= n) w.hi = n - 1;
    }
    return out;
}

inline ComplexTrace extract_window(const ComplexTrace& chip, const DipWindow& w) {
    ComplexTrace tr;
    tr.freqs.assign(chip.freqs.begin() + w.lo, chip.freqs.begin() + w.hi + 1);
    tr.s21.assign(chip.s21.begin() + w.lo, chip.s21.begin() + w.hi + 1);
    tr.temperature_K = chip.temperature_K;
    tr.power_dBm = chip.power_dBm;
    tr.label = chip.label + "#" + std::to_string(w.min_index);
    return tr;
}

} // namespace lerkit

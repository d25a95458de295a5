#pragma once

#include "advmk/tensor.hpp"

#include <string>
#include <vector>

namespace advmk::eval {

/// Smallest score value in `scores` whose strictly-greater fraction is <= far.
/// Thresholds are always actual observed scores, so downstream accept/reject
/// decisions are reproducible from the score list alone.
double calibrate_threshold(std::vector<double> scores, double far);

/// Attack success rate in percent: strict > comparisons against tau.
double asr(const std::vector<double>& scores, double tau);

struct SweepRow {
    double far, tau, asr;
};

/// Calibrate tau per FAR on impostor scores, then score the attack list.
std::vector<SweepRow> threshold_sweep(const std::vector<double>& impostor_scores,
                                      const std::vector<double>& attack_scores,
                                      const std::vector<double>& fars);

/// Published operating points of the full-scale recognizers this toolkit's
/// toy victims stand in for. Reporting metadata only; nothing is gated on
/// these numbers.
struct ReferencePoint {
    std::string name;
    double tau;
};
const std::vector<ReferencePoint>& reference_thresholds();

// ---------------------------------------------------------------------------
// Tiny PNG plotter for sweep curves: no text stack, just a 5x7 bitmap font.
// ---------------------------------------------------------------------------

struct SeriesSpec {
    std::string label;
    std::vector<double> x, y;
    double rgb[3];
};

void plot_series_png(const std::string& path, const std::vector<SeriesSpec>& series,
                     const std::string& x_label, const std::string& y_label, int w = 640,
                     int h = 420);

} // namespace advmk::eval

#include "advmk/evalkit.hpp"
#include "advmk/io.hpp"

#include <algorithm>
#include <cmath>

namespace advmk::eval {

double calibrate_threshold(std::vector<double> scores, double far) {
    require(!scores.empty(), "calibrate_threshold: empty score list");
    require(far >= 0.0 && far <= 1.0, "calibrate_threshold: far outside [0,1]");
    for (double s : scores) require(std::isfinite(s), "calibrate_threshold: non-finite score");
    std::sort(scores.begin(), scores.end());
    const double n = (double)scores.size();
    // count strictly greater is non-increasing in the candidate, so the first
    // admissible value in ascending order is the answer; the max always is.
    for (size_t i = 0; i < scores.size(); ++i) {
        if (i > 0 && scores[i] == scores[i - 1]) continue;
        const size_t greater =
            scores.end() - std::upper_bound(scores.begin(), scores.end(), scores[i]);
        if ((double)greater / n <= far) return scores[i];
    }
    return scores.back();
}

double asr(const std::vector<double>& scores, double tau) {
    require(!scores.empty(), "asr: empty score list");
    std::int64_t hits = 0;
    for (double s : scores) {
        require(std::isfinite(s), "asr: non-finite score");
        if (s > tau) ++hits;
    }
    return 100.0 * (double)hits / (double)scores.size();
}

std::vector<SweepRow> threshold_sweep(const std::vector<double>& impostor_scores,
                                      const std::vector<double>& attack_scores,
                                      const std::vector<double>& fars) {
    std::vector<SweepRow> rows;
    for (double far : fars) {
        const double tau = calibrate_threshold(impostor_scores, far);
        rows.push_back({far, tau, asr(attack_scores, tau)});
    }
    return rows;
}

const std::vector<ReferencePoint>& reference_thresholds() {
    static const std::vector<ReferencePoint> pts = {
        {"IR152", 0.167}, {"IRSE50", 0.241}, {"MobileFace", 0.302}, {"FaceNet", 0.409}};
    return pts;
}

// ---------------------------------------------------------------------------
// plotting
// ---------------------------------------------------------------------------

namespace {

// 5x7 glyphs for the characters the axis labels can contain
const char* glyph(char c) {
    switch (c) {
        case '0': return "01110100011001110101110011000101110";
        case '1': return "00100011000010000100001000010001110";
        case '2': return "01110100010000100110010001000011111";
        case '3': return "01110100010000101110000011000101110";
        case '4': return "00010001100101010010111110001000010";
        case '5': return "11111100001111000001000011000101110";
        case '6': return "01110100001000011110100011000101110";
        case '7': return "11111000010001000100010001000010000";
        case '8': return "01110100011000101110100011000101110";
        case '9': return "01110100011000101111000010000101110";
        case '.': return "00000000000000000000000000110001100";
        case '-': return "00000000000000011111000000000000000";
        case '%': return "11001110010001000100010001001110011";
        case '/': return "00001000010001000100010001000010000";
        case '_': return "00000000000000000000000000000011111";
        case '=': return "00000000001111100000111110000000000";
        case ':': return "00000011000110000000011000110000000";
        default: break;
    }
    const char upper = (char)std::toupper((unsigned char)c);
    switch (upper) {
        case 'A': return "01110100011000111111100011000110001";
        case 'B': return "11110100011000111110100011000111110";
        case 'C': return "01110100011000010000100001000101110";
        case 'D': return "11110100011000110001100011000111110";
        case 'E': return "11111100001000011110100001000011111";
        case 'F': return "11111100001000011110100001000010000";
        case 'G': return "01110100011000010111100011000101111";
        case 'H': return "10001100011000111111100011000110001";
        case 'I': return "01110001000010000100001000010001110";
        case 'K': return "10001100101010011000101001001010001";
        case 'L': return "10000100001000010000100001000011111";
        case 'M': return "10001110111010110101100011000110001";
        case 'N': return "10001110011010110011100011000110001";
        case 'O': return "01110100011000110001100011000101110";
        case 'P': return "11110100011000111110100001000010000";
        case 'R': return "11110100011000111110101001001010001";
        case 'S': return "01111100001000001110000010000111110";
        case 'T': return "11111001000010000100001000010000100";
        case 'U': return "10001100011000110001100011000101110";
        case 'V': return "10001100011000110001010100101000100";
        case 'W': return "10001100011000110101101011101110001";
        case 'Y': return "10001100010101000100001000010000100";
        default: return "00000000000000000000000000000000000"; // space / unknown
    }
}

struct Canvas {
    int w, h;
    TensorD img;
    Canvas(int w_, int h_) : w(w_), h(h_), img(Shape{3, h_, w_}, 1.0) {}
    void px(int x, int y, const double* rgb) {
        if (x < 0 || y < 0 || x >= w || y >= h) return;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[c];
    }
    void line(double x0, double y0, double x1, double y1, const double* rgb) {
        const int steps = (int)std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
        for (int i = 0; i <= steps; ++i) {
            const double t = (double)i / steps;
            px((int)std::lround(x0 + t * (x1 - x0)), (int)std::lround(y0 + t * (y1 - y0)), rgb);
        }
    }
    void text(int x, int y, const std::string& s, const double* rgb) {
        for (char c : s) {
            const char* gph = glyph(c);
            for (int r = 0; r < 7; ++r)
                for (int q = 0; q < 5; ++q)
                    if (gph[r * 5 + q] == '1') px(x + q, y + r, rgb);
            x += 6;
        }
    }
    void dot(int x, int y, const double* rgb) {
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) px(x + dx, y + dy, rgb);
    }
};

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

} // namespace

void plot_series_png(const std::string& path, const std::vector<SeriesSpec>& series,
                     const std::string& x_label, const std::string& y_label, int w, int h) {
    require(!series.empty(), "plot: no series");
    Canvas cv(w, h);
    const int ml = 56, mr = 16, mt = 16, mb = 44;
    const double black[3] = {0.1, 0.1, 0.1}, grey[3] = {0.82, 0.82, 0.82};

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        require(s.x.size() == s.y.size() && !s.x.empty(), "plot: bad series");
        for (double v : s.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
        for (double v : s.y) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto X = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto Y = [&](double v) { return h - mb - (v - ymin) / (ymax - ymin) * (h - mt - mb); };

    for (int i = 0; i <= 4; ++i) {
        const double fx = xmin + i * (xmax - xmin) / 4, fy = ymin + i * (ymax - ymin) / 4;
        cv.line(X(fx), mt, X(fx), h - mb, grey);
        cv.line(ml, Y(fy), w - mr, Y(fy), grey);
        cv.text((int)X(fx) - 8, h - mb + 6, fmt_tick(fx), black);
        cv.text(4, (int)Y(fy) - 3, fmt_tick(fy), black);
    }
    cv.line(ml, h - mb, w - mr, h - mb, black);
    cv.line(ml, mt, ml, h - mb, black);
    cv.text((w - (int)x_label.size() * 6) / 2, h - 14, x_label, black);
    cv.text(4, 4, y_label, black);

    int ly = mt + 4;
    for (const auto& s : series) {
        for (size_t i = 0; i + 1 < s.x.size(); ++i)
            cv.line(X(s.x[i]), Y(s.y[i]), X(s.x[i + 1]), Y(s.y[i + 1]), s.rgb);
        for (size_t i = 0; i < s.x.size(); ++i) cv.dot((int)X(s.x[i]), (int)Y(s.y[i]), s.rgb);
        cv.line(w - mr - 120, ly + 3, w - mr - 104, ly + 3, s.rgb);
        cv.text(w - mr - 100, ly, s.label, black);
        ly += 11;
    }
    io::png_write(path, cv.img);
}

} // namespace advmk::eval

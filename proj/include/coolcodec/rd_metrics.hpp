#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "coolcodec/tensor.hpp"

namespace coolcodec {

struct RdPoint {
    double lambda = 0.0;
    double bpp = 0.0;
    double psnr = 0.0;
    size_t file_bytes = 0;
    size_t nn_bytes = 0;
    int64_t iters = 0;
    double seconds = 0.0;
};

struct RdCurve {
    std::string label;
    std::vector<RdPoint> points;  // kept sorted by ascending rate

    void sort_by_rate() {
        std::sort(points.begin(), points.end(),
                  [](const RdPoint& a, const RdPoint& b) { return a.bpp < b.bpp; });
    }
};

// ---------------------------------------------------------------------------
// Bjontegaard delta-rate: piecewise-cubic (monotone Hermite) interpolation of
// log10(rate) against PSNR, integrated over the common PSNR interval.
// Negative result means the test codec spends less rate than the anchor.
// ---------------------------------------------------------------------------

namespace bd_detail {

// Fritsch-Carlson monotone slopes for (x, y) with strictly increasing x.
inline std::vector<double> pchip_slopes(const std::vector<double>& x,
                                        const std::vector<double>& y) {
    const int n = int(x.size());
    std::vector<double> h(n - 1), d(n - 1), m(n);
    for (int i = 0; i < n - 1; ++i) {
        h[i] = x[i + 1] - x[i];
        d[i] = (y[i + 1] - y[i]) / h[i];
    }
    if (n == 2) {
        m[0] = m[1] = d[0];
        return m;
    }
    for (int i = 1; i < n - 1; ++i) {
        if (d[i - 1] * d[i] <= 0.0) {
            m[i] = 0.0;
        } else {
            const double w1 = 2.0 * h[i] + h[i - 1];
            const double w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    auto edge = [](double h0, double h1, double d0, double d1) {
        double md = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (md * d0 <= 0.0)
            md = 0.0;
        else if (d0 * d1 < 0.0 && std::abs(md) > 3.0 * std::abs(d0))
            md = 3.0 * d0;
        return md;
    };
    m[0] = edge(h[0], h[1], d[0], d[1]);
    m[n - 1] = edge(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    return m;
}

// Integral of the Hermite interpolant over [lo, hi] (contained in [x0, xn]).
inline double pchip_integral(const std::vector<double>& x, const std::vector<double>& y,
                             double lo, double hi) {
    const auto m = pchip_slopes(x, y);
    double acc = 0.0;
    for (size_t i = 0; i + 1 < x.size(); ++i) {
        const double a = std::max(lo, x[i]);
        const double b = std::min(hi, x[i + 1]);
        if (a >= b) continue;
        const double h = x[i + 1] - x[i];
        // cubic in t over [0,1]: c0 + c1 t + c2 t^2 + c3 t^3
        const double c0 = y[i];
        const double c1 = h * m[i];
        const double c2 = 3.0 * (y[i + 1] - y[i]) - h * (2.0 * m[i] + m[i + 1]);
        const double c3 = -2.0 * (y[i + 1] - y[i]) + h * (m[i] + m[i + 1]);
        auto antider = [&](double t) {
            return c0 * t + c1 * t * t / 2.0 + c2 * t * t * t / 3.0 + c3 * t * t * t * t / 4.0;
        };
        const double ta = (a - x[i]) / h, tb = (b - x[i]) / h;
        acc += h * (antider(tb) - antider(ta));
    }
    return acc;
}

}  // namespace bd_detail

inline double bd_rate_percent(const RdCurve& anchor, const RdCurve& test) {
    if (anchor.points.size() < 4 || test.points.size() < 4)
        throw ConfigError("bd-rate: need at least 4 points per curve");
    auto prepare = [](const RdCurve& c, std::vector<double>& x, std::vector<double>& y) {
        auto pts = c.points;
        std::sort(pts.begin(), pts.end(),
                  [](const RdPoint& a, const RdPoint& b) { return a.psnr < b.psnr; });
        for (const auto& p : pts) {
            if (p.bpp <= 0.0) throw ConfigError("bd-rate: non-positive rate");
            if (!x.empty() && p.psnr <= x.back())
                throw ConfigError("bd-rate: PSNR values must be distinct");
            x.push_back(p.psnr);
            y.push_back(std::log10(p.bpp));
        }
    };
    std::vector<double> xa, ya, xt, yt;
    prepare(anchor, xa, ya);
    prepare(test, xt, yt);
    const double lo = std::max(xa.front(), xt.front());
    const double hi = std::min(xa.back(), xt.back());
    if (lo >= hi) throw ConfigError("bd-rate: PSNR ranges do not overlap");
    const double ia = bd_detail::pchip_integral(xa, ya, lo, hi);
    const double it = bd_detail::pchip_integral(xt, yt, lo, hi);
    const double avg_diff = (it - ia) / (hi - lo);
    return 100.0 * (std::pow(10.0, avg_diff) - 1.0);
}

// ---------------------------------------------------------------------------
// Sweep CSV: lambda,bpp,psnr,file_bytes,nn_bytes,iters,seconds
// ---------------------------------------------------------------------------

inline constexpr const char* kSweepCsvHeader = "lambda,bpp,psnr,file_bytes,nn_bytes,iters,seconds";

inline std::string sweep_csv(const std::vector<RdPoint>& rows) {
    std::ostringstream os;
    os << kSweepCsvHeader << "\n";
    os.precision(10);
    for (const auto& p : rows)
        os << p.lambda << "," << p.bpp << "," << p.psnr << "," << p.file_bytes << ","
           << p.nn_bytes << "," << p.iters << "," << p.seconds << "\n";
    return os.str();
}

inline std::vector<RdPoint> parse_sweep_csv(std::istream& in) {
    std::vector<RdPoint> rows;
    std::string line;
    if (!std::getline(in, line)) throw FormatError("csv: empty file");
    if (line.rfind("lambda,", 0) != 0) throw FormatError("csv: unexpected header: " + line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        RdPoint p;
        char comma;
        if (!(ls >> p.lambda >> comma >> p.bpp >> comma >> p.psnr >> comma >> p.file_bytes >>
              comma >> p.nn_bytes >> comma >> p.iters >> comma >> p.seconds))
            throw FormatError("csv: malformed row: " + line);
        rows.push_back(p);
    }
    return rows;
}

inline std::vector<RdPoint> load_sweep_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    return parse_sweep_csv(in);
}

}  // namespace coolcodec

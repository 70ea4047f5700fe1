#include "codelab/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "codelab/csv.hpp"

namespace codelab {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 180, kTop = 40, kBottom = 55;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    if (std::fabs(v) < 1e-12) v = 0.0;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish() {
        if (!(lo <= hi)) {
            lo = 0.0;
            hi = 1.0;
            return;
        }
        if (lo == hi) {
            const double pad = lo == 0.0 ? 0.5 : 0.05 * std::fabs(lo);
            lo -= pad;
            hi += pad;
            return;
        }
        const double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
};

double nice_step(double span) {
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double f = raw / mag;
    return (f < 1.5 ? 1.0 : f < 3.5 ? 2.0 : f < 7.5 ? 5.0 : 10.0) * mag;
}

std::vector<double> ticks(const Range& r) {
    const double step = nice_step(r.hi - r.lo);
    std::vector<double> out;
    for (double k = std::ceil(r.lo / step); k * step <= r.hi + 1e-9 * step; k += 1.0) out.push_back(k * step);
    return out;
}

}  // namespace

std::string render_svg(const PlotSpec& spec, const std::vector<Series>& series) {
    std::vector<std::vector<std::pair<double, double>>> pts(series.size());
    Range xr, yr;
    for (std::size_t s = 0; s < series.size(); ++s) {
        for (auto [x, y] : series[s].points) {
            if (spec.log_y) {
                if (!(y > 0.0)) continue;
                y = std::log10(y);
            }
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            pts[s].emplace_back(x, y);
            xr.add(x);
            yr.add(y);
        }
    }
    xr.finish();
    yr.finish();

    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto py = [&](double y) { return kTop + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << fixed2(kLeft + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(spec.title) << "</text>\n";
    o << "<rect x=\"" << fixed2(kLeft) << "\" y=\"" << fixed2(kTop) << "\" width=\"" << fixed2(pw) << "\" height=\""
      << fixed2(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double t : ticks(xr)) {
        const std::string x = fixed2(px(t));
        o << "<line x1=\"" << x << "\" y1=\"" << fixed2(kTop + ph) << "\" x2=\"" << x << "\" y2=\""
          << fixed2(kTop + ph + 5) << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << x << "\" y=\"" << fixed2(kTop + ph + 18) << "\" text-anchor=\"middle\">"
          << tick_label(t) << "</text>\n";
    }
    for (double t : ticks(yr)) {
        const std::string y = fixed2(py(t));
        o << "<line x1=\"" << fixed2(kLeft - 5) << "\" y1=\"" << y << "\" x2=\"" << fixed2(kLeft) << "\" y2=\"" << y
          << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << fixed2(kLeft - 8) << "\" y=\"" << fixed2(py(t) + 4) << "\" text-anchor=\"end\">"
          << tick_label(t) << "</text>\n";
    }
    o << "<text x=\"" << fixed2(kLeft + pw / 2) << "\" y=\"" << fixed2(kHeight - 12)
      << "\" text-anchor=\"middle\">" << escape(spec.x_label) << "</text>\n";
    const std::string ylabel = spec.log_y ? "log10 " + spec.y_label : spec.y_label;
    o << "<text transform=\"translate(18 " << fixed2(kTop + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(ylabel) << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % std::size(kPalette)];
        if (pts[s].size() >= 2) {
            o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < pts[s].size(); ++i)
                o << (i ? " " : "") << fixed2(px(pts[s][i].first)) << ',' << fixed2(py(pts[s][i].second));
            o << "\"/>\n";
        }
        for (const auto& [x, y] : pts[s])
            o << "<circle cx=\"" << fixed2(px(x)) << "\" cy=\"" << fixed2(py(y)) << "\" r=\"3\" fill=\"" << color
              << "\"/>\n";
        const double ly = kTop + 10 + 18 * static_cast<double>(s);
        o << "<line x1=\"" << fixed2(kLeft + pw + 12) << "\" y1=\"" << fixed2(ly) << "\" x2=\""
          << fixed2(kLeft + pw + 32) << "\" y2=\"" << fixed2(ly) << "\" stroke=\"" << color
          << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << fixed2(kLeft + pw + 38) << "\" y=\"" << fixed2(ly + 4) << "\">"
          << escape(series[s].label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::vector<Series> metrics_series(const std::vector<MetricsRow>& rows, double MetricsRow::*y_field) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const MetricsRow*>> groups;
    for (const MetricsRow& r : rows) {
        std::string label = r.method;
        if (r.method == "code" || r.method == "code_eta") label += " B=" + std::to_string(r.block);
        if (r.method == "code_eta") label += " eta=" + tick_label(r.eta);
        auto [it, fresh] = groups.try_emplace(label);
        if (fresh) order.push_back(label);
        it->second.push_back(&r);
    }
    std::vector<Series> out;
    for (const std::string& label : order) {
        auto& members = groups[label];
        std::stable_sort(members.begin(), members.end(), [](const MetricsRow* a, const MetricsRow* b) {
            return std::tie(a->n, a->scale) < std::tie(b->n, b->scale);
        });
        Series s{label, {}};
        for (const MetricsRow* r : members) s.points.emplace_back(r->kl_fit, r->*y_field);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace codelab

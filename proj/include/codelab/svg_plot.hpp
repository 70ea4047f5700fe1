#pragma once

#include <string>
#include <utility>
#include <vector>

#include "codelab/metrics.hpp"

namespace codelab {

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;  // drawn in this order
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;  // plot log10(y); non-positive values are dropped
};

/// Line chart with markers, axes, ticks and a legend. The output depends
/// only on the arguments, so equal input gives byte-identical files.
std::string render_svg(const PlotSpec& spec, const std::vector<Series>& series);

/// Groups sweep rows into one curve per method setting, with points sorted
/// by the swept parameter (N, then scale).
std::vector<Series> metrics_series(const std::vector<MetricsRow>& rows, double MetricsRow::*y_field);

}  // namespace codelab

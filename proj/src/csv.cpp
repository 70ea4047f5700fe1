#include "codelab/csv.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <system_error>

namespace codelab {

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

const std::vector<std::string>& metrics_columns() {
    static const std::vector<std::string> cols = {
        "method",      "n",          "block",      "eta",         "scale",          "seed",
        "expected_reward", "normalized_reward", "win_rate", "kl_fit", "kl_bound", "variance_x",
        "variance_y",  "model_evals", "reward_queries", "wall_ms"};
    return cols;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
    const auto& cols = metrics_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
    for (const MetricsRow& r : rows) {
        out << r.method << ',' << r.n << ',' << r.block << ',' << format_number(r.eta) << ','
            << format_number(r.scale) << ',' << r.seed << ',' << format_number(r.expected_reward) << ','
            << format_number(r.normalized_reward) << ',' << format_number(r.win_rate) << ','
            << format_number(r.kl_fit) << ',' << format_number(r.kl_bound) << ',' << format_number(r.variance_x)
            << ',' << format_number(r.variance_y) << ',' << r.model_evals << ',' << r.reward_queries << ','
            << format_number(r.wall_ms) << '\n';
    }
}

std::vector<std::string> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        cells.emplace_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

namespace {

template <class T>
T parse_cell(const std::string& cell, const std::string& column, std::size_t line_no) {
    T v{};
    const char* end = cell.data() + cell.size();
    if constexpr (std::is_floating_point_v<T>) {
        if (cell == "nan") return std::numeric_limits<T>::quiet_NaN();
        if (cell == "inf") return std::numeric_limits<T>::infinity();
        if (cell == "-inf") return -std::numeric_limits<T>::infinity();
    }
    const auto res = std::from_chars(cell.data(), end, v);
    if (cell.empty() || res.ec != std::errc() || res.ptr != end)
        throw SchemaError("column '" + column + "' line " + std::to_string(line_no) + ": cannot parse '" + cell +
                          "'");
    return v;
}

}  // namespace

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
    const auto& cols = metrics_columns();
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("missing header; expected column '" + cols.front() + "'");
    const auto header = split_csv_line(line);
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (i >= header.size()) throw SchemaError("missing column '" + cols[i] + "'");
        if (header[i] != cols[i])
            throw SchemaError("unexpected column '" + header[i] + "' at position " + std::to_string(i + 1) +
                              "; expected '" + cols[i] + "'");
    }
    if (header.size() > cols.size()) throw SchemaError("unexpected column '" + header[cols.size()] + "'");

    std::vector<MetricsRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto c = split_csv_line(line);
        if (c.size() != cols.size())
            throw SchemaError("line " + std::to_string(line_no) + " has " + std::to_string(c.size()) +
                              " cells; column '" + cols[std::min(c.size(), cols.size() - 1)] + "' is " +
                              (c.size() < cols.size() ? "missing" : "extra"));
        MetricsRow r;
        std::size_t k = 0;
        r.method = c[k++];
        if (r.method.empty()) throw SchemaError("column 'method' line " + std::to_string(line_no) + " is empty");
        auto num = [&]<class T>(T& field) {
            field = parse_cell<T>(c[k], cols[k], line_no);
            ++k;
        };
        num(r.n);
        num(r.block);
        num(r.eta);
        num(r.scale);
        num(r.seed);
        num(r.expected_reward);
        num(r.normalized_reward);
        num(r.win_rate);
        num(r.kl_fit);
        num(r.kl_bound);
        num(r.variance_x);
        num(r.variance_y);
        num(r.model_evals);
        num(r.reward_queries);
        num(r.wall_ms);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_points_csv(std::ostream& out, const std::vector<Point2>& points) {
    out << "x,y\n";
    for (const Point2& p : points) out << format_number(p.x) << ',' << format_number(p.y) << '\n';
}

}  // namespace codelab

#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "codelab/metrics.hpp"
#include "codelab/types.hpp"

namespace codelab {

/// CSV content that does not match the expected columns or value types.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Shortest decimal form that parses back to the same double ("nan" and
/// "inf" for the non-finite values).
std::string format_number(double v);

/// Column names of MetricsRow, in file order.
const std::vector<std::string>& metrics_columns();

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

/// Parses a file written by write_metrics_csv. A wrong header or an
/// unparsable cell throws SchemaError naming the column.
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

/// Two-column "x,y" table.
void write_points_csv(std::ostream& out, const std::vector<Point2>& points);

/// Splits one line on commas (no quoting; none of our fields need it).
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace codelab

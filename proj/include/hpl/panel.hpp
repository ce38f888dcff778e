#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace hpl {

struct PanelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Balanced N x T panel. x (and optional y) are stored row-major by unit.
// Immutable after construction; safe to share across threads.
struct PanelData {
  int n_units = 0;
  int n_periods = 0;
  std::vector<double> x;
  std::vector<double> y;  // empty when no response was supplied
  std::vector<std::string> unit_ids;

  bool has_y() const { return !y.empty(); }
  double x_at(int i, int t) const { return x[static_cast<std::size_t>(i) * n_periods + t]; }
  double y_at(int i, int t) const { return y[static_cast<std::size_t>(i) * n_periods + t]; }
};

struct ColumnMap {
  std::string id = "id";
  std::string time = "t";
  std::string x = "x";
  std::string y;  // empty: no response column
};

// Long-format CSV with a header row. Units are re-indexed 0..N-1 in sorted-id
// order and every unit must carry the same set of time indices.
PanelData load_panel(std::istream& in, const ColumnMap& cols);
PanelData load_panel_file(const std::string& path, const ColumnMap& cols);

// Conditional geometry of the covariate: everything downstream of the data
// depends on x only through these fields.
struct CovariateSummary {
  std::vector<double> unit_means;
  double grand_mean = 0.0;
  double ssb = 0.0;
  double ssw = 0.0;
  double ratio_r = 0.0;
  int n_units = 0;
  int n_periods = 0;
};

CovariateSummary summarize(const PanelData& data);

}  // namespace hpl

#include "hpl/panel.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

#include "hpl/rng.hpp"

namespace hpl {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  out.push_back(field);
  for (auto& f : out) {
    std::size_t b = f.find_first_not_of(" \t");
    std::size_t e = f.find_last_not_of(" \t");
    f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

double parse_number(const std::string& s, long row, const std::string& col) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end == nullptr || *end != '\0') {
    throw PanelError("non-numeric value '" + s + "' in column '" + col + "' at data row " +
                     std::to_string(row));
  }
  return v;
}

}  // namespace

PanelData load_panel(std::istream& in, const ColumnMap& cols) {
  std::string line;
  if (!std::getline(in, line)) throw PanelError("empty input: header row required");
  auto header = split_csv_line(line);
  auto col_index = [&](const std::string& name) -> int {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw PanelError("column '" + name + "' not found in header");
    return static_cast<int>(it - header.begin());
  };
  int ci = col_index(cols.id);
  int ct = col_index(cols.time);
  int cx = col_index(cols.x);
  int cy = cols.y.empty() ? -1 : col_index(cols.y);

  struct Cell {
    double x;
    double y;
  };
  // unit id -> time -> cell
  std::map<std::string, std::map<double, Cell>> table;
  long row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    int needed = std::max({ci, ct, cx, cy});
    if (static_cast<int>(fields.size()) <= needed)
      throw PanelError("too few columns at data row " + std::to_string(row));
    const std::string& id = fields[ci];
    double t = parse_number(fields[ct], row, cols.time);
    Cell cell{parse_number(fields[cx], row, cols.x),
              cy >= 0 ? parse_number(fields[cy], row, cols.y) : 0.0};
    auto [it, inserted] = table[id].emplace(t, cell);
    if (!inserted)
      throw PanelError("duplicate (id, time) pair for unit '" + id + "' at data row " +
                       std::to_string(row));
  }
  if (table.size() < 2) throw PanelError("panel must contain at least 2 units");

  // Balance check: every unit must carry the same ordered time set.
  const auto& ref_times = table.begin()->second;
  std::size_t T = ref_times.size();
  if (T < 2) throw PanelError("panel must contain at least 2 time periods");
  for (const auto& [id, times] : table) {
    if (times.size() != T)
      throw PanelError("unbalanced panel: unit '" + id + "' has " + std::to_string(times.size()) +
                       " rows, expected " + std::to_string(T));
    auto it = ref_times.begin();
    for (const auto& [t, cell] : times) {
      if (t != it->first)
        throw PanelError("unbalanced panel: unit '" + id + "' has time index mismatch");
      ++it;
    }
  }

  PanelData data;
  data.n_units = static_cast<int>(table.size());
  data.n_periods = static_cast<int>(T);
  data.x.reserve(table.size() * T);
  if (cy >= 0) data.y.reserve(table.size() * T);
  for (const auto& [id, times] : table) {
    data.unit_ids.push_back(id);
    for (const auto& [t, cell] : times) {
      data.x.push_back(cell.x);
      if (cy >= 0) data.y.push_back(cell.y);
    }
  }
  return data;
}

PanelData load_panel_file(const std::string& path, const ColumnMap& cols) {
  std::ifstream in(path);
  if (!in) throw PanelError("cannot open dataset file: " + path);
  return load_panel(in, cols);
}

CovariateSummary summarize(const PanelData& data) {
  const int N = data.n_units;
  const int T = data.n_periods;
  CovariateSummary s;
  s.n_units = N;
  s.n_periods = T;
  s.unit_means.resize(N);
  KahanSum grand;
  for (int i = 0; i < N; ++i) {
    KahanSum m;
    for (int t = 0; t < T; ++t) m.add(data.x_at(i, t));
    s.unit_means[i] = m.value() / T;
    grand.add(s.unit_means[i]);
  }
  s.grand_mean = grand.value() / N;
  KahanSum ssb, ssw;
  for (int i = 0; i < N; ++i) {
    double d = s.unit_means[i] - s.grand_mean;
    ssb.add(d * d);
    for (int t = 0; t < T; ++t) {
      double e = data.x_at(i, t) - s.unit_means[i];
      ssw.add(e * e);
    }
  }
  s.ssb = ssb.value();
  s.ssw = ssw.value();
  if (s.ssw <= 0.0)
    throw PanelError("degenerate covariate: SSW = 0 (x constant within every unit)");
  if (s.ssb <= 0.0) throw PanelError("degenerate covariate: SSB = 0 (all unit means equal)");
  s.ratio_r = s.ssb / s.ssw;
  return s;
}

}  // namespace hpl

#include "pairlearn/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "pairlearn/schedule.hpp"

namespace pairlearn {

std::string cell_label(const Cell& c) {
  return std::string(to_string(c.feature)) + "/" + std::string(to_string(c.alignment)) + "/" +
         std::to_string(c.supervision);
}

std::vector<Cell> all_cells() {
  std::vector<Cell> cells;
  for (Feature f : kAllFeatures)
    for (Alignment a : kAllAlignments)
      for (const auto& lvl : kAllSupervisionLevels) cells.push_back({f, a, lvl.labeled_count()});
  return cells;
}

ConditionResult evaluate_test_set(const ModelParams& params, const std::vector<TestPair>& pairs,
                                  const std::vector<RenderedPair>& images) {
  const SiameseNet net(params.config);
  return score_test_set(pairs, images, [&](const Image& half) {
    if (half.width != params.config.input_width || half.height != params.config.input_height)
      throw ShapeMismatch("test image size does not match the encoder input");
    return logistic(net.forward(params, image_to_tensor(half)).logit);
  });
}

CellTable aggregate_table(const std::vector<ConditionResult>& records,
                          const std::vector<Cell>& required) {
  std::map<Cell, std::vector<double>> by_cell;
  for (const auto& r : records) by_cell[r.cell].push_back(r.accuracy);

  std::vector<Cell> missing;
  for (const auto& c : required)
    if (!by_cell.contains(c)) missing.push_back(c);
  if (!missing.empty()) {
    std::string msg = "no records for cell(s):";
    for (const auto& c : missing) msg += " " + cell_label(c);
    throw EmptyCells(msg, missing);
  }

  CellTable t;
  for (auto& [cell, values] : by_cell) {
    // Sort so the mean does not depend on record order.
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / values.size();
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    t[cell] = {mean, values.size() > 1 ? std::sqrt(ss / (values.size() - 1)) : 0.0,
               static_cast<int>(values.size())};
  }
  return t;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string format_accuracy(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  const auto dot = s.find('.');
  if (dot == std::string::npos) s += ".00";
  else if (s.size() - dot - 1 < 2) s.append(2 - (s.size() - dot - 1), '0');
  return s;
}

}  // namespace

HumanTable ingest_human_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty file");
  const std::vector<std::string> expected = {"feature", "alignment", "supervision", "accuracy"};
  if (split_csv_line(line) != expected)
    throw SchemaError(path.string() + ":1: header must be feature,alignment,supervision,accuracy");

  HumanTable t;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(row) + ": ";
    if (f.size() != 4)
      throw SchemaError(where + "expected 4 columns, found " + std::to_string(f.size()));
    Cell c;
    try {
      c.feature = parse_feature(f[0]);
    } catch (const std::invalid_argument& e) {
      throw SchemaError(where + "column 'feature': " + e.what());
    }
    try {
      c.alignment = parse_alignment(f[1]);
    } catch (const std::invalid_argument& e) {
      throw SchemaError(where + "column 'alignment': " + e.what());
    }
    if (f[2] != "1" && f[2] != "3" && f[2] != "6")
      throw SchemaError(where + "column 'supervision': expected 1, 3 or 6, got '" + f[2] + "'");
    c.supervision = f[2][0] - '0';
    double acc = 0.0;
    const auto [ptr, ec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), acc);
    if (ec != std::errc() || ptr != f[3].data() + f[3].size())
      throw SchemaError(where + "column 'accuracy': '" + f[3] + "' is not a number");
    if (!(acc >= 0.0 && acc <= 1.0))
      throw SchemaError(where + "column 'accuracy': " + f[3] + " is outside [0, 1]");
    if (t.accuracy.contains(c))
      throw SchemaError(where + "duplicate cell " + cell_label(c));
    t.accuracy[c] = acc;
  }
  for (const auto& c : all_cells())
    if (!t.accuracy.contains(c)) t.warnings.push_back("missing human cell " + cell_label(c));
  return t;
}

std::string format_human_table(const HumanTable& t) {
  std::string out = "feature,alignment,supervision,accuracy\n";
  for (const auto& c : all_cells()) {
    const auto it = t.accuracy.find(c);
    if (it == t.accuracy.end()) continue;
    out += std::string(to_string(c.feature)) + "," + std::string(to_string(c.alignment)) + "," +
           std::to_string(c.supervision) + "," + format_accuracy(it->second) + "\n";
  }
  return out;
}

}  // namespace pairlearn

#include "pairlearn/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

namespace pairlearn::report {

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

namespace {

std::string prov_columns_header() { return ",config_hash,tool_version\n"; }
std::string prov_columns(const Provenance& p) { return "," + p.config_hash + "," + p.tool_version + "\n"; }

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string cell_cols(const Cell& c) {
  return std::string(to_string(c.feature)) + "," + std::string(to_string(c.alignment)) + "," +
         std::to_string(c.supervision);
}

}  // namespace

std::string results_csv(const std::vector<RunRecord>& records, const Provenance& prov) {
  std::string out =
      "run_id,feature,alignment,supervision,seed,plan_id,category,status,correct,total,accuracy,"
      "final_loss,epochs" +
      prov_columns_header();
  for (const auto& r : records) {
    out += csv_escape(r.run_id) + "," + cell_cols(r.cell) + "," + std::to_string(r.seed) + "," +
           r.plan_id + "," + csv_escape(r.category) + "," + r.status + "," + std::to_string(r.correct) +
           "," + std::to_string(r.total) + "," + fmt(r.accuracy) + "," +
           (r.loss_curve.empty() ? std::string("NA") : fmt(r.loss_curve.back())) + "," +
           std::to_string(r.epochs) + prov_columns(prov);
  }
  return out;
}

std::string table1_csv(const CellTable& cnn, const HumanTable* human, const Provenance& prov) {
  std::string out = "feature";
  for (Alignment a : kAllAlignments)
    for (int s : {1, 3, 6})
      out += ",human_" + std::string(to_string(a)) + "_" + std::to_string(s) + ",cnn_" +
             std::string(to_string(a)) + "_" + std::to_string(s);
  out += prov_columns_header();
  for (Feature f : kAllFeatures) {
    out += std::string(to_string(f));
    for (Alignment a : kAllAlignments)
      for (int s : {1, 3, 6}) {
        const Cell c{f, a, s};
        out += ",";
        if (human) {
          const auto it = human->accuracy.find(c);
          if (it != human->accuracy.end()) out += fmt(it->second);
        }
        out += ",";
        const auto jt = cnn.find(c);
        if (jt != cnn.end()) out += fmt(jt->second.mean);
      }
    out += prov_columns(prov);
  }
  return out;
}

std::string cell_means_csv(const CellTable& cnn, const CellIntervals& ci, const HumanTable* human,
                           const Provenance& prov) {
  std::string out = "feature,alignment,supervision,mean,sd,n,ci_lower,ci_upper,human" + prov_columns_header();
  for (const Cell& c : all_cells()) {
    const auto it = cnn.find(c);
    if (it == cnn.end()) continue;
    out += cell_cols(c) + "," + fmt(it->second.mean) + "," + fmt(it->second.sd) + "," +
           std::to_string(it->second.n) + ",";
    if (const auto j = ci.find(c); j != ci.end()) out += fmt(j->second.lower) + "," + fmt(j->second.upper);
    else out += "NA,NA";
    out += ",";
    if (human)
      if (const auto h = human->accuracy.find(c); h != human->accuracy.end()) out += fmt(h->second);
    out += prov_columns(prov);
  }
  return out;
}

std::string coefficients_csv(const FactorialFit& fit, const Provenance& prov) {
  std::string out = "term,estimate,std_error,t_value,p_value,df_residual,reference" + prov_columns_header();
  for (const auto& c : fit.coefficients)
    out += csv_escape(c.term) + "," + fmt(c.estimate) + "," + fmt(c.std_error) + "," + fmt(c.t_value) +
           "," + fmt(c.p_value) + "," + std::to_string(fit.df_residual) + "," +
           csv_escape(fit.reference_cell) + prov_columns(prov);
  return out;
}

std::string marginal_means_csv(const MarginalMeans& mm, const Provenance& prov) {
  std::string by;
  for (const auto& b : mm.by) by += (by.empty() ? "" : ":") + b;
  std::string out = "by,level,mean,std_error,ci_lower,ci_upper,confidence" + prov_columns_header();
  for (const auto& m : mm.means)
    out += csv_escape(by) + "," + csv_escape(m.label) + "," + fmt(m.mean) + "," + fmt(m.std_error) + "," +
           fmt(m.lower) + "," + fmt(m.upper) + "," + fmt(mm.confidence) + prov_columns(prov);
  return out;
}

std::string contrasts_csv(const MarginalMeans& mm, const Provenance& prov) {
  std::string by;
  for (const auto& b : mm.by) by += (by.empty() ? "" : ":") + b;
  std::string out = "by,first,second,estimate,std_error,t_value,p_value,p_bonferroni" + prov_columns_header();
  for (const auto& c : mm.contrasts)
    out += csv_escape(by) + "," + csv_escape(c.first) + "," + csv_escape(c.second) + "," +
           fmt(c.estimate) + "," + fmt(c.std_error) + "," + fmt(c.t_value) + "," + fmt(c.p_value) +
           "," + fmt(c.p_bonferroni) + prov_columns(prov);
  return out;
}

// --- intervals ------------------------------------------------------------------

CellIntervals model_intervals(const FactorialFit& fit, double confidence) {
  const MarginalMeans mm = marginal_means(fit, {"trait", "alignment", "supervision"}, confidence);
  static constexpr Feature traits[] = {Feature::shape, Feature::size, Feature::pattern};
  static constexpr int levels[] = {1, 3, 6};
  CellIntervals out;
  for (const auto& m : mm.means) {
    const Cell c{traits[m.levels[0]], kAllAlignments[m.levels[1]], levels[m.levels[2]]};
    out[c] = {m.lower, m.upper};
  }
  return out;
}

CellIntervals per_cell_intervals(const CellTable& t, double confidence) {
  CellIntervals out;
  for (const auto& [c, s] : t) {
    if (s.n < 2) {
      out[c] = {s.mean, s.mean};
      continue;
    }
    const boost::math::students_t dist(s.n - 1);
    const double q = boost::math::quantile(boost::math::complement(dist, (1 - confidence) / 2));
    const double h = q * s.sd / std::sqrt(static_cast<double>(s.n));
    out[c] = {s.mean - h, s.mean + h};
  }
  return out;
}

CellIntervals bootstrap_intervals(const std::vector<ConditionResult>& records, int resamples,
                                  std::uint64_t seed, double confidence) {
  if (resamples < 1) throw std::invalid_argument("bootstrap needs at least one resample");
  std::map<Cell, std::vector<double>> by_cell;
  for (const auto& r : records) by_cell[r.cell].push_back(r.accuracy);
  std::mt19937_64 rng(seed);
  CellIntervals out;
  for (auto& [c, v] : by_cell) {
    std::sort(v.begin(), v.end());
    std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
    std::vector<double> means(static_cast<std::size_t>(resamples));
    for (auto& m : means) {
      double s = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) s += v[pick(rng)];
      m = s / v.size();
    }
    std::sort(means.begin(), means.end());
    const double alpha = (1 - confidence) / 2;
    auto at = [&](double q) {
      const auto idx = static_cast<std::size_t>(std::clamp(q * (means.size() - 1), 0.0, means.size() - 1.0));
      return means[idx];
    };
    out[c] = {at(alpha), at(1 - alpha)};
  }
  return out;
}

// --- figures ------------------------------------------------------------------

namespace {

constexpr const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

}  // namespace

std::string accuracy_figure_svg(const CellTable& means, const CellIntervals& ci, Facet facet,
                                const std::string& title, const Provenance& prov) {
  std::vector<std::string> panel_names, series_names;
  auto cell_for = [&](std::size_t panel, std::size_t series, int sup) {
    if (facet == Facet::by_alignment) return Cell{kAllFeatures[series], kAllAlignments[panel], sup};
    return Cell{kAllFeatures[panel], kAllAlignments[series], sup};
  };
  if (facet == Facet::by_alignment) {
    for (Alignment a : kAllAlignments) panel_names.push_back(std::string(to_string(a)) + " alignment");
    for (Feature f : kAllFeatures) series_names.emplace_back(to_string(f));
  } else {
    for (Feature f : kAllFeatures) panel_names.emplace_back(to_string(f));
    for (Alignment a : kAllAlignments) series_names.push_back(std::string(to_string(a)) + " alignment");
  }

  const double pw = 260, ph = 220, left = 60, top = 50, gap = 30, bottom = 70;
  const double width = left + panel_names.size() * (pw + gap) + 110;
  const double height = top + ph + bottom;
  const int sups[] = {1, 3, 6};
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<desc>config_hash=" << prov.config_hash << " tool_version=" << prov.tool_version << "</desc>\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
    << "</text>\n";

  for (std::size_t p = 0; p < panel_names.size(); ++p) {
    const double x0 = left + p * (pw + gap);
    auto xpos = [&](int i) { return x0 + 30 + i * (pw - 60) / 2.0; };
    auto ypos = [&](double v) { return top + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };
    s << "<rect x=\"" << x0 << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    s << "<text x=\"" << x0 + pw / 2 << "\" y=\"" << top - 8 << "\" text-anchor=\"middle\">"
      << panel_names[p] << "</text>\n";
    for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      s << "<line x1=\"" << x0 - 4 << "\" x2=\"" << x0 << "\" y1=\"" << ypos(t) << "\" y2=\"" << ypos(t)
        << "\" stroke=\"#444\"/>\n";
      if (p == 0)
        s << "<text x=\"" << x0 - 7 << "\" y=\"" << ypos(t) + 4 << "\" text-anchor=\"end\">" << t
          << "</text>\n";
    }
    // chance
    s << "<line x1=\"" << x0 << "\" x2=\"" << x0 + pw << "\" y1=\"" << ypos(kChanceLevel) << "\" y2=\""
      << ypos(kChanceLevel) << "\" stroke=\"#777\" stroke-dasharray=\"2,3\"/>\n";
    for (int i = 0; i < 3; ++i)
      s << "<text x=\"" << xpos(i) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
        << sups[i] << "/6</text>\n";
    s << "<text x=\"" << x0 + pw / 2 << "\" y=\"" << top + ph + 34
      << "\" text-anchor=\"middle\">supervised trials</text>\n";

    for (std::size_t k = 0; k < series_names.size(); ++k) {
      const char* col = kSeriesColors[k % 4];
      const double jitter = (static_cast<double>(k) - (series_names.size() - 1) / 2.0) * 5.0;
      std::string path;
      for (int i = 0; i < 3; ++i) {
        const Cell c = cell_for(p, k, sups[i]);
        const auto m = means.find(c);
        if (m == means.end()) continue;
        const double x = xpos(i) + jitter;
        path += (path.empty() ? "M" : " L") + fmt(x) + "," + fmt(ypos(m->second.mean));
        if (const auto e = ci.find(c); e != ci.end()) {
          const double y1 = ypos(e->second.lower), y2 = ypos(e->second.upper);
          s << "<line x1=\"" << x << "\" x2=\"" << x << "\" y1=\"" << y1 << "\" y2=\"" << y2
            << "\" stroke=\"" << col << "\"/>\n";
          for (double y : {y1, y2})
            s << "<line x1=\"" << x - 3 << "\" x2=\"" << x + 3 << "\" y1=\"" << y << "\" y2=\"" << y
              << "\" stroke=\"" << col << "\"/>\n";
        }
        s << "<circle cx=\"" << x << "\" cy=\"" << ypos(m->second.mean) << "\" r=\"3.5\" fill=\"" << col
          << "\"/>\n";
      }
      if (!path.empty())
        s << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\"/>\n";
    }
  }
  const double lx = left + panel_names.size() * (pw + gap);
  for (std::size_t k = 0; k < series_names.size(); ++k) {
    const double y = top + 14 + k * 18.0;
    s << "<line x1=\"" << lx << "\" x2=\"" << lx + 18 << "\" y1=\"" << y << "\" y2=\"" << y
      << "\" stroke=\"" << kSeriesColors[k % 4] << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << lx + 24 << "\" y=\"" << y + 4 << "\">" << series_names[k] << "</text>\n";
  }
  s << "<text x=\"" << left - 45 << "\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 " << left - 45
    << " " << top + ph / 2 << ")\" text-anchor=\"middle\">accuracy</text>\n";
  s << "<text x=\"8\" y=\"" << height - 8 << "\" font-size=\"9\" fill=\"#666\">config " << prov.config_hash
    << " | pairlearn " << prov.tool_version << " | dotted line: chance (0.5)</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace pairlearn::report

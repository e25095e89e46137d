#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "touchfetch/harness.hpp"

namespace touchfetch {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v, int precision = 6) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

nlohmann::json num_or_na(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("n/a"); }

double from_num_or_na(const nlohmann::json& j) { return j.is_number() ? j.get<double>() : kNaN; }

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

SummaryStat summarize(const std::vector<double>& samples) {
  SummaryStat s;
  s.n = static_cast<int>(samples.size());
  if (s.n == 0) {
    s.mean = s.se = kNaN;
    return s;
  }
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean = sum / s.n;
  if (s.n < 2) {
    s.se = kNaN;
    return s;
  }
  double ss = 0.0;
  for (double v : samples) ss += (v - s.mean) * (v - s.mean);
  s.se = std::sqrt(ss / (s.n - 1)) / std::sqrt(static_cast<double>(s.n));
  return s;
}

void SummaryTable::add(const std::string& metric, const std::vector<double>& samples) {
  stats_[metric] = summarize(samples);
}

const SummaryStat& SummaryTable::at(const std::string& metric) const {
  auto it = stats_.find(metric);
  if (it == stats_.end()) throw std::out_of_range("summary has no metric " + metric);
  return it->second;
}

nlohmann::json SummaryTable::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [metric, s] : stats_) j[metric] = {{"mean", num_or_na(s.mean)}, {"se", num_or_na(s.se)}, {"n", s.n}};
  return j;
}

SummaryTable SummaryTable::from_json(const nlohmann::json& j) {
  SummaryTable t;
  for (const auto& [metric, v] : j.items())
    t.stats_[metric] = SummaryStat{from_num_or_na(v.at("mean")), from_num_or_na(v.at("se")), v.at("n").get<int>()};
  return t;
}

SummaryTable summarize_trials(const std::vector<TrialRecord>& trials) {
  std::vector<double> loc, err, pert, id, taps, grasp, pipe;
  bool any_loc = false, any_id = false, any_grasp = false;
  for (const auto& r : trials) {
    if (r.has_localization) {
      any_loc = true;
      loc.push_back(r.loc_success ? 1.0 : 0.0);
      if (std::isfinite(r.loc_error)) err.push_back(r.loc_error);
      pert.push_back(r.perturbation);
    }
    if (r.has_identification) {
      any_id = true;
      id.push_back(r.id_correct ? 1.0 : 0.0);
      taps.push_back(r.taps);
    }
    if (r.has_grasp) {
      any_grasp = true;
      grasp.push_back(r.grasp_success ? 1.0 : 0.0);
      pipe.push_back(r.pipeline_success ? 1.0 : 0.0);
    }
  }
  SummaryTable t;
  if (any_loc) {
    t.add("loc_success", loc);
    t.add("loc_error", err);
    t.add("perturbation", pert);
  }
  if (any_id) {
    t.add("id_accuracy", id);
    t.add("taps", taps);
  }
  if (any_grasp) {
    t.add("grasp_success", grasp);
    t.add("pipeline_success", pipe);
  }
  return t;
}

std::string trials_csv(const std::vector<TrialRecord>& trials) {
  std::ostringstream o;
  o << kTrialsCsvHeader << '\n';
  for (const auto& r : trials) {
    o << r.condition << ',' << r.trial << ',' << r.seed << ',' << (r.has_localization ? (r.loc_success ? "1" : "0") : "")
      << ',' << (r.has_localization ? fmt(r.loc_error) : "") << ',' << (r.has_localization ? fmt(r.perturbation) : "")
      << ',' << r.identified << ',' << r.truth << ',' << (r.has_identification ? (r.id_correct ? "1" : "0") : "")
      << ',' << r.taps << ',' << (r.has_grasp ? (r.grasp_success ? "1" : "0") : "") << ','
      << (r.has_grasp ? (r.pipeline_success ? "1" : "0") : "") << '\n';
  }
  return o.str();
}

nlohmann::json summary_json(const ExperimentConfig& cfg, const ExperimentResult& result) {
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& [name, t] : result.tables) conds.push_back({{"condition", name}, {"metrics", t.to_json()}});
  return {{"config", to_json(cfg)},
          {"conditions", conds},
          {"violations", result.violations},
          {"wall_time_s", result.wall_time}};
}

ComparisonReport compare_methods(const std::vector<std::pair<std::string, SummaryTable>>& tables) {
  if (tables.empty()) throw std::invalid_argument("compare_methods: no tables");
  const auto& ref = tables.front().second.stats();
  for (const auto& [name, t] : tables) {
    if (t.stats().size() != ref.size())
      throw std::invalid_argument("compare_methods: metric sets differ for " + name);
    for (const auto& [metric, s] : ref)
      if (!t.has(metric)) throw std::invalid_argument("compare_methods: " + name + " lacks metric " + metric);
  }
  ComparisonReport rep;
  std::ostringstream csv;
  csv << "metric";
  for (std::size_t i = 0; i < tables.size(); ++i) {
    csv << ',' << tables[i].first << "_mean," << tables[i].first << "_se";
    if (i > 0) csv << ',' << tables[i].first << "_delta";
  }
  csv << '\n';

  std::vector<std::vector<std::string>> cells{{"metric"}};
  for (std::size_t i = 0; i < tables.size(); ++i) cells[0].push_back(tables[i].first);
  for (const auto& [metric, s0] : ref) {
    std::vector<std::string> row{metric};
    csv << metric;
    for (std::size_t i = 0; i < tables.size(); ++i) {
      const SummaryStat& s = tables[i].second.at(metric);
      std::string cell = fmt(s.mean, 4) + " +/- " + (std::isfinite(s.se) ? fmt(s.se, 4) : "n/a");
      csv << ',' << fmt(s.mean) << ',' << (std::isfinite(s.se) ? fmt(s.se) : "n/a");
      if (i > 0) {
        const double d = s.mean - s0.mean;
        cell += " (" + std::string(d >= 0 ? "+" : "") + fmt(d, 4) + ")";
        csv << ',' << fmt(d);
      }
      row.push_back(cell);
    }
    csv << '\n';
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream text;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      text << row[c];
      if (c + 1 < row.size()) text << std::string(width[c] - row[c].size() + 2, ' ');
    }
    text << '\n';
  }
  rep.text = text.str();
  rep.csv = csv.str();
  return rep;
}

std::string render_metric_svg(const std::vector<std::pair<std::string, SummaryTable>>& tables,
                              const std::string& metric) {
  const double w = 120.0 * static_cast<double>(tables.size()) + 80.0, h = 320.0, base = 270.0, top = 40.0;
  double hi = 0.0;
  for (const auto& [name, t] : tables)
    if (t.has(metric) && std::isfinite(t.at(metric).mean))
      hi = std::max(hi, t.at(metric).mean + (std::isfinite(t.at(metric).se) ? t.at(metric).se : 0.0));
  if (hi <= 0.0) hi = 1.0;
  if (metric == "loc_success" || metric == "id_accuracy" || metric == "pipeline_success") hi = std::max(hi, 1.0);
  auto y = [&](double v) { return base - (base - top) * v / hi; };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  o << "<text x=\"10\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">" << xml_escape(metric) << "</text>\n";
  o << "<line x1=\"40\" y1=\"" << base << "\" x2=\"" << w - 20 << "\" y2=\"" << base << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const auto& [name, t] = tables[i];
    const double x = 60.0 + 120.0 * static_cast<double>(i);
    if (t.has(metric) && std::isfinite(t.at(metric).mean)) {
      const SummaryStat& s = t.at(metric);
      o << "<rect x=\"" << x << "\" y=\"" << y(s.mean) << "\" width=\"80\" height=\"" << base - y(s.mean)
        << "\" fill=\"#4c72b0\"/>\n";
      if (std::isfinite(s.se))
        o << "<line x1=\"" << x + 40 << "\" y1=\"" << y(s.mean - s.se) << "\" x2=\"" << x + 40 << "\" y2=\""
          << y(s.mean + s.se) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
      o << "<text x=\"" << x + 40 << "\" y=\"" << y(s.mean) - 6
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << fmt(s.mean, 3) << "</text>\n";
    }
    o << "<text x=\"" << x + 40 << "\" y=\"" << base + 18
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string render_loss_svg(const std::vector<double>& curve) {
  const double w = 640.0, h = 320.0, left = 50.0, right = 20.0, top = 20.0, bottom = 40.0;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w - left - right << "\" height=\""
    << h - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  if (!curve.empty()) {
    const auto [lo_it, hi_it] = std::minmax_element(curve.begin(), curve.end());
    const double lo = *lo_it, hi = *hi_it > *lo_it ? *hi_it : *lo_it + 1.0;
    o << "<polyline fill=\"none\" stroke=\"#c44e52\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < curve.size(); ++i) {
      const double x = left + (w - left - right) * (curve.size() > 1 ? double(i) / double(curve.size() - 1) : 0.5);
      const double yv = top + (h - top - bottom) * (1.0 - (curve[i] - lo) / (hi - lo));
      o << x << ',' << yv << ' ';
    }
    o << "\"/>\n";
    o << "<text x=\"" << left << "\" y=\"" << h - 12 << "\" font-family=\"sans-serif\" font-size=\"12\">epochs: "
      << curve.size() << ", loss " << fmt(curve.front(), 3) << " -> " << fmt(curve.back(), 3) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace touchfetch

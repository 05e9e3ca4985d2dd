#include "qpeft/evalrank/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "qpeft/error.hpp"
#include "qpeft/evalrank/ttest.hpp"

namespace qpeft {

const ReportRow* EvalReport::find(const std::string& system, const std::string& metric, std::size_t k) const {
  for (const auto& r : rows) {
    if (r.system == system && r.metric == metric && r.k == k) return &r;
  }
  return nullptr;
}

namespace {

std::vector<double> aligned(const MetricResult& m, const std::vector<std::string>& qids) {
  std::vector<double> v;
  v.reserve(qids.size());
  for (const auto& q : qids) {
    auto it = m.per_query.find(q);
    v.push_back(it == m.per_query.end() ? 0.0 : it->second);
  }
  return v;
}

std::optional<double> pvalue(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2) return std::nullopt;
  return paired_ttest(a, b).p;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

}  // namespace

EvalReport make_report(const ScoredRun& retriever, const std::vector<NamedRun>& systems, const Qrels& qrels,
                       const Answers& answers, const Corpus& corpus, const std::vector<std::size_t>& ks,
                       const std::string& upr_name) {
  EvalReport rep;
  std::vector<NamedRun> all{{"retriever", retriever}};
  all.insert(all.end(), systems.begin(), systems.end());

  // Evaluate every system on the retriever's judged queries.
  std::vector<std::string> qids;
  for (const auto& [q, e] : retriever) {
    if (!relevant_docs(qrels, q).empty()) qids.push_back(q);
  }

  struct Scores {
    std::vector<std::pair<std::string, MetricResult>> metrics;
  };
  std::vector<Scores> scores(all.size());
  for (std::size_t s = 0; s < all.size(); ++s) {
    for (auto k : ks) {
      scores[s].metrics.emplace_back("R@" + std::to_string(k), recall_at_k(all[s].run, qrels, k));
      auto h = hit_at_k(all[s].run, answers, corpus, k, &qrels);
      rep.hit_from_qrels = rep.hit_from_qrels || h.qrels_fallback;
      scores[s].metrics.emplace_back("H@" + std::to_string(k), std::move(h));
    }
    rep.per_query.emplace_back(all[s].name, scores[s].metrics);
  }

  std::size_t upr_index = all.size();
  for (std::size_t s = 0; s < all.size(); ++s) {
    if (all[s].name == upr_name) upr_index = s;
  }

  for (std::size_t s = 0; s < all.size(); ++s) {
    for (std::size_t m = 0; m < scores[s].metrics.size(); ++m) {
      const std::size_t k = ks[m / 2];
      const std::string metric = m % 2 == 0 ? "R" : "H";
      const auto mine = aligned(scores[s].metrics[m].second, qids);
      const auto base = aligned(scores[0].metrics[m].second, qids);
      double value = 0.0;
      double base_value = 0.0;
      for (double v : mine) value += v;
      for (double v : base) base_value += v;
      if (!qids.empty()) {
        value /= static_cast<double>(qids.size());
        base_value /= static_cast<double>(qids.size());
      }
      ReportRow row{all[s].name, metric, k, value, pvalue(mine, base), std::nullopt};
      if (upr_index < all.size()) row.p_vs_upr = pvalue(mine, aligned(scores[upr_index].metrics[m].second, qids));
      rep.rows.push_back(row);
      if (s > 0) {
        ReportRow imp = row;
        imp.metric = metric + "_imp";
        imp.value = base_value > 0.0 ? (value - base_value) / base_value * 100.0 : 0.0;
        rep.rows.push_back(imp);
      }
    }
  }
  return rep;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "system,metric,k,value,p_vs_retriever,p_vs_upr\n";
  for (const auto& r : report.rows) {
    out << r.system << ',' << r.metric << ',' << r.k << ',' << fmt(r.value) << ',' << fmt(r.p_vs_retriever) << ','
        << fmt(r.p_vs_upr) << '\n';
  }
  return out.str();
}

void save_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << report_csv(report);
}

EvalReport parse_report_csv(const std::string& csv) {
  EvalReport rep;
  std::istringstream in(csv);
  std::string line;
  int lineno = 0;
  auto opt = [](const std::string& s) -> std::optional<double> {
    if (s == "NA") return std::nullopt;
    return std::stod(s);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "system,metric,k,value,p_vs_retriever,p_vs_upr") throw ParseError("report csv: bad header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw ParseError("report csv:" + std::to_string(lineno) + ": expected 6 fields");
    try {
      rep.rows.push_back({f[0], f[1], static_cast<std::size_t>(std::stoul(f[2])), std::stod(f[3]), opt(f[4]), opt(f[5])});
    } catch (const std::logic_error&) {
      throw ParseError("report csv:" + std::to_string(lineno) + ": bad number");
    }
  }
  return rep;
}

}  // namespace qpeft

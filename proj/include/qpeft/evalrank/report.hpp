#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qpeft/evalrank/metrics.hpp"

namespace qpeft {

/// One CSV row: system,metric,k,value,p_vs_retriever,p_vs_upr.
/// `metric` is R or H for Recall@k / Hit@k, and R_imp or H_imp for the
/// relative improvement over the retriever in percent.
struct ReportRow {
  std::string system;
  std::string metric;
  std::size_t k = 0;
  double value = 0.0;
  std::optional<double> p_vs_retriever;
  std::optional<double> p_vs_upr;

  bool operator==(const ReportRow&) const = default;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  /// per system, per metric key ("R@10"), per-query values
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, MetricResult>>>> per_query;
  bool hit_from_qrels = false;

  const ReportRow* find(const std::string& system, const std::string& metric, std::size_t k) const;
};

struct NamedRun {
  std::string name;
  ScoredRun run;
};

/// Metrics of the retriever run (named "retriever") and every system run at
/// each k, with relative improvement over the retriever and paired t-test
/// p-values against the retriever and against the system named `upr_name`
/// (when present). Per-query vectors are aligned on the retriever's queries.
EvalReport make_report(const ScoredRun& retriever, const std::vector<NamedRun>& systems, const Qrels& qrels,
                       const Answers& answers, const Corpus& corpus, const std::vector<std::size_t>& ks,
                       const std::string& upr_name = "upr");

std::string report_csv(const EvalReport& report);
void save_report_csv(const std::string& path, const EvalReport& report);
/// Parses the rows of a report CSV (per-query data is not serialized).
EvalReport parse_report_csv(const std::string& csv);

}  // namespace qpeft

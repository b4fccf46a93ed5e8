#include "debias/report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace debias {

std::vector<std::string> render_report(const ExperimentRun& run, const std::filesystem::path& out_dir) {
  const auto& r = run.results;
  if (r.empty()) throw Error(ErrorCode::EMPTY_INPUT, "no results to report");
  std::vector<std::string> written;
  const auto emit = [&](const std::string& rel, std::string_view content) {
    detail::write_file(out_dir / rel, content);
    written.push_back(rel);
  };

  for (const auto& train : r.train_datasets) {
    emit("tables/" + detail::file_stem(train) + ".md", render_improvement_markdown(r, train));
    emit("tables/" + detail::file_stem(train) + ".csv", render_improvement_csv(r, train));
  }
  emit("tables/cells.csv", render_cells_csv(r));
  emit("tables/summary.md", render_summary_markdown(r));

  for (const auto& art : run.artifacts) {
    const auto stem = detail::family_stem(art.train_dataset, art.variant);
    std::ostringstream jsonl;
    write_explanations(art.explanations, jsonl);
    emit("explanations/" + stem + ".jsonl", jsonl.str());
    for (std::size_t k = 0; k < art.explanations.size(); ++k) {
      const auto& e = art.explanations[k];
      emit(fmt::format("explanations/{}/{:04d}_{}.html", stem, k, detail::file_stem(e.doc_id)),
           k < art.gold.size() ? render_explanation_html(e, art.gold[k]) : render_explanation_html(e));
    }
    if (art.explanations.empty() || art.global_sum.empty()) continue;
    for (const auto* g : {&art.global_mean, &art.global_sum}) {
      const auto name = stem + "_" + std::string(aggregate_mode_name(g->mode));
      std::ostringstream csv;
      write_global_csv(*g, csv);
      emit("global/" + name + ".csv", csv.str());
      emit("global/" + name + ".html",
           render_global_html(*g, fmt::format("{} [{}] {} |phi|", art.train_dataset, variant_name(art.variant),
                                              aggregate_mode_name(g->mode))));
    }
    emit("audit/" + stem + ".json", to_json(art.audit).dump(2) + "\n");
    emit("audit/" + stem + ".md",
         render_audit_markdown(art.audit, fmt::format("Audit: {} [{}]", art.train_dataset, variant_name(art.variant))));
  }

  emit("results.json", to_json(r).dump(2) + "\n");

  nlohmann::ordered_json manifest;
  manifest["tool"] = "debias-audit";
  manifest["version"] = kToolkitVersion;
  manifest["config_hash"] = config_hash(run.config);
  manifest["config"] = to_json(run.config);
  manifest["libraries"] = {
      {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                    NLOHMANN_JSON_VERSION_PATCH)},
      {"fmt", fmt::format("{}", FMT_VERSION)},
      {"compiler", __VERSION__}};
  manifest["timings_seconds"] = nlohmann::ordered_json::object();
  for (const auto& [label, secs] : run.timings) manifest["timings_seconds"][label] = secs;
  std::sort(written.begin(), written.end());
  manifest["files"] = written;
  detail::write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  written.push_back("manifest.json");
  return written;
}

ExperimentRun load_results(const std::filesystem::path& results_json) {
  std::ifstream in(results_json);
  if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open " + results_json.string());
  ExperimentRun run;
  try {
    run.results = experiment_results_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::INVALID_CONFIG, results_json.filename().string() + ": " + e.what());
  }
  return run;
}

}  // namespace debias

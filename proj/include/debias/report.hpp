#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "debias/audit.hpp"
#include "debias/error.hpp"
#include "debias/harness.hpp"
#include "debias/shapley.hpp"

namespace debias {

// Highlight colour of one token: red pushes toward REAL (negative phi), blue
// toward FAKE (positive phi). Intensity is |phi| over the document's max |phi|.
struct TokenColor {
  enum class Hue { NONE, RED, BLUE };
  Hue hue = Hue::NONE;
  double intensity = 0.0;

  bool operator==(const TokenColor&) const = default;
};

inline std::vector<TokenColor> token_colors(const Explanation& e) {
  double max_abs = 0.0;
  for (double p : e.phi) max_abs = std::max(max_abs, std::abs(p));
  std::vector<TokenColor> out;
  out.reserve(e.phi.size());
  for (double p : e.phi) {
    if (max_abs == 0.0 || p == 0.0) {
      out.push_back({});
      continue;
    }
    out.push_back({p < 0.0 ? TokenColor::Hue::RED : TokenColor::Hue::BLUE, std::abs(p) / max_abs});
  }
  return out;
}

namespace detail {

inline std::string html_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string file_stem(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? "_" : out;
}

inline std::string family_stem(std::string_view train, PipelineVariant v) {
  std::string variant(variant_name(v));
  std::transform(variant.begin(), variant.end(), variant.begin(), [](char c) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  });
  return file_stem(train) + "__" + variant;
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::IO_ERROR, "write failed for " + path.string());
}

inline std::string percent(double fraction) { return fmt::format("{:.2f}", fraction * 100.0); }

inline std::string css_color(const TokenColor& c) {
  if (c.hue == TokenColor::Hue::NONE || c.intensity == 0.0) return "transparent";
  const auto alpha = fmt::format("{:.3f}", c.intensity);
  return c.hue == TokenColor::Hue::RED ? "rgba(220,38,38," + alpha + ")" : "rgba(37,99,235," + alpha + ")";
}

inline constexpr std::string_view kHtmlHead =
    "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n"
    "<style>body{{font-family:sans-serif;max-width:60em;margin:2em auto}}"
    ".tok{{padding:2px 3px;margin:1px;border-radius:3px;display:inline-block}}"
    ".bar{{height:1em;display:inline-block}}td{{padding:2px 6px}}</style>\n</head>\n<body>\n";

}  // namespace detail

inline std::string render_explanation_html(const Explanation& e, std::optional<Label> gold = std::nullopt) {
  std::ostringstream out;
  out << fmt::format(detail::kHtmlHead, detail::html_escape(e.doc_id.empty() ? "explanation" : e.doc_id));
  out << "<h1>" << detail::html_escape(e.doc_id) << "</h1>\n";
  out << fmt::format("<p>P(FAKE) = {:.4f}; empty-input value = {:.4f}; estimator = {}", e.full_value, e.base_value,
                     estimator_name(e.estimator));
  if (gold) out << "; gold = " << label_name(*gold);
  out << "</p>\n<p>Blue tokens push toward FAKE, red tokens toward REAL.</p>\n<p>";
  const auto colors = token_colors(e);
  for (std::size_t i = 0; i < e.tokens.size(); ++i) {
    out << fmt::format("<span class=\"tok\" style=\"background:{}\" title=\"phi={:+.6f}\">{}</span> ",
                       detail::css_color(colors[i]), e.phi[i], detail::html_escape(e.tokens[i]));
  }
  out << "</p>\n</body>\n</html>\n";
  return out.str();
}

inline std::string render_global_html(const GlobalImportance& g, std::string_view title, std::size_t top = 30) {
  std::ostringstream out;
  out << fmt::format(detail::kHtmlHead, detail::html_escape(title));
  out << "<h1>" << detail::html_escape(title) << "</h1>\n";
  out << fmt::format("<p>Top {} tokens by {} |phi|. Bar colour follows the mean signed phi.</p>\n<table>\n",
                     std::min(top, g.size()), aggregate_mode_name(g.mode));
  const auto value = [&](const TokenImportance& t) { return g.mode == AggregateMode::MEAN ? t.mean_abs : t.sum_abs; };
  double max_value = 0.0;
  for (std::size_t i = 0; i < std::min(top, g.size()); ++i) max_value = std::max(max_value, value(g.entries[i]));
  for (std::size_t i = 0; i < std::min(top, g.size()); ++i) {
    const auto& t = g.entries[i];
    const double width = max_value > 0.0 ? 30.0 * value(t) / max_value : 0.0;
    const auto hue = t.class_direction < 0.0 ? "rgb(220,38,38)" : "rgb(37,99,235)";
    out << fmt::format(
        "<tr><td>{}</td><td><span class=\"bar\" style=\"width:{:.3f}em;background:{}\"></span></td>"
        "<td>{:.6f}</td></tr>\n",
        detail::html_escape(t.token), width, hue, value(t));
  }
  out << "</table>\n</body>\n</html>\n";
  return out.str();
}

// Base vs full-methodology table for one training dataset: internal row,
// one row per external dataset, then the external average.
inline std::string render_improvement_markdown(const ExperimentResults& r, std::string_view train) {
  std::ostringstream out;
  out << "# Trained on " << train << "\n\n";
  out << "| Dataset | F1-Base model | F1-After methodology | Improvement |\n";
  out << "|---|---:|---:|---:|\n";
  for (const auto& eval : r.datasets) {
    const auto* before = r.find(train, eval, PipelineVariant::BASELINE);
    const auto* after = r.find(train, eval, PipelineVariant::EXTENDED_PREP_PLUS_NER);
    if (!before || !after) continue;
    std::optional<double> imp;
    if (before->internal) {
      if (const auto it = r.internal_improvements.find(std::string(train)); it != r.internal_improvements.end()) {
        imp = it->second;
      }
    } else if (const auto it = r.improvements.find({std::string(train), eval}); it != r.improvements.end()) {
      imp = it->second;
    }
    out << fmt::format("| {}{} | {} | {} | {} |\n", eval, before->internal ? " (internal)" : "",
                       detail::percent(before->metrics.macro_f1), detail::percent(after->metrics.macro_f1),
                       imp ? fmt::format("{:.2f}%", *imp) : "n/a");
  }
  if (const auto it = r.external_averages.find(std::string(train)); it != r.external_averages.end()) {
    out << fmt::format("| Average Improvement (external) | | | {:.2f}% |\n", it->second);
  }
  out << "\nMacro-F1 in percent. Improvement = (after - before) / before x 100.\n";
  return out.str();
}

inline std::string render_improvement_csv(const ExperimentResults& r, std::string_view train) {
  std::ostringstream out;
  out << "dataset,role,f1_base,f1_after,improvement\n";
  for (const auto& eval : r.datasets) {
    const auto* before = r.find(train, eval, PipelineVariant::BASELINE);
    const auto* after = r.find(train, eval, PipelineVariant::EXTENDED_PREP_PLUS_NER);
    if (!before || !after) continue;
    std::string imp;
    if (before->internal) {
      if (const auto it = r.internal_improvements.find(std::string(train)); it != r.internal_improvements.end()) {
        imp = fmt::format("{:.2f}", it->second);
      }
    } else if (const auto it = r.improvements.find({std::string(train), eval}); it != r.improvements.end()) {
      imp = fmt::format("{:.2f}", it->second);
    }
    out << fmt::format("{},{},{},{},{}\n", detail::csv_escape(eval), before->internal ? "internal" : "external",
                       detail::percent(before->metrics.macro_f1), detail::percent(after->metrics.macro_f1), imp);
  }
  if (const auto it = r.external_averages.find(std::string(train)); it != r.external_averages.end()) {
    out << fmt::format("average,external,,,{:.2f}\n", it->second);
  }
  return out.str();
}

// Every cell with full per-class metrics.
inline std::string render_cells_csv(const ExperimentResults& r) {
  std::ostringstream out;
  out << "train,eval,variant,role,n_eval,macro_f1,f1_fake,precision_fake,recall_fake,f1_real,precision_real,"
         "recall_real,transform_hash\n";
  for (const auto& c : r.cells) {
    const auto& f = c.metrics.per_class.at(Label::FAKE);
    const auto& t = c.metrics.per_class.at(Label::REAL);
    out << fmt::format("{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{}\n",
                       detail::csv_escape(c.train_dataset), detail::csv_escape(c.eval_dataset),
                       variant_name(c.variant), c.internal ? "internal" : "external", c.metrics.n_eval,
                       c.metrics.macro_f1, f.f1, f.precision, f.recall, t.f1, t.precision, t.recall,
                       c.transform_hash);
  }
  return out.str();
}

inline std::string render_summary_markdown(const ExperimentResults& r) {
  std::ostringstream out;
  out << "# Experiment summary\n\n";
  for (const auto& train : r.train_datasets) out << render_improvement_markdown(r, train) << "\n";
  if (r.overall_average) out << fmt::format("Overall average external improvement: {:.2f}%\n", *r.overall_average);
  for (const auto& n : r.notes) out << "\n- " << n;
  if (!r.notes.empty()) out << "\n";
  return out.str();
}

// Writes tables/, explanations/, global/, audit/, results.json and
// manifest.json under out_dir. Returns the files written, relative to out_dir.
std::vector<std::string> render_report(const ExperimentRun& run, const std::filesystem::path& out_dir);

// Rebuilds a run (results only) from a previously written results.json.
ExperimentRun load_results(const std::filesystem::path& results_json);

}  // namespace debias

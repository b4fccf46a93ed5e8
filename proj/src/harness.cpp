#include "debias/harness.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "debias/detail/parallel.hpp"
#include "debias/detail/random.hpp"

namespace debias {

namespace {

std::vector<Label> predict_all(const LinearModel& model, const Dataset& ds) {
  std::vector<Label> out;
  out.reserve(ds.size());
  for (const auto& d : ds.documents) out.push_back(predict(model, document_terms(d.text, model.train_config.lowercase)));
  return out;
}

std::vector<Label> gold_labels(const Dataset& ds) {
  std::vector<Label> out;
  out.reserve(ds.size());
  for (const auto& d : ds.documents) out.push_back(d.label);
  return out;
}

// Ascending indices of a seeded sample of min(k, n) items.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  detail::Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(std::min(k, n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <typename Fn>
auto with_context(const std::string& train, PipelineVariant v, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), fmt::format("[train={}, variant={}] {}", train, variant_name(v), e.detail()));
  }
}

struct Family {
  std::size_t train_index = 0;
  PipelineVariant variant = PipelineVariant::BASELINE;
  LinearModel model;
  Dataset test;  // transformed internal test split
  std::vector<CellResult> cells;
};

}  // namespace

ExperimentRun run_rotation(const ExperimentConfig& config, const RunOptions& options) {
  using Clock = std::chrono::steady_clock;
  const auto seconds_since = [](Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
  };
  const auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };
  config.validate();
  ExperimentRun run;
  run.config = config;

  auto t0 = Clock::now();
  std::vector<Dataset> datasets;
  for (const auto& dc : config.datasets) {
    auto ds = load_dataset(dc.path, dc.format, dc.label_map);
    ds.name = dc.name;
    datasets.push_back(std::move(ds));
  }
  const Gazetteer gazetteer = config.entity.gazetteer ? Gazetteer::load(*config.entity.gazetteer) : Gazetteer::shipped();
  const EmoticonLexicon emoticons =
      config.emoticons ? EmoticonLexicon::load(*config.emoticons) : EmoticonLexicon::shipped();
  std::optional<SidecarAnnotations> sidecar;
  if (config.entity.sidecar) sidecar = load_sidecar_annotations(*config.entity.sidecar);
  AuditLexicons lexicons{gazetteer, emoticons,
                         config.stopwords ? AuditLexicons::load_stopwords(*config.stopwords)
                                          : AuditLexicons::shipped().stopwords};
  run.timings.emplace_back("load", seconds_since(t0));
  if (config.shapley.exact_limit > kDefaultExactLimit) {
    log(fmt::format("warning: exact_limit {} enumerates up to {} coalitions per document", config.shapley.exact_limit,
                    std::size_t{1} << config.shapley.exact_limit));
  }

  const std::size_t n_train = config.rotation ? datasets.size() : 1;
  std::vector<DatasetSplits> splits(n_train);
  for (std::size_t t = 0; t < n_train; ++t) {
    splits[t] = with_context(datasets[t].name, config.variants.front(),
                                     [&] { return stratified_split(datasets[t], config.split); });
  }

  std::vector<Family> families;
  for (std::size_t t = 0; t < n_train; ++t) {
    for (auto v : config.variants) families.push_back({t, v, {}, {}, {}});
  }

  t0 = Clock::now();
  detail::parallel_for(families.size(), options.threads, [&](std::size_t f) {
    auto& fam = families[f];
    const auto& internal = datasets[fam.train_index];
    with_context(internal.name, fam.variant, [&] {
      const TextTransform transform(fam.variant, config.entity.order, gazetteer, emoticons,
                                    sidecar ? &*sidecar : nullptr);
      const auto hash = transform.fingerprint();
      const auto train = transform.apply(splits[fam.train_index].train);
      fam.test = transform.apply(splits[fam.train_index].test);
      fam.model = fit(train, config.train);
      for (std::size_t e = 0; e < datasets.size(); ++e) {
        const bool is_internal = e == fam.train_index;
        const Dataset eval = is_internal ? fam.test : transform.apply(datasets[e]);
        CellResult cell;
        cell.train_dataset = internal.name;
        cell.eval_dataset = datasets[e].name;
        cell.variant = fam.variant;
        cell.internal = is_internal;
        cell.transform_hash = hash;
        cell.metrics = evaluate_predictions(gold_labels(eval), predict_all(fam.model, eval));
        fam.cells.push_back(std::move(cell));
      }
    });
  });
  run.timings.emplace_back("train_and_evaluate", seconds_since(t0));

  auto& r = run.results;
  for (const auto& d : datasets) r.datasets.push_back(d.name);
  for (std::size_t t = 0; t < n_train; ++t) r.train_datasets.push_back(datasets[t].name);
  r.variants = config.variants;
  for (auto& fam : families) {
    for (auto& c : fam.cells) {
      log(fmt::format("{} -> {} [{}] macro-F1 {:.4f}", c.train_dataset, c.eval_dataset, variant_name(c.variant),
                      c.metrics.macro_f1));
      r.cells.push_back(std::move(c));
    }
  }
  compute_improvements(r);
  for (const auto& n : r.notes) log("note: " + n);

  if (!options.explain) return run;

  t0 = Clock::now();
  struct Job {
    std::size_t family;
    std::size_t doc;
  };
  std::vector<Job> jobs;
  std::vector<std::vector<std::size_t>> samples(families.size());
  run.artifacts.resize(families.size());
  for (std::size_t f = 0; f < families.size(); ++f) {
    const auto& fam = families[f];
    samples[f] = sample_indices(fam.test.size(), config.shapley.sample_size,
                                        detail::mix_seed(config.shapley.seed, fam.train_index));
    auto& art = run.artifacts[f];
    art.train_dataset = datasets[fam.train_index].name;
    art.variant = fam.variant;
    art.explanations.resize(samples[f].size());
    for (std::size_t k = 0; k < samples[f].size(); ++k) {
      jobs.push_back({f, k});
      art.gold.push_back(fam.test.documents[samples[f][k]].label);
    }
  }
  std::vector<LinearScorer> scorers;
  scorers.reserve(families.size());
  for (const auto& fam : families) scorers.emplace_back(fam.model);
  detail::parallel_for(jobs.size(), options.threads, [&](std::size_t j) {
    const auto [f, k] = jobs[j];
    const auto& fam = families[f];
    const auto doc_index = samples[f][k];
    const auto& doc = fam.test.documents[doc_index];
    with_context(datasets[fam.train_index].name, fam.variant, [&] {
      run.artifacts[f].explanations[k] =
          explain(scorers[f], tokenize(doc.text).surfaces(), config.shapley.exact_limit,
                  config.shapley.n_permutations, detail::mix_seed(config.shapley.seed, doc_index), doc.id);
    });
  });
  run.timings.emplace_back("explain", seconds_since(t0));

  t0 = Clock::now();
  for (std::size_t f = 0; f < families.size(); ++f) {
    auto& art = run.artifacts[f];
    if (art.explanations.empty()) continue;
    with_context(art.train_dataset, art.variant, [&] {
      art.global_mean = aggregate_global(art.explanations, AggregateMode::MEAN);
      art.global_sum = aggregate_global(art.explanations, AggregateMode::SUM);
      if (!art.global_sum.empty()) {
        art.audit = flag_spurious(art.global_sum, config.audit.top_k, config.audit.spurious, lexicons);
      }
    });
    log(fmt::format("{} [{}] spurious mass fraction {:.4f}", art.train_dataset, variant_name(art.variant),
                    art.audit.spurious_mass_fraction));
  }
  run.timings.emplace_back("aggregate_and_audit", seconds_since(t0));
  return run;
}

}  // namespace debias

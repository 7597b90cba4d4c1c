#pragma once

#include <vector>

#include "causecast/generator.hpp"
#include "causecast/model.hpp"
#include "causecast/series.hpp"

namespace causecast::testing {

struct WindowSet {
  VariableCatalog catalog;
  StandardizationStats stats;
  std::vector<WindowPair> windows;

  std::vector<const WindowPair*> first(std::size_t n) const {
    std::vector<const WindowPair*> out;
    for (std::size_t i = 0; i < n && i < windows.size(); ++i) out.push_back(&windows[i]);
    return out;
  }
};

// Standardized sliding windows from the compact synthetic cohort.
inline WindowSet compact_windows(std::size_t patients, std::uint64_t seed, std::size_t continuous = 3) {
  GeneratorConfig g = GeneratorConfig::compact(continuous, true);
  g.patients = patients;
  const GeneratedCohort cohort = synth_generate(g, seed);
  WindowSet set;
  set.catalog = cohort.dataset.catalog;
  set.stats = StandardizationStats::compute(cohort.dataset.patients, set.catalog);
  for (const SparseSeries& p : cohort.dataset.patients) {
    auto w = sliding_windows(standardize(p, set.stats), set.catalog.size());
    for (auto& x : w) set.windows.push_back(std::move(x));
  }
  return set;
}

inline ModelConfig small_config(const VariableCatalog& catalog, EncoderKind enc, DecoderKind dec) {
  ModelConfig c;
  c.encoder = enc;
  c.decoder = dec;
  c.variables = catalog.size();
  c.statics = catalog.static_count();
  c.embedding_size = 8;
  c.hidden_size_encoder = 12;
  c.encoder_layers = 1;
  c.attention_heads_encoder = 2;
  c.hidden_size_dms_decoder = 12;
  c.attention_heads_dms_decoder = 2;
  c.ims_ffn_size = 8;
  c.attention_heads_ims_decoder = 1;
  c.dropout = 0.0;
  return c;
}

}  // namespace causecast::testing

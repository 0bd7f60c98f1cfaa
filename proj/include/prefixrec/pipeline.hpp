#pragma once

#include <string>

#include "prefixrec/config.hpp"
#include "prefixrec/dataset.hpp"
#include "prefixrec/tokenizer.hpp"

namespace prefixrec {

// Data assembled from one run configuration: embeddings (synthetic or from
// files), the fitted-and-tokenized catalog, and the filtered, split dataset
// aligned to the catalog's item index space.
struct MaterializedData {
  EmbeddingMatrix embeddings;
  Codebooks codebooks;
  TokenizedCatalog catalog;
  InteractionDataset dataset;
};

MaterializedData materialize_data(const RunConfig& cfg);

// Full pipeline: data -> tokenize -> split -> train -> evaluate -> audit,
// everything written under <run_root>/<timestamp>-<digest8>/. The manifest
// is written last, so its presence implies a complete run; on failure the
// partial directory is kept with an ERROR marker file.
// Returns the run directory.
std::string run_experiment(const RunConfig& cfg, const std::string& run_root,
                           std::size_t workers = 1);

}  // namespace prefixrec

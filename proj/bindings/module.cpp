// Python bindings for the core operations: tokenization, prefix weights,
// losses on raw scores, constrained decoding, and the theory verifiers.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "prefixrec/adaptive_weights.hpp"
#include "prefixrec/decoder.hpp"
#include "prefixrec/losses.hpp"
#include "prefixrec/theory.hpp"
#include "prefixrec/tokenizer.hpp"

namespace py = pybind11;
using namespace prefixrec;

namespace {

EmbeddingMatrix embeddings_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr,
                                      std::vector<std::string> item_ids) {
  if (arr.ndim() != 2) throw py::value_error("embeddings must be a 2-D array");
  EmbeddingMatrix emb;
  emb.rows = static_cast<std::size_t>(arr.shape(0));
  emb.cols = static_cast<std::size_t>(arr.shape(1));
  emb.values.assign(arr.data(), arr.data() + arr.size());
  if (item_ids.empty()) {
    for (std::size_t i = 0; i < emb.rows; ++i) emb.item_ids.push_back(std::to_string(i));
  } else {
    if (item_ids.size() != emb.rows) throw py::value_error("item_ids length mismatch");
    emb.item_ids = std::move(item_ids);
  }
  return emb;
}

py::array_t<std::uint32_t> codes_array(const TokenizedCatalog& cat) {
  py::array_t<std::uint32_t> out({cat.num_items, cat.code_len});
  std::copy(cat.codes.begin(), cat.codes.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "prefix-aware generative recommendation core";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DataError>(m, "DataError");

  py::class_<Codebooks>(m, "Codebooks")
      .def_property_readonly("levels", [](const Codebooks& cb) { return cb.levels; })
      .def_property_readonly("dim", [](const Codebooks& cb) { return cb.dim; })
      .def("centroids", [](const Codebooks& cb, std::size_t level) {
        if (level >= cb.levels) throw py::index_error();
        const Matrix& c = cb.centroids[level];
        py::array_t<double> out({c.rows, c.cols});
        std::copy(c.v.begin(), c.v.end(), out.mutable_data());
        return out;
      });

  py::class_<TokenizedCatalog>(m, "TokenizedCatalog")
      .def_property_readonly("num_items", [](const TokenizedCatalog& c) { return c.num_items; })
      .def_property_readonly("code_len", [](const TokenizedCatalog& c) { return c.code_len; })
      .def_property_readonly("dedup_level_present",
                             [](const TokenizedCatalog& c) { return c.dedup_level_present; })
      .def_property_readonly("level_vocab_sizes",
                             [](const TokenizedCatalog& c) { return c.level_vocab_sizes; })
      .def_property_readonly("item_ids", [](const TokenizedCatalog& c) { return c.item_ids; })
      .def("codes", &codes_array);

  m.def(
      "fit_codebooks",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> embeddings,
         std::size_t levels, std::size_t codebook_size, std::uint64_t seed,
         std::size_t max_iters, std::vector<std::string> item_ids) {
        return fit_codebooks(embeddings_from_array(std::move(embeddings), std::move(item_ids)),
                             levels, codebook_size, seed, max_iters);
      },
      py::arg("embeddings"), py::arg("levels"), py::arg("codebook_size"), py::arg("seed") = 0,
      py::arg("max_iters") = 50, py::arg("item_ids") = std::vector<std::string>{});

  m.def(
      "tokenize",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> embeddings,
         const Codebooks& cb, std::vector<std::string> item_ids) {
        return tokenize(embeddings_from_array(std::move(embeddings), std::move(item_ids)), cb);
      },
      py::arg("embeddings"), py::arg("codebooks"),
      py::arg("item_ids") = std::vector<std::string>{});

  m.def(
      "update_weights",
      [](const std::vector<double>& w, const std::vector<double>& losses, double eta) {
        PrefixWeights pw;
        pw.w = w;
        pw.eta = eta;
        return update_weights(pw, losses).w;
      },
      py::arg("w"), py::arg("losses"), py::arg("eta"));

  m.def("hard_max_loss",
        [](const std::vector<double>& losses) { return hard_max_loss(losses); });

  m.def(
      "pairwise_loss",
      [](double pos_score, const std::vector<double>& neg_scores) {
        return pairwise_value_from_scores(pos_score, neg_scores);
      },
      py::arg("pos_score"), py::arg("neg_scores"),
      "log(1 + exp(logsumexp(neg - pos))), overflow-safe");

  // Decoding over an explicit probability-table scorer.
  py::class_<TableScorer>(m, "TableScorer")
      .def(py::init<std::vector<std::uint32_t>>(), py::arg("vocab_sizes"))
      .def("set_distribution",
           [](TableScorer& s, const std::vector<std::uint32_t>& prefix,
              const std::vector<double>& probs) { s.set_distribution(prefix, probs); });

  m.def(
      "beam_search_table",
      [](const TableScorer& scorer, std::size_t K, const TokenizedCatalog& catalog) {
        const CodeTrie trie = build_trie(catalog);
        const BeamResult r = beam_search(scorer, K, trie);
        std::vector<std::pair<std::uint32_t, double>> out;
        for (const auto& si : r.items) out.emplace_back(si.item, si.score);
        return out;
      },
      py::arg("scorer"), py::arg("k"), py::arg("catalog"));

  m.def(
      "full_sort_table",
      [](const TableScorer& scorer, std::size_t K, const TokenizedCatalog& catalog) {
        std::vector<std::pair<std::uint32_t, double>> out;
        for (const auto& si : full_sort_topk(scorer, K, catalog)) {
          out.emplace_back(si.item, si.score);
        }
        return out;
      },
      py::arg("scorer"), py::arg("k"), py::arg("catalog"));

  py::class_<TheoryReport>(m, "TheoryReport")
      .def_readonly("trials", &TheoryReport::trials)
      .def_readonly("violations", &TheoryReport::violations)
      .def_readonly("first_witness", &TheoryReport::first_witness)
      .def("passed", &TheoryReport::passed);

  m.def("verify_lower_bound", &verify_lower_bound, py::arg("trials"), py::arg("seed"));
  m.def("verify_weight_program", &verify_weight_program, py::arg("trials"), py::arg("seed"));
}

// Copyright 2026 The crag Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Walks the offline and online paths with the library API: load a corpus,
// build a store, then answer one query with an echoing generator so the
// assembled prompt is printed.
//
//   minimal_pipeline [corpus_dir] [query]

#include <iostream>
#include <string>

#include "crag/crag.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path corpus = argc > 1 ? argv[1] : CRAG_SAMPLE_CORPUS;
  const std::string query = argc > 2 ? argv[2] : "How does TSN keep the bridges in step?";

  try {
    const auto docs = crag::load_corpus(corpus);
    auto chunks = crag::chunk_corpus(docs, 200);
    crag::Glossary glossary = crag::extract_glossary(docs);
    crag::load_glossary_file(CRAG_SAMPLE_GLOSSARY "/abbreviations.tsv", crag::GlossaryKind::kAbbreviations, glossary);
    crag::load_glossary_file(CRAG_SAMPLE_GLOSSARY "/terms.tsv", crag::GlossaryKind::kTerms, glossary);

    const crag::HashEmbedder embedder(256);
    std::vector<std::string> texts;
    for (const auto& c : chunks) texts.push_back(c.text);
    auto vectors = crag::embed_texts(embedder, texts, true);

    const std::size_t beta = std::min<std::size_t>(4, chunks.size());
    auto clusters = crag::bisecting_kmeans(vectors.view(), beta);

    crag::StoreManifest m;
    m.d = embedder.dim();
    m.n_chunks = chunks.size();
    m.chunk_len = 200;
    m.embed_provider_tag = embedder.tag();
    m.beta = clusters.size();
    const crag::Store store =
        crag::make_store(std::move(chunks), std::move(vectors), std::move(glossary), std::move(clusters), m);
    std::cout << "store: " << store.size() << " chunks in " << store.clusters.size() << " clusters\n\n";

    const auto res = crag::answer_query(store, embedder, crag::RouterMode::oracle(), query,
                                        {.gamma = 2, .delta = 2}, crag::EchoClient());
    std::cout << "routed clusters:";
    for (auto c : res.routed_clusters) std::cout << ' ' << c;
    std::cout << "\nscanned " << res.vectors_scanned << " of " << store.size() << " vectors\n\n";
    std::cout << res.answer << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

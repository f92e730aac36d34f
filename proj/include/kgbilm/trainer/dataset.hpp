#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kgbilm/kgstore/io.hpp"
#include "kgbilm/kgstore/sampling.hpp"
#include "kgbilm/seqbuild/vocab.hpp"

namespace kgbilm {

/// On-disk dataset: vocab.tsv fixes the entity and relation id order,
/// train/valid/test.tsv hold the split, unseen.txt names held-out entities.
struct Dataset {
  KnowledgeGraph full;  // every triple of the split
  Split split;
  Vocab vocab;
};

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out || !(out << text) || !out.flush()) throw DataError("cannot write " + p.string());
}

inline std::string triples_text(const KnowledgeGraph& kg, std::span<const Triple> triples) {
  std::ostringstream s;
  write_triples(s, kg, triples);
  return s.str();
}

// Reads a triple file against a graph whose names are already registered.
inline std::vector<Triple> read_known_triples(const std::filesystem::path& p, const KnowledgeGraph& names) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  KnowledgeGraph scratch = names.with_triples({});
  parse_triples(in, scratch, p.string());
  if (scratch.num_entities() != names.num_entities() || scratch.num_relations() != names.num_relations()) {
    throw DataError(p.string() + ": names absent from vocab.tsv");
  }
  return scratch.triples();
}

}  // namespace detail

inline void save_dataset(const std::filesystem::path& dir, const KnowledgeGraph& full, const Split& split,
                         const Vocab& vocab) {
  std::filesystem::create_directories(dir);
  detail::write_text(dir / "vocab.tsv", vocab.to_text());
  detail::write_text(dir / "train.tsv", detail::triples_text(full, split.train.triples()));
  detail::write_text(dir / "valid.tsv", detail::triples_text(full, split.valid_triples));
  detail::write_text(dir / "test.tsv", detail::triples_text(full, split.test_triples));
  std::ostringstream desc, unseen;
  write_descriptions(desc, full);
  for (EntityId e : split.unseen_entities) unseen << full.entity_name(e) << '\n';
  detail::write_text(dir / "descriptions.tsv", desc.str());
  detail::write_text(dir / "unseen.txt", unseen.str());
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("dataset: " + dir.string() + " is not a directory");
  Dataset d{{}, {}, Vocab::load((dir / "vocab.tsv").string())};
  KnowledgeGraph names;
  for (EntityId e = 0; e < d.vocab.num_entities(); ++e) names.add_entity(d.vocab.surface(d.vocab.entity_token(e)));
  for (RelationId r = 0; r < d.vocab.num_relations(); ++r) names.add_relation(d.vocab.surface(d.vocab.relation_token(r)));
  if (std::filesystem::exists(dir / "descriptions.tsv")) load_descriptions((dir / "descriptions.tsv").string(), names);

  const auto train = detail::read_known_triples(dir / "train.tsv", names);
  if (train.empty()) throw DataError("dataset: train.tsv has no triples");
  d.split.valid_triples = detail::read_known_triples(dir / "valid.tsv", names);
  d.split.test_triples = detail::read_known_triples(dir / "test.tsv", names);
  d.split.train = names.with_triples(train);

  std::vector<Triple> all = train;
  all.insert(all.end(), d.split.valid_triples.begin(), d.split.valid_triples.end());
  all.insert(all.end(), d.split.test_triples.begin(), d.split.test_triples.end());
  d.full = names.with_triples(all);

  if (std::ifstream in(dir / "unseen.txt"); in) {
    for (std::string line; std::getline(in, line);) {
      detail::strip_cr(line);
      if (line.empty()) continue;
      auto e = names.find_entity(line);
      if (!e) throw DataError("dataset: unseen.txt names unknown entity '" + line + "'");
      d.split.unseen_entities.push_back(*e);
    }
    std::sort(d.split.unseen_entities.begin(), d.split.unseen_entities.end());
  }
  return d;
}

}  // namespace kgbilm

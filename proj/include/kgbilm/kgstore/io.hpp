#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kgbilm/kgstore/graph.hpp"

namespace kgbilm {

namespace detail {

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace detail

/// Parses `head<TAB>relation<TAB>tail` lines into `kg`. Blank lines are
/// ignored; identical triples are kept once. Returns the number of lines read.
inline std::size_t parse_triples(std::istream& in, KnowledgeGraph& kg, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  std::size_t records = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_tabs(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw DataError(source + ":" + std::to_string(lineno) +
                      ": expected head<TAB>relation<TAB>tail, got " + std::to_string(fields.size()) +
                      " field(s)");
    }
    kg.add_triple(fields[0], fields[1], fields[2]);
    ++records;
  }
  return records;
}

inline KnowledgeGraph load_triples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open triple file " + path);
  KnowledgeGraph kg;
  if (parse_triples(in, kg, path) == 0) throw DataError(path + ": no triples");
  return kg;
}

struct DescriptionReport {
  std::size_t attached = 0;
  std::vector<std::string> skipped_names;
};

/// Attaches `entity_name<TAB>text` lines to matching entities. Unknown names
/// (and lines without a tab) are reported, not fatal.
inline DescriptionReport parse_descriptions(std::istream& in, KnowledgeGraph& kg) {
  DescriptionReport report;
  std::string line;
  while (std::getline(in, line)) {
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string name = line.substr(0, tab);
    if (tab == std::string::npos) {
      report.skipped_names.push_back(name);
      continue;
    }
    if (auto e = kg.find_entity(name)) {
      if (!kg.description(*e)) ++report.attached;
      kg.set_description(*e, line.substr(tab + 1));
    } else {
      report.skipped_names.push_back(name);
    }
  }
  return report;
}

inline DescriptionReport load_descriptions(const std::string& path, KnowledgeGraph& kg) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open description file " + path);
  return parse_descriptions(in, kg);
}

inline void write_triples(std::ostream& out, const KnowledgeGraph& kg, std::span<const Triple> triples) {
  for (const auto& t : triples) {
    out << kg.entity_name(t.head) << '\t' << kg.relation_name(t.relation) << '\t'
        << kg.entity_name(t.tail) << '\n';
  }
}

inline void write_descriptions(std::ostream& out, const KnowledgeGraph& kg) {
  for (EntityId e = 0; e < kg.num_entities(); ++e) {
    if (auto d = kg.description(e)) out << kg.entity_name(e) << '\t' << *d << '\n';
  }
}

}  // namespace kgbilm

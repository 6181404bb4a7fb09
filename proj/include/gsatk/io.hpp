#pragma once

// Parsing and serialization of the external file formats: count matrix TSV,
// GMT, phenotype TSV, gene-ID mapping TSV, and the result tables. UTF-8,
// CRLF and LF both accepted, '#' comment lines skipped, trailing blank
// lines ignored.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gsatk/error.hpp"
#include "gsatk/types.hpp"

namespace gsatk {

namespace detail {

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string_view line = nl == std::string_view::npos
                                ? text.substr(start)
                                : text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline bool is_comment(const std::string& line) {
  return !line.empty() && line[0] == '#';
}

inline bool parse_int64(const std::string& s, std::int64_t& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Count matrix
// ---------------------------------------------------------------------------

/// Parses a tab-separated count matrix: first row sample IDs, first column
/// gene IDs, body non-negative integers. Errors carry gene/sample
/// coordinates.
inline CountMatrix parse_count_matrix(std::string_view text) {
  auto lines = detail::split_lines(text);
  std::vector<const std::string*> rows;
  for (const auto& l : lines)
    if (!detail::is_comment(l)) rows.push_back(&l);
  if (rows.empty()) throw ValidationError("count matrix: empty input");

  auto header = detail::split_tabs(*rows[0]);
  if (header.size() < 3)
    throw ValidationError("count matrix: need at least 2 sample columns");
  std::vector<SampleId> samples;
  for (std::size_t j = 1; j < header.size(); ++j) {
    auto id = detail::trim(header[j]);
    if (id.empty())
      throw ValidationError("count matrix: empty sample ID in header");
    samples.push_back(std::move(id));
  }

  std::vector<GeneId> genes;
  std::vector<std::int64_t> counts;
  counts.reserve((rows.size() - 1) * samples.size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    auto fields = detail::split_tabs(*rows[r]);
    if (fields.empty() || fields.size() != samples.size() + 1)
      throw ValidationError("count matrix: row " + std::to_string(r + 1) +
                            " has " + std::to_string(fields.size()) +
                            " fields, expected " +
                            std::to_string(samples.size() + 1));
    auto gene = detail::trim(fields[0]);
    if (gene.empty())
      throw ValidationError("count matrix: empty gene ID at row " +
                            std::to_string(r + 1));
    for (std::size_t j = 1; j < fields.size(); ++j) {
      std::int64_t v = 0;
      if (!detail::parse_int64(fields[j], v))
        throw ValidationError("count matrix: non-integer count '" +
                              detail::trim(fields[j]) + "' at gene " + gene +
                              ", sample " + samples[j - 1]);
      if (v < 0)
        throw ValidationError("count matrix: negative count at gene " + gene +
                              ", sample " + samples[j - 1]);
      counts.push_back(v);
    }
    genes.push_back(std::move(gene));
  }
  if (genes.empty()) throw ValidationError("count matrix: no gene rows");
  return CountMatrix(std::move(genes), std::move(samples), std::move(counts));
}

inline std::string write_count_matrix(const CountMatrix& cm) {
  std::string out = "gene_id";
  for (const auto& s : cm.sample_ids()) {
    out += '\t';
    out += s;
  }
  out += '\n';
  for (std::size_t i = 0; i < cm.n_genes(); ++i) {
    out += cm.gene_ids()[i];
    for (std::size_t j = 0; j < cm.n_samples(); ++j) {
      out += '\t';
      out += std::to_string(cm.at(i, j));
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// GMT
// ---------------------------------------------------------------------------

struct GmtParseResult {
  GeneSetDatabase db;
  std::vector<std::string> warnings;
};

/// Parses GMT: one gene set per line, "name TAB description TAB gene...".
/// Duplicate members within a line are dropped with a warning; duplicate set
/// names are an error. Every input line maps to a set, a warning, or an
/// error; nothing is dropped silently.
inline GmtParseResult parse_gmt(std::string_view text) {
  auto lines = detail::split_lines(text);
  std::vector<GeneSet> sets;
  std::vector<std::string> warnings;
  std::unordered_set<std::string> names;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto& line = lines[r];
    if (detail::is_comment(line)) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() < 3)
      throw ValidationError("gmt: line " + std::to_string(r + 1) +
                            " has fewer than 3 fields");
    auto name = detail::trim(fields[0]);
    if (name.empty())
      throw ValidationError("gmt: empty set name at line " +
                            std::to_string(r + 1));
    if (!names.insert(name).second)
      throw ValidationError("gmt: duplicate gene set name: " + name);
    std::vector<GeneId> members;
    std::unordered_set<GeneId> seen;
    for (std::size_t j = 2; j < fields.size(); ++j) {
      auto g = detail::trim(fields[j]);
      if (g.empty()) continue;  // tolerate trailing tabs
      if (!seen.insert(g).second) {
        warnings.push_back("gmt: duplicate member '" + g + "' in set " + name);
        continue;
      }
      members.push_back(std::move(g));
    }
    if (members.empty())
      throw ValidationError("gmt: set " + name + " has no members");
    sets.emplace_back(std::move(name), detail::trim(fields[1]),
                      std::move(members));
  }
  if (sets.empty()) throw ValidationError("gmt: no gene sets parsed");
  return GmtParseResult{GeneSetDatabase(std::move(sets)),
                        std::move(warnings)};
}

inline std::string write_gmt(const GeneSetDatabase& db) {
  std::string out;
  for (const auto& s : db.sets()) {
    out += s.name();
    out += '\t';
    out += s.description();
    for (const auto& g : s.members()) {
      out += '\t';
      out += g;
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Phenotype
// ---------------------------------------------------------------------------

/// Parses either a two-column "sample TAB {0|1}" table or a single line of
/// 0/1 tokens following the sample order of the matrix.
inline PhenotypeLabels parse_phenotype(std::string_view text,
                                       const std::vector<SampleId>& samples) {
  auto lines = detail::split_lines(text);
  std::vector<std::string> content;
  for (const auto& l : lines)
    if (!detail::is_comment(l) && !detail::trim(l).empty()) content.push_back(l);
  if (content.empty()) throw ValidationError("phenotype: empty input");

  // Single-line token form: every whitespace-separated token is 0 or 1.
  if (content.size() == 1) {
    std::istringstream iss(content[0]);
    std::vector<std::string> tokens;
    std::string tok;
    while (iss >> tok) tokens.push_back(tok);
    bool all_binary = !tokens.empty();
    for (const auto& t : tokens)
      all_binary = all_binary && (t == "0" || t == "1");
    if (all_binary) {
      if (tokens.size() != samples.size())
        throw ValidationError(
            "phenotype: token count " + std::to_string(tokens.size()) +
            " does not match sample count " + std::to_string(samples.size()));
      std::vector<int> labels;
      labels.reserve(tokens.size());
      for (const auto& t : tokens) labels.push_back(t == "1" ? 1 : 0);
      return PhenotypeLabels(samples, std::move(labels));
    }
  }

  std::unordered_map<SampleId, int> assignment;
  for (std::size_t r = 0; r < content.size(); ++r) {
    auto fields = detail::split_tabs(content[r]);
    if (fields.size() != 2)
      throw ValidationError("phenotype: line " + std::to_string(r + 1) +
                            " does not have 2 fields");
    auto sample = detail::trim(fields[0]);
    auto label = detail::trim(fields[1]);
    if (label != "0" && label != "1")
      throw ValidationError("phenotype: label '" + label + "' for sample " +
                            sample + " is outside {0,1}");
    if (!assignment.emplace(sample, label == "1" ? 1 : 0).second)
      throw ValidationError("phenotype: duplicate sample " + sample);
  }
  std::unordered_set<SampleId> known(samples.begin(), samples.end());
  for (const auto& [s, _] : assignment)
    if (!known.count(s))
      throw ValidationError("phenotype: unknown sample " + s);
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) {
    auto it = assignment.find(s);
    if (it == assignment.end())
      throw ValidationError("phenotype: missing sample " + s);
    labels.push_back(it->second);
  }
  return PhenotypeLabels(samples, std::move(labels));
}

// ---------------------------------------------------------------------------
// Gene-ID mapping
// ---------------------------------------------------------------------------

/// Many-to-many source/target gene-ID pairs. A blank target records the
/// source as explicitly unmapped.
class GeneIdMapping {
 public:
  GeneIdMapping(std::vector<std::pair<GeneId, GeneId>> pairs,
                std::vector<GeneId> unmapped)
      : pairs_(std::move(pairs)), unmapped_(std::move(unmapped)) {
    for (const auto& [src, tgt] : pairs_) {
      source_to_targets_[src].push_back(tgt);
      target_to_sources_[tgt].push_back(src);
    }
  }

  const std::vector<std::pair<GeneId, GeneId>>& pairs() const {
    return pairs_;
  }
  const std::vector<GeneId>& unmapped_sources() const { return unmapped_; }

  /// Targets of a source in file order; empty if unmapped/unknown.
  const std::vector<GeneId>* targets(const GeneId& src) const {
    auto it = source_to_targets_.find(src);
    return it == source_to_targets_.end() ? nullptr : &it->second;
  }

  const std::vector<GeneId>* sources(const GeneId& tgt) const {
    auto it = target_to_sources_.find(tgt);
    return it == target_to_sources_.end() ? nullptr : &it->second;
  }

 private:
  std::vector<std::pair<GeneId, GeneId>> pairs_;
  std::vector<GeneId> unmapped_;
  std::unordered_map<GeneId, std::vector<GeneId>> source_to_targets_;
  std::unordered_map<GeneId, std::vector<GeneId>> target_to_sources_;
};

struct MappingParseResult {
  GeneIdMapping mapping;
  std::vector<std::string> warnings;
};

/// Two-column TSV "source TAB target"; blank target = no mapping. Exact
/// duplicate pairs are dropped with a warning.
inline MappingParseResult parse_mapping(std::string_view text) {
  auto lines = detail::split_lines(text);
  std::vector<std::pair<GeneId, GeneId>> pairs;
  std::vector<std::string> warnings;
  std::set<std::pair<GeneId, GeneId>> seen;
  std::vector<GeneId> blank_sources;
  std::unordered_set<GeneId> has_target;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto& line = lines[r];
    if (detail::is_comment(line) || detail::trim(line).empty()) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() != 2)
      throw ValidationError("mapping: line " + std::to_string(r + 1) +
                            " does not have 2 fields");
    auto src = detail::trim(fields[0]);
    auto tgt = detail::trim(fields[1]);
    if (src.empty())
      throw ValidationError("mapping: empty source at line " +
                            std::to_string(r + 1));
    if (tgt.empty()) {
      blank_sources.push_back(src);
      continue;
    }
    if (!seen.insert({src, tgt}).second) {
      warnings.push_back("mapping: duplicate pair " + src + " -> " + tgt);
      continue;
    }
    has_target.insert(src);
    pairs.emplace_back(std::move(src), std::move(tgt));
  }
  std::vector<GeneId> unmapped;
  std::unordered_set<GeneId> unmapped_seen;
  for (auto& s : blank_sources) {
    if (has_target.count(s)) {
      warnings.push_back("mapping: source " + s +
                         " has both a target and a blank entry");
      continue;
    }
    if (unmapped_seen.insert(s).second) unmapped.push_back(std::move(s));
  }
  return MappingParseResult{
      GeneIdMapping(std::move(pairs), std::move(unmapped)),
      std::move(warnings)};
}

// ---------------------------------------------------------------------------
// Transcript lengths (two-column TSV gene_id TAB length)
// ---------------------------------------------------------------------------

inline std::unordered_map<GeneId, double> parse_lengths(
    std::string_view text) {
  auto lines = detail::split_lines(text);
  std::unordered_map<GeneId, double> lengths;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto& line = lines[r];
    if (detail::is_comment(line) || detail::trim(line).empty()) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() != 2)
      throw ValidationError("lengths: line " + std::to_string(r + 1) +
                            " does not have 2 fields");
    auto gene = detail::trim(fields[0]);
    double v = 0.0;
    try {
      v = std::stod(detail::trim(fields[1]));
    } catch (const std::exception&) {
      throw ValidationError("lengths: bad value for gene " + gene);
    }
    if (!(v > 0.0))
      throw ValidationError("lengths: non-positive length for gene " + gene);
    if (!lengths.emplace(gene, v).second)
      throw ValidationError("lengths: duplicate gene " + gene);
  }
  if (lengths.empty()) throw ValidationError("lengths: empty input");
  return lengths;
}

// ---------------------------------------------------------------------------
// Number formatting (locale-independent, shortest round-trip)
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "NA";
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

inline std::string write_de_table(const DEResultTable& de) {
  std::string out = "gene_id\tlogFC\tstatistic\tp_value\tadjusted_p\n";
  for (const auto& r : de.rows()) {
    out += r.gene_id;
    out += '\t';
    out += format_double(r.log_fold_change);
    out += '\t';
    out += format_double(r.statistic);
    out += '\t';
    out += format_double(r.p_value);
    out += '\t';
    out += format_double(r.adjusted_p);
    out += '\n';
  }
  return out;
}

inline DEResultTable parse_de_table(std::string_view text) {
  auto lines = detail::split_lines(text);
  std::vector<DEResultRow> rows;
  bool header_seen = false;
  for (const auto& line : lines) {
    if (detail::is_comment(line) || detail::trim(line).empty()) continue;
    if (!header_seen) {
      header_seen = true;  // fixed column order; header not re-validated
      continue;
    }
    auto fields = detail::split_tabs(line);
    if (fields.size() != 5)
      throw ValidationError("de table: row does not have 5 fields");
    DEResultRow r;
    r.gene_id = detail::trim(fields[0]);
    r.log_fold_change = std::stod(fields[1]);
    r.statistic = std::stod(fields[2]);
    r.p_value = std::stod(fields[3]);
    r.adjusted_p = std::stod(fields[4]);
    rows.push_back(std::move(r));
  }
  return DEResultTable(std::move(rows));
}

/// ORA result TSV: set_name, N, G, L, H, odds, raw_p, adjusted_p, method.
inline std::string write_ora_table(const EnrichmentResultTable& t) {
  std::string out = "set_name\tN\tG\tL\tH\todds\traw_p\tadjusted_p\tmethod\n";
  for (const auto& r : t.rows) {
    out += r.set_name;
    out += '\t' + std::to_string(r.universe_size);
    out += '\t' + std::to_string(r.set_in_universe);
    out += '\t' + std::to_string(r.de_in_universe);
    out += '\t' + std::to_string(r.hits);
    out += '\t';
    out += std::isnan(r.odds) ? "" : format_double(r.odds);
    out += '\t' + format_double(r.raw_p);
    out += '\t' + format_double(r.adjusted_p);
    out += '\t' + t.method;
    out += '\n';
  }
  return out;
}

/// FCS result TSV: set_name, size, es, nes, raw_p, adjusted_p, scheme,
/// n_perm, seed.
inline std::string write_fcs_table(const EnrichmentResultTable& t) {
  std::string out =
      "set_name\tsize\tes\tnes\traw_p\tadjusted_p\tscheme\tn_perm\tseed\n";
  for (const auto& r : t.rows) {
    out += r.set_name;
    out += '\t' + std::to_string(r.set_size_used);
    out += '\t' + format_double(r.score);
    out += '\t' + format_double(r.norm_score);
    out += '\t' + format_double(r.raw_p);
    out += '\t' + format_double(r.adjusted_p);
    out += '\t' + r.scheme;
    out += '\t' + std::to_string(r.n_perm);
    out += '\t' + std::to_string(t.seed);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw ValidationError("write failed: " + path);
}

}  // namespace gsatk

#pragma once

// Core domain types shared by every stage of the analysis. No I/O, no
// statistics; all types are immutable after construction and safe to share
// across concurrent readers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gsatk/error.hpp"

namespace gsatk {

using GeneId = std::string;
using SampleId = std::string;

namespace detail {

template <typename T>
inline void require_unique(const std::vector<T>& ids, const char* what) {
  std::unordered_set<T> seen;
  seen.reserve(ids.size());
  for (const auto& id : ids) {
    if (!seen.insert(id).second)
      throw ValidationError(std::string("duplicate ") + what + ": " + id);
  }
}

}  // namespace detail

/// Integer read counts, genes x samples. Row-major storage.
class CountMatrix {
 public:
  /// Strict constructor: gene and sample IDs must be unique.
  CountMatrix(std::vector<GeneId> gene_ids, std::vector<SampleId> sample_ids,
              std::vector<std::int64_t> counts)
      : CountMatrix(std::move(gene_ids), std::move(sample_ids),
                    std::move(counts), true) {}

  /// Intermediate matrices produced by gene-ID conversion may carry duplicate
  /// gene IDs until duplicate removal runs; this path skips the uniqueness
  /// check on gene IDs only.
  static CountMatrix allow_duplicate_genes(std::vector<GeneId> gene_ids,
                                           std::vector<SampleId> sample_ids,
                                           std::vector<std::int64_t> counts) {
    return CountMatrix(std::move(gene_ids), std::move(sample_ids),
                       std::move(counts), false);
  }

  std::size_t n_genes() const { return gene_ids_.size(); }
  std::size_t n_samples() const { return sample_ids_.size(); }

  const std::vector<GeneId>& gene_ids() const { return gene_ids_; }
  const std::vector<SampleId>& sample_ids() const { return sample_ids_; }

  std::int64_t at(std::size_t gene, std::size_t sample) const {
    return counts_[gene * n_samples() + sample];
  }

  const std::int64_t* row(std::size_t gene) const {
    return counts_.data() + gene * n_samples();
  }

  const std::vector<std::int64_t>& counts() const { return counts_; }

  bool unique_gene_ids() const { return unique_gene_ids_; }

  std::int64_t row_sum(std::size_t gene) const {
    std::int64_t s = 0;
    for (std::size_t j = 0; j < n_samples(); ++j) s += at(gene, j);
    return s;
  }

  /// Column sums (library sizes S_j).
  std::vector<std::int64_t> library_sizes() const {
    std::vector<std::int64_t> s(n_samples(), 0);
    for (std::size_t i = 0; i < n_genes(); ++i)
      for (std::size_t j = 0; j < n_samples(); ++j) s[j] += at(i, j);
    return s;
  }

  /// Index of a sample ID, or npos.
  std::size_t sample_index(const SampleId& id) const {
    for (std::size_t j = 0; j < sample_ids_.size(); ++j)
      if (sample_ids_[j] == id) return j;
    return npos;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  CountMatrix(std::vector<GeneId> gene_ids, std::vector<SampleId> sample_ids,
              std::vector<std::int64_t> counts, bool require_unique_genes)
      : gene_ids_(std::move(gene_ids)),
        sample_ids_(std::move(sample_ids)),
        counts_(std::move(counts)),
        unique_gene_ids_(require_unique_genes) {
    if (gene_ids_.empty()) throw ValidationError("count matrix has no genes");
    if (sample_ids_.size() < 2)
      throw ValidationError("count matrix needs at least 2 samples");
    if (counts_.size() != gene_ids_.size() * sample_ids_.size())
      throw ValidationError("count matrix shape mismatch");
    if (require_unique_genes) {
      detail::require_unique(gene_ids_, "gene ID");
    } else {
      std::unordered_set<GeneId> seen(gene_ids_.begin(), gene_ids_.end());
      unique_gene_ids_ = seen.size() == gene_ids_.size();
    }
    detail::require_unique(sample_ids_, "sample ID");
    for (auto c : counts_)
      if (c < 0) throw ValidationError("negative count in matrix");
  }

  std::vector<GeneId> gene_ids_;
  std::vector<SampleId> sample_ids_;
  std::vector<std::int64_t> counts_;
  bool unique_gene_ids_;
};

/// Binary phenotype assignment aligned to a CountMatrix sample axis.
class PhenotypeLabels {
 public:
  /// `labels[j]` is the group (0 or 1) of `sample_ids[j]`.
  PhenotypeLabels(std::vector<SampleId> sample_ids, std::vector<int> labels)
      : sample_ids_(std::move(sample_ids)), labels_(std::move(labels)) {
    if (sample_ids_.size() != labels_.size())
      throw ValidationError("phenotype labels do not match sample axis");
    detail::require_unique(sample_ids_, "sample ID");
    for (int l : labels_) {
      if (l != 0 && l != 1)
        throw ValidationError("phenotype label outside {0,1}");
    }
    m1_ = 0;
    for (int l : labels_) m1_ += l;
    m0_ = labels_.size() - m1_;
    if (m0_ == 0 || m1_ == 0)
      throw ValidationError("each phenotype group needs at least one sample");
  }

  const std::vector<SampleId>& sample_ids() const { return sample_ids_; }
  const std::vector<int>& labels() const { return labels_; }
  std::size_t group_size(int g) const { return g == 0 ? m0_ : m1_; }
  std::size_t m0() const { return m0_; }
  std::size_t m1() const { return m1_; }

  /// Checks this assignment covers exactly the samples of `cm`, in order.
  void require_matches(const CountMatrix& cm) const {
    if (sample_ids_ != cm.sample_ids())
      throw ValidationError("phenotype sample IDs do not match count matrix");
  }

 private:
  std::vector<SampleId> sample_ids_;
  std::vector<int> labels_;
  std::size_t m0_ = 0, m1_ = 0;
};

/// A named collection of gene IDs. Members are stored sorted and unique.
class GeneSet {
 public:
  GeneSet(std::string name, std::string description,
          std::vector<GeneId> members)
      : name_(std::move(name)), description_(std::move(description)) {
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    if (members.empty())
      throw ValidationError("gene set '" + name_ + "' has no members");
    members_ = std::move(members);
  }

  const std::string& name() const { return name_; }
  const std::string& description() const { return description_; }
  const std::vector<GeneId>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }

  bool contains(const GeneId& g) const {
    return std::binary_search(members_.begin(), members_.end(), g);
  }

 private:
  std::string name_;
  std::string description_;
  std::vector<GeneId> members_;
};

/// Ordered list of gene sets plus the per-gene membership count f_g
/// (number of sets a gene belongs to), which PADOG's weights consume.
class GeneSetDatabase {
 public:
  explicit GeneSetDatabase(std::vector<GeneSet> sets) : sets_(std::move(sets)) {
    std::unordered_set<std::string> names;
    for (const auto& s : sets_) {
      if (!names.insert(s.name()).second)
        throw ValidationError("duplicate gene set name: " + s.name());
      for (const auto& g : s.members()) ++membership_count_[g];
    }
  }

  const std::vector<GeneSet>& sets() const { return sets_; }
  std::size_t size() const { return sets_.size(); }
  bool empty() const { return sets_.empty(); }

  /// f_g; 0 for genes absent from every set.
  int membership_count(const GeneId& g) const {
    auto it = membership_count_.find(g);
    return it == membership_count_.end() ? 0 : it->second;
  }

  const std::unordered_map<GeneId, int>& membership_counts() const {
    return membership_count_;
  }

  /// Union of all member genes, sorted.
  std::vector<GeneId> annotated_genes() const {
    std::vector<GeneId> all;
    all.reserve(membership_count_.size());
    for (const auto& [g, _] : membership_count_) all.push_back(g);
    std::sort(all.begin(), all.end());
    return all;
  }

 private:
  std::vector<GeneSet> sets_;
  std::unordered_map<GeneId, int> membership_count_;
};

/// Per-gene differential expression results.
struct DEResultRow {
  GeneId gene_id;
  double log_fold_change = 0.0;  // log2 scale, group0 minus group1
  double statistic = 0.0;
  double p_value = 1.0;
  double adjusted_p = 1.0;
  bool variance_floored = false;  // both group variances hit the floor
};

class DEResultTable {
 public:
  explicit DEResultTable(std::vector<DEResultRow> rows)
      : rows_(std::move(rows)) {
    std::unordered_set<GeneId> seen;
    for (const auto& r : rows_) {
      if (!seen.insert(r.gene_id).second)
        throw ValidationError("duplicate gene in DE table: " + r.gene_id);
      if (!(r.p_value >= 0.0 && r.p_value <= 1.0))
        throw ValidationError("DE p-value outside [0,1] for " + r.gene_id);
    }
  }

  const std::vector<DEResultRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

 private:
  std::vector<DEResultRow> rows_;
};

/// Genes ordered by a signed gene-level statistic, descending. Ties are
/// broken by ascending gene ID so rankings are reproducible.
class RankedGeneList {
 public:
  RankedGeneList(std::vector<GeneId> ids, std::vector<double> stats) {
    if (ids.size() != stats.size())
      throw ValidationError("ranked list shape mismatch");
    if (ids.empty()) throw ValidationError("ranked list is empty");
    detail::require_unique(ids, "gene ID in ranking");
    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (stats[a] != stats[b]) return stats[a] > stats[b];
      return ids[a] < ids[b];
    });
    ids_.reserve(ids.size());
    stats_.reserve(ids.size());
    for (auto i : order) {
      ids_.push_back(std::move(ids[i]));
      stats_.push_back(stats[i]);
    }
  }

  std::size_t size() const { return ids_.size(); }
  const std::vector<GeneId>& gene_ids() const { return ids_; }
  const std::vector<double>& statistics() const { return stats_; }

 private:
  std::vector<GeneId> ids_;
  std::vector<double> stats_;
};

/// One tested gene set. ORA rows fill the contingency fields; FCS rows fill
/// the normalized-score fields. Unused fields stay at their defaults.
struct EnrichmentRow {
  std::string set_name;
  double score = std::numeric_limits<double>::quiet_NaN();  // ES, raw PADOG
                                                            // score, or H
  double raw_p = 1.0;
  double adjusted_p = std::numeric_limits<double>::quiet_NaN();
  int set_size_used = 0;

  // ORA
  long universe_size = -1;  // N
  long set_in_universe = -1;   // G
  long de_in_universe = -1;    // L
  long hits = -1;              // H
  double odds = std::numeric_limits<double>::quiet_NaN();  // Wallenius omega

  // FCS
  double norm_score = std::numeric_limits<double>::quiet_NaN();  // NES or
                                                                 // standardized
  std::string scheme;  // PHENOTYPE / GENE_SET / GENE_LABEL
  int n_perm = 0;
};

struct EnrichmentResultTable {
  std::string method;
  std::vector<EnrichmentRow> rows;
  std::uint64_t seed = 0;
  /// "BH", "bonferroni", or "none"; post_hoc marks adjustment applied by the
  /// caller rather than the method itself.
  std::string adjustment = "BH";
  bool adjustment_post_hoc = false;
  std::vector<std::string> warnings;

  const EnrichmentRow* find(const std::string& set_name) const {
    for (const auto& r : rows)
      if (r.set_name == set_name) return &r;
    return nullptr;
  }
};

enum class UniversePolicy { kExperiment, kAnnotated, kIntersection };

enum class NesMode { kSameSign, kAllAbs };

/// Knobs shared by the permutation-based and ORA engines.
struct AnalysisConfig {
  std::uint64_t seed = 1;
  int n_permutations = 1000;
  double weight_exponent = 1.0;  // allowed: 0, 1, 1.5, 2
  int min_set_size = 5;
  int max_set_size = 500;
  UniversePolicy universe = UniversePolicy::kIntersection;
  double alpha = 0.05;
  int n_resamples = 2000;  // GOSeq resampling iterations
  NesMode nes_mode = NesMode::kSameSign;
  int workers = 1;

  void validate() const {
    if (n_permutations < 1)
      throw ValidationError("n_permutations must be >= 1");
    if (min_set_size < 1) throw ValidationError("min_set_size must be >= 1");
    if (min_set_size > max_set_size)
      throw ValidationError("min_set_size exceeds max_set_size");
    const double allowed[] = {0.0, 1.0, 1.5, 2.0};
    bool ok = false;
    for (double a : allowed) ok = ok || weight_exponent == a;
    if (!ok)
      throw ValidationError("weight exponent must be one of 0, 1, 1.5, 2");
    if (!(alpha > 0.0 && alpha < 1.0) && alpha != 1.0)
      throw ValidationError("alpha must lie in (0,1]");
    if (n_resamples < 1) throw ValidationError("n_resamples must be >= 1");
    if (workers < 1) throw ValidationError("workers must be >= 1");
  }
};

/// Intersects every set with `universe`, drops sets whose restricted size
/// falls outside [min_size, max_size], and recomputes membership counts.
inline GeneSetDatabase restrict_database(
    const GeneSetDatabase& db, const std::unordered_set<GeneId>& universe,
    int min_size, int max_size) {
  if (min_size < 1) throw ValidationError("min_size must be >= 1");
  if (min_size > max_size)
    throw ValidationError("min_size exceeds max_size");
  std::vector<GeneSet> kept;
  for (const auto& s : db.sets()) {
    std::vector<GeneId> members;
    for (const auto& g : s.members())
      if (universe.count(g)) members.push_back(g);
    auto n = static_cast<long>(members.size());
    if (n < min_size || n > max_size) continue;
    kept.emplace_back(s.name(), s.description(), std::move(members));
  }
  if (kept.empty())
    throw ValidationError("no testable gene sets after restriction");
  return GeneSetDatabase(std::move(kept));
}

inline GeneSetDatabase restrict_database(const GeneSetDatabase& db,
                                         const std::vector<GeneId>& universe,
                                         int min_size, int max_size) {
  return restrict_database(
      db, std::unordered_set<GeneId>(universe.begin(), universe.end()),
      min_size, max_size);
}

}  // namespace gsatk

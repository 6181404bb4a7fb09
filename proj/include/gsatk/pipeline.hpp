#pragma once

// End-to-end pipelines (one per GSA method family) and the factorial
// multiverse runner. Every run emits a provenance record that fully
// determines it; re-running from the record reproduces the outputs byte for
// byte.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "gsatk/diffexpr.hpp"
#include "gsatk/error.hpp"
#include "gsatk/fcs.hpp"
#include "gsatk/io.hpp"
#include "gsatk/ora.hpp"
#include "gsatk/parallel.hpp"
#include "gsatk/preprocess.hpp"
#include "gsatk/stats.hpp"
#include "gsatk/types.hpp"
#include "gsatk/version.hpp"

namespace gsatk {

using ordered_json = nlohmann::ordered_json;

enum class GsaMethod {
  kOraFisher,
  kOraEase,
  kGoseqWallenius,
  kGoseqResampling,
  kGoseqHypergeometric,
  kGsea,
  kPadog
};

enum class RankStat {
  kSignalToNoise,
  kTStatistic,
  kDiffOfClasses,
  kSignedLogP
};

enum class DeStat { kWelch, kModeratedT };

namespace detail {

inline const char* to_string(GsaMethod m) {
  switch (m) {
    case GsaMethod::kOraFisher: return "ora_fisher";
    case GsaMethod::kOraEase: return "ora_ease";
    case GsaMethod::kGoseqWallenius: return "goseq_wallenius";
    case GsaMethod::kGoseqResampling: return "goseq_resampling";
    case GsaMethod::kGoseqHypergeometric: return "goseq_hypergeometric";
    case GsaMethod::kGsea: return "gsea";
    case GsaMethod::kPadog: return "padog";
  }
  return "?";
}

inline const char* to_string(RankStat r) {
  switch (r) {
    case RankStat::kSignalToNoise: return "s2n";
    case RankStat::kTStatistic: return "t";
    case RankStat::kDiffOfClasses: return "doc";
    case RankStat::kSignedLogP: return "signed_logp";
  }
  return "?";
}

inline const char* to_string(DeStat d) {
  return d == DeStat::kWelch ? "welch" : "moderated_t";
}

inline const char* to_string(NesMode m) {
  return m == NesMode::kSameSign ? "same_sign" : "all_abs";
}

inline const char* scheme_name(PermScheme s) {
  switch (s) {
    case PermScheme::kPhenotype: return "phenotype";
    case PermScheme::kGeneSet: return "gene_set";
    case PermScheme::kGeneLabel: return "gene_label";
  }
  return "?";
}

template <typename T>
T parse_enum(const std::string& v,
             const std::vector<std::pair<std::string, T>>& table,
             const char* what) {
  for (const auto& [name, value] : table)
    if (name == v) return value;
  throw ValidationError(std::string("unknown ") + what + ": " + v);
}

inline GsaMethod parse_method(const std::string& v) {
  return parse_enum<GsaMethod>(
      v,
      {{"ora_fisher", GsaMethod::kOraFisher},
       {"ora_ease", GsaMethod::kOraEase},
       {"goseq_wallenius", GsaMethod::kGoseqWallenius},
       {"goseq_resampling", GsaMethod::kGoseqResampling},
       {"goseq_hypergeometric", GsaMethod::kGoseqHypergeometric},
       {"gsea", GsaMethod::kGsea},
       {"padog", GsaMethod::kPadog}},
      "method");
}

inline RankStat parse_rank_stat(const std::string& v) {
  return parse_enum<RankStat>(v,
                              {{"s2n", RankStat::kSignalToNoise},
                               {"t", RankStat::kTStatistic},
                               {"doc", RankStat::kDiffOfClasses},
                               {"signed_logp", RankStat::kSignedLogP}},
                              "gene statistic");
}

inline DeStat parse_de_stat(const std::string& v) {
  return parse_enum<DeStat>(
      v, {{"welch", DeStat::kWelch}, {"moderated_t", DeStat::kModeratedT}},
      "DE statistic");
}

inline PermScheme parse_scheme(const std::string& v) {
  return parse_enum<PermScheme>(v,
                                {{"phenotype", PermScheme::kPhenotype},
                                 {"gene_set", PermScheme::kGeneSet},
                                 {"gene_label", PermScheme::kGeneLabel}},
                                "permutation scheme");
}

inline UniversePolicy parse_universe(const std::string& v) {
  return parse_enum<UniversePolicy>(
      v,
      {{"experiment", UniversePolicy::kExperiment},
       {"annotated", UniversePolicy::kAnnotated},
       {"intersection", UniversePolicy::kIntersection}},
      "universe policy");
}

inline DupStrategy parse_dedupe(const std::string& v) {
  return parse_enum<DupStrategy>(v,
                                 {{"keep_first", DupStrategy::kKeepFirst},
                                  {"mean", DupStrategy::kMean},
                                  {"max_count", DupStrategy::kMaxCount}},
                                 "duplicate strategy");
}

inline const char* to_string(DupStrategy s) {
  switch (s) {
    case DupStrategy::kKeepFirst: return "keep_first";
    case DupStrategy::kMean: return "mean";
    case DupStrategy::kMaxCount: return "max_count";
  }
  return "?";
}

inline NormMethod parse_normalize(const std::string& v) {
  return parse_enum<NormMethod>(v,
                                {{"tmm", NormMethod::kTmm},
                                 {"median_of_ratios", NormMethod::kMedianOfRatios},
                                 {"none", NormMethod::kNone}},
                                "normalization method");
}

inline BiasKind parse_bias(const std::string& v) {
  return parse_enum<BiasKind>(
      v, {{"length", BiasKind::kLength}, {"total_count", BiasKind::kTotalCount}},
      "bias");
}

inline NesMode parse_nes_mode(const std::string& v) {
  return parse_enum<NesMode>(
      v, {{"same_sign", NesMode::kSameSign}, {"all_abs", NesMode::kAllAbs}},
      "nes mode");
}

/// "total_count:10" | "count:c,k" | "cpm:c,k" with k = "auto" meaning the
/// smaller phenotype group size.
inline std::string format_prefilter(const FilterRule& r) {
  switch (r.kind) {
    case FilterRule::Kind::kTotalCount:
      return "total_count:" + format_double(r.threshold);
    case FilterRule::Kind::kCountInSamples:
      return "count:" + format_double(r.threshold) + "," +
             (r.min_samples <= 0 ? std::string("auto")
                                 : std::to_string(r.min_samples));
    case FilterRule::Kind::kCpmInSamples:
      return "cpm:" + format_double(r.threshold) + "," +
             (r.min_samples <= 0 ? std::string("auto")
                                 : std::to_string(r.min_samples));
  }
  return "?";
}

inline FilterRule parse_prefilter(const std::string& v) {
  auto colon = v.find(':');
  const std::string kind = colon == std::string::npos ? v : v.substr(0, colon);
  const std::string args =
      colon == std::string::npos ? "" : v.substr(colon + 1);
  auto parse_ck = [&](FilterRule::Kind k) {
    auto comma = args.find(',');
    FilterRule r;
    r.kind = k;
    try {
      r.threshold = std::stod(args.substr(0, comma));
    } catch (const std::exception&) {
      throw ValidationError("bad prefilter threshold in '" + v + "'");
    }
    if (comma == std::string::npos) {
      r.min_samples = 0;  // auto
    } else {
      const std::string ks = args.substr(comma + 1);
      if (ks == "auto") {
        r.min_samples = 0;
      } else {
        try {
          r.min_samples = std::stoi(ks);
        } catch (const std::exception&) {
          throw ValidationError("bad prefilter sample count in '" + v + "'");
        }
        if (r.min_samples < 1)
          throw ValidationError("prefilter sample count must be >= 1");
      }
    }
    return r;
  };
  if (kind == "total_count") {
    FilterRule r;
    r.kind = FilterRule::Kind::kTotalCount;
    try {
      r.threshold = std::stod(args);
    } catch (const std::exception&) {
      throw ValidationError("bad prefilter threshold in '" + v + "'");
    }
    return r;
  }
  if (kind == "count") return parse_ck(FilterRule::Kind::kCountInSamples);
  if (kind == "cpm") return parse_ck(FilterRule::Kind::kCpmInSamples);
  throw ValidationError("unknown prefilter rule: " + v);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string fnv1a64_hex(std::string_view s) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(s)));
  return std::string(buf);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pipeline specification
// ---------------------------------------------------------------------------

/// One selected option per pipeline axis.
struct PipelineSpec {
  FilterRule prefilter_rule = FilterRule::total_count(10.0);
  DupStrategy dedupe = DupStrategy::kKeepFirst;
  NormMethod normalize = NormMethod::kTmm;
  DeStat de_statistic = DeStat::kWelch;
  RankStat gene_statistic = RankStat::kSignalToNoise;
  GsaMethod method = GsaMethod::kOraFisher;
  PermScheme scheme = PermScheme::kPhenotype;  // gsea only
  BiasKind bias = BiasKind::kLength;           // goseq only
  AnalysisConfig config;

  void validate() const {
    config.validate();
    if (method == GsaMethod::kGsea && scheme == PermScheme::kPhenotype &&
        gene_statistic == RankStat::kSignedLogP)
      throw ValidationError(
          "phenotype permutation ranks genes inside the permutation loop; "
          "signed_logp is only available for gene_set/gene_label schemes");
  }

  /// Ordered key/value form used by provenance records and the grid runner.
  std::vector<std::pair<std::string, std::string>> to_kv() const {
    return {
        {"method", detail::to_string(method)},
        {"prefilter", detail::format_prefilter(prefilter_rule)},
        {"dedupe", detail::to_string(dedupe)},
        {"normalize", to_string(normalize)},
        {"de_statistic", detail::to_string(de_statistic)},
        {"gene_statistic", detail::to_string(gene_statistic)},
        {"scheme", detail::scheme_name(scheme)},
        {"universe", to_string(config.universe)},
        {"bias", to_string(bias)},
        {"alpha", format_double(config.alpha)},
        {"seed", std::to_string(config.seed)},
        {"n_permutations", std::to_string(config.n_permutations)},
        {"weight_exponent", format_double(config.weight_exponent)},
        {"min_set_size", std::to_string(config.min_set_size)},
        {"max_set_size", std::to_string(config.max_set_size)},
        {"n_resamples", std::to_string(config.n_resamples)},
        {"nes_mode", detail::to_string(config.nes_mode)},
        // workers is accepted by from_kv but never recorded: by contract it
        // cannot change results, so provenance stays worker-independent.
    };
  }

  static PipelineSpec from_kv(
      const std::map<std::string, std::string>& kv) {
    PipelineSpec s;
    auto get = [&](const char* key) -> const std::string* {
      auto it = kv.find(key);
      return it == kv.end() ? nullptr : &it->second;
    };
    for (const auto& [key, _] : kv) {
      static const std::set<std::string> known = {
          "method",        "prefilter",      "dedupe",
          "normalize",     "de_statistic",   "gene_statistic",
          "scheme",        "universe",       "bias",
          "alpha",         "seed",           "n_permutations",
          "weight_exponent", "min_set_size", "max_set_size",
          "n_resamples",   "nes_mode",       "workers"};
      if (!known.count(key))
        throw ValidationError("unknown pipeline option: " + key);
    }
    try {
      if (auto* v = get("method")) s.method = detail::parse_method(*v);
      if (auto* v = get("prefilter"))
        s.prefilter_rule = detail::parse_prefilter(*v);
      if (auto* v = get("dedupe")) s.dedupe = detail::parse_dedupe(*v);
      if (auto* v = get("normalize")) s.normalize = detail::parse_normalize(*v);
      if (auto* v = get("de_statistic"))
        s.de_statistic = detail::parse_de_stat(*v);
      if (auto* v = get("gene_statistic"))
        s.gene_statistic = detail::parse_rank_stat(*v);
      if (auto* v = get("scheme")) s.scheme = detail::parse_scheme(*v);
      if (auto* v = get("universe"))
        s.config.universe = detail::parse_universe(*v);
      if (auto* v = get("bias")) s.bias = detail::parse_bias(*v);
      if (auto* v = get("alpha")) s.config.alpha = std::stod(*v);
      if (auto* v = get("seed"))
        s.config.seed = static_cast<std::uint64_t>(std::stoull(*v));
      if (auto* v = get("n_permutations"))
        s.config.n_permutations = std::stoi(*v);
      if (auto* v = get("weight_exponent"))
        s.config.weight_exponent = std::stod(*v);
      if (auto* v = get("min_set_size")) s.config.min_set_size = std::stoi(*v);
      if (auto* v = get("max_set_size")) s.config.max_set_size = std::stoi(*v);
      if (auto* v = get("n_resamples")) s.config.n_resamples = std::stoi(*v);
      if (auto* v = get("nes_mode"))
        s.config.nes_mode = detail::parse_nes_mode(*v);
      if (auto* v = get("workers")) s.config.workers = std::stoi(*v);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception& e) {
      throw ValidationError(std::string("bad pipeline option value: ") +
                            e.what());
    }
    s.validate();
    return s;
  }
};

struct PipelineInputs {
  std::string counts_path;
  std::string phenotype_path;
  std::string gmt_path;
  std::string mapping_path;  // optional
  std::string lengths_path;  // optional
};

struct PipelineRunResult {
  EnrichmentResultTable table;
  std::string result_tsv;
  ordered_json provenance;
  std::vector<std::string> warnings;
};

namespace detail {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("stage '") + name + "': " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(std::string("stage '") + name + "': " + e.what());
  }
}

inline bool is_ora_family(GsaMethod m) {
  return m == GsaMethod::kOraFisher || m == GsaMethod::kOraEase ||
         m == GsaMethod::kGoseqWallenius ||
         m == GsaMethod::kGoseqResampling ||
         m == GsaMethod::kGoseqHypergeometric;
}

}  // namespace detail

/// Runs the full pipeline for `spec` on the given input files.
inline PipelineRunResult run_pipeline(const PipelineSpec& spec,
                                      const PipelineInputs& inputs) {
  spec.validate();
  PipelineRunResult out;

  const std::string counts_text = detail::stage(
      "ingest", [&] { return read_file(inputs.counts_path); });
  const std::string phenotype_text = detail::stage(
      "ingest", [&] { return read_file(inputs.phenotype_path); });
  const std::string gmt_text =
      detail::stage("ingest", [&] { return read_file(inputs.gmt_path); });

  auto cm = detail::stage("ingest",
                          [&] { return parse_count_matrix(counts_text); });
  auto ph = detail::stage("ingest", [&] {
    return parse_phenotype(phenotype_text, cm.sample_ids());
  });
  auto gmt = detail::stage("ingest", [&] { return parse_gmt(gmt_text); });
  for (const auto& w : gmt.warnings) out.warnings.push_back(w);

  std::optional<GeneIdMapping> mapping;
  if (!inputs.mapping_path.empty()) {
    auto parsed = detail::stage("ingest", [&] {
      return parse_mapping(read_file(inputs.mapping_path));
    });
    for (const auto& w : parsed.warnings) out.warnings.push_back(w);
    mapping.emplace(std::move(parsed.mapping));
  }
  std::unordered_map<GeneId, double> lengths;
  if (!inputs.lengths_path.empty())
    lengths = detail::stage(
        "ingest", [&] { return parse_lengths(read_file(inputs.lengths_path)); });

  // Resolve the "auto" sample threshold against the smaller group.
  FilterRule rule = spec.prefilter_rule;
  if (rule.kind != FilterRule::Kind::kTotalCount && rule.min_samples <= 0)
    rule.min_samples =
        static_cast<int>(std::min(ph.m0(), ph.m1()));

  cm = detail::stage("prefilter", [&] { return prefilter(cm, rule); });

  if (mapping) {
    auto [converted, report] = detail::stage(
        "convert-ids", [&] { return convert_ids(cm, *mapping); });
    cm = std::move(converted);
    if (!report.unmapped_sources.empty())
      out.warnings.push_back(
          "convert-ids dropped " +
          std::to_string(report.unmapped_sources.size()) +
          " unmapped gene(s)");
  }
  cm = detail::stage("dedupe",
                     [&] { return remove_duplicates(cm, spec.dedupe); });

  const auto nf = detail::stage(
      "normalize", [&] { return normalization_factors(cm, spec.normalize); });
  const auto tm =
      detail::stage("transform", [&] { return log_cpm_transform(cm, nf); });

  EnrichmentResultTable table;

  if (detail::is_ora_family(spec.method)) {
    const auto gs = detail::stage("group-summaries", [&] {
      return group_summaries(tm, ph);
    });
    const auto de = detail::stage("de", [&] {
      return spec.de_statistic == DeStat::kWelch ? welch_de(gs)
                                                 : moderated_t(gs);
    });
    const auto call = detail::stage(
        "call-de", [&] { return call_de_genes(de, spec.config.alpha); });
    const auto universe = detail::stage("universe", [&] {
      return build_universe(call.universe, gmt.db, spec.config.universe);
    });
    const auto db = detail::stage("restrict-db", [&] {
      return restrict_database(gmt.db, universe, spec.config.min_set_size,
                               spec.config.max_set_size);
    });
    switch (spec.method) {
      case GsaMethod::kOraFisher:
        table = detail::stage(
            "ora", [&] { return ora_fisher(call.de_list, universe, db); });
        break;
      case GsaMethod::kOraEase:
        table = detail::stage(
            "ora", [&] { return ora_ease(call.de_list, universe, db); });
        break;
      default: {
        const GoseqMethod gm =
            spec.method == GsaMethod::kGoseqWallenius
                ? GoseqMethod::kWallenius
                : spec.method == GsaMethod::kGoseqResampling
                      ? GoseqMethod::kResampling
                      : GoseqMethod::kHypergeometric;
        if (gm == GoseqMethod::kHypergeometric) {
          // The fallback ignores the weighting function; do not demand a
          // covariate for it.
          table = detail::stage("goseq", [&] {
            return ora_goseq(call.de_list, universe, db, {}, gm, spec.config);
          });
          break;
        }
        const auto pwf = detail::stage("pwf", [&] {
          std::unordered_set<GeneId> de_set(call.de_list.begin(),
                                            call.de_list.end());
          std::vector<int> flags(universe.size());
          std::vector<double> covariate(universe.size());
          std::unordered_map<GeneId, double> totals;
          if (spec.bias == BiasKind::kTotalCount) {
            for (std::size_t i = 0; i < cm.n_genes(); ++i)
              totals[cm.gene_ids()[i]] =
                  static_cast<double>(cm.row_sum(i));
          }
          for (std::size_t i = 0; i < universe.size(); ++i) {
            flags[i] = de_set.count(universe[i]) ? 1 : 0;
            if (spec.bias == BiasKind::kLength) {
              auto it = lengths.find(universe[i]);
              if (it == lengths.end())
                throw ValidationError("no transcript length for gene " +
                                      universe[i] +
                                      " (provide a lengths table)");
              covariate[i] = it->second;
            } else {
              auto it = totals.find(universe[i]);
              if (it == totals.end())
                throw ValidationError("no count total for universe gene " +
                                      universe[i]);
              covariate[i] = it->second;
            }
          }
          return fit_pwf(universe, flags, covariate, spec.bias);
        });
        table = detail::stage("goseq", [&] {
          return ora_goseq(call.de_list, universe, db, pwf, gm, spec.config);
        });
        break;
      }
    }
  } else if (spec.method == GsaMethod::kGsea) {
    if (spec.scheme == PermScheme::kPhenotype) {
      const auto db = detail::stage("restrict-db", [&] {
        return restrict_database(gmt.db, tm.gene_ids,
                                 spec.config.min_set_size,
                                 spec.config.max_set_size);
      });
      const GeneStatKind kind =
          spec.gene_statistic == RankStat::kSignalToNoise
              ? GeneStatKind::kSignalToNoise
              : spec.gene_statistic == RankStat::kTStatistic
                    ? GeneStatKind::kTStatistic
                    : GeneStatKind::kDiffOfClasses;
      table = detail::stage(
          "gsea", [&] { return gsea_test(tm, ph, db, kind, spec.config); });
    } else {
      const auto ranking = detail::stage("ranking", [&] {
        const auto gs = group_summaries(tm, ph);
        if (spec.gene_statistic == RankStat::kSignedLogP) {
          const auto de = spec.de_statistic == DeStat::kWelch
                              ? welch_de(gs)
                              : moderated_t(gs);
          return signed_logp_ranking(de);
        }
        const GeneStatKind kind =
            spec.gene_statistic == RankStat::kSignalToNoise
                ? GeneStatKind::kSignalToNoise
                : spec.gene_statistic == RankStat::kTStatistic
                      ? GeneStatKind::kTStatistic
                      : GeneStatKind::kDiffOfClasses;
        return gene_level_statistic(gs, kind);
      });
      const auto db = detail::stage("restrict-db", [&] {
        return restrict_database(gmt.db, ranking.gene_ids(),
                                 spec.config.min_set_size,
                                 spec.config.max_set_size);
      });
      table = detail::stage("gsea", [&] {
        return gsea_test(ranking, db, spec.scheme, spec.config);
      });
    }
  } else {  // PADOG
    const auto db = detail::stage("restrict-db", [&] {
      return restrict_database(gmt.db, tm.gene_ids, spec.config.min_set_size,
                               spec.config.max_set_size);
    });
    table = detail::stage(
        "padog", [&] { return padog_test(tm, ph, db, spec.config); });
    // Multiple-testing adjustment is the caller's job for this method; it is
    // applied here as an explicit, flagged step.
    std::vector<double> p;
    p.reserve(table.rows.size());
    for (const auto& r : table.rows) p.push_back(r.raw_p);
    const auto adj = adjust_bh(p);
    for (std::size_t i = 0; i < table.rows.size(); ++i)
      table.rows[i].adjusted_p = adj[i];
    table.adjustment = "BH";
    table.adjustment_post_hoc = true;
  }

  if (spec.method == GsaMethod::kGsea || spec.method == GsaMethod::kPadog) {
    if (spec.config.n_permutations < 1000)
      out.warnings.push_back(
          "n_permutations below 1000; permutation p-values will be coarse");
  }
  for (const auto& w : table.warnings) out.warnings.push_back(w);

  out.result_tsv = detail::is_ora_family(spec.method)
                       ? write_ora_table(table)
                       : write_fcs_table(table);
  out.table = std::move(table);

  ordered_json prov;
  prov["schema_version"] = kProvenanceSchemaVersion;
  prov["tool"] = "gsatk";
  prov["version"] = kVersion;
  ordered_json spec_json;
  for (const auto& [k, v] : spec.to_kv()) spec_json[k] = v;
  prov["spec"] = spec_json;
  ordered_json in_json;
  auto add_input = [&](const char* key, const std::string& path,
                       const std::string& text) {
    if (path.empty()) return;
    ordered_json e;
    e["path"] = path;
    e["fnv1a64"] = detail::fnv1a64_hex(text);
    in_json[key] = e;
  };
  add_input("counts", inputs.counts_path, counts_text);
  add_input("phenotype", inputs.phenotype_path, phenotype_text);
  add_input("gmt", inputs.gmt_path, gmt_text);
  if (!inputs.mapping_path.empty())
    add_input("mapping", inputs.mapping_path,
              read_file(inputs.mapping_path));
  if (!inputs.lengths_path.empty())
    add_input("lengths", inputs.lengths_path,
              read_file(inputs.lengths_path));
  prov["inputs"] = in_json;
  prov["outputs"] = ordered_json::array({"result.tsv"});
  out.provenance = std::move(prov);
  return out;
}

/// Runs and writes result.tsv + provenance.json into `out_dir`.
inline PipelineRunResult run_pipeline_to_dir(const PipelineSpec& spec,
                                             const PipelineInputs& inputs,
                                             const std::string& out_dir) {
  auto result = run_pipeline(spec, inputs);
  std::filesystem::create_directories(out_dir);
  write_file(out_dir + "/result.tsv", result.result_tsv);
  write_file(out_dir + "/provenance.json", result.provenance.dump(2) + "\n");
  return result;
}

/// Re-runs a recorded pipeline. Input fingerprints are verified before the
/// run; outputs land in `out_dir`.
inline PipelineRunResult replay_provenance(const std::string& provenance_path,
                                           const std::string& out_dir) {
  ordered_json prov;
  try {
    prov = ordered_json::parse(read_file(provenance_path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad provenance JSON: ") + e.what());
  }
  if (!prov.contains("spec") || !prov.contains("inputs"))
    throw ValidationError("provenance record is missing spec or inputs");
  std::map<std::string, std::string> kv;
  for (auto it = prov["spec"].begin(); it != prov["spec"].end(); ++it)
    kv[it.key()] = it.value().get<std::string>();
  const auto spec = PipelineSpec::from_kv(kv);
  PipelineInputs inputs;
  auto load = [&](const char* key, std::string& path) {
    if (!prov["inputs"].contains(key)) return;
    const auto& e = prov["inputs"][key];
    path = e["path"].get<std::string>();
    const auto text = read_file(path);
    if (e.contains("fnv1a64") &&
        e["fnv1a64"].get<std::string>() != detail::fnv1a64_hex(text))
      throw ValidationError(std::string("input ") + key + " (" + path +
                            ") does not match the recorded fingerprint");
  };
  load("counts", inputs.counts_path);
  load("phenotype", inputs.phenotype_path);
  load("gmt", inputs.gmt_path);
  load("mapping", inputs.mapping_path);
  load("lengths", inputs.lengths_path);
  return run_pipeline_to_dir(spec, inputs, out_dir);
}

// ---------------------------------------------------------------------------
// Multiverse
// ---------------------------------------------------------------------------

/// Pairwise agreement metrics across a factorial grid of pipelines.
struct MultiverseReport {
  std::vector<PipelineSpec> specs;
  std::vector<std::string> labels;
  std::vector<bool> failed;
  std::vector<std::string> errors;  // aligned with specs; empty if ok
  std::vector<PipelineRunResult> runs;
  std::vector<std::vector<double>> jaccard;   // NaN where a side failed
  std::vector<std::vector<double>> spearman;  // NaN where undefined
  /// axis -> (mean Jaccard over pairs differing only in that axis, n pairs)
  std::vector<std::pair<std::string, std::pair<double, int>>> axis_effects;

  const EnrichmentResultTable& table(std::size_t i) const {
    return runs[i].table;
  }
};

namespace detail {

inline double jaccard_index(const std::set<std::string>& a,
                            const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (v[a] != v[b]) return v[a] < v[b];
    return a < b;
  });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && v[order[j]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k) r[order[k]] = avg;
    i = j;
  }
  return r;
}

/// Spearman rank correlation with average ranks; identical inputs give
/// exactly 1.
inline double spearman_correlation(const std::vector<double>& x,
                                   const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    return std::numeric_limits<double>::quiet_NaN();
  if (x == y) return 1.0;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0)
    return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

/// Runs every spec of the grid; a failed pipeline marks its row without
/// aborting the rest. Pairwise agreement: Jaccard of significant sets at
/// each pipeline's alpha, Spearman over shared set raw p-values.
inline MultiverseReport run_multiverse(const std::vector<PipelineSpec>& grid,
                                       const PipelineInputs& inputs,
                                       int workers = 1) {
  if (grid.size() < 2)
    throw ValidationError("multiverse needs at least 2 pipeline specs");
  for (const auto& s : grid) s.validate();

  MultiverseReport report;
  report.specs = grid;
  report.failed.assign(grid.size(), false);
  report.errors.assign(grid.size(), "");
  report.runs.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    char label[32];
    std::snprintf(label, sizeof(label), "pipeline_%03zu", i);
    report.labels.emplace_back(label);
  }

  parallel_for(grid.size(), workers, [&](std::size_t i) {
    try {
      // Pipelines run concurrently; each is single-threaded internally.
      PipelineSpec spec = grid[i];
      spec.config.workers = 1;
      report.runs[i] = run_pipeline(spec, inputs);
    } catch (const Error& e) {
      report.failed[i] = true;
      report.errors[i] = e.what();
    }
  });

  const std::size_t k = grid.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  report.jaccard.assign(k, std::vector<double>(k, nan));
  report.spearman.assign(k, std::vector<double>(k, nan));

  std::vector<std::set<std::string>> significant(k);
  std::vector<std::map<std::string, double>> pmap(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (report.failed[i]) continue;
    for (const auto& r : report.runs[i].table.rows) {
      pmap[i][r.set_name] = r.raw_p;
      if (!std::isnan(r.adjusted_p) && r.adjusted_p <= grid[i].config.alpha)
        significant[i].insert(r.set_name);
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (report.failed[i]) continue;
    for (std::size_t j = 0; j < k; ++j) {
      if (report.failed[j]) continue;
      report.jaccard[i][j] =
          detail::jaccard_index(significant[i], significant[j]);
      std::vector<double> xi, xj;
      for (const auto& [name, p] : pmap[i]) {
        auto it = pmap[j].find(name);
        if (it == pmap[j].end()) continue;
        xi.push_back(p);
        xj.push_back(it->second);
      }
      report.spearman[i][j] = detail::spearman_correlation(xi, xj);
    }
  }

  // Per-axis effects: mean Jaccard over pairs that differ in exactly one key.
  std::map<std::string, std::pair<double, int>> axis_acc;
  std::vector<std::vector<std::pair<std::string, std::string>>> kvs;
  kvs.reserve(k);
  for (const auto& s : grid) kvs.push_back(s.to_kv());
  for (std::size_t i = 0; i < k; ++i) {
    if (report.failed[i]) continue;
    for (std::size_t j = i + 1; j < k; ++j) {
      if (report.failed[j]) continue;
      std::string axis;
      int n_diff = 0;
      for (std::size_t a = 0; a < kvs[i].size(); ++a) {
        if (kvs[i][a].second != kvs[j][a].second) {
          ++n_diff;
          axis = kvs[i][a].first;
        }
      }
      if (n_diff != 1) continue;
      auto& acc = axis_acc[axis];
      acc.first += report.jaccard[i][j];
      acc.second += 1;
    }
  }
  for (auto& [axis, acc] : axis_acc)
    report.axis_effects.push_back(
        {axis, {acc.first / static_cast<double>(acc.second), acc.second}});
  return report;
}

/// Matrix-form TSV for an agreement matrix.
inline std::string write_agreement_matrix(
    const std::vector<std::string>& labels,
    const std::vector<std::vector<double>>& matrix) {
  std::string out = "pipeline";
  for (const auto& l : labels) out += '\t' + l;
  out += '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out += labels[i];
    for (std::size_t j = 0; j < labels.size(); ++j)
      out += '\t' + format_double(matrix[i][j]);
    out += '\n';
  }
  return out;
}

/// Writes per-pipeline results plus the agreement matrices and the per-axis
/// summary under `out_dir`.
inline void write_multiverse_outputs(const MultiverseReport& report,
                                     const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (std::size_t i = 0; i < report.specs.size(); ++i) {
    if (report.failed[i]) continue;
    const std::string dir = out_dir + "/" + report.labels[i];
    std::filesystem::create_directories(dir);
    write_file(dir + "/result.tsv", report.runs[i].result_tsv);
    write_file(dir + "/provenance.json",
               report.runs[i].provenance.dump(2) + "\n");
  }
  write_file(out_dir + "/jaccard.tsv",
             write_agreement_matrix(report.labels, report.jaccard));
  write_file(out_dir + "/spearman.tsv",
             write_agreement_matrix(report.labels, report.spearman));
  std::string axes = "axis\tmean_jaccard\tn_pairs\n";
  for (const auto& [axis, acc] : report.axis_effects)
    axes += axis + '\t' + format_double(acc.first) + '\t' +
            std::to_string(acc.second) + '\n';
  write_file(out_dir + "/axis_effects.tsv", axes);
  std::string status = "pipeline\tstatus\terror\n";
  for (std::size_t i = 0; i < report.specs.size(); ++i)
    status += report.labels[i] + '\t' +
              (report.failed[i] ? "failed" : "ok") + '\t' + report.errors[i] +
              '\n';
  write_file(out_dir + "/pipelines.tsv", status);
}

/// Expands a factorial grid: each key maps to one or more comma-separated
/// values; the grid is the cartesian product. Unknown keys are rejected.
inline std::vector<PipelineSpec> expand_grid(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& axes) {
  std::vector<std::map<std::string, std::string>> combos = {{}};
  for (const auto& [key, values] : axes) {
    if (values.empty())
      throw ValidationError("grid axis '" + key + "' has no values");
    std::vector<std::map<std::string, std::string>> next;
    for (const auto& combo : combos) {
      for (const auto& v : values) {
        auto c = combo;
        c[key] = v;
        next.push_back(std::move(c));
      }
    }
    combos = std::move(next);
  }
  std::vector<PipelineSpec> grid;
  grid.reserve(combos.size());
  for (const auto& kv : combos) grid.push_back(PipelineSpec::from_kv(kv));
  return grid;
}

/// Parses a "key = v1, v2" grid file into axes (order preserved).
inline std::vector<std::pair<std::string, std::vector<std::string>>>
parse_grid_file(std::string_view text) {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& line : detail::split_lines(text)) {
    if (detail::is_comment(line) || detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("grid file: line without '=': " + line);
    const std::string key = detail::trim(line.substr(0, eq));
    std::vector<std::string> values;
    std::string rest = line.substr(eq + 1);
    std::size_t start = 0;
    for (;;) {
      auto comma = rest.find(',', start);
      values.push_back(detail::trim(
          comma == std::string::npos ? rest.substr(start)
                                     : rest.substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    for (const auto& v : values)
      if (v.empty())
        throw ValidationError("grid file: empty value for key " + key);
    axes.emplace_back(key, std::move(values));
  }
  if (axes.empty()) throw ValidationError("grid file: no axes");
  return axes;
}

}  // namespace gsatk

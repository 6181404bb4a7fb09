// gsatk command-line interface: one subcommand per pipeline stage plus the
// full method runners and the factorial multiverse runner.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gsatk/diffexpr.hpp"
#include "gsatk/error.hpp"
#include "gsatk/fcs.hpp"
#include "gsatk/io.hpp"
#include "gsatk/ora.hpp"
#include "gsatk/pipeline.hpp"
#include "gsatk/preprocess.hpp"
#include "gsatk/types.hpp"
#include "gsatk/version.hpp"

namespace {

struct Options {
  std::string counts, phenotype, gmt, mapping, lengths;
  std::string out = "-";
  std::string out_dir = "gsatk_out";
  std::string prefilter = "total_count:10";
  std::string dedupe = "keep_first";
  std::string normalize = "tmm";
  std::string de_stat = "welch";
  std::string gene_stat = "s2n";
  std::string scheme = "phenotype";
  std::string universe = "intersection";
  std::string bias = "length";
  std::string nes_mode = "same_sign";
  std::string method;  // per-subcommand vocabulary
  double alpha = 0.05;
  double p_exp = 1.0;
  std::uint64_t seed = 1;
  int n_perm = 1000;
  int n_resamples = 2000;
  int min_size = 5;
  int max_size = 500;
  int workers = 1;
  std::string grid_file;
  std::string provenance;
};

void emit(const std::string& path, const std::string& content) {
  if (path == "-") {
    std::fwrite(content.data(), 1, content.size(), stdout);
    return;
  }
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  gsatk::write_file(path, content);
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

gsatk::PipelineInputs make_inputs(const Options& o) {
  gsatk::PipelineInputs in;
  in.counts_path = o.counts;
  in.phenotype_path = o.phenotype;
  in.gmt_path = o.gmt;
  in.mapping_path = o.mapping;
  in.lengths_path = o.lengths;
  return in;
}

std::map<std::string, std::string> spec_kv(const Options& o,
                                           const std::string& method) {
  return {
      {"method", method},
      {"prefilter", o.prefilter},
      {"dedupe", o.dedupe},
      {"normalize", o.normalize},
      {"de_statistic", o.de_stat},
      {"gene_statistic", o.gene_stat},
      {"scheme", o.scheme},
      {"universe", o.universe},
      {"bias", o.bias},
      {"alpha", gsatk::format_double(o.alpha)},
      {"seed", std::to_string(o.seed)},
      {"n_permutations", std::to_string(o.n_perm)},
      {"weight_exponent", gsatk::format_double(o.p_exp)},
      {"min_set_size", std::to_string(o.min_size)},
      {"max_set_size", std::to_string(o.max_size)},
      {"n_resamples", std::to_string(o.n_resamples)},
      {"nes_mode", o.nes_mode},
      {"workers", std::to_string(o.workers)},
  };
}

void run_method_pipeline(const Options& o, const std::string& method) {
  const auto spec = gsatk::PipelineSpec::from_kv(spec_kv(o, method));
  auto result = gsatk::run_pipeline_to_dir(spec, make_inputs(o), o.out_dir);
  print_warnings(result.warnings);
  std::fprintf(stderr, "wrote %s/result.tsv and %s/provenance.json\n",
               o.out_dir.c_str(), o.out_dir.c_str());
}

// Preprocessing shared by the stage-wise subcommands, in the fixed order
// prefilter -> convert -> dedupe.
gsatk::CountMatrix preprocess_counts(const Options& o,
                                     const gsatk::PhenotypeLabels* ph) {
  auto cm = gsatk::parse_count_matrix(gsatk::read_file(o.counts));
  auto rule = gsatk::detail::parse_prefilter(o.prefilter);
  if (rule.kind != gsatk::FilterRule::Kind::kTotalCount &&
      rule.min_samples <= 0) {
    if (ph == nullptr)
      throw gsatk::ValidationError(
          "prefilter sample count 'auto' needs a phenotype file");
    rule.min_samples = static_cast<int>(std::min(ph->m0(), ph->m1()));
  }
  cm = gsatk::prefilter(cm, rule);
  if (!o.mapping.empty()) {
    auto parsed = gsatk::parse_mapping(gsatk::read_file(o.mapping));
    print_warnings(parsed.warnings);
    auto [converted, report] = gsatk::convert_ids(cm, parsed.mapping);
    if (!report.unmapped_sources.empty())
      std::fprintf(stderr, "warning: dropped %zu unmapped gene(s)\n",
                   report.unmapped_sources.size());
    cm = std::move(converted);
  }
  return gsatk::remove_duplicates(cm, gsatk::detail::parse_dedupe(o.dedupe));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gsatk: gene set analysis toolkit"};
  app.set_version_flag("--version", std::string(gsatk::kVersion));
  app.set_config("--config", "", "key=value config file; flags win");
  app.require_subcommand(1);

  Options o;

  auto add_io = [&](CLI::App* cmd, bool need_counts = true) {
    if (need_counts)
      cmd->add_option("--counts", o.counts, "count matrix TSV")->required();
    cmd->add_option("--mapping", o.mapping, "gene-ID mapping TSV");
    cmd->add_option("--lengths", o.lengths, "transcript length TSV");
  };
  auto add_prep = [&](CLI::App* cmd) {
    cmd->add_option("--prefilter", o.prefilter,
                    "total_count:T | count:c,k | cpm:c,k (k may be 'auto')");
    cmd->add_option("--dedupe", o.dedupe, "keep_first | mean | max_count");
    cmd->add_option("--normalize", o.normalize,
                    "tmm | median_of_ratios | none");
  };
  auto add_analysis = [&](CLI::App* cmd) {
    cmd->add_option("--phenotype", o.phenotype, "phenotype TSV")->required();
    cmd->add_option("--gmt", o.gmt, "gene set GMT file")->required();
    cmd->add_option("--seed", o.seed, "RNG seed");
    cmd->add_option("--n-perm", o.n_perm, "permutations (FCS)");
    cmd->add_option("--alpha", o.alpha, "DE / significance threshold");
    cmd->add_option("--universe", o.universe,
                    "experiment | annotated | intersection");
    cmd->add_option("--p-exp", o.p_exp, "ES weight exponent (0, 1, 1.5, 2)");
    cmd->add_option("--de", o.de_stat, "welch | moderated_t");
    cmd->add_option("--gene-stat", o.gene_stat,
                    "s2n | t | doc | signed_logp");
    cmd->add_option("--min-size", o.min_size, "min gene set size");
    cmd->add_option("--max-size", o.max_size, "max gene set size");
    cmd->add_option("--n-resamples", o.n_resamples,
                    "GOSeq resampling iterations");
    cmd->add_option("--nes-mode", o.nes_mode, "same_sign | all_abs");
    cmd->add_option("--workers", o.workers, "worker threads");
    cmd->add_option("--out-dir", o.out_dir, "output directory");
  };

  auto* c_ingest = app.add_subcommand("ingest-check",
                                      "parse all inputs and report problems");
  add_io(c_ingest);
  c_ingest->add_option("--phenotype", o.phenotype, "phenotype TSV");
  c_ingest->add_option("--gmt", o.gmt, "gene set GMT file");

  auto* c_prefilter =
      app.add_subcommand("prefilter", "drop lowly expressed genes");
  add_io(c_prefilter);
  c_prefilter->add_option("--rule", o.prefilter, "filter rule");
  c_prefilter->add_option("--phenotype", o.phenotype,
                          "phenotype TSV (for cpm 'auto')");
  c_prefilter->add_option("--out", o.out, "output TSV ('-' = stdout)");

  auto* c_convert = app.add_subcommand(
      "convert-ids", "convert gene IDs and remove duplicates");
  add_io(c_convert);
  c_convert->add_option("--dedupe", o.dedupe, "keep_first | mean | max_count");
  c_convert->add_option("--out", o.out, "output TSV");

  auto* c_normalize =
      app.add_subcommand("normalize", "compute normalization factors");
  add_io(c_normalize);
  c_normalize->add_option("--method", o.method, "tmm | median_of_ratios | none")
      ->required();
  c_normalize->add_option("--out", o.out, "output TSV");

  auto* c_transform =
      app.add_subcommand("transform", "log-cpm transform the count matrix");
  add_io(c_transform);
  c_transform->add_option("--normalize", o.normalize,
                          "tmm | median_of_ratios | none");
  c_transform->add_option("--out", o.out, "output TSV");

  auto* c_de =
      app.add_subcommand("de", "differential expression on transformed data");
  add_io(c_de);
  add_prep(c_de);
  c_de->add_option("--phenotype", o.phenotype, "phenotype TSV")->required();
  c_de->add_option("--method", o.method, "welch | moderated_t");
  c_de->add_option("--out", o.out, "output TSV");

  auto* c_ora = app.add_subcommand("ora", "over-representation analysis");
  add_io(c_ora);
  add_prep(c_ora);
  add_analysis(c_ora);
  c_ora->add_option("--method", o.method, "fisher | ease");

  auto* c_goseq = app.add_subcommand("goseq", "bias-aware ORA");
  add_io(c_goseq);
  add_prep(c_goseq);
  add_analysis(c_goseq);
  c_goseq->add_option("--method", o.method,
                      "wallenius | resampling | hypergeometric");
  c_goseq->add_option("--bias", o.bias, "length | total_count");

  auto* c_gsea = app.add_subcommand("gsea", "gene set enrichment analysis");
  add_io(c_gsea);
  add_prep(c_gsea);
  add_analysis(c_gsea);
  c_gsea->add_option("--scheme", o.scheme,
                     "phenotype | gene_set | gene_label");

  auto* c_padog = app.add_subcommand("padog", "down-weighting of overlapping "
                                              "genes");
  add_io(c_padog);
  add_prep(c_padog);
  add_analysis(c_padog);

  auto* c_multi =
      app.add_subcommand("multiverse", "factorial grid of pipelines");
  add_io(c_multi);
  add_prep(c_multi);
  add_analysis(c_multi);
  c_multi->add_option("--grid", o.grid_file, "grid file (key = v1, v2, ...)")
      ->required();

  auto* c_replay =
      app.add_subcommand("replay", "re-run a recorded pipeline");
  c_replay->add_option("--provenance", o.provenance, "provenance.json path")
      ->required();
  c_replay->add_option("--out-dir", o.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(c_ingest)) {
      auto cm = gsatk::parse_count_matrix(gsatk::read_file(o.counts));
      std::fprintf(stderr, "counts: %zu genes x %zu samples\n", cm.n_genes(),
                   cm.n_samples());
      if (!o.phenotype.empty()) {
        auto ph = gsatk::parse_phenotype(gsatk::read_file(o.phenotype),
                                         cm.sample_ids());
        std::fprintf(stderr, "phenotype: m0=%zu m1=%zu\n", ph.m0(), ph.m1());
      }
      if (!o.gmt.empty()) {
        auto gmt = gsatk::parse_gmt(gsatk::read_file(o.gmt));
        print_warnings(gmt.warnings);
        std::fprintf(stderr, "gmt: %zu gene sets\n", gmt.db.size());
      }
      if (!o.mapping.empty()) {
        auto parsed = gsatk::parse_mapping(gsatk::read_file(o.mapping));
        print_warnings(parsed.warnings);
        std::fprintf(stderr, "mapping: %zu pairs, %zu unmapped\n",
                     parsed.mapping.pairs().size(),
                     parsed.mapping.unmapped_sources().size());
      }
      if (!o.lengths.empty()) {
        auto lengths = gsatk::parse_lengths(gsatk::read_file(o.lengths));
        std::fprintf(stderr, "lengths: %zu genes\n", lengths.size());
      }
      std::fprintf(stderr, "ok\n");
      return 0;
    }

    if (app.got_subcommand(c_prefilter)) {
      auto cm = gsatk::parse_count_matrix(gsatk::read_file(o.counts));
      auto rule = gsatk::detail::parse_prefilter(o.prefilter);
      if (rule.kind != gsatk::FilterRule::Kind::kTotalCount &&
          rule.min_samples <= 0) {
        if (o.phenotype.empty())
          throw gsatk::ValidationError(
              "prefilter sample count 'auto' needs a phenotype file");
        auto ph = gsatk::parse_phenotype(gsatk::read_file(o.phenotype),
                                         cm.sample_ids());
        rule.min_samples = static_cast<int>(std::min(ph.m0(), ph.m1()));
      }
      emit(o.out, gsatk::write_count_matrix(gsatk::prefilter(cm, rule)));
      return 0;
    }

    if (app.got_subcommand(c_convert)) {
      if (o.mapping.empty())
        throw gsatk::ValidationError("convert-ids requires --mapping");
      auto cm = gsatk::parse_count_matrix(gsatk::read_file(o.counts));
      auto parsed = gsatk::parse_mapping(gsatk::read_file(o.mapping));
      print_warnings(parsed.warnings);
      auto [converted, report] = gsatk::convert_ids(cm, parsed.mapping);
      for (const auto& g : report.unmapped_sources)
        std::fprintf(stderr, "unmapped: %s\n", g.c_str());
      emit(o.out, gsatk::write_count_matrix(gsatk::remove_duplicates(
                      converted, gsatk::detail::parse_dedupe(o.dedupe))));
      return 0;
    }

    if (app.got_subcommand(c_normalize)) {
      auto cm = gsatk::parse_count_matrix(gsatk::read_file(o.counts));
      auto nf = gsatk::normalization_factors(
          cm, gsatk::detail::parse_normalize(o.method));
      std::string out = "sample_id\tlib_size\tfactor\tmethod\n";
      for (std::size_t j = 0; j < cm.n_samples(); ++j)
        out += cm.sample_ids()[j] + '\t' + std::to_string(nf.lib_sizes[j]) +
               '\t' + gsatk::format_double(nf.factors[j]) + '\t' +
               gsatk::to_string(nf.method) + '\n';
      emit(o.out, out);
      return 0;
    }

    if (app.got_subcommand(c_transform)) {
      auto cm = gsatk::parse_count_matrix(gsatk::read_file(o.counts));
      auto nf = gsatk::normalization_factors(
          cm, gsatk::detail::parse_normalize(o.normalize));
      emit(o.out, gsatk::write_transformed_matrix(
                      gsatk::log_cpm_transform(cm, nf)));
      return 0;
    }

    if (app.got_subcommand(c_de)) {
      auto raw = gsatk::parse_count_matrix(gsatk::read_file(o.counts));
      auto ph = gsatk::parse_phenotype(gsatk::read_file(o.phenotype),
                                       raw.sample_ids());
      auto cm = preprocess_counts(o, &ph);
      auto nf = gsatk::normalization_factors(
          cm, gsatk::detail::parse_normalize(o.normalize));
      auto tm = gsatk::log_cpm_transform(cm, nf);
      auto gs = gsatk::group_summaries(tm, ph);
      const std::string method = o.method.empty() ? o.de_stat : o.method;
      auto de = method == "moderated_t" ? gsatk::moderated_t(gs)
                                        : gsatk::welch_de(gs);
      emit(o.out, gsatk::write_de_table(de));
      return 0;
    }

    if (app.got_subcommand(c_ora)) {
      const std::string m = o.method.empty() ? "fisher" : o.method;
      if (m != "fisher" && m != "ease")
        throw gsatk::ValidationError("ora method must be fisher or ease");
      run_method_pipeline(o, m == "fisher" ? "ora_fisher" : "ora_ease");
      return 0;
    }

    if (app.got_subcommand(c_goseq)) {
      const std::string m = o.method.empty() ? "wallenius" : o.method;
      if (m != "wallenius" && m != "resampling" && m != "hypergeometric")
        throw gsatk::ValidationError(
            "goseq method must be wallenius, resampling, or hypergeometric");
      run_method_pipeline(o, "goseq_" + m);
      return 0;
    }

    if (app.got_subcommand(c_gsea)) {
      run_method_pipeline(o, "gsea");
      return 0;
    }

    if (app.got_subcommand(c_padog)) {
      run_method_pipeline(o, "padog");
      return 0;
    }

    if (app.got_subcommand(c_multi)) {
      auto axes = gsatk::parse_grid_file(gsatk::read_file(o.grid_file));
      // Flags win over grid-file axes.
      auto override_axis = [&](const char* key, const CLI::Option* opt,
                               const std::string& value) {
        if (opt == nullptr || opt->count() == 0) return;
        for (auto& [k, vs] : axes)
          if (k == key) {
            vs = {value};
            return;
          }
        axes.emplace_back(key, std::vector<std::string>{value});
      };
      override_axis("seed", c_multi->get_option_no_throw("--seed"),
                    std::to_string(o.seed));
      override_axis("n_permutations", c_multi->get_option_no_throw("--n-perm"),
                    std::to_string(o.n_perm));
      override_axis("alpha", c_multi->get_option_no_throw("--alpha"),
                    gsatk::format_double(o.alpha));
      override_axis("universe", c_multi->get_option_no_throw("--universe"),
                    o.universe);
      override_axis("prefilter", c_multi->get_option_no_throw("--prefilter"),
                    o.prefilter);
      override_axis("dedupe", c_multi->get_option_no_throw("--dedupe"),
                    o.dedupe);
      override_axis("normalize", c_multi->get_option_no_throw("--normalize"),
                    o.normalize);
      override_axis("weight_exponent",
                    c_multi->get_option_no_throw("--p-exp"),
                    gsatk::format_double(o.p_exp));
      auto grid = gsatk::expand_grid(axes);
      auto report =
          gsatk::run_multiverse(grid, make_inputs(o), o.workers);
      gsatk::write_multiverse_outputs(report, o.out_dir);
      for (std::size_t i = 0; i < report.specs.size(); ++i)
        if (report.failed[i])
          std::fprintf(stderr, "pipeline %s failed: %s\n",
                       report.labels[i].c_str(), report.errors[i].c_str());
      std::fprintf(stderr, "wrote %zu pipelines under %s\n",
                   report.specs.size(), o.out_dir.c_str());
      return 0;
    }

    if (app.got_subcommand(c_replay)) {
      auto result = gsatk::replay_provenance(o.provenance, o.out_dir);
      print_warnings(result.warnings);
      std::fprintf(stderr, "replayed into %s\n", o.out_dir.c_str());
      return 0;
    }

    throw gsatk::ValidationError("no subcommand selected");
  } catch (const gsatk::NumericError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const gsatk::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

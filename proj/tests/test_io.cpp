#include <gtest/gtest.h>

#include "gsatk/io.hpp"

using namespace gsatk;

TEST(ParseCountMatrix, BasicAndRoundTrip) {
  const auto cm = parse_count_matrix("g\ts1\ts2\ng1\t0\t5\ng2\t3\t1");
  EXPECT_EQ(cm.n_genes(), 2u);
  EXPECT_EQ(cm.n_samples(), 2u);
  EXPECT_EQ(cm.at(0, 1), 5);
  EXPECT_EQ(cm.at(1, 0), 3);
  const auto text = write_count_matrix(cm);
  const auto again = parse_count_matrix(text);
  EXPECT_EQ(again.gene_ids(), cm.gene_ids());
  EXPECT_EQ(again.sample_ids(), cm.sample_ids());
  EXPECT_EQ(again.counts(), cm.counts());
  EXPECT_EQ(write_count_matrix(again), text);
}

TEST(ParseCountMatrix, ErrorsCarryCoordinates) {
  try {
    parse_count_matrix("g\ts1\ts2\ng1\t0\t3.5\n");
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("g1"), std::string::npos);
    EXPECT_NE(msg.find("s2"), std::string::npos);
  }
  EXPECT_THROW(parse_count_matrix("g\ts1\ts2\ng1\t0\t1\ng1\t2\t3\n"),
               ValidationError);
  EXPECT_THROW(parse_count_matrix("g\ts1\ts2\ng1\t0\n"), ValidationError);
  EXPECT_THROW(parse_count_matrix("g\ts1\ts2\ng1\t0\t-2\n"), ValidationError);
}

TEST(ParseCountMatrix, CrlfCommentsTrailingBlanks) {
  const auto cm = parse_count_matrix(
      "# comment\r\ng\ts1\ts2\r\ng1\t1\t2\r\ng2\t3\t4\r\n\n\n");
  EXPECT_EQ(cm.n_genes(), 2u);
  EXPECT_EQ(cm.at(1, 1), 4);
}

TEST(ParseGmt, BasicDedupAndErrors) {
  const auto ok = parse_gmt("S1\tdesc\tg1\tg2\n");
  ASSERT_EQ(ok.db.size(), 1u);
  EXPECT_EQ(ok.db.sets()[0].members(),
            (std::vector<GeneId>{"g1", "g2"}));
  EXPECT_TRUE(ok.warnings.empty());

  const auto dedup = parse_gmt("S1\tdesc\tg1\tg1\n");
  ASSERT_EQ(dedup.db.size(), 1u);
  EXPECT_EQ(dedup.db.sets()[0].members(), (std::vector<GeneId>{"g1"}));
  EXPECT_EQ(dedup.warnings.size(), 1u);

  EXPECT_THROW(parse_gmt("S1\td\tg1\nS1\td\tg2\n"), ValidationError);
  EXPECT_THROW(parse_gmt("S1\tdesc\n"), ValidationError);
}

TEST(ParseGmt, WriteParseRoundTrip) {
  const auto parsed = parse_gmt("S1\tfirst\tg2\tg1\nS2\t\tg3\n");
  const auto text = write_gmt(parsed.db);
  const auto again = parse_gmt(text);
  ASSERT_EQ(again.db.size(), parsed.db.size());
  for (std::size_t i = 0; i < parsed.db.size(); ++i) {
    EXPECT_EQ(again.db.sets()[i].name(), parsed.db.sets()[i].name());
    EXPECT_EQ(again.db.sets()[i].members(), parsed.db.sets()[i].members());
  }
  EXPECT_EQ(write_gmt(again.db), text);
}

TEST(ParsePhenotype, TwoColumnAndSingleLine) {
  const std::vector<SampleId> samples = {"s1", "s2"};
  auto ph = parse_phenotype("s1\t0\ns2\t1\n", samples);
  EXPECT_EQ(ph.m0(), 1u);
  EXPECT_EQ(ph.m1(), 1u);
  auto ph2 = parse_phenotype("0\t1\n", samples);
  EXPECT_EQ(ph2.labels(), (std::vector<int>{0, 1}));
  auto ph3 = parse_phenotype("0 1\n", samples);
  EXPECT_EQ(ph3.labels(), (std::vector<int>{0, 1}));

  EXPECT_THROW(parse_phenotype("s1\t0\n", samples), ValidationError);
  EXPECT_THROW(parse_phenotype("s1\t2\ns2\t0\n", samples), ValidationError);
  EXPECT_THROW(parse_phenotype("s1\t0\ns2\t0\n", samples), ValidationError);
  EXPECT_THROW(parse_phenotype("s1\t0\ns2\t1\nsX\t0\n", samples),
               ValidationError);
}

TEST(ParseMapping, ManyToManyAndUnmapped) {
  const auto r =
      parse_mapping("e1\tn1\ne2\tn1\ne3\tn2\ne3\tn3\ne4\t\n");
  const auto& m = r.mapping;
  ASSERT_NE(m.sources("n1"), nullptr);
  EXPECT_EQ(m.sources("n1")->size(), 2u);
  ASSERT_NE(m.targets("e3"), nullptr);
  EXPECT_EQ(*m.targets("e3"), (std::vector<GeneId>{"n2", "n3"}));
  EXPECT_EQ(m.unmapped_sources(), (std::vector<GeneId>{"e4"}));
  EXPECT_EQ(m.targets("e4"), nullptr);

  EXPECT_THROW(parse_mapping("e1\n"), ValidationError);
  const auto dup = parse_mapping("e1\tn1\ne1\tn1\n");
  EXPECT_EQ(dup.mapping.pairs().size(), 1u);
  EXPECT_EQ(dup.warnings.size(), 1u);
}

TEST(ParseLengths, BasicAndErrors) {
  auto lengths = parse_lengths("g1\t100\ng2\t250.5\n");
  EXPECT_EQ(lengths.at("g1"), 100.0);
  EXPECT_THROW(parse_lengths("g1\t0\n"), ValidationError);
  EXPECT_THROW(parse_lengths("g1\t100\ng1\t50\n"), ValidationError);
}

TEST(FormatDouble, RoundTripsAndNa) {
  EXPECT_EQ(format_double(std::numeric_limits<double>::quiet_NaN()), "NA");
  for (double v : {0.0, 1.0, -2.5, 1e-300, 3.141592653589793, 7.0 / 210.0}) {
    const auto s = format_double(v);
    EXPECT_EQ(std::stod(s), v);
  }
}

TEST(DeTable, WriteParseRoundTrip) {
  DEResultTable de({{"g1", 1.5, 2.0, 0.01, 0.02, false},
                    {"g2", -0.5, -1.0, 0.5, 0.5, false}});
  const auto text = write_de_table(de);
  const auto again = parse_de_table(text);
  ASSERT_EQ(again.size(), 2u);
  EXPECT_EQ(again.rows()[0].gene_id, "g1");
  EXPECT_EQ(again.rows()[0].p_value, 0.01);
  EXPECT_EQ(write_de_table(again), text);
}

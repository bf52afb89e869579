#include <gtest/gtest.h>

#include <sstream>

#include "algotriage/config.hpp"
#include "algotriage/csv.hpp"
#include "algotriage/dataset.hpp"

using namespace algotriage;

TEST(Csv, QuotedFieldsAndLineEndings) {
  std::ostringstream os;
  csv::write_row(os, {"plain", "a,b", "say \"hi\"", "two\nlines"});
  std::istringstream is(os.str() + "x,y\n" + "last,row");
  std::vector<std::string> f;
  ASSERT_TRUE(csv::read_row(is, f));
  EXPECT_EQ(f, (std::vector<std::string>{"plain", "a,b", "say \"hi\"", "two\nlines"}));
  ASSERT_TRUE(csv::read_row(is, f));
  EXPECT_EQ(f, (std::vector<std::string>{"x", "y"}));
  ASSERT_TRUE(csv::read_row(is, f));
  EXPECT_EQ(f, (std::vector<std::string>{"last", "row"}));
  EXPECT_FALSE(csv::read_row(is, f));

  std::istringstream bad("\"open,field");
  EXPECT_THROW(csv::read_row(bad, f), DataError);
}

TEST(Csv, DoublesRoundTrip) {
  for (double v : {0.1, -1e-300, 1.0 / 3.0, 12345678.9, -0.0, 2.5e17}) {
    EXPECT_EQ(csv::parse_double(csv::format_double(v), "v"), v);
  }
  EXPECT_TRUE(std::isnan(csv::parse_double("", "v")));
  EXPECT_TRUE(std::isnan(csv::parse_double("NA", "v")));
  EXPECT_TRUE(std::isinf(csv::parse_double(csv::format_double(-HUGE_VAL), "v")));
  EXPECT_THROW(csv::parse_double("1.5x", "v"), DataError);
  EXPECT_THROW(csv::parse_double("abc", "v"), DataError);
}

TEST(Dataset, CsvRoundTripIsExact) {
  cohort::CohortConfig c;
  c.n_children = 700;
  Frame f = dataset::to_frame(cohort::CohortGenerator(c).generate(3));
  auto x = f.col("score");
  x[5] = std::nan("");
  f.set("score", x);
  std::stringstream ss;
  dataset::write_csv(ss, f);
  const Frame g = dataset::read_csv(ss);
  ASSERT_EQ(g.names(), f.names());
  ASSERT_EQ(g.rows(), f.rows());
  for (const auto& n : f.names())
    for (std::size_t i = 0; i < f.rows(); ++i) {
      const double a = f.col(n)[i], b = g.col(n)[i];
      if (std::isnan(a)) EXPECT_TRUE(std::isnan(b));
      else EXPECT_EQ(a, b) << n << " row " << i;
    }
}

TEST(Dataset, ReadErrors) {
  auto read = [](const std::string& s) {
    std::istringstream is(s);
    return dataset::read_csv(is);
  };
  EXPECT_THROW(read(""), DataError);
  EXPECT_THROW(read("a,b\n1,2\n"), DataError);
  EXPECT_THROW(read("schema_version,a\n2,1\n"), DataError);
  EXPECT_THROW(read("schema_version,a,a\n1,1,2\n"), DataError);
  EXPECT_THROW(read("schema_version,a\n1,1,2\n"), DataError);
  EXPECT_THROW(read("schema_version,a\n1,oops\n"), DataError);
  const Frame f = read("\xEF\xBB\xBFschema_version,a\r\n1,4\r\n\r\n1,5\r\n");
  EXPECT_EQ(f.rows(), 2u);
  EXPECT_EQ(f.col("a")[1], 5.0);
  Frame no_schema(1);
  no_schema.set("a", {1.0});
  std::ostringstream os;
  EXPECT_THROW(dataset::write_csv(os, no_schema), DataError);
}

TEST(Dataset, JsonLinesUseNullForMissing) {
  Frame f(2);
  f.set("a", {1.0, std::nan("")});
  f.set("b", {0.25, 3.0});
  std::ostringstream os;
  dataset::write_jsonl(os, f);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, R"({"a":1,"b":0.25})");
  std::getline(is, line);
  EXPECT_EQ(line, R"({"a":null,"b":3})");
}

TEST(Config, JsonRoundTrip) {
  config::AppConfig a;
  a.cohort.n_children = 1234;
  a.cohort.disparity_params.black.worker_bias = 0.7;
  a.analysis.n_perm = 199;
  a.analysis.index.variant = index::Variant::pca1;
  a.counterfactual.rule.kind = counterfactual::RuleKind::mandate;
  a.counterfactual.floor = -0.4;
  const auto j = config::to_json(a);
  const auto b = config::from_json(j);
  EXPECT_EQ(config::to_json(b), j);
  EXPECT_EQ(b.cohort.n_children, 1234u);
  EXPECT_EQ(b.analysis.index.variant, index::Variant::pca1);
  EXPECT_EQ(*b.counterfactual.floor, -0.4);
  EXPECT_EQ(config::to_json(config::from_json(config::json::object())), config::to_json(config::AppConfig{}));
}

TEST(Config, UnknownAndInvalidKeys) {
  auto field = [](const char* text) -> std::string {
    try {
      config::from_json(config::json::parse(text));
    } catch (const ConfigError& e) {
      return e.field();
    }
    return "";
  };
  EXPECT_EQ(field(R"({"cohrt": {}})"), "cohrt");
  EXPECT_EQ(field(R"({"cohort": {"n_kids": 5}})"), "cohort.n_kids");
  EXPECT_EQ(field(R"({"cohort": {"n_households": 50}})"), "cohort.n_households");
  EXPECT_EQ(field(R"({"cohort": {"n_children": "many"}})"), "cohort.n_children");
  EXPECT_EQ(field(R"({"cohort": {"disparity_params": {"black": {"bias": 1}}}})"),
            "cohort.disparity_params.black.bias");
  EXPECT_EQ(field(R"({"analysis": {"index": {"variant": "pca1"}}})"), "analysis.index");
  EXPECT_EQ(field(R"({"counterfactual": {"rule": 3}})"), "counterfactual.rule");
  EXPECT_THROW(config::load("/nonexistent/config.json"), ConfigError);
}

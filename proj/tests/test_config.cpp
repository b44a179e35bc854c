#include <gtest/gtest.h>

#include "ctd/config.hpp"

using namespace ctd;

TEST(Config, ParsesKeysCommentsAndOverrides) {
  const auto c = Config::parse_string("# header\nalpha = 0.3  # trailing\n\nname=strong\nalpha=0.4\n");
  EXPECT_DOUBLE_EQ(c.get_double("alpha", 0.0), 0.4);
  EXPECT_EQ(c.get_string("name", ""), "strong");
  EXPECT_EQ(c.keys(), (std::vector<std::string>{"alpha", "name"}));
  EXPECT_EQ(c.get_int("missing", 7), 7);
}

TEST(Config, TypedGetters) {
  const auto c = Config::parse_string("l = 0.1, 0.2 ,0.3\ns = a,b\nb = yes\nlam = inf\nn = 12\n");
  EXPECT_EQ(c.get_doubles("l", {}), (std::vector<double>{0.1, 0.2, 0.3}));
  EXPECT_EQ(c.get_strings("s", {}), (std::vector<std::string>{"a", "b"}));
  EXPECT_TRUE(c.get_bool("b", false));
  EXPECT_EQ(c.get_double("lam", 0.0), kInf);
  EXPECT_EQ(c.get_int("n", 0), 12);
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(Config::parse_string("novalue\n"), ValidationError);
  EXPECT_THROW(Config::parse_string("= 3\n"), ValidationError);
  const auto c = Config::parse_string("x = abc\ny = 1.5\n");
  EXPECT_THROW(c.get_double("x", 0.0), ValidationError);
  EXPECT_THROW(c.get_int("y", 0), ValidationError);
  EXPECT_THROW(c.get_bool("x", false), ValidationError);
  EXPECT_THROW(Config::load("/nonexistent/ctd.cfg"), ValidationError);
}

#include <gtest/gtest.h>

#include "stringsim/acceptance.hpp"
#include "stringsim/errors.hpp"

using namespace stringsim;

TEST(Acceptance, TightenedToleranceFailsOnlyTheLooseCriterion) {
  // The light cone is only good to a few percent; the potential oracle is
  // exact to rounding, so a 100x tighter gate separates them.
  AcceptanceOptions options;
  options.filter = {"light_cone", "potential_oracle"};
  options.tolerance_scale = 0.01;
  const auto results = run_acceptance(options);
  ASSERT_EQ(results.size(), 2u);
  for (const auto& r : results) {
    if (r.id == "light_cone") EXPECT_FALSE(r.passed) << r.detail;
    if (r.id == "potential_oracle") EXPECT_TRUE(r.passed) << r.detail;
  }
}

TEST(Acceptance, UnknownIdAndBadScaleAreConfigErrors) {
  AcceptanceOptions options;
  options.filter = {"no_such_criterion"};
  EXPECT_THROW(run_acceptance(options), ConfigError);
  options.filter = {"potential_oracle"};
  options.tolerance_scale = 0.0;
  EXPECT_THROW(run_acceptance(options), ConfigError);
}

TEST(Acceptance, EveryIdRunsAndFormatsOneLine) {
  const auto ids = criterion_ids();
  EXPECT_EQ(ids.size(), 11u);
  AcceptanceOptions options;
  options.filter = {"virtual_field_oracle"};
  const auto results = run_acceptance(options);
  ASSERT_EQ(results.size(), 1u);
  const std::string line = format_result(results[0]);
  EXPECT_EQ(line.rfind("PASS virtual_field_oracle", 0), 0u) << line;
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(to_json(results)[0]["id"], "virtual_field_oracle");
}

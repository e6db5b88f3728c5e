#include "matlda/random.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace matlda;

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.normal();
        EXPECT_EQ(x, b.normal());
        differs |= x != c.normal();
    }
    EXPECT_TRUE(differs);
}

TEST(Rng, UniformInOpenInterval) {
    Rng rng(1);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / 100000, 0.5, 0.01);
}

TEST(Rng, BelowIsUniform) {
    Rng rng(2);
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < 30000; ++i) {
        const auto k = rng.below(3);
        ASSERT_LT(k, 3u);
        ++counts[k];
    }
    for (int k : counts) EXPECT_NEAR(k / 30000.0, 1.0 / 3.0, 0.015);
    EXPECT_EQ(rng.below(1), 0u);
}

TEST(Rng, NormalMoments) {
    Rng rng(3);
    double s1 = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s1 += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s1 / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.015);
}

TEST(Rng, DerivedSeedsDiffer) {
    EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
    EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
    EXPECT_EQ(derive_seed(5, 7), derive_seed(5, 7));
}

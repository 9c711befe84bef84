#include <cmath>
#include <random>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "wwmix/synth.hpp"

using namespace wwmix;

namespace {

std::set<std::size_t> col_set(const Matrix<std::uint8_t>& z, std::size_t j) {
    std::set<std::size_t> s;
    for (std::size_t i = 0; i < z.rows(); ++i)
        if (z(i, j)) s.insert(i);
    return s;
}

std::size_t intersection_size(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
    std::size_t n = 0;
    for (auto v : a) n += b.count(v);
    return n;
}

}  // namespace

TEST_CASE("default scenario lays out overlapping membership windows") {
    ScenarioSpec spec;  // N=60, T=40, R=3, overlap 0.25
    const auto data = generate(spec);
    REQUIRE(data.z_true.rows() == 60);
    REQUIRE(data.z_true.cols() == 3);
    const auto c0 = col_set(data.z_true, 0);
    const auto c1 = col_set(data.z_true, 1);
    const auto c2 = col_set(data.z_true, 2);
    // Window length 60 / (3 - 2*0.25) = 24, shared 6, step 18.
    CHECK(c0.size() == 24);
    CHECK(c1.size() == 24);
    CHECK(c2.size() == 24);
    CHECK(intersection_size(c0, c1) == 6);
    CHECK(intersection_size(c1, c2) == 6);
    CHECK(intersection_size(c0, c2) == 0);
    for (std::size_t i = 0; i < 60; ++i) {
        int row_sum = data.z_true(i, 0) + data.z_true(i, 1) + data.z_true(i, 2);
        CHECK(row_sum >= 1);
    }
    REQUIRE(data.panel.n_mutations() == 60);
    REQUIRE(data.panel.n_dates() == 40);
    CHECK(data.panel.dates()[1].days() - data.panel.dates()[0].days() == 7);
    CHECK(data.panel.mutations().front() == "mut01");
    CHECK(data.panel.mutations().back() == "mut60");
}

TEST_CASE("infeasible overlap geometry is rejected") {
    ScenarioSpec spec;
    spec.n_mutations = 3;
    spec.r_true = 3;
    spec.overlap = 0.99;
    CHECK_THROWS_AS(generate(spec), InvariantError);
}

TEST_CASE("true abundance columns carry exactly the non-residual mass") {
    for (auto shape : {WaveShape::LogisticCrossover, WaveShape::Plateau, WaveShape::Constant}) {
        for (double residual : {0.0, 0.1, 0.35}) {
            const MatrixD g = true_abundance(4, 17, shape, residual);
            REQUIRE(g.rows() == 4);
            REQUIRE(g.cols() == 17);
            for (std::size_t t = 0; t < g.cols(); ++t) {
                double sum = 0.0;
                for (std::size_t j = 0; j < g.rows(); ++j) {
                    CHECK(g(j, t) >= 0.0);
                    sum += g(j, t);
                }
                CHECK(std::abs(sum - (1.0 - residual)) < 1e-12);
            }
        }
    }
}

TEST_CASE("logistic crossover waves hand dominance from one lineage to the next") {
    const MatrixD g = true_abundance(3, 41, WaveShape::LogisticCrossover, 0.0);
    // Early dates are dominated by lineage 0, the middle by 1, the end by 2.
    CHECK(g(0, 0) > 0.9);
    CHECK(g(1, 20) > 0.9);
    CHECK(g(2, 40) > 0.9);
    // Crossovers actually happen: the dominant lineage loses the lead.
    CHECK(g(0, 40) < 0.05);
    CHECK(g(2, 0) < 0.05);
}

TEST_CASE("generation is reproducible by seed and sensitive to it") {
    ScenarioSpec spec;
    spec.n_mutations = 12;
    spec.n_dates = 9;
    spec.depth_law = DepthLaw::uniform_depth(40, 120);
    spec.seed = 77;
    const auto a = generate(spec);
    const auto b = generate(spec);
    CHECK(a.panel.counts().data() == b.panel.counts().data());
    CHECK(a.panel.depths().data() == b.panel.depths().data());
    spec.seed = 78;
    const auto c = generate(spec);
    CHECK(a.panel.counts().data() != c.panel.counts().data());
    for (std::size_t i = 0; i < c.panel.n_mutations(); ++i)
        for (std::size_t t = 0; t < c.panel.n_dates(); ++t) {
            CHECK(c.panel.depths()(i, t) >= 40);
            CHECK(c.panel.depths()(i, t) <= 120);
        }
}

TEST_CASE("saturated one-lineage scenario yields certain detections") {
    ScenarioSpec spec;
    spec.n_mutations = 5;
    spec.n_dates = 4;
    spec.r_true = 1;
    spec.wave_shape = WaveShape::Constant;
    spec.residual_mass = 0.0;
    spec.depth_law = DepthLaw::fixed_depth(30);
    const auto data = generate(spec);
    // Z is all ones and G identically 1, so p = 1 in every cell.
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(data.z_true(i, 0) == 1);
        for (std::size_t t = 0; t < 4; ++t)
            CHECK(data.panel.counts()(i, t) == data.panel.depths()(i, t));
    }
}

TEST_CASE("cell frequencies are binomial around the model probability") {
    ScenarioSpec spec;
    spec.n_mutations = 4;
    spec.n_dates = 3;
    spec.r_true = 2;
    spec.overlap = 0.0;
    spec.wave_shape = WaveShape::Constant;
    spec.depth_law = DepthLaw::fixed_depth(50);
    // Cell (0,0): mutation 0 belongs only to lineage 0, constant G row 0 = 2/3.
    const double p = 2.0 / 3.0;
    const int reps = 10000;
    long total_count = 0;
    for (int k = 0; k < reps; ++k) {
        spec.seed = 1000 + static_cast<std::uint64_t>(k);
        const auto data = generate(spec);
        total_count += data.panel.counts()(0, 0);
    }
    const double freq = static_cast<double>(total_count) / (50.0 * reps);
    const double se = std::sqrt(p * (1.0 - p) / (50.0 * reps));
    CHECK(std::abs(freq - p) < 3.0 * se);
}

TEST_CASE("deep sequencing recovers the probability surface") {
    ScenarioSpec spec;
    spec.n_mutations = 10;
    spec.n_dates = 5;
    spec.r_true = 2;
    spec.overlap = 0.2;
    spec.depth_law = DepthLaw::fixed_depth(100000);
    spec.seed = 5;
    const auto data = generate(spec);
    double worst = 0.0;
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t t = 0; t < 5; ++t) {
            double p = 0.0;
            for (std::size_t j = 0; j < 2; ++j)
                if (data.z_true(i, j)) p += data.g_true(j, t);
            const double freq = static_cast<double>(data.panel.counts()(i, t)) /
                                static_cast<double>(data.panel.depths()(i, t));
            worst = std::max(worst, std::abs(freq - std::min(1.0, p)));
        }
    CHECK(worst < 0.01);
}

TEST_CASE("alignment of a column-permuted copy is perfect") {
    ScenarioSpec spec;
    spec.n_mutations = 30;
    spec.r_true = 4;
    spec.n_dates = 2;
    spec.depth_law = DepthLaw::fixed_depth(10);
    const auto data = generate(spec);
    const Matrix<std::uint8_t> shuffled = data.z_true.permute_cols({2, 0, 3, 1});
    const auto res = align_and_score(shuffled, data.z_true);
    CHECK(res.mean_jaccard == 1.0);
    REQUIRE(res.permutation.size() == 4);
    // shuffled column k holds original column perm_src[k]; alignment inverts it.
    CHECK(res.permutation[0] == 1);
    CHECK(res.permutation[2] == 0);
    for (double s : res.per_lineage) CHECK(s == 1.0);
}

TEST_CASE("complementing a definition matrix destroys alignment") {
    // Frozen 6x2 instance: columns {0,1,2} and {1,2,3}; the complement's best
    // assignment is crosswise with Jaccard 1/5 per lineage.
    Matrix<std::uint8_t> z_true(6, 2, 0);
    for (std::size_t i : {0u, 1u, 2u}) z_true(i, 0) = 1;
    for (std::size_t i : {1u, 2u, 3u}) z_true(i, 1) = 1;
    Matrix<std::uint8_t> z_est(6, 2, 0);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 2; ++j) z_est(i, j) = z_true(i, j) ? 0 : 1;
    const auto res = align_and_score(z_est, z_true);
    CHECK(res.mean_jaccard == Catch::Approx(0.2).margin(1e-15));
    CHECK(res.mean_jaccard < 0.4);
    CHECK(res.permutation[0] == 1);
    CHECK(res.permutation[1] == 0);
}

TEST_CASE("alignment score is invariant to column order on both sides") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix<std::uint8_t> z(15, 4, 0);
        bool any = false;
        for (auto& v : z.data()) v = static_cast<std::uint8_t>(rng() % 2), any |= v != 0;
        for (std::size_t j = 0; j < 4; ++j) z(j, j) = 1;  // keep all columns non-empty
        (void)any;
        Matrix<std::uint8_t> z_est(15, 4, 0);
        for (auto& v : z_est.data()) v = static_cast<std::uint8_t>(rng() % 2);
        for (std::size_t j = 0; j < 4; ++j) z_est(14 - j, j) = 1;
        const double base = align_and_score(z_est, z).mean_jaccard;

        const Matrix<std::uint8_t> pe = z_est.permute_cols({3, 1, 0, 2});
        const Matrix<std::uint8_t> pt = z.permute_cols({1, 2, 3, 0});
        CHECK(align_and_score(pe, pt).mean_jaccard == Catch::Approx(base).margin(1e-12));
    }
}

TEST_CASE("exhaustive and Hungarian assignments reach the same optimum") {
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t n = 2; n <= 7; ++n) {
        for (int trial = 0; trial < 4; ++trial) {
            MatrixD score(n, n);
            for (auto& v : score.data()) v = u(rng);
            const auto [pe, te] = detail::assignment_exhaustive(score);
            const auto [ph, th] = detail::assignment_hungarian(score);
            CHECK(te == Catch::Approx(th).margin(1e-12));
            // Both must be genuine permutations.
            std::set<std::size_t> se(pe.begin(), pe.end()), sh(ph.begin(), ph.end());
            CHECK(se.size() == n);
            CHECK(sh.size() == n);
        }
    }
}

TEST_CASE("wide matrices route through the Hungarian solver and stay optimal") {
    std::mt19937_64 rng(31337);
    Matrix<std::uint8_t> z_true(40, 9, 0);
    Matrix<std::uint8_t> z_est(40, 9, 0);
    for (auto& v : z_true.data()) v = static_cast<std::uint8_t>(rng() % 2);
    for (auto& v : z_est.data()) v = static_cast<std::uint8_t>(rng() % 2);
    for (std::size_t j = 0; j < 9; ++j) z_true(j, j) = z_est(j + 9, j) = 1;
    const auto res = align_and_score(z_est, z_true);  // 9 columns > 8: Hungarian
    // Cross-check the total against brute force on the same score matrix.
    MatrixD score(9, 9, 0.0);
    for (std::size_t a = 0; a < 9; ++a)
        for (std::size_t b = 0; b < 9; ++b) {
            const auto sa = col_set(z_est, a), sb = col_set(z_true, b);
            const std::size_t inter = intersection_size(sa, sb);
            score(a, b) = static_cast<double>(inter) /
                          static_cast<double>(sa.size() + sb.size() - inter);
        }
    const auto [pe, te] = detail::assignment_exhaustive(score);
    double total = 0.0;
    for (double s : res.per_lineage) total += s;
    CHECK(total == Catch::Approx(te).margin(1e-12));
}

TEST_CASE("alignment rejects mismatched mutation universes") {
    Matrix<std::uint8_t> a(5, 2, 1), b(6, 2, 1);
    CHECK_THROWS_AS(align_and_score(a, b), ShapeError);
}

TEST_CASE("an estimate with fewer lineages leaves unmatched truth columns") {
    Matrix<std::uint8_t> z_true(4, 2, 0);
    z_true(0, 0) = z_true(1, 0) = 1;
    z_true(2, 1) = z_true(3, 1) = 1;
    Matrix<std::uint8_t> z_est(4, 1, 0);
    z_est(0, 0) = z_est(1, 0) = 1;
    const auto res = align_and_score(z_est, z_true);
    REQUIRE(res.permutation.size() == 2);
    CHECK(res.permutation[0] == 0);
    CHECK(res.permutation[1] == AlignResult::npos);
    CHECK(res.per_lineage[0] == 1.0);
    CHECK(res.per_lineage[1] == 0.0);
    CHECK(res.mean_jaccard == Catch::Approx(0.5).margin(1e-15));

    MatrixD g_est(1, 3, 0.5), g_true(2, 3, 0.5);
    CHECK(aligned_abundance_error(g_est, g_true, res.permutation) == 1.0);
}

TEST_CASE("aligned abundance error follows the matching") {
    MatrixD g_true(2, 3, 0.0);
    g_true(0, 0) = 0.7;
    g_true(1, 2) = 0.4;
    MatrixD g_est(2, 3, 0.0);
    g_est(1, 0) = 0.75;  // estimate row 1 plays truth row 0
    g_est(0, 2) = 0.31;
    const double err = aligned_abundance_error(g_est, g_true, {1, 0});
    CHECK(err == Catch::Approx(0.09).margin(1e-12));
    CHECK(aligned_abundance_error(g_true, g_true, {0, 1}) == 0.0);
}

TEST_CASE("scenario files parse into validated specs") {
    const std::map<std::string, std::string> kv{
        {"n_mutations", "24"}, {"n_dates", "10"},     {"r_true", "2"},
        {"overlap", "0.5"},    {"wave_shape", "plateau"}, {"depth", "123"},
        {"residual_mass", "0.05"}, {"seed", "9"},
    };
    const ScenarioSpec spec = parse_scenario(kv);
    CHECK(spec.n_mutations == 24);
    CHECK(spec.wave_shape == WaveShape::Plateau);
    CHECK(spec.depth_law.kind == DepthLaw::Kind::Fixed);
    CHECK(spec.depth_law.fixed == 123);
    CHECK(spec.residual_mass == 0.05);

    const ScenarioSpec uni = parse_scenario({{"depth_lo", "10"}, {"depth_hi", "20"}});
    CHECK(uni.depth_law.kind == DepthLaw::Kind::Uniform);
    CHECK(uni.depth_law.lo == 10);
    CHECK(uni.depth_law.hi == 20);

    CHECK_THROWS_AS(parse_scenario({{"bogus", "1"}}), ConfigError);
    CHECK_THROWS_AS(parse_scenario({{"wave_shape", "triangle"}}), ConfigError);
    CHECK_THROWS_AS(parse_scenario({{"residual_mass", "1.5"}}), InvariantError);
}

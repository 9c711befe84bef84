#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "wwmix/io.hpp"
#include "wwmix/lineage_defs.hpp"
#include "wwmix/report.hpp"
#include "wwmix/synth.hpp"

using namespace wwmix;

namespace {

LineageDefinitionSet make_defs(const std::vector<std::string>& universe,
                               const std::vector<std::string>& names,
                               const std::vector<std::vector<int>>& cols) {
    Matrix<std::uint8_t> z(universe.size(), names.size(), 0);
    for (std::size_t j = 0; j < cols.size(); ++j)
        for (int i : cols[j]) z(static_cast<std::size_t>(i), j) = 1;
    return LineageDefinitionSet(names, std::move(z), universe);
}

std::filesystem::path temp_dir(const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() / ("wwmix_report_" + tag);
    std::filesystem::remove_all(dir);
    return dir;
}

std::size_t count_substr(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t pos = hay.find(needle); pos != std::string::npos;
         pos = hay.find(needle, pos + needle.size()))
        ++n;
    return n;
}

}  // namespace

TEST_CASE("definition table lays out a two-lineage identity by hand") {
    const auto defs = make_defs({"mutA", "mutB"}, {"1", "2"}, {{0}, {1}});
    CHECK(definition_table(defs) ==
          "mutation,1,2\n"
          "mutA,1,0\n"
          "mutB,0,1\n");
}

TEST_CASE("definition tables round-trip byte-stably") {
    // Universe deliberately out of lexicographic order; emission sorts rows.
    const auto defs = make_defs({"s:E484K", "orf1a:T3255I", "n:P13L", "s:D614G", "s:N501Y"},
                                {"1", "2", "3"}, {{0, 1, 3}, {2, 3}, {1, 4}});
    const std::string once = definition_table(defs);
    const auto parsed = parse_definition_table(once);
    CHECK(definition_table(parsed) == once);
    // Content survives: same mutation sets per lineage.
    for (std::size_t j = 0; j < 3; ++j) CHECK(parsed.mutation_set(j) == defs.mutation_set(j));
    // Parsed universe is the file's (sorted) row order.
    CHECK(parsed.mutation_universe().front() == "n:P13L");

    SECTION("malformed tables are rejected") {
        CHECK_THROWS_AS(parse_definition_table("lineage,1\nmutA,1\n"), InvariantError);
        CHECK_THROWS_AS(parse_definition_table("mutation,1\nmutA,2\n"), InvariantError);
        CHECK_THROWS_AS(parse_definition_table("mutation,1\nmutA,1,0\n"), ShapeError);
    }
}

TEST_CASE("definition table column order follows the reference alignment") {
    // Lineage similarities to the reference: col "1" = 1/4, "2" = 3/4, "3" = 0.
    const auto defs = make_defs({"m1", "m2", "m3", "m4", "m5"}, {"1", "2", "3"},
                                {{0, 3}, {0, 1, 2}, {4}});
    const std::set<std::string> reference{"m1", "m2", "m3"};
    const auto order = align_to_reference(defs, reference);
    REQUIRE(order == std::vector<std::size_t>{1, 0, 2});
    const std::string csv = definition_table(defs, reference);
    CHECK(csv.substr(0, csv.find('\n')) == "mutation,2,1,3");
    // Cells moved with their columns: m4 belongs only to lineage "1".
    CHECK(csv.find("m4,0,1,0\n") != std::string::npos);
}

TEST_CASE("comparison grid of two identical sources has unit diagonals") {
    const auto defs = make_defs({"a", "b", "c", "d"}, {"1", "2"}, {{0, 1}, {2, 3}});
    const auto view = make_view(defs, "siteA");
    auto view2 = view;
    view2.source_label = "siteB";
    const auto grid = comparison_grid({view, view2});
    REQUIRE(grid.pairs.size() == 3);
    for (const auto& p : grid.pairs) {
        REQUIRE(p.available);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(p.sim(i, i) == 1.0);
            CHECK(p.sim(i, 1 - i) == 0.0);  // disjoint lineages
        }
    }
}

TEST_CASE("comparison grid matches direct jaccard computation") {
    const std::vector<std::string> u{"a", "b", "c", "d", "e", "f"};
    const auto s1 = make_defs(u, {"1", "2"}, {{0, 1, 2}, {3, 4}});
    const auto s2 = make_defs(u, {"1", "2"}, {{0, 1}, {2, 3, 5}});
    const auto s3 = make_defs(u, {"1"}, {{1, 4, 5}});
    const std::vector<DefinitionView> sources{make_view(s1, "A"), make_view(s2, "B"),
                                              make_view(s3, "C")};
    const auto grid = comparison_grid(sources);
    REQUIRE(grid.pairs.size() == 6);
    for (const auto& p : grid.pairs) {
        REQUIRE(p.available);
        std::set<std::string> shared;
        for (const auto& m : sources[p.left].vocabulary)
            if (sources[p.right].vocabulary.count(m)) shared.insert(m);
        for (std::size_t i = 0; i < p.sim.rows(); ++i)
            for (std::size_t j = 0; j < p.sim.cols(); ++j)
                CHECK(p.sim(i, j) == jaccard(sources[p.left].sets[i], sources[p.right].sets[j],
                                             shared));
    }
}

TEST_CASE("comparison grid marks vocabulary-disjoint pairs unavailable") {
    const auto s1 = make_defs({"a", "b"}, {"1"}, {{0, 1}});
    const auto s2 = make_defs({"b", "c"}, {"1"}, {{0, 1}});
    const auto s3 = make_defs({"x", "y"}, {"1"}, {{0, 1}});  // shares nothing
    const auto grid =
        comparison_grid({make_view(s1, "A"), make_view(s2, "B"), make_view(s3, "C")});
    CHECK(grid.pair(0, 1).available);
    CHECK_FALSE(grid.pair(0, 2).available);
    CHECK_FALSE(grid.pair(1, 2).available);
    CHECK(grid.pair(2, 2).available);  // within-source still fine

    const auto dir = temp_dir("grid");
    write_comparison_grid(grid, dir);
    CHECK(std::filesystem::exists(dir / "pair_A_vs_B.csv"));
    CHECK_FALSE(std::filesystem::exists(dir / "pair_A_vs_C.csv"));
    const std::string svg = io::read_file(dir / "grid.svg");
    CHECK(count_substr(svg, ">n/a<") == 2);

    // Emitted pair CSVs round-trip through the artifact's own reader.
    const auto back = io::read_matrix_csv(dir / "pair_A_vs_B.csv");
    CHECK(back.corner == "jaccard");
    CHECK(back.row_labels == std::vector<std::string>{"1"});
    REQUIRE(back.values.rows() == 1);
    CHECK(back.values(0, 0) == grid.pair(0, 1).sim(0, 0));
    std::filesystem::remove_all(dir);
}

TEST_CASE("comparison grid is symmetric under source reordering") {
    const std::vector<std::string> u{"a", "b", "c", "d", "e"};
    const auto s1 = make_defs(u, {"1", "2"}, {{0, 1, 2}, {3, 4}});
    const auto s2 = make_defs(u, {"1", "2", "3"}, {{0, 1}, {2, 3}, {1, 4}});
    const auto fwd = comparison_grid({make_view(s1, "A"), make_view(s2, "B")});
    const auto rev = comparison_grid({make_view(s2, "B"), make_view(s1, "A")});
    const auto& ab = fwd.pair(0, 1).sim;
    const auto& ba = rev.pair(0, 1).sim;
    REQUIRE(ab.rows() == ba.cols());
    REQUIRE(ab.cols() == ba.rows());
    for (std::size_t i = 0; i < ab.rows(); ++i)
        for (std::size_t j = 0; j < ab.cols(); ++j) CHECK(ab(i, j) == ba(j, i));
    CHECK(fwd.pair(0, 0).sim.data() == rev.pair(1, 1).sim.data());
    CHECK(fwd.pair(1, 1).sim.data() == rev.pair(0, 0).sim.data());
}

TEST_CASE("two locations from one truth stay diagonal-dominant after alignment") {
    ScenarioSpec scenario;
    scenario.n_mutations = 30;
    scenario.n_dates = 10;
    scenario.r_true = 3;
    scenario.overlap = 0.2;
    scenario.seed = 5;
    const auto truth = generate(scenario);

    // Two "locations" estimate the same truth with small, different errors
    // and report their lineages in different orders.
    auto z1 = truth.z_true;
    auto z2 = truth.z_true.permute_cols({2, 0, 1});
    for (std::size_t j = 0; j < 3; ++j) {
        z1(3 * j, j) = 1 - z1(3 * j, j);
        z2(3 * j + 1, j) = 1 - z2(3 * j + 1, j);
    }
    const LineageDefinitionSet loc1({"1", "2", "3"}, z1, truth.panel.mutations());
    const LineageDefinitionSet loc2({"1", "2", "3"}, z2, truth.panel.mutations());

    // Reference ordering: sort both by similarity to the first true lineage.
    std::set<std::string> reference;
    for (std::size_t i = 0; i < 30; ++i)
        if (truth.z_true(i, 0)) reference.insert(truth.panel.mutations()[i]);
    const auto a1 = loc1.reorder(align_to_reference(loc1, reference));
    const auto a2 = loc2.reorder(align_to_reference(loc2, reference));

    const auto grid = comparison_grid({make_view(a1, "loc1"), make_view(a2, "loc2")});
    const auto& cross = grid.pair(0, 1).sim;
    for (std::size_t i = 0; i < 3; ++i) {
        std::size_t argmax = 0;
        for (std::size_t j = 1; j < 3; ++j)
            if (cross(i, j) > cross(i, argmax)) argmax = j;
        CHECK(argmax == i);
    }
}

TEST_CASE("abundance plot draws a constant series as a flat line") {
    const std::vector<Date> dates{Date::parse("2023-01-02"), Date::parse("2023-01-09"),
                                  Date::parse("2023-01-16"), Date::parse("2023-01-23"),
                                  Date::parse("2023-01-30")};
    MatrixD g(1, 5, 0.5);
    const AbundanceSeries series(g, ConstraintKind::SumLEOne, dates, {"steady"});
    const std::string svg = abundance_plot({series}, {"run"});
    REQUIRE(count_substr(svg, "<polyline") == 1);
    // y = top margin + height * (1 - 0.5) = 18 + 160 = 178 at every vertex.
    const std::size_t start = svg.find("points=\"") + 8;
    const std::string points = svg.substr(start, svg.find('"', start) - start);
    CHECK(count_substr(points, ",178") == 5);
}

TEST_CASE("abundance plot is deterministic with one polyline per lineage") {
    std::vector<Date> dates;
    const Date start = Date::parse("2023-01-02");
    for (long k = 0; k < 10; ++k) dates.push_back(Date(start.days() + 7 * k));
    MatrixD g(3, 10, 0.0);
    for (std::size_t t = 0; t < 10; ++t) {
        g(0, t) = 0.1 + 0.05 * static_cast<double>(t);
        g(1, t) = 0.6 - 0.05 * static_cast<double>(t);
        g(2, t) = 0.2;
    }
    const AbundanceSeries series(g, ConstraintKind::SumLEOne, dates, {"alpha", "beta", "gamma"});
    const std::string first = abundance_plot({series}, {"fit"});
    const std::string second = abundance_plot({series}, {"fit"});
    CHECK(first == second);
    CHECK(count_substr(first, "<polyline") == 3);
    for (const auto* name : {"alpha", "beta", "gamma"})
        CHECK(first.find(std::string{">"} + name + "<") != std::string::npos);
    CHECK(first.find("2023-01-02") != std::string::npos);  // first date tick
    CHECK(first.find("2023-03-06") != std::string::npos);  // last date tick

    SECTION("mismatched date axes are rejected") {
        const std::vector<Date> other{Date::parse("2024-01-01")};
        const AbundanceSeries odd(MatrixD(1, 1, 0.3), ConstraintKind::SumLEOne, other);
        CHECK_THROWS_AS(abundance_plot({series, odd}, {"a", "b"}), ShapeError);
        CHECK_THROWS_AS(abundance_plot({series}, {"a", "b"}), ShapeError);
    }
}

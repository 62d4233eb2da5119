#include "hfgn/graph.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace hfgn;

namespace {

Dataset three_outfit_dataset() {
    // A:(c1,c2) B:(c1,c2) C:(c1,c3)
    Dataset ds;
    ds.items = {{"a1", "c1"}, {"a2", "c2"}, {"b1", "c1"}, {"b2", "c2"}, {"x1", "c1"}, {"x3", "c3"}};
    ds.outfits = {{"A", {"a1", "a2"}}, {"B", {"b1", "b2"}}, {"C", {"x1", "x3"}}};
    ds.interactions = {{"u", "A"}};
    ds.feature_dim = 1;
    ds.features.assign(ds.items.size(), 0.0);
    return ds;
}

} // namespace

TEST_CASE("entity index counts and ordering") {
    Dataset ds;
    ds.items = {{"i3", "cb"}, {"i1", "ca"}, {"i2", "ca"}, {"i0", "cb"}, {"i4", "ca"}};
    ds.outfits = {{"o1", {"i1", "i3"}}, {"o0", {"i0", "i2", "i4"}}};
    ds.interactions = {{"u2", "o0"}, {"u0", "o1"}, {"u1", "o0"}};
    const EntityIndex idx = build_entity_index(ds);
    CHECK(idx.user_count() == 3);
    CHECK(idx.outfit_count() == 2);
    CHECK(idx.item_count() == 5);
    CHECK(idx.category_count() == 2);
    CHECK(idx.users.front() == "u0");
    CHECK(idx.item_of.at("i0") == 0);
    CHECK(idx.outfit_of.at("o1") == 1);
    CHECK(idx.item_category[idx.item_of.at("i3")] == idx.category_of.at("cb"));
}

TEST_CASE("entity index rejects ambiguous and missing categories") {
    Dataset ds;
    ds.items = {{"i0", "c0"}, {"i0", "c1"}};
    CHECK_THROWS_WITH_AS(build_entity_index(ds), doctest::Contains("ambiguous category"), DataError);
    Dataset ds2;
    ds2.items = {{"i0", "c0"}};
    ds2.outfits = {{"o0", {"i0", "i9"}}};
    CHECK_THROWS_WITH_AS(build_entity_index(ds2), doctest::Contains("no category"), DataError);
}

TEST_CASE("empty input gives a valid empty index") {
    const EntityIndex idx = build_entity_index(Dataset{});
    CHECK(idx.user_count() == 0);
    CHECK(idx.outfit_count() == 0);
    CHECK(idx.item_count() == 0);
    CHECK(idx.category_count() == 0);
}

TEST_CASE("category graph on the three-outfit example") {
    const IndexedData data = index_dataset(three_outfit_dataset());
    const auto& idx = data.index;
    const CategoryGraph cg = build_category_graph(data.outfit_items, idx.item_category, idx.category_count());
    const std::size_t c1 = idx.category_of.at("c1"), c2 = idx.category_of.at("c2"), c3 = idx.category_of.at("c3");
    CHECK(cg.g(c1, c2) == 2);
    CHECK(cg.g(c1, c3) == 1);
    CHECK(cg.freq[c1] == 3);
    CHECK(cg.freq[c2] == 2);
    CHECK(cg.freq[c3] == 1);
    CHECK(cg.w(c1, c2) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(cg.w(c1, c3) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(cg.w(c2, c1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cg.w(c3, c1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cg.w(c2, c3) == 0.0);
}

TEST_CASE("single co-occurring pair forces weight one") {
    const std::vector<std::vector<std::size_t>> outfits{{0, 1}};
    const std::vector<std::size_t> cat{0, 1};
    const CategoryGraph cg = build_category_graph(outfits, cat, 2);
    CHECK(cg.w(0, 1) == 1.0);
    CHECK(cg.w(1, 0) == 1.0);
}

TEST_CASE("isolated category has an all-zero weight row") {
    const std::vector<std::vector<std::size_t>> outfits{{0, 1}, {2}};
    const std::vector<std::size_t> cat{0, 1, 2};
    const CategoryGraph cg = build_category_graph(outfits, cat, 3);
    for (std::size_t c = 0; c < 3; ++c) CHECK(cg.w(2, c) == 0.0);
    CHECK(cg.freq[2] == 1);
}

TEST_CASE("same-category items count once per outfit on the diagonal") {
    // One outfit with three items of category 0 and one of category 1.
    const std::vector<std::vector<std::size_t>> outfits{{0, 1, 2, 3}};
    const std::vector<std::size_t> cat{0, 0, 0, 1};
    const CategoryGraph cg = build_category_graph(outfits, cat, 2);
    CHECK(cg.g(0, 0) == 1);
    CHECK(cg.g(0, 1) == 1);
    CHECK(cg.g(1, 1) == 0);
    CHECK(cg.freq[0] == 3);
    // w(0,0) = (1/3) / (1/3 + 1/1) = 0.25
    CHECK(cg.w(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(cg.w(0, 1) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("category graph matches the brute-force counter on random data") {
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t C = 1 + rng() % 10;
        const std::size_t items = 1 + rng() % 40;
        std::vector<std::size_t> cat(items);
        for (auto& c : cat) c = rng() % C;
        std::vector<std::vector<std::size_t>> outfits(rng() % 51);
        for (auto& o : outfits) {
            o.resize(1 + rng() % 6);
            for (auto& i : o) i = rng() % items;
        }
        const CategoryGraph cg = build_category_graph(outfits, cat, C);
        const auto ref = oracle::category_counts(outfits, cat, C);
        for (std::size_t a = 0; a < C; ++a) {
            CHECK(cg.freq[a] == ref.freq[a]);
            double row = 0.0;
            for (std::size_t b = 0; b < C; ++b) {
                CHECK(cg.g(a, b) == ref.g[a][b]);
                CHECK(cg.g(a, b) == cg.g(b, a));
                CHECK(std::abs(cg.w(a, b) - ref.w[a][b]) <= 1e-12);
                CHECK(cg.w(a, b) >= 0.0);
                row += cg.w(a, b);
            }
            if (row != 0.0) CHECK(std::abs(row - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("outfit item graphs inherit category weights exactly") {
    const IndexedData data = index_dataset(three_outfit_dataset());
    const auto& idx = data.index;
    const HierarchicalGraph g =
        build_hierarchical_graph(idx.user_count(), data.interactions, data.outfit_items, idx.item_category,
                                 idx.category_count());
    const CategoryGraph cg = build_category_graph(data.outfit_items, idx.item_category, idx.category_count());
    for (std::size_t o = 0; o < g.outfit_count(); ++o) {
        const OutfitItemGraph og = build_outfit_item_graph(g, cg, o);
        CHECK(og.nodes == g.outfit_items[o]);
        CHECK(og.edges.size() == og.nodes.size() * (og.nodes.size() - 1));
        for (const auto& e : og.edges) {
            CHECK(e.weight == cg.w(idx.item_category[og.nodes[e.dst]], idx.item_category[og.nodes[e.src]]));
        }
    }
    // Outfit C pairs c1 with c3: the c1 item receives 0.5, the c3 item receives 1.0.
    const OutfitItemGraph oc = build_outfit_item_graph(g, cg, idx.outfit_of.at("C"));
    for (const auto& e : oc.edges) {
        const bool dst_is_c1 = idx.item_category[oc.nodes[e.dst]] == idx.category_of.at("c1");
        CHECK(e.weight == doctest::Approx(dst_is_c1 ? 0.5 : 1.0).epsilon(1e-15));
    }
}

TEST_CASE("single-item outfit graph and non-co-occurring categories") {
    const std::vector<std::vector<std::size_t>> outfits{{0, 1}, {2, 3}};
    const std::vector<std::size_t> cat{0, 1, 2, 3};
    const CategoryGraph cg = build_category_graph(outfits, cat, 4);
    const std::vector<std::size_t> single{0};
    const OutfitItemGraph g1 = build_item_graph(single, cat, cg);
    CHECK(g1.nodes.size() == 1);
    CHECK(g1.edges.empty());
    const std::vector<std::size_t> cross{0, 2};
    for (const auto& e : build_item_graph(cross, cat, cg).edges) CHECK(e.weight == 0.0);
}

TEST_CASE("validate_graph reports each violation") {
    HierarchicalGraph g;
    g.user_outfits = {{0, 1}, {1}};
    g.outfit_items = {{0, 1}, {2}};
    g.item_category = {0, 1, 0};
    g.category_count = 2;
    CHECK(validate_graph(g).ok());

    HierarchicalGraph bad_item = g;
    bad_item.outfit_items[1] = {7};
    CHECK(validate_graph(bad_item).violations.size() == 1);

    HierarchicalGraph empty_user = g;
    empty_user.user_outfits[1].clear();
    CHECK(validate_graph(empty_user).violations.size() == 1);

    HierarchicalGraph empty_outfit = g;
    empty_outfit.outfit_items[1].clear();
    CHECK(validate_graph(empty_outfit).violations.size() == 1);

    HierarchicalGraph bad_cat = g;
    bad_cat.item_category[2] = 5;
    CHECK(validate_graph(bad_cat).violations.size() == 1);
}

TEST_CASE("hierarchical graph sorts and deduplicates histories") {
    const std::vector<Interaction> rows{{0, 2}, {0, 1}, {0, 2}, {1, 0}};
    const HierarchicalGraph g = build_hierarchical_graph(2, rows, {{0}, {0}, {0}}, {0}, 1);
    CHECK(g.user_outfits[0] == std::vector<std::size_t>{1, 2});
    CHECK(g.user_outfits[1] == std::vector<std::size_t>{0});
}

TEST_CASE("category stats lines list the strongest partners") {
    const IndexedData data = index_dataset(three_outfit_dataset());
    const auto& idx = data.index;
    const CategoryGraph cg = build_category_graph(data.outfit_items, idx.item_category, idx.category_count());
    const std::string s = category_graph_stats(cg, idx);
    CHECK(s.find("c1\t3\tc2:0.500000\tc3:0.500000\n") != std::string::npos);
    CHECK(s.find("c2\t2\tc1:1.000000\n") != std::string::npos);
}

#pragma once

#include "hfgn/dataset.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace hfgn {

/// Dense, lexicographically ordered indices for each node level.
struct EntityIndex {
    std::vector<std::string> users;
    std::vector<std::string> outfits;
    std::vector<std::string> items;
    std::vector<std::string> categories;
    std::unordered_map<std::string, std::size_t> user_of;
    std::unordered_map<std::string, std::size_t> outfit_of;
    std::unordered_map<std::string, std::size_t> item_of;
    std::unordered_map<std::string, std::size_t> category_of;
    std::vector<std::size_t> item_category;

    std::size_t user_count() const { return users.size(); }
    std::size_t outfit_count() const { return outfits.size(); }
    std::size_t item_count() const { return items.size(); }
    std::size_t category_count() const { return categories.size(); }
};

/// Throws DataError on duplicate IDs within a level, on items listed under
/// two categories ("ambiguous category") and on outfit items with no category.
EntityIndex build_entity_index(const Dataset& ds);

/// A dataset translated to dense indices.
struct IndexedData {
    EntityIndex index;
    std::vector<Interaction> interactions;
    std::vector<std::vector<std::size_t>> outfit_items;
    std::vector<std::vector<std::size_t>> heldout_outfits;
    std::size_t feature_dim = 0;
    std::vector<double> features; // item_count x feature_dim in index order
};

IndexedData index_dataset(const Dataset& ds);

struct HierarchicalGraph {
    std::vector<std::vector<std::size_t>> user_outfits; // N_u, sorted and duplicate-free
    std::vector<std::vector<std::size_t>> outfit_items; // N_o, composition order
    std::vector<std::size_t> item_category;
    std::size_t category_count = 0;

    std::size_t user_count() const { return user_outfits.size(); }
    std::size_t outfit_count() const { return outfit_items.size(); }
    std::size_t item_count() const { return item_category.size(); }
};

HierarchicalGraph build_hierarchical_graph(std::size_t user_count, std::span<const Interaction> interactions,
                                           std::vector<std::vector<std::size_t>> outfit_items,
                                           std::vector<std::size_t> item_category, std::size_t category_count);

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

ValidationReport validate_graph(const HierarchicalGraph& graph);

/// Category co-occurrence statistics and the normalized edge weights
///   w(c,c') = (g(c,c') / g(c')) / sum_{c'' : g(c'') > 0} g(c,c'') / g(c'')
/// where g(c,c') counts outfits containing both categories (once per outfit)
/// and g(c) counts item occurrences of c over all outfits. g(c,c) counts
/// outfits holding two or more items of c.
struct CategoryGraph {
    std::size_t category_count = 0;
    std::vector<std::size_t> cooccur; // C x C, symmetric
    std::vector<std::size_t> freq;    // C
    std::vector<double> weights;      // C x C, rows sum to 1 or are all zero

    std::size_t g(std::size_t c, std::size_t c2) const { return cooccur[c * category_count + c2]; }
    double w(std::size_t c, std::size_t c2) const { return weights[c * category_count + c2]; }
};

CategoryGraph build_category_graph(std::span<const std::vector<std::size_t>> outfit_items,
                                   std::span<const std::size_t> item_category, std::size_t category_count);

/// Message edge into `dst` from `src`; both are positions within the outfit.
struct ItemEdge {
    std::size_t dst;
    std::size_t src;
    double weight; // w(category(dst), category(src))
};

struct OutfitItemGraph {
    std::size_t outfit = 0;
    std::vector<std::size_t> nodes; // the outfit's items in composition order
    std::vector<ItemEdge> edges;    // every ordered pair of distinct positions
};

OutfitItemGraph build_outfit_item_graph(const HierarchicalGraph& graph, const CategoryGraph& categories,
                                        std::size_t outfit);

/// Same construction for an arbitrary composition (negatives, FITB candidates).
OutfitItemGraph build_item_graph(std::span<const std::size_t> items, std::span<const std::size_t> item_category,
                                 const CategoryGraph& categories);

/// One tab-separated row per category: id, g(c), then up to five
/// "partner:weight" fields ordered by descending weight.
std::string category_graph_stats(const CategoryGraph& cg, const EntityIndex& index);

} // namespace hfgn

#include "hfgn/graph.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

namespace hfgn {

namespace {

std::vector<std::string> sorted_unique(std::vector<std::string> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

std::unordered_map<std::string, std::size_t> positions(const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> m;
    m.reserve(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) m.emplace(ids[k], k);
    return m;
}

} // namespace

EntityIndex build_entity_index(const Dataset& ds) {
    EntityIndex idx;

    std::unordered_map<std::string, std::string> category_of_item;
    std::vector<std::string> item_ids, category_ids;
    for (const auto& it : ds.items) {
        auto [pos, fresh] = category_of_item.emplace(it.id, it.category);
        if (!fresh) {
            if (pos->second != it.category) throw DataError("ambiguous category for item " + it.id);
            throw DataError("duplicate item id " + it.id);
        }
        item_ids.push_back(it.id);
        category_ids.push_back(it.category);
    }

    std::vector<std::string> outfit_ids;
    std::set<std::string> seen_outfits;
    for (const auto& o : ds.outfits) {
        if (!seen_outfits.insert(o.id).second) throw DataError("duplicate outfit id " + o.id);
        for (const auto& item : o.items) {
            if (!category_of_item.count(item)) throw DataError("item " + item + " of outfit " + o.id + " has no category");
        }
        outfit_ids.push_back(o.id);
    }
    for (const auto& o : ds.heldout_outfits) {
        for (const auto& item : o.items) {
            if (!category_of_item.count(item)) throw DataError("item " + item + " of outfit " + o.id + " has no category");
        }
    }

    std::vector<std::string> user_ids;
    user_ids.reserve(ds.interactions.size());
    for (const auto& [u, o] : ds.interactions) user_ids.push_back(u);

    idx.users = sorted_unique(std::move(user_ids));
    idx.outfits = sorted_unique(std::move(outfit_ids));
    idx.items = sorted_unique(std::move(item_ids));
    idx.categories = sorted_unique(std::move(category_ids));
    idx.user_of = positions(idx.users);
    idx.outfit_of = positions(idx.outfits);
    idx.item_of = positions(idx.items);
    idx.category_of = positions(idx.categories);
    idx.item_category.resize(idx.items.size());
    for (std::size_t i = 0; i < idx.items.size(); ++i) {
        idx.item_category[i] = idx.category_of.at(category_of_item.at(idx.items[i]));
    }
    return idx;
}

IndexedData index_dataset(const Dataset& ds) {
    validate_dataset(ds);
    IndexedData data;
    data.index = build_entity_index(ds);
    const auto& idx = data.index;

    data.interactions.reserve(ds.interactions.size());
    for (const auto& [u, o] : ds.interactions) {
        data.interactions.push_back({idx.user_of.at(u), idx.outfit_of.at(o)});
    }
    std::sort(data.interactions.begin(), data.interactions.end());
    data.interactions.erase(std::unique(data.interactions.begin(), data.interactions.end()),
                            data.interactions.end());

    auto to_indices = [&](const OutfitRecord& rec) {
        std::vector<std::size_t> items;
        items.reserve(rec.items.size());
        for (const auto& it : rec.items) items.push_back(idx.item_of.at(it));
        return items;
    };
    data.outfit_items.resize(idx.outfit_count());
    for (const auto& o : ds.outfits) data.outfit_items[idx.outfit_of.at(o.id)] = to_indices(o);
    for (const auto& o : ds.heldout_outfits) data.heldout_outfits.push_back(to_indices(o));

    data.feature_dim = ds.feature_dim;
    data.features.assign(idx.item_count() * ds.feature_dim, 0.0);
    for (std::size_t k = 0; k < ds.items.size(); ++k) {
        const std::size_t i = idx.item_of.at(ds.items[k].id);
        std::copy_n(ds.features.begin() + static_cast<std::ptrdiff_t>(k * ds.feature_dim), ds.feature_dim,
                    data.features.begin() + static_cast<std::ptrdiff_t>(i * ds.feature_dim));
    }
    return data;
}

HierarchicalGraph build_hierarchical_graph(std::size_t user_count, std::span<const Interaction> interactions,
                                           std::vector<std::vector<std::size_t>> outfit_items,
                                           std::vector<std::size_t> item_category, std::size_t category_count) {
    HierarchicalGraph g;
    g.user_outfits.resize(user_count);
    for (const auto& it : interactions) {
        if (it.user >= user_count) throw std::out_of_range("build_hierarchical_graph: user index out of range");
        g.user_outfits[it.user].push_back(it.outfit);
    }
    for (auto& list : g.user_outfits) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    g.outfit_items = std::move(outfit_items);
    g.item_category = std::move(item_category);
    g.category_count = category_count;
    return g;
}

ValidationReport validate_graph(const HierarchicalGraph& graph) {
    ValidationReport report;
    auto& v = report.violations;
    for (std::size_t u = 0; u < graph.user_count(); ++u) {
        const auto& list = graph.user_outfits[u];
        if (list.empty()) v.push_back("user " + std::to_string(u) + " has an empty history");
        for (std::size_t k = 0; k < list.size(); ++k) {
            if (list[k] >= graph.outfit_count()) {
                v.push_back("user " + std::to_string(u) + " references outfit " + std::to_string(list[k]) +
                            " >= outfit_count " + std::to_string(graph.outfit_count()));
            }
            if (k > 0 && list[k] <= list[k - 1]) {
                v.push_back("user " + std::to_string(u) + " history is not sorted and duplicate-free");
            }
        }
    }
    for (std::size_t o = 0; o < graph.outfit_count(); ++o) {
        const auto& items = graph.outfit_items[o];
        if (items.empty()) v.push_back("outfit " + std::to_string(o) + " has no items");
        for (std::size_t i : items) {
            if (i >= graph.item_count()) {
                v.push_back("outfit " + std::to_string(o) + " references item " + std::to_string(i) +
                            " >= item_count " + std::to_string(graph.item_count()));
            }
        }
    }
    for (std::size_t i = 0; i < graph.item_count(); ++i) {
        if (graph.item_category[i] >= graph.category_count) {
            v.push_back("item " + std::to_string(i) + " has category " + std::to_string(graph.item_category[i]) +
                        " >= category_count " + std::to_string(graph.category_count));
        }
    }
    return report;
}

CategoryGraph build_category_graph(std::span<const std::vector<std::size_t>> outfit_items,
                                   std::span<const std::size_t> item_category, std::size_t category_count) {
    const std::size_t C = category_count;
    CategoryGraph cg;
    cg.category_count = C;
    cg.cooccur.assign(C * C, 0);
    cg.freq.assign(C, 0);
    cg.weights.assign(C * C, 0.0);

    std::vector<std::size_t> count(C, 0);
    std::vector<std::size_t> present;
    for (const auto& items : outfit_items) {
        present.clear();
        for (std::size_t i : items) {
            const std::size_t c = item_category[i];
            if (c >= C) throw std::out_of_range("build_category_graph: category index out of range");
            if (count[c]++ == 0) present.push_back(c);
            ++cg.freq[c];
        }
        for (std::size_t a = 0; a < present.size(); ++a) {
            const std::size_t ca = present[a];
            if (count[ca] >= 2) ++cg.cooccur[ca * C + ca];
            for (std::size_t b = a + 1; b < present.size(); ++b) {
                const std::size_t cb = present[b];
                ++cg.cooccur[ca * C + cb];
                ++cg.cooccur[cb * C + ca];
            }
        }
        for (std::size_t c : present) count[c] = 0;
    }

    for (std::size_t c = 0; c < C; ++c) {
        double denom = 0.0;
        for (std::size_t c2 = 0; c2 < C; ++c2) {
            if (cg.freq[c2] == 0) continue;
            denom += static_cast<double>(cg.g(c, c2)) / static_cast<double>(cg.freq[c2]);
        }
        if (denom <= 0.0) continue;
        for (std::size_t c2 = 0; c2 < C; ++c2) {
            if (cg.freq[c2] == 0) continue;
            cg.weights[c * C + c2] =
                (static_cast<double>(cg.g(c, c2)) / static_cast<double>(cg.freq[c2])) / denom;
        }
    }
    return cg;
}

OutfitItemGraph build_item_graph(std::span<const std::size_t> items, std::span<const std::size_t> item_category,
                                 const CategoryGraph& categories) {
    OutfitItemGraph g;
    g.nodes.assign(items.begin(), items.end());
    const std::size_t n = items.size();
    g.edges.reserve(n * (n > 0 ? n - 1 : 0));
    for (std::size_t dst = 0; dst < n; ++dst) {
        for (std::size_t src = 0; src < n; ++src) {
            if (src == dst) continue;
            g.edges.push_back({dst, src, categories.w(item_category[items[dst]], item_category[items[src]])});
        }
    }
    return g;
}

OutfitItemGraph build_outfit_item_graph(const HierarchicalGraph& graph, const CategoryGraph& categories,
                                        std::size_t outfit) {
    if (outfit >= graph.outfit_count()) throw std::out_of_range("build_outfit_item_graph: no such outfit");
    const auto& items = graph.outfit_items[outfit];
    if (items.empty()) throw DataError("outfit " + std::to_string(outfit) + " has no items");
    OutfitItemGraph g = build_item_graph(items, graph.item_category, categories);
    g.outfit = outfit;
    return g;
}

std::string category_graph_stats(const CategoryGraph& cg, const EntityIndex& index) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    const std::size_t C = cg.category_count;
    std::vector<std::size_t> order(C);
    for (std::size_t c = 0; c < C; ++c) {
        os << index.categories.at(c) << '\t' << cg.freq[c];
        order.clear();
        for (std::size_t c2 = 0; c2 < C; ++c2) {
            if (cg.w(c, c2) > 0.0) order.push_back(c2);
        }
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return cg.w(c, a) > cg.w(c, b); });
        for (std::size_t k = 0; k < order.size() && k < 5; ++k) {
            os << '\t' << index.categories.at(order[k]) << ':' << cg.w(c, order[k]);
        }
        os << '\n';
    }
    return os.str();
}

} // namespace hfgn

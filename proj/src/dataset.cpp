#include "hfgn/dataset.hpp"

#include "hfgn/binio.hpp"
#include "hfgn/log.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace hfgn {

namespace fs = std::filesystem;

namespace {

constexpr char kFeatureMagic[8] = {'H', 'F', 'G', 'N', 'F', 'E', 'A', 'T'};

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

std::ifstream open_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

/// Reads `a \t b` lines; blank lines and '#' comments are skipped.
std::vector<std::pair<std::string, std::string>> read_two_columns(const fs::path& path) {
    auto in = open_text(path);
    std::vector<std::pair<std::string, std::string>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size() ||
            line.find('\t', tab + 1) != std::string::npos) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": expected two tab-separated fields");
        }
        rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return rows;
}

std::vector<OutfitRecord> read_outfits(const fs::path& path) {
    std::vector<OutfitRecord> out;
    for (auto& [id, list] : read_two_columns(path)) {
        OutfitRecord rec{id, split_on(list, ',')};
        for (const auto& item : rec.items) {
            if (item.empty()) throw DataError(path.string() + ": outfit " + id + " has an empty item id");
        }
        out.push_back(std::move(rec));
    }
    return out;
}

void write_outfits(const std::vector<OutfitRecord>& outfits, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& o : outfits) {
        out << o.id << '\t';
        for (std::size_t k = 0; k < o.items.size(); ++k) out << (k ? "," : "") << o.items[k];
        out << '\n';
    }
}

} // namespace

std::size_t Dataset::user_count() const {
    std::unordered_set<std::string> users;
    for (const auto& [u, o] : interactions) users.insert(u);
    return users.size();
}

void validate_dataset(const Dataset& ds) {
    std::unordered_map<std::string, std::string> category_of;
    for (const auto& it : ds.items) {
        auto [pos, fresh] = category_of.emplace(it.id, it.category);
        if (!fresh) {
            if (pos->second != it.category) throw DataError("ambiguous category for item " + it.id);
            throw DataError("duplicate item id " + it.id);
        }
        if (it.category.empty()) throw DataError("item " + it.id + " has no category");
    }
    if (ds.features.size() != ds.items.size() * ds.feature_dim) {
        throw DataError("feature table holds " + std::to_string(ds.features.size()) + " values for " +
                        std::to_string(ds.items.size()) + " items of dimension " +
                        std::to_string(ds.feature_dim));
    }
    auto check_outfits = [&](const std::vector<OutfitRecord>& outfits, std::unordered_set<std::string>& ids) {
        for (const auto& o : outfits) {
            if (!ids.insert(o.id).second) throw DataError("duplicate outfit id " + o.id);
            if (o.items.empty()) throw DataError("outfit " + o.id + " has no items");
            for (const auto& item : o.items) {
                if (!category_of.count(item)) {
                    throw DataError("outfit " + o.id + " references unknown item " + item);
                }
            }
        }
    };
    std::unordered_set<std::string> outfit_ids;
    check_outfits(ds.outfits, outfit_ids);
    std::unordered_set<std::string> catalog = outfit_ids;
    check_outfits(ds.heldout_outfits, outfit_ids);
    for (const auto& [u, o] : ds.interactions) {
        if (!catalog.count(o)) throw DataError("interaction of user " + u + " references unknown outfit " + o);
    }
}

DatasetPaths DatasetPaths::in_dir(const fs::path& dir) {
    return DatasetPaths{dir / "interactions.tsv", dir / "outfits.tsv", dir / "items.tsv",
                        dir / "features.bin",     dir / "heldout.tsv", dir / "provenance.txt"};
}

std::vector<std::pair<std::string, std::string>> read_interactions(const fs::path& path) {
    return read_two_columns(path);
}

void write_interactions(const std::vector<std::pair<std::string, std::string>>& rows, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& [u, o] : rows) out << u << '\t' << o << '\n';
}

Dataset load_dataset(const DatasetPaths& paths) {
    Dataset ds;
    // Repeated clicks collapse to one interaction.
    std::set<std::pair<std::string, std::string>> seen;
    std::size_t duplicates = 0;
    for (auto& row : read_interactions(paths.interactions)) {
        if (seen.insert(row).second) {
            ds.interactions.push_back(std::move(row));
        } else {
            ++duplicates;
        }
    }
    if (duplicates > 0) {
        ds.provenance["duplicate_interactions_dropped"] = std::to_string(duplicates);
    }
    ds.outfits = read_outfits(paths.outfits);
    for (auto& [id, cat] : read_two_columns(paths.items)) ds.items.push_back({id, cat});
    if (!paths.heldout.empty() && fs::exists(paths.heldout)) ds.heldout_outfits = read_outfits(paths.heldout);
    if (!paths.provenance.empty() && fs::exists(paths.provenance)) {
        auto in = open_text(paths.provenance);
        std::string line;
        while (std::getline(in, line)) {
            line = strip_cr(line);
            const auto eq = line.find('=');
            if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
            ds.provenance.emplace(line.substr(0, eq), line.substr(eq + 1));
        }
    }

    // features.bin
    std::ifstream in(paths.features, std::ios::binary);
    if (!in) throw DataError("cannot open " + paths.features.string());
    BinaryReader reader(in, paths.features.string());
    char magic[8];
    reader.bytes(magic, sizeof magic);
    if (!std::equal(std::begin(magic), std::end(magic), std::begin(kFeatureMagic))) {
        throw DataError(paths.features.string() + ": unrecognized feature file");
    }
    const std::uint64_t count = reader.u64();
    const std::uint64_t dim = reader.u64();
    std::unordered_map<std::string, std::size_t> item_pos;
    for (std::size_t k = 0; k < ds.items.size(); ++k) item_pos.emplace(ds.items[k].id, k);
    if (count != ds.items.size()) {
        throw DataError(paths.features.string() + ": " + std::to_string(count) + " feature rows for " +
                        std::to_string(ds.items.size()) + " items");
    }
    ds.feature_dim = dim;
    ds.features.assign(ds.items.size() * dim, 0.0);
    std::vector<bool> filled(ds.items.size(), false);
    for (std::uint64_t r = 0; r < count; ++r) {
        const std::string id = reader.str();
        auto it = item_pos.find(id);
        if (it == item_pos.end()) throw DataError(paths.features.string() + ": features for unknown item " + id);
        if (filled[it->second]) throw DataError(paths.features.string() + ": repeated features for item " + id);
        filled[it->second] = true;
        for (std::uint64_t c = 0; c < dim; ++c) ds.features[it->second * dim + c] = reader.f64();
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw DataError(paths.features.string() + ": trailing bytes after " + std::to_string(count) + " rows");
    }
    validate_dataset(ds);
    return ds;
}

void write_dataset(const Dataset& ds, const fs::path& dir) {
    validate_dataset(ds);
    fs::create_directories(dir);
    const auto paths = DatasetPaths::in_dir(dir);
    write_interactions(ds.interactions, paths.interactions);
    write_outfits(ds.outfits, paths.outfits);
    {
        std::ofstream out(paths.items);
        if (!out) throw DataError("cannot write " + paths.items.string());
        for (const auto& it : ds.items) out << it.id << '\t' << it.category << '\n';
    }
    {
        std::ofstream out(paths.features, std::ios::binary);
        if (!out) throw DataError("cannot write " + paths.features.string());
        BinaryWriter w(out);
        w.bytes(kFeatureMagic, sizeof kFeatureMagic);
        w.u64(ds.items.size());
        w.u64(ds.feature_dim);
        for (std::size_t k = 0; k < ds.items.size(); ++k) {
            w.str(ds.items[k].id);
            for (std::size_t c = 0; c < ds.feature_dim; ++c) w.f64(ds.features[k * ds.feature_dim + c]);
        }
    }
    if (!ds.heldout_outfits.empty()) {
        write_outfits(ds.heldout_outfits, paths.heldout);
    } else if (fs::exists(paths.heldout)) {
        fs::remove(paths.heldout);
    }
    if (!ds.provenance.empty()) {
        std::ofstream out(paths.provenance);
        for (const auto& [k, v] : ds.provenance) out << k << '=' << v << '\n';
    } else if (fs::exists(paths.provenance)) {
        fs::remove(paths.provenance);
    }
}

// ---- k-core ----

Dataset kcore_filter(const Dataset& ds, std::size_t min_user, std::size_t min_outfit) {
    if (min_user < 1 || min_outfit < 1) throw std::invalid_argument("kcore_filter: thresholds must be >= 1");

    std::unordered_map<std::string, std::size_t> uid, oid;
    std::vector<std::size_t> iu, io;
    iu.reserve(ds.interactions.size());
    io.reserve(ds.interactions.size());
    for (const auto& [u, o] : ds.interactions) {
        iu.push_back(uid.emplace(u, uid.size()).first->second);
        io.push_back(oid.emplace(o, oid.size()).first->second);
    }
    for (const auto& o : ds.outfits) oid.emplace(o.id, oid.size());

    std::vector<std::vector<std::size_t>> by_user(uid.size()), by_outfit(oid.size());
    for (std::size_t k = 0; k < iu.size(); ++k) {
        by_user[iu[k]].push_back(k);
        by_outfit[io[k]].push_back(k);
    }
    std::vector<std::size_t> udeg(uid.size()), odeg(oid.size());
    for (std::size_t u = 0; u < udeg.size(); ++u) udeg[u] = by_user[u].size();
    for (std::size_t o = 0; o < odeg.size(); ++o) odeg[o] = by_outfit[o].size();
    std::vector<bool> alive(iu.size(), true), user_gone(uid.size(), false), outfit_gone(oid.size(), false);

    // Worklist peeling: removing an entity only lowers degrees of its neighbours.
    std::vector<std::pair<bool, std::size_t>> work; // (is_user, index)
    for (std::size_t u = 0; u < udeg.size(); ++u) {
        if (udeg[u] < min_user) work.emplace_back(true, u);
    }
    for (std::size_t o = 0; o < odeg.size(); ++o) {
        if (odeg[o] < min_outfit) work.emplace_back(false, o);
    }
    while (!work.empty()) {
        auto [is_user, idx] = work.back();
        work.pop_back();
        if (is_user) {
            if (user_gone[idx]) continue;
            user_gone[idx] = true;
            for (std::size_t k : by_user[idx]) {
                if (!alive[k]) continue;
                alive[k] = false;
                if (--odeg[io[k]] < min_outfit && !outfit_gone[io[k]]) work.emplace_back(false, io[k]);
            }
        } else {
            if (outfit_gone[idx]) continue;
            outfit_gone[idx] = true;
            for (std::size_t k : by_outfit[idx]) {
                if (!alive[k]) continue;
                alive[k] = false;
                if (--udeg[iu[k]] < min_user && !user_gone[iu[k]]) work.emplace_back(true, iu[k]);
            }
        }
    }

    Dataset out;
    out.feature_dim = ds.feature_dim;
    out.provenance = ds.provenance;
    for (std::size_t k = 0; k < iu.size(); ++k) {
        if (alive[k]) out.interactions.push_back(ds.interactions[k]);
    }
    if (out.interactions.empty()) throw DataError("filter removed everything");
    for (const auto& o : ds.outfits) {
        if (!outfit_gone[oid.at(o.id)]) out.outfits.push_back(o);
    }
    out.heldout_outfits = ds.heldout_outfits;
    std::unordered_set<std::string> used;
    for (const auto* list : {&out.outfits, &out.heldout_outfits}) {
        for (const auto& o : *list) used.insert(o.items.begin(), o.items.end());
    }
    for (std::size_t k = 0; k < ds.items.size(); ++k) {
        if (!used.count(ds.items[k].id)) continue;
        out.items.push_back(ds.items[k]);
        const auto row = ds.features.begin() + static_cast<std::ptrdiff_t>(k * ds.feature_dim);
        out.features.insert(out.features.end(), row, row + static_cast<std::ptrdiff_t>(ds.feature_dim));
    }
    out.provenance["kcore"] = std::to_string(min_user) + "," + std::to_string(min_outfit);
    return out;
}

// ---- split ----

Split split_interactions(const std::vector<Interaction>& interactions, std::size_t user_count,
                         const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) ||
        !(spec.val_fraction > 0.0 && spec.val_fraction < 1.0)) {
        throw std::invalid_argument("split: fractions must lie in (0,1)");
    }
    std::vector<std::vector<std::size_t>> per_user(user_count);
    for (const auto& it : interactions) {
        if (it.user >= user_count) throw std::out_of_range("split: user index out of range");
        per_user[it.user].push_back(it.outfit);
    }
    std::mt19937_64 rng(spec.seed);
    Split out;
    std::size_t singletons = 0;
    for (std::size_t u = 0; u < user_count; ++u) {
        auto& list = per_user[u];
        if (list.empty()) continue;
        std::sort(list.begin(), list.end());
        const std::size_t n = list.size();
        if (n == 1) {
            ++singletons;
            out.train.push_back({u, list[0]});
            continue;
        }
        std::shuffle(list.begin(), list.end(), rng);
        // Small epsilon so that e.g. 0.2 * 10 lands on 2 rather than 1.999...
        std::size_t n_test = static_cast<std::size_t>(std::floor((1.0 - spec.train_fraction) * n + 1e-9));
        n_test = std::min(n_test, n - 1);
        const std::size_t n_train_all = n - n_test;
        std::size_t n_val = static_cast<std::size_t>(std::floor(spec.val_fraction * n_train_all + 1e-9));
        n_val = std::min(n_val, n_train_all - 1);
        std::size_t k = 0;
        for (; k < n_test; ++k) out.test.push_back({u, list[k]});
        for (; k < n_test + n_val; ++k) out.val.push_back({u, list[k]});
        for (; k < n; ++k) out.train.push_back({u, list[k]});
    }
    if (singletons > 0) {
        warn(std::to_string(singletons) + " user(s) with a single interaction kept entirely in train");
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

// ---- synthetic ----

namespace {

std::string padded(char prefix, std::size_t k, std::size_t total) {
    std::size_t width = 1;
    for (std::size_t t = total; t >= 10; t /= 10) ++width;
    std::ostringstream os;
    os << prefix << std::setw(static_cast<int>(width)) << std::setfill('0') << k;
    return os.str();
}

std::vector<double> unit_gaussian(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> v(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : v) {
            x = n01(rng);
            norm += x * x;
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

} // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.users == 0 || spec.outfits == 0 || spec.items == 0 || spec.categories == 0 || spec.style_dim == 0) {
        throw std::invalid_argument("generate_synthetic: counts must be >= 1");
    }
    if (spec.min_outfit_len < 1 || spec.min_outfit_len > spec.max_outfit_len) {
        throw std::invalid_argument("generate_synthetic: outfit length range is empty");
    }
    if (spec.max_outfit_len > spec.categories) {
        throw std::invalid_argument("generate_synthetic: outfit length exceeds category count "
                                    "(one item per category)");
    }
    if (spec.items < spec.categories) {
        throw std::invalid_argument("generate_synthetic: need at least one item per category");
    }
    if (!(spec.noise >= 0.0 && spec.noise <= 1.0)) {
        throw std::invalid_argument("generate_synthetic: noise must lie in [0,1]");
    }
    if (spec.style_pool < 1) throw std::invalid_argument("generate_synthetic: style_pool must be >= 1");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    Dataset ds;
    ds.feature_dim = spec.style_dim;

    std::vector<std::string> cat_ids(spec.categories);
    for (std::size_t c = 0; c < spec.categories; ++c) cat_ids[c] = padded('c', c, spec.categories);

    std::vector<std::vector<double>> style(spec.items);
    std::vector<std::vector<std::size_t>> items_of(spec.categories);
    for (std::size_t i = 0; i < spec.items; ++i) {
        const std::size_t c = i % spec.categories;
        ds.items.push_back({padded('i', i, spec.items), cat_ids[c]});
        style[i] = unit_gaussian(spec.style_dim, rng);
        items_of[c].push_back(i);
    }
    const double feat_sigma = spec.noise / std::sqrt(static_cast<double>(spec.style_dim));
    ds.features.reserve(spec.items * spec.style_dim);
    for (std::size_t i = 0; i < spec.items; ++i) {
        for (double s : style[i]) ds.features.push_back(s + feat_sigma * n01(rng));
    }

    const std::size_t total_outfits = spec.outfits + spec.heldout_outfits;
    std::vector<std::size_t> categories(spec.categories);
    std::iota(categories.begin(), categories.end(), 0);
    std::uniform_int_distribution<std::size_t> len_dist(spec.min_outfit_len, spec.max_outfit_len);
    std::set<std::vector<std::size_t>> compositions;
    std::vector<std::vector<double>> centers;
    std::vector<std::vector<std::size_t>> outfit_items;
    std::size_t attempts = 0;
    while (outfit_items.size() < total_outfits) {
        if (++attempts > 100 * total_outfits + 1000) {
            throw std::invalid_argument("generate_synthetic: cannot draw enough distinct outfits");
        }
        auto center = unit_gaussian(spec.style_dim, rng);
        const std::size_t len = len_dist(rng);
        std::shuffle(categories.begin(), categories.end(), rng);
        std::vector<std::size_t> chosen;
        bool coherent = true;
        for (std::size_t k = 0; k < len && coherent; ++k) {
            auto pool = items_of[categories[k]];
            std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
                return dot(style[a], center) > dot(style[b], center);
            });
            // Keep only items positively aligned with everything already in the outfit.
            std::erase_if(pool, [&](std::size_t i) {
                return std::any_of(chosen.begin(), chosen.end(),
                                   [&](std::size_t j) { return dot(style[i], style[j]) <= 0.0; });
            });
            if (pool.empty()) {
                coherent = false;
                break;
            }
            const std::size_t top = std::min(spec.style_pool, pool.size());
            std::uniform_int_distribution<std::size_t> pick(0, top - 1);
            chosen.push_back(pool[pick(rng)]);
        }
        if (!coherent) continue;
        auto key = chosen;
        std::sort(key.begin(), key.end());
        if (!compositions.insert(key).second) continue;
        centers.push_back(std::move(center));
        outfit_items.push_back(std::move(chosen));
    }
    for (std::size_t o = 0; o < total_outfits; ++o) {
        OutfitRecord rec;
        const bool heldout = o >= spec.outfits;
        rec.id = heldout ? padded('h', o - spec.outfits, spec.heldout_outfits) : padded('o', o, spec.outfits);
        for (std::size_t i : outfit_items[o]) rec.items.push_back(ds.items[i].id);
        (heldout ? ds.heldout_outfits : ds.outfits).push_back(std::move(rec));
    }

    const std::size_t per_user = std::min(spec.interactions_per_user, spec.outfits);
    std::vector<std::size_t> order(spec.outfits);
    std::vector<double> score(spec.outfits);
    for (std::size_t u = 0; u < spec.users; ++u) {
        const auto pref = unit_gaussian(spec.style_dim, rng);
        for (std::size_t o = 0; o < spec.outfits; ++o) score[o] = dot(pref, centers[o]) + spec.noise * n01(rng);
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(per_user), order.end(),
                          [&](std::size_t a, std::size_t b) {
                              return score[a] != score[b] ? score[a] > score[b] : a < b;
                          });
        std::vector<std::size_t> picked(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(per_user));
        std::sort(picked.begin(), picked.end());
        const std::string uid = padded('u', u, spec.users);
        for (std::size_t o : picked) ds.interactions.emplace_back(uid, ds.outfits[o].id);
    }

    std::ostringstream noise;
    noise << spec.noise;
    ds.provenance = {{"generator", "synthetic"},
                     {"seed", std::to_string(spec.seed)},
                     {"noise", noise.str()},
                     {"style_dim", std::to_string(spec.style_dim)}};
    return ds;
}

} // namespace hfgn

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hfgn {

/// Malformed or inconsistent input data. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OutfitRecord {
    std::string id;
    std::vector<std::string> items; // order preserved from the source file
};

struct ItemRecord {
    std::string id;
    std::string category;
};

/// Raw dataset keyed by external string IDs.
struct Dataset {
    std::vector<std::pair<std::string, std::string>> interactions; // (user, outfit)
    std::vector<OutfitRecord> outfits;
    std::vector<ItemRecord> items;
    std::size_t feature_dim = 0;
    std::vector<double> features; // items.size() x feature_dim, aligned with `items`
    /// Outfits withheld from training, used as the fill-in-the-blank pool.
    std::vector<OutfitRecord> heldout_outfits;
    std::map<std::string, std::string> provenance;

    std::size_t user_count() const;
};

/// Checks referential integrity; throws DataError naming the first problem.
void validate_dataset(const Dataset& ds);

// ---- file formats ----
//
// interactions.tsv   user_id \t outfit_id
// outfits.tsv        outfit_id \t item_id,item_id,...
// items.tsv          item_id \t category_id
// features.bin       "HFGNFEAT" | u64 item_count | u64 feature_dim |
//                    per item: u32 id_len, id bytes, feature_dim f64 (LE)
// heldout.tsv        optional, same layout as outfits.tsv
// provenance.txt     optional, key=value lines

struct DatasetPaths {
    std::filesystem::path interactions;
    std::filesystem::path outfits;
    std::filesystem::path items;
    std::filesystem::path features;
    std::filesystem::path heldout;    // may not exist
    std::filesystem::path provenance; // may not exist

    static DatasetPaths in_dir(const std::filesystem::path& dir);
};

Dataset load_dataset(const DatasetPaths& paths);
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);

std::vector<std::pair<std::string, std::string>> read_interactions(const std::filesystem::path& path);
void write_interactions(const std::vector<std::pair<std::string, std::string>>& rows,
                        const std::filesystem::path& path);

// ---- filtering and splitting ----

/// Removes users with fewer than min_user interactions and outfits with
/// fewer than min_outfit interactions until neither rule fires, then drops
/// outfits without interactions and items no remaining outfit uses.
Dataset kcore_filter(const Dataset& ds, std::size_t min_user, std::size_t min_outfit);

struct SplitSpec {
    double train_fraction = 0.8;
    double val_fraction = 0.1; // fraction of each user's training share
    std::uint64_t seed = 2020;
};

struct Interaction {
    std::size_t user;
    std::size_t outfit;
    friend bool operator==(const Interaction&, const Interaction&) = default;
    friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

struct Split {
    std::vector<Interaction> train; // excludes validation rows
    std::vector<Interaction> val;
    std::vector<Interaction> test;
};

/// Per-user random split. `interactions` may be in any order; each user's
/// test share is floor((1 - train_fraction) * n) and validation is
/// floor(val_fraction * n_train), always leaving at least one training row.
Split split_interactions(const std::vector<Interaction>& interactions, std::size_t user_count,
                         const SplitSpec& spec);

// ---- synthetic data ----

struct SyntheticSpec {
    std::size_t users = 200;
    std::size_t outfits = 300;
    std::size_t items = 500;
    std::size_t categories = 8;
    std::size_t style_dim = 8;
    std::size_t min_outfit_len = 3;
    std::size_t max_outfit_len = 5;
    std::size_t interactions_per_user = 20;
    std::size_t heldout_outfits = 500;
    /// Outfit items are drawn among the `style_pool` closest items of each category
    /// that are positively aligned with the items already chosen.
    std::size_t style_pool = 4;
    double noise = 0.1;
    std::uint64_t seed = 7;
};

/// Planted-structure generator: items carry unit style vectors, outfits pick
/// one item per category near a per-outfit style center, item features are
/// style plus gaussian noise, and users click the outfits whose centers best
/// match a private preference vector.
Dataset generate_synthetic(const SyntheticSpec& spec);

} // namespace hfgn

#pragma once

#include "hfgn/model.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hfgn {

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- Top-K ranking ----

/// Candidates ordered by <user, outfit> descending; ties go to the lower outfit index.
std::vector<std::size_t> rank_candidates(std::span<const double> user, const nk::Tensor& outfits,
                                         std::span<const std::size_t> candidates);

/// Same ordering as rank_candidates applied to precomputed scores indexed by outfit.
std::vector<std::size_t> rank_by_scores(std::span<const double> scores, std::span<const std::size_t> candidates,
                                        std::size_t limit);

int hit_rate(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant, std::size_t k);

struct RecallPrecision {
    double recall;
    double precision;
};

RecallPrecision recall_precision(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant,
                                 std::size_t k);

/// Binary-relevance NDCG with the ideal DCG truncated at min(|relevant|, k).
double ndcg(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant, std::size_t k);

struct UserMetrics {
    std::size_t user;
    std::size_t relevant;
    double hr, ndcg, recall, precision;
};

struct MetricsReport {
    std::size_t k = 10;
    std::size_t users = 0;
    double hr = 0.0;
    double ndcg = 0.0;
    double recall = 0.0;
    double precision = 0.0;
    std::vector<UserMetrics> per_user;

    std::string table() const;
    /// `metric value` lines with six decimals.
    std::string key_values() const;
};

/// Ranks, for each user with a non-empty `relevant` list, every outfit not in
/// `exclude[user]` and averages the four metrics over those users.
MetricsReport evaluate_topk(const nk::Tensor& users, const nk::Tensor& outfits,
                            std::span<const std::vector<std::size_t>> exclude,
                            std::span<const std::vector<std::size_t>> relevant, std::size_t k);

enum class SplitPart { validation, test };

/// Validation ranks against everything except training rows; test ranks
/// against everything except training and validation rows.
MetricsReport evaluate_split(const Model& model, const ModelContext& ctx, const Split& split, SplitPart part,
                             std::size_t k);

// ---- Fill in the blank ----

struct FitbQuery {
    std::size_t source = 0;                // index into the test outfit list
    std::size_t masked_position = 0;
    std::size_t answer = 0;                // item index of the ground truth
    std::array<std::size_t, 3> distractors{};
    std::array<std::size_t, 4> candidates{}; // presentation order
    std::uint64_t seed = 0;
};

struct FitbOptions {
    std::size_t count = 0;          // 0 means one query per test outfit
    bool category_matched = false;  // draw distractors from the answer's category
    std::uint64_t seed = 0;
};

std::vector<FitbQuery> build_fitb_queries(std::span<const std::vector<std::size_t>> test_outfits,
                                          std::span<const std::size_t> item_category, const FitbOptions& options);

/// The outfit of `query` with the blank filled by `item`.
std::vector<std::size_t> complete_outfit(std::span<const std::vector<std::size_t>> test_outfits,
                                         const FitbQuery& query, std::size_t item);

using CompositionScorer = std::function<std::vector<double>(std::span<const std::vector<std::size_t>>)>;

/// Fraction of queries whose highest-scoring completion is the ground truth;
/// ties go to the lowest item index.
double fitb_accuracy(const CompositionScorer& scorer, std::span<const std::vector<std::size_t>> test_outfits,
                     std::span<const FitbQuery> queries);

double fitb_accuracy(const Model& model, const ModelContext& ctx,
                     std::span<const std::vector<std::size_t>> test_outfits, std::span<const FitbQuery> queries);

/// Tab-separated: outfit_id, masked_position, answer_id, d1,d2,d3, seed.
void write_fitb_queries(const std::filesystem::path& path, std::span<const FitbQuery> queries,
                        std::span<const std::string> outfit_ids, std::span<const std::string> item_ids);

std::vector<FitbQuery> read_fitb_queries(const std::filesystem::path& path,
                                         std::span<const std::vector<std::size_t>> test_outfits,
                                         std::span<const std::string> outfit_ids, const EntityIndex& index);

} // namespace hfgn

#pragma once

#include "hfgn/graph.hpp"
#include "hfgn/numkernel.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hfgn {

struct ModelConfig {
    std::size_t d = 64;               // embedding size
    std::size_t feature_dim = 0;      // item feature length
    std::size_t views = 4;            // R, attention views
    std::size_t attention_hidden = 32; // v
    std::size_t encoder_hidden = 128;
    double leaky_slope = 0.2;
    bool enable_item_prop = true;      // item <-> item messages
    bool enable_item_to_outfit = true; // item -> outfit messages
    bool enable_outfit_to_user = true; // outfit -> user messages
    std::uint64_t init_seed = 2020;

    void validate() const;
};

/// Two-layer MLP f_c: d <- W2 · leaky(W1 · x + b1) + b2, one per category.
struct CategoryEncoder {
    nk::Parameter w1; // encoder_hidden x feature_dim
    nk::Parameter b1; // 1 x encoder_hidden
    nk::Parameter w2; // d x encoder_hidden
    nk::Parameter b2; // 1 x d
};

struct ModelParams {
    std::size_t user_count = 0;
    std::size_t outfit_count = 0;
    std::size_t item_count = 0;
    /// Rows [0, N_U) are users, then N_O outfits, then N_I items. Item rows
    /// are kept for layout only; item embeddings come from the encoders.
    nk::Parameter embedding;
    std::vector<CategoryEncoder> encoders;
    nk::Parameter w1, w2, w3; // d x d propagation transforms
    nk::Parameter w4, w6;     // R x v
    nk::Parameter w5, w7;     // v x d

    std::size_t user_row(std::size_t u) const { return u; }
    std::size_t outfit_row(std::size_t o) const { return user_count + o; }
    std::size_t item_row(std::size_t i) const { return user_count + outfit_count + i; }

    std::vector<nk::Parameter*> all();
    std::vector<const nk::Parameter*> all() const;
};

struct Model {
    ModelConfig config;
    ModelParams params;
};

/// Xavier-uniform weights and embeddings, zero encoder biases; deterministic in config.init_seed.
ModelParams init_params(const ModelConfig& config, std::size_t users, std::size_t outfits, std::size_t items,
                        std::size_t categories);

/// Everything the forward pass reads besides parameters.
struct ModelContext {
    HierarchicalGraph graph; // user histories are the training interactions
    CategoryGraph categories;
    nk::Tensor features;     // item_count x feature_dim
};

ModelContext make_context(const IndexedData& data, std::span<const Interaction> train);

/// Outfit compositions laid out as stacked item rows ("context rows"), with
/// the within-outfit message edges expressed in row indices.
struct OutfitBatch {
    std::vector<std::size_t> items;   // item index of each context row
    std::vector<std::size_t> offsets; // outfit k owns rows [offsets[k], offsets[k+1])
    std::vector<std::size_t> edge_dst;
    std::vector<std::size_t> edge_src;
    std::vector<double> edge_weight;

    std::size_t outfit_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
    std::size_t row_count() const { return items.size(); }
};

OutfitBatch make_outfit_batch(std::span<const std::vector<std::size_t>> compositions,
                              std::span<const std::size_t> item_category, const CategoryGraph& categories);

// ---- building blocks ----

/// Initial item embeddings e_i = f_c(x_i), one row per entry of `items`.
nk::Var encode_items(nk::Tape& tape, const Model& model, const nk::Tensor& features,
                     std::span<const std::size_t> item_category, std::span<const std::size_t> items);

/// Single-item form of encode_items; returns a 1 x d row.
nk::Var encode_item(nk::Tape& tape, const Model& model, std::span<const double> features, std::size_t category);

/// i* = i + sum_{i'} w(i,i') · leaky(W1 (i ⊙ i')) over each outfit's edges.
nk::Var propagate_items(nk::Tape& tape, const Model& model, const OutfitBatch& batch, nk::Var rows);

/// o* = o + (1/|N_o|) sum_i leaky(W2 i*). `outfit_ids` has one row per batch outfit.
nk::Var propagate_outfits(nk::Tape& tape, const Model& model, const OutfitBatch& batch, nk::Var refined_rows,
                          nk::Var outfit_ids);

/// u* = u + (1/|N_u|) sum_o leaky(W3 o*). `histories[k]` lists rows of
/// `refined_outfits` for user row k; an empty history leaves u* = u.
nk::Var propagate_users(nk::Tape& tape, const Model& model, nk::Var user_ids, nk::Var refined_outfits,
                        std::span<const std::vector<std::size_t>> histories);

/// Row-wise inner product <u*, o*>, giving an m x 1 column.
nk::Var score_recommendation(nk::Var users, nk::Var outfits);

/// Attention of every context row in each of the R views (rows x R); within
/// an outfit each column is a softmax over its items, so it is Aᵀ stacked.
nk::Var attention_weights(nk::Tape& tape, const Model& model, const OutfitBatch& batch, nk::Var refined_rows);

/// Context rows encoded and refined by item propagation, batch row order.
nk::Var refined_context(nk::Tape& tape, const Model& model, const ModelContext& ctx, const OutfitBatch& batch);

/// R-view attention and score maps per outfit, summed to one score per outfit (K x 1).
nk::Var compatibility_scores(nk::Tape& tape, const Model& model, const OutfitBatch& batch, nk::Var refined_rows);

/// Matrix form for a single outfit: A = softmax_rows(W4 leaky(W5 Iᵀ)),
/// C = leaky(W6 leaky(W7 Iᵀ)), s = sum_r <a_r, c_r>. `items` is n x d.
nk::Var compatibility_score(nk::Tape& tape, const Model& model, nk::Var items);

// ---- assembled passes ----

/// Refined user and outfit representations on one tape. Each outfit's i* and
/// o* is computed once and shared by every user that references it.
struct RecRepresentations {
    std::vector<std::size_t> user_ids;   // sorted unique
    std::vector<std::size_t> outfit_ids; // sorted unique
    nk::Var users;                       // rows follow user_ids
    nk::Var outfits;                     // rows follow outfit_ids

    std::size_t user_row(std::size_t u) const;
    std::size_t outfit_row(std::size_t o) const;
};

RecRepresentations represent(nk::Tape& tape, const Model& model, const ModelContext& ctx,
                             std::span<const std::size_t> users, std::span<const std::size_t> outfits);

/// Compatibility scores (K x 1) for arbitrary compositions, recomputing i*
/// inside each composition.
nk::Var compat_forward(nk::Tape& tape, const Model& model, const ModelContext& ctx,
                       std::span<const std::vector<std::size_t>> compositions);

struct ForwardOutputs {
    nk::Tensor user_refined;   // N_U x d
    nk::Tensor outfit_refined; // N_O x d
    nk::Tensor item_refined;   // context rows of all outfits, see item_offsets
    std::vector<std::size_t> item_offsets;
};

/// Full read-only pass over every user and outfit.
ForwardOutputs infer(const Model& model, const ModelContext& ctx);

std::vector<double> compat_scores(const Model& model, const ModelContext& ctx,
                                  std::span<const std::vector<std::size_t>> compositions);

} // namespace hfgn

#pragma once

#include "hfgn/model.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hfgn {

struct TrainConfig {
    double lr_rec = 1e-3;
    double lr_com = 5e-4;
    double reg_lambda = 1e-4;
    std::size_t batch_rec = 256;
    std::size_t batch_com = 256;
    std::size_t epochs = 30;
    std::uint64_t rng_seed = 2020;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    bool neg_resample_per_epoch = true;
    std::size_t eval_k = 10;

    void validate() const;
};

struct RecTriple {
    std::size_t user;
    std::size_t pos;
    std::size_t neg;
};

struct CompatPair {
    std::size_t outfit;                 // index of the observed composition
    std::vector<std::size_t> negative;  // the corrupted composition
    std::size_t replaced_position;
};

/// One triple per training positive, ordered by user then positive outfit.
/// Negatives are drawn uniformly and rejected while observed; users who have
/// seen every outfit are skipped with a warning.
std::vector<RecTriple> sample_rec_triples(const HierarchicalGraph& graph, std::mt19937_64& rng);

/// One negative per outfit: a uniformly chosen position gets a uniformly
/// chosen item of the same category that is not already in the outfit.
/// Positions whose category offers no replacement are redrawn; a result equal
/// to an observed composition is re-rolled. Outfits with no valid corruption
/// are skipped.
std::vector<CompatPair> sample_compat_pairs(std::span<const std::vector<std::size_t>> outfits,
                                            std::span<const std::size_t> item_category, std::mt19937_64& rng);

/// -sum log sigmoid(pos - neg) over matching rows of two m x 1 columns.
nk::Var bpr_sum(nk::Var pos, nk::Var neg);

struct LossTerms {
    nk::Var total; // bpr + reg
    double bpr = 0.0;
    double reg = 0.0;
};

LossTerms bpr_loss_rec(nk::Tape& tape, const Model& model, const ModelContext& ctx,
                       std::span<const RecTriple> batch, double reg_lambda);

LossTerms bpr_loss_compat(nk::Tape& tape, const Model& model, const ModelContext& ctx,
                          std::span<const CompatPair> batch, double reg_lambda);

struct AdamState {
    std::vector<nk::Tensor> m;
    std::vector<nk::Tensor> v;
    std::uint64_t t = 0;
};

AdamState make_adam_state(std::span<const nk::Parameter* const> params);

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam. Throws NonFiniteError before touching anything if a
/// gradient holds NaN or infinity.
void adam_step(std::span<nk::Parameter* const> params, std::span<const nk::Tensor> grads, AdamState& state,
               const AdamHyper& hyper);

struct EpochRecord {
    std::size_t epoch = 0;
    double loss_rec = 0.0; // mean BPR per triple
    double loss_com = 0.0; // mean BPR per pair
    double val_hr = 0.0;
    double val_ndcg = 0.0;
    double seconds = 0.0;

    /// Tab-separated history line.
    std::string line() const;
};

struct TrainResult {
    Model model;               // best-validation parameters
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0; // 0 means the initial parameters
    bool diverged = false;
    std::string diagnostic;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Joint training. `ctx.graph` must hold the training histories of `split`.
/// Each epoch runs every recommendation and compatibility batch, interleaved
/// in proportion to their counts, then scores the validation split.
TrainResult train(const ModelContext& ctx, const Split& split, const ModelConfig& model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Same, continuing from existing parameters.
TrainResult train(const ModelContext& ctx, const Split& split, Model initial, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

} // namespace hfgn

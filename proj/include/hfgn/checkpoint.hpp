#pragma once

#include "hfgn/dataset.hpp"
#include "hfgn/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hfgn {

inline constexpr int checkpoint_format_version = 1;

/// Bad magic, version, shape or truncation. A DataError, so the CLI exits 2.
class CheckpointError : public DataError {
public:
    using DataError::DataError;
};

struct CheckpointHeader {
    int format_version = checkpoint_format_version;
    ModelConfig config;
    std::size_t users = 0;
    std::size_t outfits = 0;
    std::size_t items = 0;
    std::size_t categories = 0;
    std::size_t epoch = 0;
    std::uint64_t seed = 0;
};

struct Checkpoint {
    CheckpointHeader header;
    std::vector<nk::Parameter> arrays; // in ModelParams::all() order
};

// Layout: a text header of key=value lines opened by "HFGN-CHECKPOINT" and
// closed by "end", then per array a length-prefixed name, u64 rows, u64 cols
// and rows*cols little-endian doubles.

void save_checkpoint(const Model& model, std::size_t epoch, std::uint64_t seed, const std::filesystem::path& path);

/// Parses the file without checking it against any configuration.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Loads parameters, checking every array's name and shape against `config`
/// and the entity counts in the header.
ModelParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& config);

/// Loads parameters under the configuration stored in the file.
Model load_model(const std::filesystem::path& path);

std::string describe_checkpoint(const Checkpoint& ckpt);

} // namespace hfgn

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "eslr/config.hpp"
#include "eslr/params.hpp"

namespace eslr {

struct Checkpoint {
    RunConfig config;
    std::size_t iteration = 0;
    std::uint64_t seed = 0;
    ModelParams params;
};

/// "ESLR-CKPT1\n", u64 header length, JSON header (config echo, iteration,
/// seed), u64 block count, then per block: u64 name length, name, u64 rank,
/// u64 dims, f64 data. All little-endian.
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Throws ValidationError for a missing, truncated or mismatched file.
Checkpoint read_checkpoint(const std::string& path);

}  // namespace eslr

#pragma once

#include <filesystem>
#include <iosfwd>

#include "sitrec/model.hpp"
#include "sitrec/train.hpp"

namespace sitrec::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

// Everything needed to recommend without retraining: parameters, the
// configuration that produced them, the replay state at the end of the
// training window and that window's end.
struct Checkpoint {
  model::ModelParams params;
  train::TrainConfig config;
  train::ReplayState state;
  corpus::Timestamp train_end = 0.0;

  bool operator==(const Checkpoint&) const = default;
};

// Little-endian binary container; doubles are stored as raw IEEE-754 bits so
// a round trip is exact.
void write(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read(std::istream& in);

void save(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws ParseError on a bad magic, unknown version or truncated file.
Checkpoint load(const std::filesystem::path& path);

}  // namespace sitrec::checkpoint

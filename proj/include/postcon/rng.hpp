#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace postcon {

using Engine = std::mt19937_64;

/// A reproducible random stream addressed by (master seed, hierarchical path).
///
/// Paths look like "equipartition/n=1000/rep=3". Identical (seed, path) pairs
/// always produce identical engines; distinct paths hash to unrelated seeds.
class RngStream {
 public:
  explicit RngStream(std::uint64_t master_seed, std::string path = {});

  RngStream child(std::string_view name) const;
  RngStream child(std::string_view name, std::uint64_t index) const;

  /// A freshly seeded engine positioned at the start of this stream.
  Engine engine() const;

  std::uint64_t master_seed() const { return master_seed_; }
  const std::string& path() const { return path_; }

 private:
  std::uint64_t master_seed_;
  std::string path_;
};

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace postcon

#include "postcon/rng.hpp"

#include <array>

namespace postcon {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t master_seed, std::string path)
    : master_seed_(master_seed), path_(std::move(path)) {}

RngStream RngStream::child(std::string_view name) const {
  std::string p = path_;
  if (!p.empty()) p += '/';
  p += name;
  return RngStream(master_seed_, std::move(p));
}

RngStream RngStream::child(std::string_view name, std::uint64_t index) const {
  std::string leaf(name);
  leaf += '=';
  leaf += std::to_string(index);
  return child(leaf);
}

Engine RngStream::engine() const {
  std::uint64_t state = master_seed_ ^ fnv1a64(path_);
  std::array<std::uint32_t, 8> words{};
  for (std::size_t i = 0; i < words.size(); i += 2) {
    const std::uint64_t v = splitmix64(state);
    words[i] = static_cast<std::uint32_t>(v);
    words[i + 1] = static_cast<std::uint32_t>(v >> 32);
  }
  std::seed_seq seq(words.begin(), words.end());
  return Engine(seq);
}

}  // namespace postcon

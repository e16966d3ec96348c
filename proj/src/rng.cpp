#include "causalshift/rng.hpp"

namespace causalshift {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::uint64_t h, unsigned char byte) noexcept {
  return (h ^ byte) * kFnvPrime;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view key) noexcept {
  std::uint64_t h = kFnvOffset;
  for (char c : key) h = fnv1a(h, static_cast<unsigned char>(c));
  return splitmix64(splitmix64(master) ^ h);
}

std::uint64_t derive_seed(std::uint64_t master,
                          std::initializer_list<std::uint64_t> key) noexcept {
  std::uint64_t h = kFnvOffset;
  for (std::uint64_t part : key) {
    for (int b = 0; b < 8; ++b) h = fnv1a(h, static_cast<unsigned char>(part >> (8 * b)));
  }
  return splitmix64(splitmix64(master) ^ h);
}

}  // namespace causalshift

#include "atomflow/rng.hpp"

namespace atomflow {
namespace {

// splitmix64 finalizer
std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix(seed);
  for (std::uint64_t k : keys) h = splitmix(h ^ splitmix(k + 0x632be59bd9b4e019ULL));
  return h;
}

RngStream RngStream::derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  return RngStream(mix_seed(seed, keys));
}

double RngStream::uniform_open() {
  double u = uniform();
  while (u <= 0.0) u = uniform();
  return u;
}

}  // namespace atomflow

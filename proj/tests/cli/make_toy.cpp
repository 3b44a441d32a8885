// Writes a small periodic toy corpus as 8-bit PNGs for the CLI tests.
#include "gen.hpp"

#include "lemmse/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>

int main(int argc, char **argv) {
  if (argc != 6) {
    std::fprintf(stderr, "usage: make_toy DIR COUNT SIDE CHANNELS SEED\n");
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  const auto count = static_cast<std::size_t>(std::atoi(argv[2]));
  const lemmse::Index side = std::atoi(argv[3]);
  const lemmse::Index channels = std::atoi(argv[4]);
  lemmse::testing::Gen g(std::strtoull(argv[5], nullptr, 10));
  std::filesystem::create_directories(dir);
  const lemmse::Dataset d = g.toy_dataset(count, {channels, side, side});
  for (std::size_t k = 0; k < d.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%03zu.png", k);
    lemmse::write_png(dir / name, d[k]);
  }
  return 0;
}

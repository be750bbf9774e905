#include <cmath>

#include "tica/em.hpp"

namespace tica {

namespace {

void gen_configs(int q_prime, int m, SpaceKind kind, bool used_active,
                 std::vector<std::uint8_t>& prefix,
                 std::vector<std::vector<std::uint8_t>>& out) {
  if (static_cast<int>(prefix.size()) == q_prime) {
    out.push_back(prefix);
    return;
  }
  for (int val = 0; val < m; ++val) {
    const bool active = val == m - 1;
    if (active && used_active && kind == SpaceKind::subspace) continue;
    prefix.push_back(static_cast<std::uint8_t>(val));
    gen_configs(q_prime, m, kind, used_active || active, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

LatentSpace enumerate_space(int q_prime, int m, SpaceKind kind,
                            std::size_t cap) {
  if (q_prime < 1) throw DegenerateInput("enumerate_space: q_prime must be >= 1");
  if (m < 2) throw DegenerateInput("enumerate_space: m must be >= 2");

  const double count =
      kind == SpaceKind::full
          ? std::pow(static_cast<double>(m), q_prime)
          : static_cast<double>(q_prime + m - 1) *
                std::pow(static_cast<double>(m - 1), q_prime - 1);
  if (count > static_cast<double>(cap))
    throw SpaceTooLarge("enumerate_space: " + std::to_string(count) +
                        " configurations exceed cap " + std::to_string(cap));

  LatentSpace space;
  space.q_prime = q_prime;
  space.m = m;
  space.kind = kind;
  space.configs.reserve(static_cast<std::size_t>(count));
  std::vector<std::uint8_t> prefix;
  prefix.reserve(static_cast<std::size_t>(q_prime));
  gen_configs(q_prime, m, kind, false, prefix, space.configs);
  return space;
}

}  // namespace tica

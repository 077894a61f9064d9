// Two clients sending plain QPSK: the superposed points do not identify the
// message sum, which is why the constellations are learned instead.

#include <cstdio>
#include <map>
#include <set>
#include <utility>

int main() {
  const double qpsk[4][2] = {{1, 1}, {-1, 1}, {-1, -1}, {1, -1}};
  std::map<std::pair<double, double>, std::set<int>> sums_at;
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      const std::pair<double, double> y{qpsk[a][0] + qpsk[b][0], qpsk[a][1] + qpsk[b][1]};
      sums_at[y].insert(a + b);
    }
  }
  int ambiguous = 0;
  for (const auto& [point, sums] : sums_at) {
    std::printf("(%+g, %+g) ->", point.first, point.second);
    for (int s : sums) std::printf(" %d", s);
    if (sums.size() > 1) {
      std::printf("   ambiguous");
      ++ambiguous;
    }
    std::printf("\n");
  }
  std::printf("%zu received points, %d ambiguous, 7 possible sums\n", sums_at.size(), ambiguous);
  return 0;
}

#include "ridemarket/matching_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ridemarket {

double acceptance_probability(double C, double x) {
  if (C <= 0.0) return x >= 0.0 ? 1.0 : 0.0;
  return std::clamp(x / C, 0.0, 1.0);
}

double dispatch_pool_size(double C, double g, double x) {
  if (g == 0.0) return 0.0;
  if (C <= 0.0) return g;
  if (x <= 0.0) throw DomainError("dispatch pool undefined for zero threshold with positive dispatch");
  return C * g / x;
}

FluidSplit fluid_single_destination(double R, double M, double x, double C) {
  if (R <= 0.0) return {0.0, M};
  double q = acceptance_probability(C, x);
  if (q <= 0.0) return {0.0, 0.0};  // the whole pool is offered and declines
  double used = std::min(R / q, M);
  return {used * q, M - used};
}

FluidMatchOutcome fluid_match(const FluidMatchInputs& in) {
  const std::size_t n = in.requests.size();
  FluidMatchOutcome out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  double total_w = 0;
  for (double w : in.planned_dispatch) total_w += w;
  double pool = 0;
  if (total_w > 0) {
    for (std::size_t d = 0; d < n; ++d) {
      auto s = fluid_single_destination(in.requests[d], in.supply * in.planned_dispatch[d] / total_w,
                                        in.thresholds[d], in.C);
      out.dispatched[d] = s.dispatched;
      pool += s.undispatched;
    }
  } else {
    pool = in.supply;
  }
  for (std::size_t d = 0; d < n; ++d) {
    double rem = in.requests[d] - out.dispatched[d];
    if (rem <= 1e-15 * std::max(1.0, in.requests[d]) || pool <= 0) continue;
    auto s = fluid_single_destination(rem, pool, in.thresholds[d], in.C);
    out.dispatched[d] += s.dispatched;
    pool = s.undispatched;
  }
  double served = std::accumulate(out.dispatched.begin(), out.dispatched.end(), 0.0);
  double idle = std::max(in.supply - served, 0.0);
  for (std::size_t d = 0; d < n; ++d) out.relocated[d] = in.relocation[d] * idle;
  return out;
}

std::vector<long> largest_remainder(long total, const std::vector<double>& w) {
  std::vector<long> out(w.size(), 0);
  double sum = std::accumulate(w.begin(), w.end(), 0.0);
  if (sum <= 0 || total <= 0) return out;
  std::vector<double> frac(w.size());
  long given = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    double q = static_cast<double>(total) * w[i] / sum;
    out[i] = static_cast<long>(std::floor(q));
    frac[i] = q - static_cast<double>(out[i]);
    given += out[i];
  }
  std::vector<std::size_t> idx(w.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; given < total && k < idx.size(); ++k, ++given) ++out[idx[k]];
  return out;
}

namespace {

void shuffle(KeyedStream& rng, std::vector<std::size_t>& v) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

SingleDestinationResult sample_single_destination(KeyedStream& rng, long R, std::vector<std::size_t> roster,
                                                  std::size_t slot, const std::vector<MatchDriver>& drivers) {
  SingleDestinationResult res;
  shuffle(rng, roster);
  std::size_t i = 0;
  for (; i < roster.size() && res.accepted < R; ++i) {
    double u = rng.uniform();
    if (u < drivers[roster[i]].accept[slot]) {
      ++res.accepted;
      res.offered_accept.push_back(roster[i]);
    } else {
      res.offered_decline.push_back(roster[i]);
    }
  }
  res.remaining.assign(roster.begin() + static_cast<std::ptrdiff_t>(i), roster.end());
  return res;
}

MatchOutcome sample_match(KeyedStream& rng, const MatchInputs& in) {
  const std::size_t n = in.requests.size();
  const std::size_t M = in.drivers.size();
  MatchOutcome out;
  out.dispatched.assign(n, 0);
  out.relocated.assign(n, 0);
  out.assignments.resize(M);
  for (std::size_t i = 0; i < M; ++i) out.assignments[i] = {in.drivers[i].id, in.drivers[i].relocate, false, -1};

  auto record = [&](const SingleDestinationResult& res, std::size_t d) {
    out.dispatched[d] += res.accepted;
    for (auto i : res.offered_accept) out.assignments[i] = {in.drivers[i].id, d, true, static_cast<int>(d)};
    for (auto i : res.offered_decline) out.assignments[i].offered = static_cast<int>(d);
  };

  std::vector<std::size_t> roster(M);
  std::iota(roster.begin(), roster.end(), 0);
  std::vector<std::size_t> idle;
  double total_w = std::accumulate(in.pool_weights.begin(), in.pool_weights.end(), 0.0);
  if (total_w > 0 && M > 0) {
    auto sizes = largest_remainder(static_cast<long>(M), in.pool_weights);
    shuffle(rng, roster);
    std::size_t at = 0;
    for (std::size_t d = 0; d < n; ++d) {
      std::vector<std::size_t> block(roster.begin() + static_cast<std::ptrdiff_t>(at),
                                     roster.begin() + static_cast<std::ptrdiff_t>(at + sizes[d]));
      at += sizes[d];
      auto res = sample_single_destination(rng, in.requests[d], std::move(block), d, in.drivers);
      record(res, d);
      idle.insert(idle.end(), res.remaining.begin(), res.remaining.end());
    }
  } else {
    idle = roster;
  }
  for (std::size_t d = 0; d < n && !idle.empty(); ++d) {
    long rem = in.requests[d] - out.dispatched[d];
    if (rem <= 0) continue;
    auto res = sample_single_destination(rng, rem, std::move(idle), d, in.drivers);
    record(res, d);
    idle = std::move(res.remaining);
  }
  for (const auto& a : out.assignments)
    if (!a.dispatch) ++out.relocated[a.dest];
  return out;
}

namespace {

struct Branch {
  double p;
  unsigned accepted, remaining;
};

// every way a single-destination round can play out on the drivers in `mask`
void single_branches(const MatchInputs& in, long R, unsigned mask, std::size_t d, double p, unsigned acc, long G,
                     std::vector<Branch>& out) {
  int left = __builtin_popcount(mask);
  if (G == R || left == 0) {
    out.push_back({p, acc, mask});
    return;
  }
  for (std::size_t i = 0; i < in.drivers.size(); ++i) {
    if (!(mask >> i & 1u)) continue;
    double a = in.drivers[i].accept[d];
    unsigned rest = mask & ~(1u << i);
    double pick = p / left;
    if (a > 0) single_branches(in, R, rest, d, pick * a, acc | (1u << i), G + 1, out);
    if (a < 1) single_branches(in, R, rest, d, pick * (1 - a), acc, G, out);
  }
}

struct State {
  double p;
  std::vector<long> G;
  unsigned dispatched, idle;
};

}  // namespace

std::map<MatchCounts, double> enumerate_match_distribution(const MatchInputs& in) {
  const std::size_t M = in.drivers.size(), n = in.requests.size();
  long sumR = 0;
  for (long r : in.requests) sumR += r;
  if (M > 5 || sumR > 4) throw SizeLimit("enumeration limited to M <= 5 and total requests <= 4");

  std::vector<State> states;
  double total_w = std::accumulate(in.pool_weights.begin(), in.pool_weights.end(), 0.0);
  const unsigned all = (1u << M) - 1u;
  if (total_w > 0 && M > 0) {
    auto sizes = largest_remainder(static_cast<long>(M), in.pool_weights);
    std::vector<std::size_t> perm(M);
    std::iota(perm.begin(), perm.end(), 0);
    double nperm = 1;
    for (std::size_t i = 2; i <= M; ++i) nperm *= static_cast<double>(i);
    do {
      std::vector<State> cur{{1.0 / nperm, std::vector<long>(n, 0), 0u, 0u}};
      std::size_t at = 0;
      for (std::size_t d = 0; d < n; ++d) {
        unsigned block = 0;
        for (long k = 0; k < sizes[d]; ++k) block |= 1u << perm[at++];
        std::vector<Branch> br;
        single_branches(in, in.requests[d], block, d, 1.0, 0u, 0, br);
        std::vector<State> next;
        for (const auto& s : cur)
          for (const auto& b : br) {
            State t = s;
            t.p *= b.p;
            t.G[d] += __builtin_popcount(b.accepted);
            t.dispatched |= b.accepted;
            t.idle |= b.remaining;
            next.push_back(std::move(t));
          }
        cur = std::move(next);
      }
      states.insert(states.end(), cur.begin(), cur.end());
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    states.push_back({1.0, std::vector<long>(n, 0), 0u, all});
  }

  for (std::size_t d = 0; d < n; ++d) {
    std::vector<State> next;
    for (const auto& s : states) {
      long rem = in.requests[d] - s.G[d];
      if (rem <= 0 || s.idle == 0) {
        next.push_back(s);
        continue;
      }
      std::vector<Branch> br;
      single_branches(in, rem, s.idle, d, 1.0, 0u, 0, br);
      for (const auto& b : br) {
        State t = s;
        t.p *= b.p;
        t.G[d] += __builtin_popcount(b.accepted);
        t.dispatched |= b.accepted;
        t.idle = b.remaining;
        next.push_back(std::move(t));
      }
    }
    states = std::move(next);
  }

  std::map<MatchCounts, double> table;
  for (const auto& s : states) {
    std::vector<long> H(n, 0);
    for (std::size_t i = 0; i < M; ++i)
      if (!(s.dispatched >> i & 1u)) ++H[in.drivers[i].relocate];
    table[{s.G, H}] += s.p;
  }
  return table;
}

}  // namespace ridemarket

#include "ridemarket/two_level_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <tuple>

namespace ridemarket {
namespace {

enum Stage : std::uint64_t { kEntry = 1, kDemand, kDisutility, kRelocation, kMatch, kServe, kScenario, kTag };

long sample_count(SamplingFamily fam, double scaled_mean, KeyedStream& rng) {
  switch (fam) {
    case SamplingFamily::Binomial: return rng.binomial(std::llround(2.0 * scaled_mean), 0.5);
    case SamplingFamily::Poisson: return rng.poisson(scaled_mean);
    case SamplingFamily::Deterministic: return std::llround(scaled_mean);
  }
  return 0;
}

struct Driver {
  std::uint64_t id;
  LocationId loc;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

MarketState initial_state(const MarketInstance& inst) {
  NodeId root = inst.tree.root();
  return {root, inst.entries.at(root)};
}

std::shared_ptr<Mechanism> make_mechanism(const SimConfig& cfg) {
  if (cfg.mechanism == MechanismKind::Ssp) return std::make_shared<SspMechanism>(cfg.instance, cfg.solve);
  return std::make_shared<StaticMechanism>(cfg.instance, initial_state(*cfg.instance), cfg.solve);
}

Simulator::Simulator(SimConfig cfg) : cfg_(std::move(cfg)) {
  if (!cfg_.instance) throw DomainError("simulation needs an instance");
  if (cfg_.k < 1) throw DomainError("k must be >= 1");
  require_valid(*cfg_.instance);
  mech_ = make_mechanism(cfg_);
}

EpisodeTrace Simulator::run_episode(int episode) const {
  EpisodeTrace tr;
  tr.k = cfg_.k;
  tr.welfare = simulate(episode, {}, nullptr, &tr);
  return tr;
}

double Simulator::episode_welfare(int episode, const std::vector<TagSpec>& tags,
                                  std::vector<TagResult>* tagged) const {
  return simulate(episode, tags, tagged, nullptr);
}

double Simulator::simulate(int episode, const std::vector<TagSpec>& tags, std::vector<TagResult>* tagged,
                           EpisodeTrace* trace) const {
  const auto& inst = *cfg_.instance;
  const auto L = inst.num_locations(), R = inst.num_routes();
  const double k = static_cast<double>(cfg_.k);
  const auto seed = cfg_.seed;
  const auto ep = static_cast<std::uint64_t>(episode);
  const auto dem_fam = cfg_.demand_family.value_or(inst.demand_family);
  const auto ent_fam = cfg_.entry_family.value_or(inst.entry_family);
  const int H = cfg_.horizon > 0 ? std::min(cfg_.horizon, inst.tree.horizon()) : inst.tree.horizon();

  std::vector<Driver> drivers;
  std::uint64_t next_id = 0;
  std::vector<std::size_t> tag_index(tags.size(), static_cast<std::size_t>(-1));
  if (tagged) tagged->assign(tags.size(), TagResult{});
  double welfare = 0;

  NodeId node = inst.tree.root();
  for (int step = 0;; ++step) {
    const int t = inst.tree.node(node).t;
    const auto ut = static_cast<std::uint64_t>(t);
    PeriodRecord rec;
    rec.period = t;
    rec.node = node;
    rec.entries.assign(L, 0);
    for (LocationId l = 0; l < L; ++l) {
      KeyedStream rng(seed, {ep, kEntry, ut, l});
      long n = sample_count(ent_fam, k * inst.entries[node][l], rng);
      rec.entries[l] = n;
      for (long i = 0; i < n; ++i) drivers.push_back({next_id++, l});
    }
    std::vector<std::vector<std::size_t>> at(L);
    for (std::size_t i = 0; i < drivers.size(); ++i) at[drivers[i].loc].push_back(i);

    if (step == 0)
      for (std::size_t j = 0; j < tags.size(); ++j) {
        const auto& roster = at[tags[j].location];
        if (roster.empty()) continue;
        KeyedStream rng(seed, {ep, kTag, tags[j].location});
        tag_index[j] = roster[rng.below(roster.size())];
        if (tagged) (*tagged)[j].present = true;
      }

    MarketState state{node, std::vector<double>(L)};
    for (LocationId l = 0; l < L; ++l) state.supply[l] = static_cast<double>(at[l].size()) / k;
    auto ctx = mech_->context(state);
    FluidStrategy strat = cfg_.profile(inst, *ctx, state);
    const auto& P = ctx->prices;
    rec.prices = P;
    rec.state = state.supply;

    // riders: values per route, requesters are those valuing the trip at least P
    std::vector<std::vector<double>> requesters(R);
    rec.riders.assign(R, 0);
    rec.requests.assign(R, 0);
    for (RouteId r = 0; r < R; ++r) {
      const auto& d = inst.demand[node][r];
      if (d.mean <= 0 || !d.value || at[inst.routes[r].origin].empty()) continue;
      KeyedStream rng(seed, {ep, kDemand, ut, r});
      long n = sample_count(dem_fam, k * d.mean, rng);
      rec.riders[r] = n;
      for (long i = 0; i < n; ++i) {
        double v = d.value->sample(rng.uniform());
        if (v >= P[r]) requesters[r].push_back(v);
      }
      if (ctx->cap_requests) {
        auto cap = static_cast<std::size_t>(std::max(0LL, std::llround(k * ctx->planned_dispatch[r])));
        if (requesters[r].size() > cap) requesters[r].resize(cap);
      }
      rec.requests[r] = static_cast<long>(requesters[r].size());
    }

    rec.dispatched.assign(R, 0);
    rec.relocated.assign(R, 0);
    for (LocationId l = 0; l < L; ++l) {
      const auto& roster = at[l];
      if (roster.empty()) continue;
      const auto& slots = inst.outgoing(l);
      const std::size_t M = roster.size(), n = slots.size();

      std::vector<double> X(M, 0.0);
      if (inst.C > 0) {
        KeyedStream rng(seed, {ep, kDisutility, ut, l});
        for (auto& x : X) x = rng.uniform() * inst.C;
      }
      std::vector<double> e(n);
      for (std::size_t s = 0; s < n; ++s) e[s] = strat.e[slots[s]];
      auto counts = largest_remainder(static_cast<long>(M), e);
      std::vector<std::size_t> order(M);
      for (std::size_t i = 0; i < M; ++i) order[i] = i;
      {
        KeyedStream rng(seed, {ep, kRelocation, ut, l});
        for (std::size_t i = M; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      }
      MatchInputs in;
      in.drivers.resize(M);
      std::size_t pos = 0;
      for (std::size_t s = 0; s < n; ++s)
        for (long c = 0; c < counts[s]; ++c) in.drivers[order[pos++]].relocate = s;
      for (std::size_t i = 0; i < M; ++i) {
        auto& md = in.drivers[i];
        md.id = drivers[roster[i]].id;
        md.accept.resize(n);
        for (std::size_t s = 0; s < n; ++s) {
          double x = strat.x[slots[s]];
          md.accept[s] = (inst.C > 0 ? X[i] <= x : x >= 0) ? 1.0 : 0.0;
        }
      }
      if (step == 0)
        for (std::size_t j = 0; j < tags.size(); ++j) {
          if (tags[j].location != l || tag_index[j] == static_cast<std::size_t>(-1)) continue;
          std::size_t i = static_cast<std::size_t>(std::find(roster.begin(), roster.end(), tag_index[j]) - roster.begin());
          auto& md = in.drivers[i];
          if (tags[j].action.kind == TaggedAction::Flip) {
            for (auto& a : md.accept) a = 1.0 - a;
          } else if (tags[j].action.kind == TaggedAction::Relocate) {
            std::fill(md.accept.begin(), md.accept.end(), 0.0);
            md.relocate = tags[j].action.slot;
          }
          if (tagged) (*tagged)[j].X = X[i];
        }
      for (std::size_t s = 0; s < n; ++s) {
        in.requests.push_back(static_cast<long>(requesters[slots[s]].size()));
        in.pool_weights.push_back(ctx->planned_dispatch[slots[s]]);
      }
      KeyedStream mrng(seed, {ep, kMatch, ut, l});
      auto out = sample_match(mrng, in);

      // served riders are a uniform subset of the requesters
      std::vector<std::size_t> served_at(n, 0);
      for (std::size_t s = 0; s < n; ++s) {
        auto& vals = requesters[slots[s]];
        KeyedStream rng(seed, {ep, kServe, ut, slots[s]});
        for (long i = 0; i < out.dispatched[s] && static_cast<std::size_t>(i) < vals.size(); ++i)
          std::swap(vals[static_cast<std::size_t>(i)], vals[static_cast<std::size_t>(i) + rng.below(vals.size() - i)]);
        rec.dispatched[slots[s]] = out.dispatched[s];
        rec.relocated[slots[s]] = out.relocated[s];
        rec.rider_payments += P[slots[s]] * static_cast<double>(out.dispatched[s]);
      }
      for (std::size_t i = 0; i < M; ++i) {
        const auto& a = out.assignments[i];
        RouteId r = slots[a.dest];
        const auto& rt = inst.routes[r];
        TraceRow row;
        row.period = t;
        row.node = node;
        row.location = l;
        row.driver = a.id;
        row.origin = l;
        row.dest = rt.destination;
        row.dispatch = a.dispatch;
        row.price = a.dispatch ? P[r] : 0.0;
        row.X = a.dispatch ? X[i] : 0.0;
        row.reward = a.dispatch ? P[r] - X[i] - rt.cost : -rt.cost;
        row.rider_value = a.dispatch ? requesters[r][served_at[a.dest]++] : 0.0;
        row.welfare = row.reward + (a.dispatch ? row.rider_value - P[r] : 0.0);
        if (a.dispatch) rec.driver_receipts += row.reward + row.X + rt.cost;
        welfare += row.welfare;
        drivers[roster[i]].loc = rt.destination;
        if (tagged)
          for (std::size_t j = 0; j < tags.size(); ++j)
            if (tag_index[j] == roster[i]) {
              auto& tg = (*tagged)[j];
              tg.utility += row.reward;
              if (step == 0) {
                tg.offered = a.offered;
                tg.dispatched = a.dispatch;
                tg.slot = a.dest;
              }
            }
        if (trace) trace->rows.push_back(row);
      }
    }
    if (trace) trace->periods.push_back(std::move(rec));

    const auto& kids = inst.tree.node(node).children;
    if (t >= H || kids.empty()) break;
    KeyedStream rng(seed, {ep, kScenario, ut});
    double u = rng.uniform(), acc = 0;
    NodeId next = kids.back();
    for (NodeId c : kids) {
      acc += inst.tree.node(c).p;
      if (u < acc) {
        next = c;
        break;
      }
    }
    node = next;
  }
  return welfare;
}

EpisodeTrace run_episode(const SimConfig& cfg, int episode) { return Simulator(cfg).run_episode(episode); }

double normalized_welfare(const EpisodeTrace& trace) {
  double w = 0;
  for (const auto& r : trace.rows) w += r.welfare;
  return w / static_cast<double>(trace.k);
}

namespace {

struct Acc {
  long n = 0;
  double sum = 0, sq = 0;
  void add(double v) {
    ++n;
    sum += v;
    sq += v * v;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double se() const {
    if (n < 2) return 0.0;
    double m = mean();
    double var = std::max(0.0, (sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
    return std::sqrt(var / static_cast<double>(n));
  }
};

}  // namespace

Estimate mean_normalized_welfare(const SimConfig& cfg) {
  Simulator sim(cfg);
  Acc a;
  for (int ep = 0; ep < cfg.episodes; ++ep) a.add(sim.episode_welfare(ep, {}, nullptr) / static_cast<double>(cfg.k));
  return {a.mean(), a.se(), a.n};
}

Estimate estimate_utility_to_go(const SimConfig& cfg, LocationId location, TaggedAction action, int rollouts) {
  if (rollouts < 2) throw DomainError("need at least two rollouts");
  Simulator sim(cfg);
  Acc a;
  std::vector<TagResult> res;
  for (int ep = 0; ep < rollouts; ++ep) {
    sim.episode_welfare(ep, {{location, action}}, &res);
    if (res[0].present) a.add(res[0].utility);
  }
  return {a.mean(), a.se(), a.n};
}

AuditReport audit_incentives(const SimConfig& cfg, const AuditOptions& opt) {
  Simulator sim(cfg);
  const auto& inst = *cfg.instance;
  const auto L = inst.num_locations();
  const int buckets = inst.C > 0 ? std::max(1, opt.buckets) : 1;
  // (location, offered, bucket) -> deviation -> gaps
  std::map<std::tuple<LocationId, int, int>, std::map<std::string, Acc>> cells;
  std::vector<Acc> drivers_at(L);

  std::vector<TagSpec> follow;
  for (LocationId l = 0; l < L; ++l) follow.push_back({l, {}});
  std::vector<TagResult> base, dev;
  for (int ep = 0; ep < opt.episodes; ++ep) {
    sim.episode_welfare(ep, follow, &base);
    for (LocationId l = 0; l < L; ++l) {
      const auto& b = base[l];
      if (!b.present) {
        drivers_at[l].add(0);
        continue;
      }
      int bucket = inst.C > 0 ? std::min(buckets - 1, static_cast<int>(b.X / inst.C * buckets)) : 0;
      auto& cell = cells[{l, b.offered, bucket}];
      if (opt.flip && b.offered >= 0) {
        sim.episode_welfare(ep, {{l, {TaggedAction::Flip, 0}}}, &dev);
        cell["flip"].add(dev[0].utility - b.utility);
      }
      if (opt.relocations) {
        const auto& slots = inst.outgoing(l);
        for (std::size_t s = 0; s < slots.size(); ++s) {
          std::string name = "relocate:" + inst.locations[inst.routes[slots[s]].destination].name;
          if (!b.dispatched && b.slot == s) {
            cell[name].add(0.0);
            continue;
          }
          sim.episode_welfare(ep, {{l, {TaggedAction::Relocate, s}}}, &dev);
          cell[name].add(dev[0].utility - b.utility);
        }
      }
    }
  }
  // drivers present per location in period one, for the confidence flag
  {
    Simulator plain(cfg);
    for (int ep = 0; ep < std::min(opt.episodes, 50); ++ep) {
      auto tr = plain.run_episode(ep);
      if (tr.periods.empty()) continue;
      std::vector<long> count(L, 0);
      for (const auto& r : tr.rows)
        if (r.period == tr.periods.front().period) ++count[r.location];
      for (LocationId l = 0; l < L; ++l) drivers_at[l].add(static_cast<double>(count[l]));
    }
  }

  AuditReport rep;
  long total = 0, above = 0;
  std::vector<LocationAudit> locs(L);
  std::vector<bool> audited(L, false);
  for (LocationId l = 0; l < L; ++l) {
    locs[l].location = l;
    locs[l].mean_drivers = drivers_at[l].mean();
    locs[l].low_confidence = locs[l].mean_drivers < 10.0;
  }
  for (const auto& [key, devs] : cells) {
    auto [l, offered, bucket] = key;
    double best = -1e300, best_se = 0;
    long n = 0;
    for (const auto& [name, acc] : devs) {
      rep.cells.push_back({l, offered, bucket, name, acc.n, acc.mean(), acc.se()});
      n = std::max(n, acc.n);
      if (acc.mean() > best) {
        best = acc.mean();
        best_se = acc.se();
      }
    }
    if (devs.empty()) continue;
    total += n;
    if (best > opt.threshold) above += n;
    if (n < opt.min_cell) continue;
    if (!audited[l] || best > locs[l].eps_hat) {
      locs[l].eps_hat = best;
      locs[l].se = best_se;
    }
    audited[l] = true;
  }
  bool any = false;
  for (LocationId l = 0; l < L; ++l) {
    if (!audited[l]) continue;
    rep.locations.push_back(locs[l]);
    if (!any || locs[l].eps_hat > rep.eps_hat) {
      rep.eps_hat = locs[l].eps_hat;
      rep.se = locs[l].se;
    }
    any = true;
  }
  rep.fraction_above = total ? static_cast<double>(above) / static_cast<double>(total) : 0.0;
  return rep;
}

void write_trace_csv(std::ostream& os, const MarketInstance& inst, const EpisodeTrace& trace) {
  os << "period,node,location,driver_id,action_origin,action_dest,dispatch_flag,price,X,reward,welfare\n";
  for (const auto& r : trace.rows)
    os << r.period << ',' << inst.tree.node(r.node).id << ',' << inst.locations[r.location].name << ',' << r.driver
       << ',' << inst.locations[r.origin].name << ',' << inst.locations[r.dest].name << ',' << (r.dispatch ? 1 : 0)
       << ',' << fmt(r.price) << ',' << fmt(r.X) << ',' << fmt(r.reward) << ',' << fmt(r.welfare) << '\n';
}

void write_audit_csv(std::ostream& os, const MarketInstance& inst, const AuditReport& rep) {
  os << "location,offered_dest,bucket,deviation,n,mean_gap,se\n";
  for (const auto& c : rep.cells) {
    std::string offered = "none";
    if (c.offered >= 0) offered = inst.locations[inst.routes[inst.outgoing(c.location)[c.offered]].destination].name;
    os << inst.locations[c.location].name << ',' << offered << ',' << c.bucket << ',' << c.deviation << ',' << c.n
       << ',' << fmt(c.mean_gap) << ',' << fmt(c.se) << '\n';
  }
}

}  // namespace ridemarket

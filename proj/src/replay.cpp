#include "dual/replay.hpp"

#include <algorithm>

#include "dual/error.hpp"

namespace dual {

ReplayReport replay(const LogSource &source, const LogHeader &header, Agent &agent,
                    const ReplayConfig &config, Rng &rng) {
  if (config.update_every == 0) throw ConfigError("replay: update_every must be >= 1");
  const std::size_t period = config.period ? config.period : config.update_every;
  ReplayReport report;
  std::vector<Sample> data;
  LogEntry entry;

  while (report.entries < config.pretrain_first && source(entry)) {
    validate_entry(entry, header);
    data.push_back(displayed_sample(entry, header));
    ++report.entries;
  }
  if (!data.empty()) agent.learn(data, rng);

  std::size_t consumed = 0;
  std::size_t period_clicks = 0;
  std::size_t period_matched = 0;
  std::size_t period_entries = 0;
  const auto close_period = [&] {
    report.period_ctr.push_back(period_matched ? static_cast<double>(period_clicks) /
                                                     static_cast<double>(period_matched)
                                               : 0.0);
    report.period_matched.push_back(period_matched);
    period_clicks = period_matched = period_entries = 0;
  };
  while (source(entry)) {
    validate_entry(entry, header);
    ++report.entries;
    ++consumed;
    const auto candidates = log_candidates(entry, header);
    const RankingDecision decision = agent.decide(candidates, entry.context, rng);
    if (decision.winner == entry.displayed) {
      const auto slot = static_cast<std::size_t>(
          std::find(entry.candidates.begin(), entry.candidates.end(), entry.displayed) - entry.candidates.begin());
      ++report.matched;
      report.clicks += static_cast<std::size_t>(entry.click);
      report.welfare += entry.click * entry.bids[slot];
      report.ad_matches[entry.displayed] += 1;
      ++period_matched;
      period_clicks += static_cast<std::size_t>(entry.click);
      data.push_back(displayed_sample(entry, header));
    }
    if (++period_entries == period) close_period();
    if (consumed % config.update_every == 0) {
      agent.learn(data, rng);
      ++report.updates;
    }
  }
  if (period_entries > 0) close_period();
  return report;
}

ReplayReport replay(std::span<const LogEntry> log, const LogHeader &header, Agent &agent,
                    const ReplayConfig &config, Rng &rng) {
  std::size_t next = 0;
  const LogSource source = [&](LogEntry &out) {
    if (next >= log.size()) return false;
    out = log[next++];
    return true;
  };
  return replay(source, header, agent, config, rng);
}

}  // namespace dual

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "dual/log_format.hpp"
#include "dual/strategies.hpp"

namespace dual {

struct ReplayConfig {
  /// Refit after this many entries consumed (matched or not).
  std::size_t update_every = 800;
  /// Leading entries used only as pretraining data.
  std::size_t pretrain_first = 800;
  /// Consumed entries per CTR period; 0 means update_every.
  std::size_t period = 0;
};

struct ReplayReport {
  std::size_t entries = 0;
  std::size_t matched = 0;
  std::size_t clicks = 0;
  double welfare = 0;
  std::size_t updates = 0;
  std::vector<double> period_ctr;
  std::vector<std::size_t> period_matched;
  std::map<std::size_t, std::size_t> ad_matches;

  double ctr() const { return matched ? static_cast<double>(clicks) / static_cast<double>(matched) : 0.0; }
};

/// Pulls the next entry; false at end of log.
using LogSource = std::function<bool(LogEntry &)>;

/// Replays a uniformly logged stream against `agent`. An entry counts only
/// when the agent's choice equals the logged ad; skipped entries never
/// reach metrics or training data. Pretraining entries are not replayed.
ReplayReport replay(const LogSource &source, const LogHeader &header, Agent &agent,
                    const ReplayConfig &config, Rng &rng);
ReplayReport replay(std::span<const LogEntry> log, const LogHeader &header, Agent &agent,
                    const ReplayConfig &config, Rng &rng);

}  // namespace dual

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dual/mapping.hpp"
#include "dual/strategies.hpp"

// Line-delimited impression logs.
//
//   #dual-log 1 vocab=<v0,v1,...> ad_field=<f> spec=<hex> seed=<n>
//   <context>\t<candidates>\t<displayed>\t<click>
//
// <context> is ';'-separated "field:idx,idx,..." groups, <candidates> is
// ','-separated "id:bid". An ad's model features are the one-hot of its id
// in field `ad_field`.
namespace dual {

struct LogEntry {
  SparseFeature context;
  std::vector<std::size_t> candidates;
  std::vector<double> bids;
  std::size_t displayed = 0;
  int click = 0;

  bool operator==(const LogEntry &) const = default;
};

struct LogHeader {
  std::vector<std::size_t> vocab_sizes;
  std::size_t ad_field = 0;
  std::uint64_t spec_hash = 0;
  std::uint64_t seed = 0;
};

std::vector<AdCandidate> log_candidates(const LogEntry &entry, const LogHeader &header);
/// Model input for the displayed ad of `entry`.
Sample displayed_sample(const LogEntry &entry, const LogHeader &header);

/// Throws MalformedLogEntry when an entry contradicts its own invariants or
/// the header's vocabularies.
void validate_entry(const LogEntry &entry, const LogHeader &header);

void write_log_header(std::ostream &os, const LogHeader &header);
void write_log_entry(std::ostream &os, const LogEntry &entry);
LogEntry parse_log_entry(const std::string &line, const LogHeader &header);

/// Streams entries front to back.
class LogReader {
 public:
  explicit LogReader(std::istream &is);

  const LogHeader &header() const { return header_; }
  bool next(LogEntry &entry);
  std::size_t line_number() const { return line_; }

 private:
  std::istream &is_;
  LogHeader header_;
  std::size_t line_ = 1;
};

struct LoadedLog {
  LogHeader header;
  std::vector<LogEntry> entries;
};

LoadedLog read_log(std::istream &is);
LoadedLog read_log_file(const std::string &path);

/// Reader for the public click-log layout
///   <timestamp> <displayed> <click> |user <f> <f> ... |<article> |<article> ...
/// User features are 1-based indices into a 136-slot binary vector (field 0);
/// article ids are mapped to dense indices in order of first appearance
/// (field 1). All bids are 1.
LoadedLog read_r6b(std::istream &is);

inline constexpr std::size_t kR6bUserFeatures = 136;

}  // namespace dual

#include "dual/log_format.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "dual/error.hpp"
#include "dual/serialize.hpp"

namespace dual {

namespace {

constexpr const char *kLogMagic = "#dual-log";

std::size_t parse_index(std::string_view text) {
  const long long value = io::parse_int(text);
  if (value < 0) throw IoError("negative index '" + std::string(text) + "'");
  return static_cast<std::size_t>(value);
}

std::string_view value_of(std::string_view token, std::string_view key) {
  if (token.size() <= key.size() || token.substr(0, key.size()) != key || token[key.size()] != '=') {
    throw IoError("log header: expected '" + std::string(key) + "=...', got '" + std::string(token) + "'");
  }
  return token.substr(key.size() + 1);
}

}  // namespace

std::vector<AdCandidate> log_candidates(const LogEntry &entry, const LogHeader &header) {
  std::vector<AdCandidate> out;
  out.reserve(entry.candidates.size());
  for (std::size_t i = 0; i < entry.candidates.size(); ++i) {
    out.push_back({entry.candidates[i], SparseFeature::one_hot(header.ad_field, entry.candidates[i]),
                   entry.bids[i]});
  }
  return out;
}

Sample displayed_sample(const LogEntry &entry, const LogHeader &header) {
  return {concat(entry.context, SparseFeature::one_hot(header.ad_field, entry.displayed)), entry.click};
}

void validate_entry(const LogEntry &entry, const LogHeader &header) {
  if (entry.candidates.empty()) throw MalformedLogEntry("empty candidate set");
  if (entry.bids.size() != entry.candidates.size()) throw MalformedLogEntry("bid count differs from candidates");
  if (entry.click != 0 && entry.click != 1) throw MalformedLogEntry("click label must be 0 or 1");
  if (std::find(entry.candidates.begin(), entry.candidates.end(), entry.displayed) == entry.candidates.end()) {
    throw MalformedLogEntry("displayed ad " + std::to_string(entry.displayed) + " is not a candidate");
  }
  if (header.ad_field >= header.vocab_sizes.size()) throw MalformedLogEntry("ad field outside the vocabulary list");
  const std::size_t ad_vocab = header.vocab_sizes[header.ad_field];
  for (std::size_t i = 0; i < entry.candidates.size(); ++i) {
    if (entry.candidates[i] >= ad_vocab) {
      throw MalformedLogEntry("ad id " + std::to_string(entry.candidates[i]) + " outside vocabulary");
    }
    if (!(entry.bids[i] >= 0) || !std::isfinite(entry.bids[i])) throw MalformedLogEntry("bad bid");
  }
  for (const auto &group : entry.context.groups) {
    if (group.field >= header.vocab_sizes.size() || group.field == header.ad_field) {
      throw MalformedLogEntry("context uses field " + std::to_string(group.field));
    }
    for (std::size_t index : group.indices) {
      if (index >= header.vocab_sizes[group.field]) {
        throw MalformedLogEntry("context index " + std::to_string(index) + " outside vocabulary");
      }
    }
  }
}

void write_log_header(std::ostream &os, const LogHeader &header) {
  os << kLogMagic << " 1 vocab=";
  for (std::size_t i = 0; i < header.vocab_sizes.size(); ++i) {
    os << (i ? "," : "") << header.vocab_sizes[i];
  }
  os << " ad_field=" << header.ad_field << " spec=" << io::hex_u64(header.spec_hash)
     << " seed=" << header.seed << '\n';
}

void write_log_entry(std::ostream &os, const LogEntry &entry) {
  for (std::size_t g = 0; g < entry.context.groups.size(); ++g) {
    const auto &group = entry.context.groups[g];
    os << (g ? ";" : "") << group.field << ':';
    for (std::size_t i = 0; i < group.indices.size(); ++i) os << (i ? "," : "") << group.indices[i];
  }
  os << '\t';
  for (std::size_t i = 0; i < entry.candidates.size(); ++i) {
    os << (i ? "," : "") << entry.candidates[i] << ':' << io::format_double(entry.bids[i]);
  }
  os << '\t' << entry.displayed << '\t' << entry.click << '\n';
}

LogEntry parse_log_entry(const std::string &line, const LogHeader &header) {
  LogEntry entry;
  try {
    const auto columns = io::split(line, '\t');
    if (columns.size() != 4) throw MalformedLogEntry("expected 4 tab-separated columns");
    if (!columns[0].empty()) {
      for (auto group_text : io::split(columns[0], ';')) {
        const auto parts = io::split(group_text, ':');
        if (parts.size() != 2 || parts[1].empty()) throw MalformedLogEntry("bad context group");
        FeatureGroup group{parse_index(parts[0]), {}};
        for (auto index : io::split(parts[1], ',')) group.indices.push_back(parse_index(index));
        entry.context.groups.push_back(std::move(group));
      }
    }
    for (auto candidate : io::split(columns[1], ',')) {
      const auto parts = io::split(candidate, ':');
      if (parts.size() != 2) throw MalformedLogEntry("bad candidate '" + std::string(candidate) + "'");
      entry.candidates.push_back(parse_index(parts[0]));
      entry.bids.push_back(io::parse_double(parts[1]));
    }
    entry.displayed = parse_index(columns[2]);
    entry.click = static_cast<int>(io::parse_int(columns[3]));
  } catch (const MalformedLogEntry &) {
    throw;
  } catch (const Error &e) {
    throw MalformedLogEntry(e.what());
  }
  validate_entry(entry, header);
  return entry;
}

LogReader::LogReader(std::istream &is) : is_(is) {
  std::string line;
  if (!std::getline(is_, line)) throw IoError("log: missing header line");
  std::istringstream tokens(line);
  std::string magic, version, vocab, ad_field, spec, seed;
  tokens >> magic >> version >> vocab >> ad_field >> spec >> seed;
  if (magic != kLogMagic) throw IoError("log: not a dual log (header '" + line + "')");
  if (version != "1") throw IoError("log: unsupported version " + version);
  for (auto v : io::split(value_of(vocab, "vocab"), ',')) header_.vocab_sizes.push_back(parse_index(v));
  header_.ad_field = parse_index(value_of(ad_field, "ad_field"));
  header_.spec_hash = std::stoull(std::string(value_of(spec, "spec")), nullptr, 16);
  header_.seed = static_cast<std::uint64_t>(io::parse_int(value_of(seed, "seed")));
  if (header_.ad_field >= header_.vocab_sizes.size()) throw IoError("log: ad_field outside vocabulary list");
}

bool LogReader::next(LogEntry &entry) {
  std::string line;
  while (std::getline(is_, line)) {
    ++line_;
    if (line.empty()) continue;
    try {
      entry = parse_log_entry(line, header_);
    } catch (const MalformedLogEntry &e) {
      throw MalformedLogEntry("log line " + std::to_string(line_) + ": " + e.what());
    }
    return true;
  }
  return false;
}

LoadedLog read_log(std::istream &is) {
  LogReader reader(is);
  LoadedLog log{reader.header(), {}};
  LogEntry entry;
  while (reader.next(entry)) log.entries.push_back(entry);
  return log;
}

LoadedLog read_log_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open log '" + path + "'");
  return read_log(in);
}

LoadedLog read_r6b(std::istream &is) {
  struct Raw {
    std::vector<std::size_t> user;
    std::vector<std::string> articles;
    std::string displayed;
    int click = 0;
  };
  std::vector<Raw> raw;
  std::unordered_map<std::string, std::size_t> dense;
  std::vector<std::string> order;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fail = [&](const std::string &why) {
      return MalformedLogEntry("r6b line " + std::to_string(line_no) + ": " + why);
    };
    const auto segments = io::split(line, '|');
    if (segments.size() < 3) throw fail("expected '|user' and at least one article segment");
    std::istringstream head{std::string(segments[0])};
    std::string timestamp, displayed, click;
    if (!(head >> timestamp >> displayed >> click)) throw fail("expected timestamp, displayed id, click");
    Raw entry;
    entry.displayed = displayed;
    if (click != "0" && click != "1") throw fail("click must be 0 or 1");
    entry.click = click == "1" ? 1 : 0;
    std::istringstream user{std::string(segments[1])};
    std::string token;
    if (!(user >> token) || token != "user") throw fail("second segment must start with 'user'");
    while (user >> token) {
      try {
        const std::size_t f = parse_index(token);
        if (f < 1 || f > kR6bUserFeatures) throw fail("user feature " + token + " outside 1.." +
                                                      std::to_string(kR6bUserFeatures));
        entry.user.push_back(f - 1);
      } catch (const MalformedLogEntry &) {
        throw;
      } catch (const Error &e) {
        throw fail(e.what());
      }
    }
    for (std::size_t s = 2; s < segments.size(); ++s) {
      std::istringstream article{std::string(segments[s])};
      if (!(article >> token)) throw fail("empty article segment");
      entry.articles.push_back(token);
      if (dense.emplace(token, order.size()).second) order.push_back(token);
    }
    if (std::find(entry.articles.begin(), entry.articles.end(), entry.displayed) == entry.articles.end()) {
      throw fail("displayed article " + entry.displayed + " is not in the candidate list");
    }
    raw.push_back(std::move(entry));
  }

  LoadedLog log;
  log.header.vocab_sizes = {kR6bUserFeatures, std::max<std::size_t>(order.size(), 1)};
  log.header.ad_field = 1;
  for (const Raw &r : raw) {
    LogEntry entry;
    // A user with no active feature still needs a group for the field.
    if (!r.user.empty()) entry.context.groups.push_back({0, r.user});
    for (const auto &a : r.articles) {
      entry.candidates.push_back(dense.at(a));
      entry.bids.push_back(1.0);
    }
    entry.displayed = dense.at(r.displayed);
    entry.click = r.click;
    validate_entry(entry, log.header);
    log.entries.push_back(std::move(entry));
  }
  return log;
}

}  // namespace dual

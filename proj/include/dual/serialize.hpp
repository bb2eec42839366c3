#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "dual/numkit.hpp"

// Text serialization helpers. Reals in checkpoints are written as C99 hex
// floats so a write/read cycle is bit-exact; metric files use %.17g which
// also round-trips doubles exactly.
namespace dual::io {

std::string hex_double(double value);
std::string format_double(double value);
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

void expect_token(std::istream &is, std::string_view token);
std::string read_token(std::istream &is);

void write_scalar(std::ostream &os, std::string_view key, double value);
double read_scalar(std::istream &is, std::string_view key);

void write_count(std::ostream &os, std::string_view key, std::uint64_t value);
std::uint64_t read_count(std::istream &is, std::string_view key);

void write_matrix(std::ostream &os, std::string_view key, const Matrix &m);
Matrix read_matrix(std::istream &is, std::string_view key);

void write_vector(std::ostream &os, std::string_view key, const Vector &v);
Vector read_vector(std::istream &is, std::string_view key);

std::vector<std::string_view> split(std::string_view text, char sep);

/// 64-bit FNV-1a, used for spec fingerprints in file headers.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 1469598103934665603ULL);
std::string hex_u64(std::uint64_t value);

}  // namespace dual::io

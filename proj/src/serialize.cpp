#include "dual/serialize.hpp"

#include <cerrno>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>

#include "dual/error.hpp"

namespace dual::io {

std::string hex_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", value);
  return buf;
}

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

double parse_double(std::string_view text) {
  std::string owned(text);
  char *end = nullptr;
  errno = 0;
  const double value = std::strtod(owned.c_str(), &end);
  if (owned.empty() || end != owned.c_str() + owned.size() || errno == ERANGE) {
    throw IoError("cannot parse real from '" + owned + "'");
  }
  return value;
}

long long parse_int(std::string_view text) {
  std::string owned(text);
  char *end = nullptr;
  errno = 0;
  const long long value = std::strtoll(owned.c_str(), &end, 10);
  if (owned.empty() || end != owned.c_str() + owned.size() || errno == ERANGE) {
    throw IoError("cannot parse integer from '" + owned + "'");
  }
  return value;
}

std::string read_token(std::istream &is) {
  std::string token;
  if (!(is >> token)) {
    throw IoError("unexpected end of input");
  }
  return token;
}

void expect_token(std::istream &is, std::string_view token) {
  const std::string got = read_token(is);
  if (got != token) {
    throw IoError("expected '" + std::string(token) + "', found '" + got + "'");
  }
}

void write_scalar(std::ostream &os, std::string_view key, double value) {
  os << key << ' ' << hex_double(value) << '\n';
}

double read_scalar(std::istream &is, std::string_view key) {
  expect_token(is, key);
  return parse_double(read_token(is));
}

void write_count(std::ostream &os, std::string_view key, std::uint64_t value) {
  os << key << ' ' << value << '\n';
}

std::uint64_t read_count(std::istream &is, std::string_view key) {
  expect_token(is, key);
  const long long value = parse_int(read_token(is));
  if (value < 0) {
    throw IoError("negative count for '" + std::string(key) + "'");
  }
  return static_cast<std::uint64_t>(value);
}

void write_matrix(std::ostream &os, std::string_view key, const Matrix &m) {
  os << key << ' ' << m.rows() << ' ' << m.cols();
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      os << ' ' << hex_double(m(r, c));
    }
  }
  os << '\n';
}

Matrix read_matrix(std::istream &is, std::string_view key) {
  expect_token(is, key);
  const long long rows = parse_int(read_token(is));
  const long long cols = parse_int(read_token(is));
  if (rows < 0 || cols < 0) {
    throw IoError("negative matrix shape for '" + std::string(key) + "'");
  }
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      m(r, c) = parse_double(read_token(is));
    }
  }
  return m;
}

void write_vector(std::ostream &os, std::string_view key, const Vector &v) {
  os << key << ' ' << v.size();
  for (Index i = 0; i < v.size(); ++i) {
    os << ' ' << hex_double(v[i]);
  }
  os << '\n';
}

Vector read_vector(std::istream &is, std::string_view key) {
  expect_token(is, key);
  const long long n = parse_int(read_token(is));
  if (n < 0) {
    throw IoError("negative vector length for '" + std::string(key) + "'");
  }
  Vector v(n);
  for (Index i = 0; i < n; ++i) {
    v[i] = parse_double(read_token(is));
  }
  return v;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t seed) {
  std::uint64_t hash = seed;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string hex_u64(std::uint64_t value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, value);
  return buf;
}

}  // namespace dual::io

#include "activemon/textio.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "activemon/error.hpp"

namespace activemon::textio {

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_real(std::string_view token) {
  // strtod accepts the "inf"/"nan" spellings printf produces.
  std::string s(token);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw Error(ErrorCode::CorruptSnapshot, "bad real '" + s + "'");
  }
  return v;
}

std::int64_t parse_int(std::string_view token) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || p != token.data() + token.size()) {
    throw Error(ErrorCode::CorruptSnapshot, "bad integer '" + std::string(token) + "'");
  }
  return v;
}

std::uint64_t parse_uint(std::string_view token) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || p != token.data() + token.size()) {
    throw Error(ErrorCode::CorruptSnapshot, "bad unsigned integer '" + std::string(token) + "'");
  }
  return v;
}

void Writer::line(std::string_view key, std::string_view value) {
  out_ << key;
  if (!value.empty()) out_ << ' ' << value;
  out_ << '\n';
}

void Writer::integer(std::string_view key, std::int64_t v) { line(key, std::to_string(v)); }

void Writer::unsigned_integer(std::string_view key, std::uint64_t v) { line(key, std::to_string(v)); }

void Writer::real(std::string_view key, double v) { line(key, format_real(v)); }

void Writer::reals(std::string_view key, const std::vector<double>& v) {
  out_ << key << ' ' << v.size();
  for (double x : v) out_ << ' ' << format_real(x);
  out_ << '\n';
}

void Writer::vector(std::string_view key, const Eigen::VectorXd& v) {
  reals(key, std::vector<double>(v.data(), v.data() + v.size()));
}

void Writer::matrix(std::string_view key, const Eigen::MatrixXd& m) {
  out_ << "matrix " << key << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out_ << ' ';
      out_ << format_real(m(r, c));
    }
    out_ << '\n';
  }
}

std::string Reader::next_line() {
  if (has_pending_) {
    has_pending_ = false;
    return pending_;
  }
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (!line.empty()) return line;
  }
  fail("unexpected end of input");
}

std::string Reader::peek_key() {
  if (!has_pending_) {
    std::string line;
    bool found = false;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty()) {
        found = true;
        break;
      }
    }
    if (!found) return {};
    pending_ = line;
    has_pending_ = true;
  }
  const auto pos = pending_.find(' ');
  return pending_.substr(0, pos);
}

void Reader::fail(const std::string& what) const {
  throw Error(ErrorCode::CorruptSnapshot, "line " + std::to_string(line_no_) + ": " + what);
}

std::vector<std::string> Reader::expect(std::string_view key) {
  auto tokens = tokenize(next_line());
  if (tokens.empty() || tokens.front() != key) {
    fail("expected '" + std::string(key) + "', found '" + (tokens.empty() ? std::string() : tokens.front()) + "'");
  }
  tokens.erase(tokens.begin());
  return tokens;
}

std::string Reader::rest_of(std::string_view key) {
  const std::string line = next_line();
  if (line.compare(0, key.size(), key) != 0 || (line.size() > key.size() && line[key.size()] != ' ')) {
    fail("expected '" + std::string(key) + "'");
  }
  return line.size() > key.size() ? line.substr(key.size() + 1) : std::string();
}

std::int64_t Reader::integer(std::string_view key) {
  auto t = expect(key);
  if (t.size() != 1) fail("expected one integer after " + std::string(key));
  return parse_int(t[0]);
}

std::uint64_t Reader::unsigned_integer(std::string_view key) {
  auto t = expect(key);
  if (t.size() != 1) fail("expected one integer after " + std::string(key));
  return parse_uint(t[0]);
}

double Reader::real(std::string_view key) {
  auto t = expect(key);
  if (t.size() != 1) fail("expected one real after " + std::string(key));
  return parse_real(t[0]);
}

std::vector<double> Reader::reals(std::string_view key) {
  auto t = expect(key);
  if (t.empty()) fail("missing count after " + std::string(key));
  const std::uint64_t n = parse_uint(t[0]);
  if (t.size() != n + 1) fail("expected " + std::to_string(n) + " reals after " + std::string(key));
  std::vector<double> v(n);
  for (std::uint64_t i = 0; i < n; ++i) v[i] = parse_real(t[i + 1]);
  return v;
}

Eigen::VectorXd Reader::vector(std::string_view key) {
  const auto v = reals(key);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd Reader::matrix(std::string_view key) {
  auto head = expect("matrix");
  if (head.size() != 3 || head[0] != key) fail("expected matrix " + std::string(key));
  const auto rows = static_cast<Eigen::Index>(parse_uint(head[1]));
  const auto cols = static_cast<Eigen::Index>(parse_uint(head[2]));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    auto t = tokenize(next_line());
    if (static_cast<Eigen::Index>(t.size()) != cols) fail("matrix " + std::string(key) + " row has wrong width");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = parse_real(t[static_cast<std::size_t>(c)]);
  }
  return m;
}

}  // namespace activemon::textio

#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace activemon::textio {

// Line-oriented text container shared by network, monitor and session
// snapshots. Every line is `key value...`; reals use 17 significant digits so
// that doubles round-trip exactly. Matrices are `matrix <name> <rows> <cols>`
// followed by one line per row.

std::string format_real(double v);

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void line(std::string_view key, std::string_view value);
  void integer(std::string_view key, std::int64_t v);
  void unsigned_integer(std::string_view key, std::uint64_t v);
  void real(std::string_view key, double v);
  void reals(std::string_view key, const std::vector<double>& v);
  void vector(std::string_view key, const Eigen::VectorXd& v);
  void matrix(std::string_view key, const Eigen::MatrixXd& m);

 private:
  std::ostream& out_;
};

// Reads the format written by Writer. Any mismatch throws
// Error(CorruptSnapshot) with the line number.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Next line split into whitespace tokens; the first token must equal key.
  std::vector<std::string> expect(std::string_view key);
  std::string rest_of(std::string_view key);  // value after the key, verbatim
  std::int64_t integer(std::string_view key);
  std::uint64_t unsigned_integer(std::string_view key);
  double real(std::string_view key);
  std::vector<double> reals(std::string_view key);
  Eigen::VectorXd vector(std::string_view key);
  Eigen::MatrixXd matrix(std::string_view key);

  // Peeks the first token of the next non-empty line without consuming it.
  std::string peek_key();
  std::size_t line_number() const { return line_no_; }
  [[noreturn]] void fail(const std::string& what) const;

 private:
  std::string next_line();

  std::istream& in_;
  std::size_t line_no_ = 0;
  std::string pending_;
  bool has_pending_ = false;
};

double parse_real(std::string_view token);
std::int64_t parse_int(std::string_view token);
std::uint64_t parse_uint(std::string_view token);

}  // namespace activemon::textio

#include "wildlab/affine.hpp"

#include "wildlab/errors.hpp"

#include <cctype>
#include <sstream>

namespace wildlab {

namespace {

std::int64_t pow10(int e) {
  std::int64_t p = 1;
  for (int i = 0; i < e; ++i) p *= 10;
  return p;
}

}  // namespace

Rational parse_rational(const std::string& text) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  if (s.empty()) throw ConfigError("empty number");
  bool neg = false;
  std::size_t i = 0;
  if (s[0] == '+' || s[0] == '-') {
    neg = s[0] == '-';
    i = 1;
  }
  auto slash = s.find('/', i);
  Rational r;
  try {
    if (slash != std::string::npos) {
      r = Rational(std::stoll(s.substr(i, slash - i)), std::stoll(s.substr(slash + 1)));
    } else {
      auto dot = s.find('.', i);
      std::string whole = s.substr(i, dot == std::string::npos ? std::string::npos : dot - i);
      std::string frac = dot == std::string::npos ? "" : s.substr(dot + 1);
      if (frac.size() > 15) throw ConfigError("too many decimals in '" + text + "'");
      for (char c : whole + frac)
        if (!std::isdigit(static_cast<unsigned char>(c))) throw ConfigError("bad number '" + text + "'");
      if (whole.empty() && frac.empty()) throw ConfigError("bad number '" + text + "'");
      std::int64_t w = whole.empty() ? 0 : std::stoll(whole);
      std::int64_t f = frac.empty() ? 0 : std::stoll(frac);
      std::int64_t den = pow10(static_cast<int>(frac.size()));
      r = Rational(w * den + f, den);
    }
  } catch (const std::logic_error&) {
    throw ConfigError("bad number '" + text + "'");
  }
  return neg ? -r : r;
}

Affine Affine::parse(const std::string& text) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c)) && c != '*') s += c;
  if (s.empty()) throw ConfigError("empty affine expression");
  Affine out;
  std::size_t i = 0;
  while (i < s.size()) {
    bool neg = false;
    if (s[i] == '+' || s[i] == '-') {
      neg = s[i] == '-';
      ++i;
    }
    std::size_t j = i;
    while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.' || s[j] == '/')) ++j;
    Rational coef = j > i ? parse_rational(s.substr(i, j - i)) : Rational(1);
    std::size_t k = j;
    while (k < s.size() && std::isalpha(static_cast<unsigned char>(s[k]))) ++k;
    std::string sym = s.substr(j, k - j);
    if (j == i && sym.empty()) throw ConfigError("bad affine expression '" + text + "'");
    if (neg) coef = -coef;
    if (sym.empty())
      out.c0 += coef;
    else if (sym == "d")
      out.cd += coef;
    else if (sym == "k" || sym == "kappa")
      out.ck += coef;
    else
      throw ConfigError("unknown symbol '" + sym + "' in '" + text + "'");
    i = k;
  }
  return out;
}

double to_double(Rational r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

double Affine::eval(double d, double kappa) const {
  return to_double(c0) + to_double(cd) * d + to_double(ck) * kappa;
}

std::string rational_str(Rational r) {
  std::ostringstream os;
  os << r.numerator();
  if (r.denominator() != 1) os << '/' << r.denominator();
  return os.str();
}

std::string Affine::str() const {
  std::string out;
  auto term = [&](Rational c, const char* sym) {
    if (c == Rational(0)) return;
    Rational a = c < 0 ? -c : c;
    if (out.empty())
      out += c < 0 ? "-" : "";
    else
      out += c < 0 ? " - " : " + ";
    if (*sym == '\0' || a != Rational(1)) out += rational_str(a);
    if (*sym != '\0') out += (a != Rational(1) ? std::string(" ") : std::string()) + sym;
  };
  term(c0, "");
  term(cd, "d");
  term(ck, "k");
  return out.empty() ? "0" : out;
}

}  // namespace wildlab

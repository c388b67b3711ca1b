#pragma once

#include <boost/rational.hpp>

#include <cstdint>
#include <string>

namespace wildlab {

using Rational = boost::rational<std::int64_t>;

// Exact affine form c0 + cd*d + ck*kappa with rational coefficients.
struct Affine {
  Rational c0{0};
  Rational cd{0};
  Rational ck{0};

  Affine() = default;
  Affine(Rational c) : c0(c) {}
  Affine(std::int64_t c) : c0(c) {}
  Affine(Rational c, Rational d, Rational k) : c0(c), cd(d), ck(k) {}

  static Affine d() { return {0, 1, 0}; }
  static Affine kappa() { return {0, 0, 1}; }

  // Accepts forms like "3/2", "-0.25", "d-2", "1/2 - 1/4 d + k".
  static Affine parse(const std::string& text);

  double eval(double d, double kappa) const;
  bool is_constant() const { return cd == Rational(0) && ck == Rational(0); }
  std::string str() const;

  Affine operator-() const { return {-c0, -cd, -ck}; }
  Affine& operator+=(const Affine& o) {
    c0 += o.c0; cd += o.cd; ck += o.ck;
    return *this;
  }
  Affine& operator-=(const Affine& o) { return *this += -o; }
  Affine& operator*=(Rational s) {
    c0 *= s; cd *= s; ck *= s;
    return *this;
  }
  friend Affine operator+(Affine a, const Affine& b) { return a += b; }
  friend Affine operator-(Affine a, const Affine& b) { return a -= b; }
  friend Affine operator*(Affine a, Rational s) { return a *= s; }
  friend Affine operator*(Rational s, Affine a) { return a *= s; }
  friend bool operator==(const Affine& a, const Affine& b) {
    return a.c0 == b.c0 && a.cd == b.cd && a.ck == b.ck;
  }
  friend bool operator!=(const Affine& a, const Affine& b) { return !(a == b); }
};

std::string rational_str(Rational r);
Rational parse_rational(const std::string& text);
double to_double(Rational r);

}  // namespace wildlab

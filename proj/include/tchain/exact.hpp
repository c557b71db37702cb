#pragma once

#include <boost/rational.hpp>

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace tchain {

using Rational = boost::rational<long long>;

inline double to_double(const Rational& r)
{
    return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

// a + b*sqrt(d), a and b rational, d a fixed positive integer (d = 0 means purely rational).
struct Surd {
    Rational a{0}, b{0};
    long long d = 0;

    Surd() = default;
    Surd(Rational a_) : a(a_) {}
    Surd(long long a_) : a(a_) {}
    Surd(Rational a_, Rational b_, long long d_) : a(a_), b(b_), d(d_) {}

    double value() const { return to_double(a) + to_double(b) * std::sqrt(static_cast<double>(d)); }
    explicit operator double() const { return value(); }

    static long long common(const Surd& x, const Surd& y)
    {
        if (x.b == Rational(0)) return y.d;
        if (y.b == Rational(0)) return x.d;
        if (x.d != y.d) throw std::invalid_argument("surds with different radicands");
        return x.d;
    }

    friend Surd operator+(const Surd& x, const Surd& y) { return {x.a + y.a, x.b + y.b, common(x, y)}; }
    friend Surd operator-(const Surd& x, const Surd& y) { return {x.a - y.a, x.b - y.b, common(x, y)}; }
    friend Surd operator-(const Surd& x) { return {-x.a, -x.b, x.d}; }
    friend Surd operator*(const Surd& x, const Surd& y)
    {
        const long long d = common(x, y);
        return {x.a * y.a + x.b * y.b * Rational(d), x.a * y.b + x.b * y.a, d};
    }
    friend Surd operator/(const Surd& x, const Surd& y)
    {
        const long long d = common(x, y);
        const Rational den = y.a * y.a - y.b * y.b * Rational(d);
        if (den == Rational(0)) throw std::domain_error("division by zero surd");
        const Surd conj{y.a, -y.b, d};
        Surd n = x * conj;
        return {n.a / den, n.b / den, d};
    }
    friend bool operator==(const Surd& x, const Surd& y)
    {
        return x.a == y.a && x.b == y.b && (x.b == Rational(0) || x.d == y.d);
    }
    friend std::ostream& operator<<(std::ostream& os, const Surd& s)
    {
        return os << s.a << " + " << s.b << "*sqrt(" << s.d << ")";
    }
};

inline double to_double(const Surd& s) { return s.value(); }
inline double to_double(double x) { return x; }

} // namespace tchain

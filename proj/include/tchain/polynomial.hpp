#pragma once

#include "types.hpp"

#include <map>
#include <vector>

namespace tchain {

// Sparse polynomial in x, y, z.  Keys are exponent triples.
class Poly3 {
public:
    using Key = std::array<int, 3>;

    Poly3() = default;
    static Poly3 constant(double c)
    {
        Poly3 p;
        p.add_term({0, 0, 0}, c);
        return p;
    }
    static Poly3 monomial(int i, int j, int k, double c = 1.0)
    {
        Poly3 p;
        p.add_term({i, j, k}, c);
        return p;
    }

    void add_term(Key k, double c)
    {
        if (c == 0.0) return;
        auto& v = terms_[k];
        v += c;
        if (v == 0.0) terms_.erase(k);
    }

    const std::map<Key, double>& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }

    double operator()(const Vec3& p) const
    {
        double s = 0;
        for (const auto& [k, c] : terms_)
            s += c * ipow(p.x(), k[0]) * ipow(p.y(), k[1]) * ipow(p.z(), k[2]);
        return s;
    }

    Poly3 diff(int var) const
    {
        Poly3 out;
        for (const auto& [k, c] : terms_) {
            if (k[var] == 0) continue;
            Key nk = k;
            nk[var] -= 1;
            out.add_term(nk, c * k[var]);
        }
        return out;
    }

    Poly3 operator+(const Poly3& o) const
    {
        Poly3 out = *this;
        for (const auto& [k, c] : o.terms_) out.add_term(k, c);
        return out;
    }
    Poly3 operator-(const Poly3& o) const { return *this + o * -1.0; }
    Poly3 operator*(double s) const
    {
        Poly3 out;
        for (const auto& [k, c] : terms_) out.add_term(k, c * s);
        return out;
    }
    Poly3 operator*(const Poly3& o) const
    {
        Poly3 out;
        for (const auto& [a, ca] : terms_)
            for (const auto& [b, cb] : o.terms_)
                out.add_term({a[0] + b[0], a[1] + b[1], a[2] + b[2]}, ca * cb);
        return out;
    }
    bool operator==(const Poly3& o) const { return terms_ == o.terms_; }

private:
    static double ipow(double x, int n)
    {
        double r = 1;
        for (int i = 0; i < n; ++i) r *= x;
        return r;
    }
    std::map<Key, double> terms_;
};

using PolyVec = std::array<Poly3, 3>;

inline Vec3 eval(const PolyVec& v, const Vec3& p) { return {v[0](p), v[1](p), v[2](p)}; }

inline Vec3 gradient(const Poly3& f, const Vec3& p)
{
    return {f.diff(0)(p), f.diff(1)(p), f.diff(2)(p)};
}

// V . grad(f), exact.
inline Poly3 lie(const PolyVec& v, const Poly3& f)
{
    return v[0] * f.diff(0) + v[1] * f.diff(1) + v[2] * f.diff(2);
}

} // namespace tchain

#pragma once

// Scalar Gaussian primitives: density, distribution, quantile, truncated
// means on (possibly half-infinite) intervals, and bivariate rectangle
// probabilities. Everything downstream is built on these.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace coarsemom {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;
inline constexpr double kInvSqrt2 = 0.7071067811865475244008444;
inline constexpr double kSqrt2Pi = 2.5066282746310005024157653;

// Interval mass below this is treated as numerically empty.
inline constexpr double kDegenerateMass = 1e-300;

class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a shifted observation cell has no numerical probability mass.
// Carries enough context to point at the offending observation.
class degenerate_cell_error : public numeric_error {
public:
    degenerate_cell_error(const std::string& msg, long obs = -1, int eq = -1, int cat = -1)
        : numeric_error(msg), observation(obs), equation(eq), category(cat) {}
    long observation;
    int equation;
    int category;
};

// Half-open interval (lower, upper], endpoints may be infinite.
struct Interval {
    double lower = -kInf;
    double upper = kInf;

    bool valid() const { return lower < upper && !(lower != lower) && !(upper != upper); }
    bool whole_line() const { return lower == -kInf && upper == kInf; }
};

inline double std_pdf(double z) {
    if (std::isinf(z)) return 0.0;
    return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

inline double std_cdf(double z) {
    if (z == kInf) return 1.0;
    if (z == -kInf) return 0.0;
    return 0.5 * std::erfc(-z * kInvSqrt2);
}

// Upper tail P(Z > z), computed without cancellation for large z.
inline double std_ccdf(double z) {
    if (z == kInf) return 0.0;
    if (z == -kInf) return 1.0;
    return 0.5 * std::erfc(z * kInvSqrt2);
}

// ALGORITHM AS241 (Wichura 1988), accurate to ~1 ulp over (0,1).
inline double std_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("std_quantile: p must lie in (0,1)");

    const double q = p - 0.5;
    double r;
    if (std::fabs(q) <= 0.425) {
        r = 0.180625 - q * q;
        return q *
            (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                  6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
              1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
            (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                  3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
              4.2313330701600911252e+1) * r + 1.0);
    }
    r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double ret;
    if (r <= 5.0) {
        r -= 1.6;
        ret = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                  3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
                4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                  6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
                2.05319162663775882187e+0) * r + 1.0);
    } else {
        r -= 5.0;
        ret = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                  2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
                5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                  1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                5.99832206555887937690e-1) * r + 1.0);
    }
    return q < 0.0 ? -ret : ret;
}

// P(a < Z <= b), evaluated on the tail side to avoid cancellation when both
// endpoints sit in the same tail.
inline double interval_mass(double a, double b) {
    if (a >= 0.0)
        return std_ccdf(a) - std_ccdf(b);
    return std_cdf(b) - std_cdf(a);
}

// E(Z | Z in (iv.lower - shift, iv.upper - shift]) for Z ~ N(0,1).
// The Mills-ratio forms phi/Phi stay stable far in the tails because the
// complementary CDF is evaluated directly through erfc.
inline double trunc_mean(const Interval& iv, double shift) {
    if (iv.whole_line()) return 0.0;
    const double a = iv.lower == -kInf ? -kInf : iv.lower - shift;
    const double b = iv.upper == kInf ? kInf : iv.upper - shift;
    const double mass = interval_mass(a, b);
    if (!(mass >= kDegenerateMass))
        throw degenerate_cell_error("trunc_mean: interval mass below 1e-300");
    return (std_pdf(a) - std_pdf(b)) / mass;
}

// d/d(shift) of trunc_mean; equals E(Z^2|cell) - 1 - E(Z|cell)^2, always
// negative (truncation shrinks the variance below one).
inline double trunc_mean_dshift(const Interval& iv, double shift) {
    if (iv.whole_line()) return 0.0;
    const double a = iv.lower == -kInf ? -kInf : iv.lower - shift;
    const double b = iv.upper == kInf ? kInf : iv.upper - shift;
    const double mass = interval_mass(a, b);
    if (!(mass >= kDegenerateMass))
        throw degenerate_cell_error("trunc_mean_dshift: interval mass below 1e-300");
    const double pa = std_pdf(a), pb = std_pdf(b);
    const double apa = std::isinf(a) ? 0.0 : a * pa;
    const double bpb = std::isinf(b) ? 0.0 : b * pb;
    const double m = (pa - pb) / mass;
    return (apa - bpb) / mass - m * m;
}

namespace detail {

// Gauss-Legendre abscissae/weights on (-1,1) used by bvn_upper, split by
// requested precision as in Genz (2004).
inline const double* gl_x(int ng) {
    static const double x6[3] = {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970};
    static const double x12[6] = {-0.9815606342467191, -0.9041172563704750, -0.7699026741943050,
                                  -0.5873179542866171, -0.3678314989981802, -0.1252334085114692};
    static const double x20[10] = {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259,
                                   -0.8391169718222188, -0.7463319064601508, -0.6360536807265150,
                                   -0.5108670019508271, -0.3737060887154196, -0.2277858511416451,
                                   -0.07652652113349733};
    return ng == 3 ? x6 : (ng == 6 ? x12 : x20);
}

inline const double* gl_w(int ng) {
    static const double w6[3] = {0.1713244923791709, 0.3607615730481384, 0.4679139345726904};
    static const double w12[6] = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                  0.2031674267230659, 0.2334925365383547, 0.2491470458134029};
    static const double w20[10] = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                                   0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                                   0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                                   0.1527533871307259};
    return ng == 3 ? w6 : (ng == 6 ? w12 : w20);
}

// Genz's BVND: P(X > h, Y > k) for standard bivariate normal with
// correlation r. Transliterated from the published TVPACK routine;
// absolute accuracy ~5e-16.
inline double bvn_upper(double h, double k, double r) {
    if (h == kInf || k == kInf) return 0.0;
    if (h == -kInf) return std_ccdf(k);
    if (k == -kInf) return std_ccdf(h);

    int ng;
    const double ar = std::fabs(r);
    if (ar < 0.3) ng = 3;
    else if (ar < 0.75) ng = 6;
    else ng = 10;
    const double* x = gl_x(ng);
    const double* w = gl_w(ng);

    double hk = h * k;
    double bvn = 0.0;
    if (ar < 0.925) {
        if (ar > 0.0) {
            const double hs = (h * h + k * k) / 2.0;
            const double asr = std::asin(r);
            for (int i = 0; i < ng; ++i) {
                for (int is = -1; is <= 1; is += 2) {
                    const double sn = std::sin(asr * (is * x[i] + 1.0) / 2.0);
                    bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
                }
            }
            bvn = bvn * asr / (4.0 * M_PI);
        }
        bvn += std_ccdf(h) * std_ccdf(k);
        return std::fmax(0.0, std::fmin(1.0, bvn));
    }

    // |r| >= 0.925: Genz's tail expansion around |r| = 1
    double kk = k;
    if (r < 0.0) { kk = -kk; hk = -hk; }
    if (ar < 1.0) {
        const double as = (1.0 - r) * (1.0 + r);
        double a = std::sqrt(as);
        const double bs = (h - kk) * (h - kk);
        const double c = (4.0 - hk) / 8.0;
        const double d = (12.0 - hk) / 16.0;
        double asr = -(bs / as + hk) / 2.0;
        if (asr > -100.0)
            bvn = a * std::exp(asr) *
                  (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
        if (-hk < 100.0) {
            const double b = std::sqrt(bs);
            bvn -= std::exp(-hk / 2.0) * kSqrt2Pi * std_cdf(-b / a) * b *
                   (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (int i = 0; i < ng; ++i) {
            for (int is = -1; is <= 1; is += 2) {
                const double xs = a * (is * x[i] + 1.0) * a * (is * x[i] + 1.0);
                const double rs = std::sqrt(1.0 - xs);
                asr = -(bs / xs + hk) / 2.0;
                if (asr > -100.0)
                    bvn += a * w[i] * std::exp(asr) *
                           (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs -
                            (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
        bvn = -bvn / (2.0 * M_PI);
    }
    if (r > 0.0) {
        bvn += std_ccdf(std::fmax(h, kk));
    } else {
        bvn = -bvn;
        if (kk > h) bvn += std_cdf(kk) - std_cdf(h);
    }
    return std::fmax(0.0, std::fmin(1.0, bvn));
}

} // namespace detail

// P(X <= x, Y <= y) for standard bivariate normal with correlation rho.
inline double bvn_cdf(double x, double y, double rho) {
    if (!(std::fabs(rho) < 1.0))
        throw std::domain_error("bvn_cdf: |rho| must be < 1");
    if (x == -kInf || y == -kInf) return 0.0;
    if (x == kInf) return std_cdf(y);
    if (y == kInf) return std_cdf(x);
    return detail::bvn_upper(-x, -y, rho);
}

// P((X,Y) in x_iv x y_iv) via four CDF corner evaluations.
inline double bvn_rect_prob(const Interval& x_iv, const Interval& y_iv, double rho) {
    if (!(std::fabs(rho) < 1.0))
        throw std::domain_error("bvn_rect_prob: |rho| must be < 1");
    const double p = bvn_cdf(x_iv.upper, y_iv.upper, rho) -
                     bvn_cdf(x_iv.lower, y_iv.upper, rho) -
                     bvn_cdf(x_iv.upper, y_iv.lower, rho) +
                     bvn_cdf(x_iv.lower, y_iv.lower, rho);
    return std::fmax(0.0, std::fmin(1.0, p));
}

} // namespace coarsemom

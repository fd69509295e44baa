#include "driftfv/flux.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace driftfv {

namespace {
constexpr double kSeriesThreshold = 1e-4;
constexpr double kOverflowThreshold = 745.0;

void require_finite(double x, const char* who) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(who) + ": non-finite input");
}
}  // namespace

double bernoulli(double x) {
    require_finite(x, "bernoulli");
    const double ax = std::abs(x);
    if (ax < kSeriesThreshold) {
        // 1 - x/2 + x^2/12 - x^4/720, error O(x^6)
        const double x2 = x * x;
        return 1.0 - 0.5 * x + x2 / 12.0 - x2 * x2 / 720.0;
    }
    if (x > kOverflowThreshold) return 0.0;
    if (x < -kOverflowThreshold) return -x;
    return x / std::expm1(x);
}

double bernoulli_tilde(double x) {
    require_finite(x, "bernoulli_tilde");
    const double ax = std::abs(x);
    if (ax < kSeriesThreshold) {
        const double x2 = x * x;
        return -0.5 * x + x2 / 12.0 - x2 * x2 / 720.0;
    }
    return bernoulli(x) - 1.0;
}

double effective_diffusion(double x) {
    require_finite(x, "effective_diffusion");
    return 0.5 * (bernoulli(x) + bernoulli(-x));
}

double sg_flux_electron(const FluxInputs& in) {
    return in.tau * (bernoulli(-in.dpsi) * in.u_k - bernoulli(in.dpsi) * in.u_ksigma);
}

double sg_flux_hole(const FluxInputs& in) {
    return in.tau * (bernoulli(in.dpsi) * in.u_k - bernoulli(-in.dpsi) * in.u_ksigma);
}

FluxInequalityReport check_flux_inequalities(const FluxInputs& in) {
    if (!(in.u_k > 0.0) || !(in.u_ksigma > 0.0))
        throw std::invalid_argument("check_flux_inequalities: densities must be positive");

    FluxInequalityReport rep;
    const double w = (std::log(in.u_ksigma) - std::log(in.u_k)) - in.dpsi;
    const double umin = std::min(in.u_k, in.u_ksigma);
    const double umax = std::max(in.u_k, in.u_ksigma);
    const double flux = sg_flux_electron(in);
    rep.w = w;
    rep.flux = flux;

    auto leq = [](double a, double b, double scale) {
        return a <= b + 1e-12 * std::max(1.0, scale);
    };
    const double scale = std::abs(flux) + in.tau * umax * std::abs(w);

    const double lo = w >= 0.0 ? -umax * w : -umin * w;
    const double hi = w >= 0.0 ? -umin * w : -umax * w;
    rep.bracket_ok = leq(lo, flux / in.tau, scale / in.tau) && leq(flux / in.tau, hi, scale / in.tau);
    rep.dissipation_ok = leq(flux * w, -in.tau * umin * w * w, scale * std::abs(w));
    rep.magnitude_ok = leq(std::abs(flux), in.tau * umax * std::abs(w), scale);
    return rep;
}

}  // namespace driftfv

#pragma once

// Bernoulli function and the Scharfetter-Gummel numerical fluxes for
// electrons and holes, with the flux bracketing/dissipation inequalities
// exposed as checkable predicates.

namespace driftfv {

// B(0) = 1, B(x) = x/(e^x - 1). Stable branch for small |x| (series) and
// saturation for large |x| (0 for x >> 0, -x asymptote for x << 0).
double bernoulli(double x);

// B~(x) = B(x) - 1, evaluated without cancellation near 0.
double bernoulli_tilde(double x);

// (B(x) + B(-x))/2 = (x/2) coth(x/2), the symmetric diffusion coefficient
// of the quasi-neutral density equation. Always >= max(1, |x|/2).
double effective_diffusion(double x);

struct FluxInputs {
    double tau;       // transmissibility > 0
    double dpsi;      // DPsi_{K,sigma}
    double u_k;       // density in the cell
    double u_ksigma;  // density across the edge
};

// F_{K,sigma} = tau (B(-DPsi) N_K - B(DPsi) N_{K,sigma})
double sg_flux_electron(const FluxInputs& in);

// G_{K,sigma} = tau (B(DPsi) P_K - B(-DPsi) P_{K,sigma})
double sg_flux_hole(const FluxInputs& in);

struct FluxInequalityReport {
    bool bracket_ok = false;      // F/tau between -max(..)w and -min(..)w per sign of w
    bool dissipation_ok = false;  // F w <= -tau min(..) w^2
    bool magnitude_ok = false;    // |F| <= tau max(..) |w|
    double w = 0.0;               // D(log u - psi)_{K,sigma}
    double flux = 0.0;

    bool all_ok() const { return bracket_ok && dissipation_ok && magnitude_ok; }
};

// Checks the electron-flux inequalities at one edge; densities must be > 0.
// Mixed absolute/relative tolerance 1e-12.
FluxInequalityReport check_flux_inequalities(const FluxInputs& in);

}  // namespace driftfv

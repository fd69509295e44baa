#pragma once

// Discrete entropy, entropy production, the computable entropy-inequality
// right-hand side, per-step monitors and the a priori estimate sums.

#include <vector>

#include "driftfv/mesh.hpp"
#include "driftfv/scheme.hpp"

namespace driftfv {

// H(x) = x log x - x + 1 (convex, H(1) = 0)
double entropy_H(double x);

// Relative entropy of the state against the boundary-extension state plus
// (lambda^2/2) |Psi - Psi^D|_{1,M}^2 (Dirichlet traces of the difference
// vanish by construction).
double discrete_entropy(const Mesh& mesh, const State& state, const ProblemData& data,
                        double lambda_sq);

// sum_sigma tau [ min(N_K,N_Ksig) (D_sig(log N - Psi))^2
//              + min(P_K,P_Ksig) (D_sig(log P + Psi))^2 ]
double discrete_production(const Mesh& mesh, const State& state, const ProblemData& data);

// (M^2/2m) ( |log N^D - Psi^D|_{1,M}^2 + |log P^D + Psi^D|_{1,M}^2 ),
// built from the cell averages and edge traces of the boundary extensions.
double entropy_rhs_constant(const Mesh& mesh, const ProblemData& data, double m_bound,
                            double M_bound);

struct DiagnosticsRecord {
    int n = 0;
    double t = 0.0;
    double entropy = 0.0;
    double production = 0.0;
    double min_N = 0.0, max_N = 0.0, min_P = 0.0, max_P = 0.0;
    double h1_N = 0.0, h1_P = 0.0, h1_Psi = 0.0;  // squared seminorms
    double weak_bv_increment = 0.0;  // sum tau D_sig Psi ((D_sig N)^2 + (D_sig P)^2)
    double entropy_rhs_bound = 0.0;
    int fp_iterations = 0;
};

DiagnosticsRecord compute_record(const Mesh& mesh, const State& state, const ProblemData& data,
                                 const SchemeParams& params, int fp_iterations = 0);

struct EntropyInequalityReport {
    bool per_step_ok = true;
    int checked_steps = 0;
    int violations = 0;
    double max_violation = 0.0;    // max over steps of LHS - K_E (positive part)
    double summed_production = 0.0;  // sum_n dt I^{n+1}, reported (not asserted)
};

// Per-step check of (E^{n+1} - E^n)/dt + I^{n+1}/2 <= K_E + slack over a
// run's consecutive records.
EntropyInequalityReport check_entropy_inequality(const std::vector<DiagnosticsRecord>& records,
                                                 double dt, double slack = 1e-9);

struct AprioriSums {
    double weak_bv = 0.0;
    double l2h1_N = 0.0;
    double l2h1_P = 0.0;
    double l2h1_Psi = 0.0;
};

// The four time-integrated sums over records 1..N_T (the step-0 record
// carries the initial state and is excluded from the sums).
AprioriSums apriori_sums(const std::vector<DiagnosticsRecord>& records, double dt);

}  // namespace driftfv

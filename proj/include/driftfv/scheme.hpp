#pragma once

// Fully implicit time stepper for the drift-diffusion/Poisson system.
// Each step solves the nonlinear scheme by fixed-point iteration:
//   - lambda = 0: potential/density alternation of the quasi-neutral scheme;
//   - lambda^2 >= mu: the relaxed linearization (Poisson solve, then two
//     decoupled density solves with mu/lambda^2 relaxation);
//   - lambda^2 <  mu: the charge-slaved potential linearization, which
//     reduces to the quasi-neutral map as lambda -> 0 and keeps the
//     iteration count bounded uniformly in lambda.
// All three produce fixed points of the same nonlinear equations; the
// accepted state is residual-checked by direct substitution.

#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "driftfv/linsolve.hpp"
#include "driftfv/mesh.hpp"

namespace driftfv {

enum class FixedPointPath { Auto, RelaxedPicard, ChargeSlaved };

struct SchemeParams {
    double lambda_sq = 1.0;
    double dt = 1e-3;
    double t_final = 0.1;
    double m_bound = 0.1;
    double M_bound = 0.9;
    std::optional<double> mu;  // empty = auto = M_bound * dt
    double fp_tol = 1e-11;
    int fp_max_iter = 500;
    double lin_tol = 1e-12;
    // after the increment test passes, keep iterating (a few extra rounds)
    // until the substituted scheme residual is below this scaled target
    double residual_target = 1e-10;
    int polish_max_iter = 10;
    FixedPointPath path = FixedPointPath::Auto;

    double effective_mu() const { return mu ? *mu : M_bound * dt; }
    double theta() const { return lambda_sq > 0.0 ? effective_mu() / lambda_sq : 0.0; }
    void validate() const;
};

struct ProblemData {
    CellField N0, P0;          // initial cell averages
    CellField C;               // doping
    std::vector<double> ND, PD, PsiD;  // Dirichlet edge traces
    // cell averages of the boundary-extension functions (entropy diagnostics)
    CellField ND_cells, PD_cells, PsiD_cells;
};

void validate_problem_data(const Mesh& mesh, const ProblemData& data, const SchemeParams& params);

struct State {
    int n = 0;
    CellField N, P, Psi;
};

struct FixedPointReport {
    enum class Path { RelaxedPicard, ChargeSlaved, QuasiNeutral };
    int iterations = 0;
    double last_increment = 0.0;
    double scheme_residual = 0.0;  // scaled, from direct substitution
    Path path = Path::RelaxedPicard;
    bool damped = false;
};

class StepFailure : public std::runtime_error {
public:
    StepFailure(const std::string& what, int step, int iterations, double last_increment)
        : std::runtime_error(what), step(step), iterations(iterations),
          last_increment(last_increment) {}
    int step;
    int iterations;
    double last_increment;
};

// N^0, P^0 from the data; Psi^0 from the Poisson solve (lambda > 0) or the
// quasi-neutral potential equation evaluated at N^0 (lambda = 0).
State init_state(const Mesh& mesh, const ProblemData& data, const SchemeParams& params);

std::pair<State, FixedPointReport> step_lambda_positive(const State& state, const Mesh& mesh,
                                                        const ProblemData& data,
                                                        const SchemeParams& params);

std::pair<State, FixedPointReport> step_quasi_neutral(const State& state, const Mesh& mesh,
                                                      const ProblemData& data,
                                                      const SchemeParams& params);

// Max over cells of the per-cell residuals of the nonlinear scheme, scaled by
// dt/m(K) (densities) and 1/m(K) (Poisson/charge relation).
double scheme_residual(const Mesh& mesh, const ProblemData& data, const SchemeParams& params,
                       const State& previous, const State& next);

// sum_{sigma in E_K} F_{K,sigma} per cell for the given species.
CellField sg_flux_divergence(const Mesh& mesh, const AugmentedField& psi,
                             const AugmentedField& u, Species species);

using StepObserver = std::function<void(const Mesh&, const State&, const FixedPointReport&)>;

struct RunSummary {
    State final_state;
    int steps = 0;
    std::vector<FixedPointReport> reports;
};

// Executes floor(t_final/dt) steps, invoking the observers after each
// accepted step (the initial state is passed to observers with step 0).
RunSummary run(const Mesh& mesh, const ProblemData& data, const SchemeParams& params,
               const std::vector<StepObserver>& observers = {});

}  // namespace driftfv

#pragma once

// Assembly and solution of the per-iteration linear systems: the Poisson
// system, the quasi-neutral potential system, the linearized density
// systems, and the reformulated (charge-eliminated) potential system used
// by the small-lambda fixed point. M-matrix structure checks included.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "driftfv/mesh.hpp"

namespace driftfv {

struct SparseSystem {
    struct Entry {
        int row, col;
        double value;
    };

    int n = 0;
    std::vector<Entry> entries;  // deduplicated after finalize()
    std::vector<double> rhs;
    bool assembled = false;

    explicit SparseSystem(int size = 0) : n(size), rhs(size, 0.0) {}

    void add(int row, int col, double value) { entries.push_back({row, col, value}); }
    void finalize();  // sums duplicates, sorts by (row, col)

    std::vector<double> multiply(const std::vector<double>& x) const;
    bool is_symmetric(double rel_tol = 1e-14) const;
};

struct SolveReport {
    enum class Method { Direct, Iterative };
    int iterations = 0;
    double residual = 0.0;  // final relative residual ||Ax-b|| / ||b||
    Method method = Method::Direct;
};

class SolveFailure : public std::runtime_error {
public:
    SolveFailure(const std::string& what, double residual)
        : std::runtime_error(what), residual(residual) {}
    double residual;
};

// -lambda^2 sum tau DPsi = m(K)(P - N + C) with Dirichlet traces psiD.
SparseSystem assemble_poisson(const Mesh& mesh, double lambda_sq, const CellField& N,
                              const CellField& P, const CellField& C,
                              const std::vector<double>& psiD);

// -sum tau DPsi (N_K + N_{K,sigma}) = 0; requires N > 0 everywhere.
SparseSystem assemble_qn_potential(const Mesh& mesh, const CellField& N,
                                   const std::vector<double>& ND,
                                   const std::vector<double>& psiD);

enum class Species { Electron, Hole };

struct Stabilization {
    // none or mu/lambda^2 relaxation
    static Stabilization none() { return {}; }
    static Stabilization mu_over_lambda_sq(double mu, double lambda_sq);
    double theta() const { return enabled ? mu / lambda_sq : 0.0; }
    double mu = 0.0, lambda_sq = 0.0;
    bool enabled = false;
};

enum class DensityForm {
    Exponential,         // B(-+DPsi) weights per species
    EffectiveDiffusion,  // symmetric (B(DPsi)+B(-DPsi))/2 on the difference
};

// (m(K)/dt)((1+theta) u_hat - theta u_relax - u_prev) + SG flux divergence of
// u_hat = 0, with Dirichlet traces uD. The effective-diffusion form is the
// quasi-neutral variant (no drift splitting, symmetric matrix).
SparseSystem assemble_linearized_density(const Mesh& mesh, Species species,
                                         const AugmentedField& psi, double dt,
                                         const Stabilization& stab, const CellField& previous,
                                         const CellField& relaxation_source,
                                         const std::vector<double>& uD,
                                         DensityForm form = DensityForm::Exponential);

// Potential system with the charge eliminated through the Poisson relation
// d = lambda^2 (L Psi)/m - C: the elliptic part carries the density-sum
// weights so the system stays well conditioned uniformly in lambda.
// s: density sum N+P per cell with Dirichlet traces sD; deff_psi: field whose
// edge differences set the frozen diffusion weights; psi_prev: previous time
// level potential (with traces); dD: Dirichlet traces of P-N.
SparseSystem assemble_ap_potential(const Mesh& mesh, double lambda_sq, double dt,
                                   const CellField& s, const std::vector<double>& sD,
                                   const AugmentedField& deff_psi,
                                   const AugmentedField& psi_prev, const CellField& C,
                                   const std::vector<double>& dD,
                                   const std::vector<double>& psiD);

// Adds the quasi-neutral drift correction sum tau (DPsi/2)(d_K + d_sigma) to
// the right-hand side of a density-sum system.
void add_sum_drift_correction(SparseSystem& sys, const Mesh& mesh, const AugmentedField& psi,
                              const CellField& d, const std::vector<double>& dD);

std::pair<CellField, SolveReport> solve(const SparseSystem& sys, double tol = 1e-12,
                                        bool symmetric_hint = false);

struct MMatrixReport {
    bool diagonal_positive = true;
    bool offdiagonal_nonpositive = true;
    int strict_columns = 0;     // columns with strict dominance
    int weak_columns = 0;       // columns with equality (within tolerance)
    int violating_columns = 0;  // columns where dominance fails outright
    int violating_row = -1, violating_col = -1;
    bool sign_pattern_ok() const { return diagonal_positive && offdiagonal_nonpositive; }
    bool strictly_column_dominant() const {
        return sign_pattern_ok() && weak_columns == 0 && violating_columns == 0;
    }
};

MMatrixReport check_m_matrix(const SparseSystem& sys);

// Plain "row col value" coordinate dump for offline inspection.
void dump_system(const SparseSystem& sys, const std::string& path);

}  // namespace driftfv

#pragma once

// Admissible two-point-flux meshes: 1D uniform, 2D rectangular, imported 2D
// triangulations with circumcenter cell points. Cell/edge topology,
// transmissibilities, edge-value conventions and discrete seminorms.

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace driftfv {

using CellField = std::vector<double>;

enum class EdgeKind { Interior, DirichletBoundary, NeumannBoundary };

struct Cell {
    int id = -1;
    double measure = 0.0;            // m(K): length in 1D, area in 2D
    std::array<double, 2> center{};  // x_K (y unused in 1D)
    double diameter = 0.0;
};

struct Edge {
    int id = -1;
    EdgeKind kind = EdgeKind::Interior;
    double measure = 0.0;   // m(sigma); convention m(sigma)=1 in 1D
    double d_sigma = 0.0;   // |x_K - x_L| or d(x_K, sigma)
    double tau = 0.0;       // m(sigma)/d_sigma
    int cell_k = -1;        // owning cell
    int cell_l = -1;        // neighbor for interior edges, else -1
    int dirichlet_index = -1;        // compact index among Dirichlet edges
    std::array<double, 2> midpoint{};
};

struct Mesh {
    int dimension = 1;
    std::vector<Cell> cells;
    std::vector<Edge> edges;
    std::vector<std::vector<int>> cell_edges;  // incident edge ids per cell
    double size = 0.0;  // max cell diameter
    double xi = 0.0;    // measured regularity constant min d(x_K,sigma)/diam(K)
    int dirichlet_count = 0;

    int cell_count() const { return static_cast<int>(cells.size()); }
    int edge_count() const { return static_cast<int>(edges.size()); }
    double domain_measure() const;

    // The neighbor of `cell` across interior edge e, or -1.
    int neighbor(int cell, const Edge& e) const {
        if (e.kind != EdgeKind::Interior) return -1;
        return e.cell_k == cell ? e.cell_l : e.cell_k;
    }
};

// Per-side boundary assignment for rectangle builders. Optional sub-intervals
// override the base kind; interval endpoints must align with edge endpoints
// of the mesh (we reject rather than snap).
struct SideSpec {
    EdgeKind base = EdgeKind::DirichletBoundary;
    struct Interval {
        double lo, hi;
        EdgeKind kind;
    };
    std::vector<Interval> overrides;
};

struct RectBoundarySpec {
    SideSpec bottom, top, left, right;  // bottom: y=0, top: y=Ly, etc.
};

Mesh build_1d_uniform(int n_cells, double length,
                      EdgeKind left = EdgeKind::DirichletBoundary,
                      EdgeKind right = EdgeKind::DirichletBoundary);

Mesh build_2d_rect(int nx, int ny, double Lx, double Ly,
                   const RectBoundarySpec& spec = {});

// Plain-text triangulation import ("tri-mesh v1" format). Cells get their
// circumcenters as mesh points; non-admissible inputs are rejected.
Mesh load_triangle_mesh(const std::string& path);

// Cell values plus values at Dirichlet boundary edges.
struct AugmentedField {
    CellField cell_values;
    std::vector<double> dirichlet_values;

    AugmentedField() = default;
    AugmentedField(CellField cv, std::vector<double> dv)
        : cell_values(std::move(cv)), dirichlet_values(std::move(dv)) {}
};

struct EdgeTraceResult {
    double value;  // u_{K,sigma}
    double diff;   // Du_{K,sigma} = u_{K,sigma} - u_K
};

// The three-case edge value u_{K,sigma}: neighbor value across interior
// edges, the Dirichlet value on Dirichlet edges, u_K on Neumann edges.
EdgeTraceResult edge_trace(const Mesh& mesh, const AugmentedField& u,
                           int cell, int edge);

// |u|_{1,M}^2 = sum_sigma tau_sigma (D_sigma u)^2
double h1_seminorm_sq(const Mesh& mesh, const AugmentedField& u);

// Exact cell averages of f. Optional axis-aligned discontinuity coordinates
// split cells so piecewise-smooth dopings are integrated exactly
// (midpoint rule per sub-cell; exact for piecewise bilinear f).
CellField project_cell_averages(const Mesh& mesh,
                                const std::function<double(double, double)>& f,
                                const std::vector<double>& split_x = {},
                                const std::vector<double>& split_y = {});

// Measure-weighted averages of a fine-mesh field onto a coarser nested mesh.
CellField project_fine_to_coarse(const Mesh& coarse, const Mesh& fine,
                                 const CellField& fine_values);

// Map each fine cell to the coarse cell containing its center; throws if the
// meshes are not nested.
std::vector<int> nesting_map(const Mesh& coarse, const Mesh& fine);

}  // namespace driftfv

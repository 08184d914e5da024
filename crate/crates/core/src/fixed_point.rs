//! Fixed-point (Picard-type) discretization with the element stabilization
//! tensor `τ`.
//!
//! Each iterate solves a linear problem for `(v, p)` built at the previous
//! velocity `v^c`:
//!
//! ```text
//! (w, v^c·∇v) + (w, v·∇v^c) + (∇w, 2ν ε(v)) − (∇·w, p) + (q, ∇·v)
//!   + Σ_e ∫ [v^c·∇w − (∇v^c)ᵀw + ∇q]·τ(x) [v^c·∇v + v·∇v^c + ∇p − f − v^c·∇v^c]
//!   = (w, f + v^c·∇v^c) + (w, h)_Γ
//! ```
//!
//! with the backward-Euler terms `v/Δt` (left) and `v̄ₙ/Δt` (right) added to
//! both the Galerkin and residual slots in transient runs. Second-derivative
//! terms are identically zero on affine linear triangles and are omitted.
//!
//! `τ(x) = b(x) (∫b dΩ) A⁻¹` with
//! `A = ∫ (b v^c·∇b + ν|∇b|²) I + b² ∇v^c + ν ∇b⊗∇b dΩ`.

use faer::sparse::Triplet;
use nalgebra::{Matrix2, SMatrix, Vector2};
use rayon::prelude::*;

use crate::element::{interpolate, nodal_gradient, ElementQuadrature};
use crate::error::{Error, Result};
use crate::linear::{from_triplets, mat_vec, norm2, SparseMatrix};
use crate::mesh::{Mesh, VectorField};
use crate::newton::{add_traction, State, Vector9};
use crate::problem::Problem;

pub type Matrix9 = SMatrix<f64, 9, 9>;

/// Element stabilization tensor, stored without its position-dependent
/// bubble factor.
#[derive(Debug, Clone, PartialEq)]
pub struct TauTensor {
    /// `∫ b dΩ`.
    pub w_b: f64,
    pub a: Matrix2<f64>,
    pub a_inv: Matrix2<f64>,
}

impl TauTensor {
    /// `τ(x)` for the bubble value `b = b(x)`.
    pub fn at(&self, b: f64) -> Matrix2<f64> {
        self.a_inv * (b * self.w_b)
    }
}

/// Whether the `τ` term is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stabilization {
    #[default]
    Tau,
    Off,
}

fn tau_from_quadrature(
    quad: &ElementQuadrature,
    vc: &[[f64; 2]; 3],
    nu: f64,
    element: usize,
) -> Result<TauTensor> {
    let gc = nodal_gradient(&quad.gn, vc);
    let mut a = Matrix2::<f64>::zeros();
    let mut w_b = 0.0;
    for q in &quad.points {
        let v = interpolate(&q.n, vc);
        let adv = v[0] * q.gb[0] + v[1] * q.gb[1];
        let diag = q.b * adv + nu * (q.gb[0] * q.gb[0] + q.gb[1] * q.gb[1]);
        for i in 0..2 {
            for j in 0..2 {
                let mut aij = q.b * q.b * gc[i][j] + nu * q.gb[i] * q.gb[j];
                if i == j {
                    aij += diag;
                }
                a[(i, j)] += q.w * aij;
            }
        }
        w_b += q.w * q.b;
    }
    let det = a.determinant();
    if !(det.abs() > 1e-14 * a.norm_squared()) || !det.is_finite() {
        let speed = vc
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
            .sum::<f64>()
            / 3.0;
        let h = (2.0 * quad.geom.area()).sqrt();
        return Err(Error::TauSingular {
            element,
            det,
            local_reynolds: speed * h / nu,
        });
    }
    let a_inv = Matrix2::new(a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)]) / det;
    Ok(TauTensor { w_b, a, a_inv })
}

/// `τ` on element `element` for the nodal iterate velocity `v_c`.
pub fn compute_tau(mesh: &Mesh, element: usize, v_c: &[[f64; 2]], nu: f64) -> Result<TauTensor> {
    if v_c.len() != mesh.n_nodes() {
        return Err(Error::Dimension(
            "iterate velocity does not match the mesh".into(),
        ));
    }
    let quad = ElementQuadrature::new(mesh, element)?;
    let vc = mesh.triangles()[element].map(|n| v_c[n]);
    tau_from_quadrature(&quad, &vc, nu, element)
}

/// Linearized element system over `[v0x, v0y, v1x, v1y, v2x, v2y, p0, p1, p2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FpElementSystem {
    pub k: Matrix9,
    pub f: Vector9,
}

struct Trial {
    u: [f64; 2],
    g: [[f64; 2]; 2],
    p: f64,
    gp: [f64; 2],
}

#[allow(clippy::too_many_arguments)]
fn element_kernel(
    quad: &ElementQuadrature,
    vc: &[[f64; 2]; 3],
    previous: Option<(&[[f64; 2]; 3], f64)>,
    nu: f64,
    body_force: &VectorField,
    stabilization: Stabilization,
    element: usize,
) -> Result<FpElementSystem> {
    let tau = match stabilization {
        Stabilization::Tau => Some(tau_from_quadrature(quad, vc, nu, element)?),
        Stabilization::Off => None,
    };
    let gn = quad.gn;
    let gc = nodal_gradient(&gn, vc);
    let inv_dt = previous.map(|(_, dt)| 1.0 / dt);
    let trials: Vec<Trial> = (0..9)
        .map(|d| {
            if d < 6 {
                let (a, c) = (d / 2, d % 2);
                let mut g = [[0.0; 2]; 2];
                g[c] = gn[a];
                let mut u = [0.0; 2];
                u[c] = 1.0;
                // `u` holds the unit direction; its nodal weight is applied per point.
                Trial {
                    u,
                    g,
                    p: 0.0,
                    gp: [0.0; 2],
                }
            } else {
                Trial {
                    u: [0.0; 2],
                    g: [[0.0; 2]; 2],
                    p: 1.0,
                    gp: gn[d - 6],
                }
            }
        })
        .collect();

    let mut k = Matrix9::zeros();
    let mut f = Vector9::zeros();
    for q in &quad.points {
        let v = interpolate(&q.n, vc);
        let conv_c = [
            gc[0][0] * v[0] + gc[0][1] * v[1],
            gc[1][0] * v[0] + gc[1][1] * v[1],
        ];
        let bf = body_force(q.x);
        let mut load = [bf[0] + conv_c[0], bf[1] + conv_c[1]];
        if let (Some((prev, _)), Some(idt)) = (previous, inv_dt) {
            let vp = interpolate(&q.n, prev);
            load[0] += vp[0] * idt;
            load[1] += vp[1] * idt;
        }
        let tau_x = tau.as_ref().map(|t| t.at(q.b));
        let w = q.w;

        // Test weights: Galerkin value/gradient plus the stabilization weight.
        let mut weights = [[0.0; 2]; 9];
        for a in 0..3 {
            let adv = v[0] * gn[a][0] + v[1] * gn[a][1];
            for i in 0..2 {
                let mut wm = [0.0; 2];
                for m in 0..2 {
                    wm[m] = if m == i { adv } else { 0.0 } - q.n[a] * gc[i][m];
                }
                weights[2 * a + i] = wm;
            }
            weights[6 + a] = gn[a];
        }

        for (d, t) in trials.iter().enumerate() {
            // Trial value scaled by its nodal shape function.
            let (u, p) = if d < 6 {
                let s = q.n[d / 2];
                ([t.u[0] * s, t.u[1] * s], 0.0)
            } else {
                ([0.0; 2], q.n[d - 6] * t.p)
            };
            let g = t.g;
            let mut lin = [
                g[0][0] * v[0] + g[0][1] * v[1] + gc[0][0] * u[0] + gc[0][1] * u[1],
                g[1][0] * v[0] + g[1][1] * v[1] + gc[1][0] * u[0] + gc[1][1] * u[1],
            ];
            if let Some(idt) = inv_dt {
                lin[0] += u[0] * idt;
                lin[1] += u[1] * idt;
            }
            let s = [
                [2.0 * nu * g[0][0], nu * (g[0][1] + g[1][0])],
                [nu * (g[1][0] + g[0][1]), 2.0 * nu * g[1][1]],
            ];
            let div = g[0][0] + g[1][1];
            let strong = [lin[0] + t.gp[0], lin[1] + t.gp[1]];
            let tau_strong = tau_x.map(|tx| tx * Vector2::new(strong[0], strong[1]));

            for a in 0..3 {
                for i in 0..2 {
                    let row = 2 * a + i;
                    let mut val =
                        q.n[a] * lin[i] + s[i][0] * gn[a][0] + s[i][1] * gn[a][1] - gn[a][i] * p;
                    if let Some(ts) = tau_strong {
                        val += weights[row][0] * ts[0] + weights[row][1] * ts[1];
                    }
                    k[(row, d)] += w * val;
                }
                let mut val = q.n[a] * div;
                if let Some(ts) = tau_strong {
                    val += weights[6 + a][0] * ts[0] + weights[6 + a][1] * ts[1];
                }
                k[(6 + a, d)] += w * val;
            }
        }

        let tau_load = tau_x.map(|tx| tx * Vector2::new(load[0], load[1]));
        for a in 0..3 {
            for i in 0..2 {
                let row = 2 * a + i;
                let mut val = q.n[a] * load[i];
                if let Some(tl) = tau_load {
                    val += weights[row][0] * tl[0] + weights[row][1] * tl[1];
                }
                f[row] += w * val;
            }
            if let Some(tl) = tau_load {
                f[6 + a] += w * (weights[6 + a][0] * tl[0] + weights[6 + a][1] * tl[1]);
            }
        }
    }
    Ok(FpElementSystem { k, f })
}

/// Linearized, stabilized element system at the iterate `v_c`.
#[allow(clippy::too_many_arguments)]
pub fn fp_element_system(
    mesh: &Mesh,
    element: usize,
    v_c: &[[f64; 2]],
    previous: Option<(&[[f64; 2]], f64)>,
    nu: f64,
    body_force: &VectorField,
    stabilization: Stabilization,
) -> Result<FpElementSystem> {
    if v_c.len() != mesh.n_nodes() || previous.is_some_and(|(p, _)| p.len() != mesh.n_nodes()) {
        return Err(Error::Dimension(
            "velocity field does not match the mesh".into(),
        ));
    }
    let quad = ElementQuadrature::new(mesh, element)?;
    let t = mesh.triangles()[element];
    let vc = t.map(|n| v_c[n]);
    let prev = previous.map(|(p, dt)| (t.map(|n| p[n]), dt));
    element_kernel(
        &quad,
        &vc,
        prev.as_ref().map(|(p, dt)| (p, *dt)),
        nu,
        body_force,
        stabilization,
        element,
    )
}

/// Global linear system over the free coarse DOFs with Dirichlet values
/// moved to the right-hand side.
#[derive(Debug, Clone)]
pub struct FpSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
}

impl FpSystem {
    /// `‖K x − F‖₂` for the free values of `state`.
    pub fn residual_norm(&self, problem: &Problem, state: &State) -> f64 {
        let x = free_values(problem, state);
        let kx = mat_vec(&self.matrix, &x);
        norm2(
            &kx.iter()
                .zip(&self.rhs)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        )
    }
}

pub(crate) fn free_values(problem: &Problem, state: &State) -> Vec<f64> {
    problem
        .dofs
        .free_dofs()
        .iter()
        .map(|&g| state.global(problem, g))
        .collect()
}

/// Assembles the fixed-point system linearized about `state.vbar`, using
/// `state.previous` for the transient terms.
pub fn fp_assemble(
    problem: &Problem,
    state: &State,
    stabilization: Stabilization,
) -> Result<FpSystem> {
    let mesh = &problem.mesh;
    if state.vbar.len() != mesh.n_nodes() || state.p.len() != mesh.n_nodes() {
        return Err(Error::Dimension("state does not match the mesh".into()));
    }
    let previous = state.previous.as_ref().map(|p| (p.vbar.as_slice(), p.dt));
    let systems: Vec<FpElementSystem> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            fp_element_system(
                mesh,
                e,
                &state.vbar,
                previous,
                problem.nu,
                &problem.body_force,
                stabilization,
            )
        })
        .collect::<Result<_>>()?;

    let dofs = &problem.dofs;
    let mut global_rhs = vec![0.0; dofs.total()];
    add_traction(problem, &mut global_rhs, 1.0);
    let mut trips = Vec::with_capacity(81 * systems.len());
    for (e, sys) in systems.iter().enumerate() {
        let gd = dofs.element_dofs(mesh, e);
        for i in 0..9 {
            global_rhs[gd[i]] += sys.f[i];
        }
        for i in 0..9 {
            let Some(fi) = dofs.free_index(gd[i]) else {
                continue;
            };
            for j in 0..9 {
                match dofs.free_index(gd[j]) {
                    Some(fj) => trips.push(Triplet::new(fi, fj, sys.k[(i, j)])),
                    None => {
                        let value = dofs.constrained()[&gd[j]];
                        global_rhs[gd[i]] -= sys.k[(i, j)] * value;
                    }
                }
            }
        }
    }
    let rhs = dofs.free_dofs().iter().map(|&g| global_rhs[g]).collect();
    Ok(FpSystem {
        matrix: from_triplets(dofs.n_free(), &trips)?,
        rhs,
    })
}

/// Writes a free-DOF solution vector into `state` (constrained values kept).
pub fn set_free_values(problem: &Problem, state: &mut State, x: &[f64]) {
    for (k, &g) in problem.dofs.free_dofs().iter().enumerate() {
        state.set_global(problem, g, x[k]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::triangle_quadrature;
    use crate::linear::{linear_solve, DEFAULT_LINEAR_TOL};
    use crate::mesh::{field, unit_square_mesh, zero_field, BoundaryConditions, BoundaryEdge};
    use rand::{Rng, SeedableRng};

    fn triangle(scale: f64) -> Mesh {
        let walls = |a, b| BoundaryEdge {
            nodes: [a, b],
            tag: "wall".into(),
        };
        Mesh::new(
            vec![[scale, 0.0], [0.0, scale], [0.0, 0.0]],
            vec![[0, 1, 2]],
            vec![walls(0, 1), walls(1, 2), walls(2, 0)],
        )
        .unwrap()
    }

    /// `∫_T ξ1^a ξ2^b ξ3^c = a! b! c! / (a+b+c+2)!` on the reference triangle.
    fn monomial(a: u32, b: u32, c: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(a) * fact(b) * fact(c) / fact(a + b + c + 2)
    }

    #[test]
    fn stokes_tau_matches_factorial_oracle() {
        // Unit right triangle with node (1,0),(0,1),(0,0): x = ξ, so ∇b is the
        // reference gradient. ∂b/∂ξ1 = ξ2ξ3 − ξ1ξ2, ∂b/∂ξ2 = ξ1ξ3 − ξ1ξ2.
        let g1g1 = monomial(0, 2, 2) - 2.0 * monomial(1, 2, 1) + monomial(2, 2, 0);
        let g2g2 = monomial(2, 0, 2) - 2.0 * monomial(2, 1, 1) + monomial(2, 2, 0);
        let g1g2 = monomial(1, 1, 2) - monomial(1, 2, 1) - monomial(2, 1, 1) + monomial(2, 2, 0);
        let a_oracle = Matrix2::new(2.0 * g1g1 + g2g2, g1g2, g1g2, g1g1 + 2.0 * g2g2);

        let m = triangle(1.0);
        let tau = compute_tau(&m, 0, &[[0.0; 2]; 3], 1.0).unwrap();
        assert!(
            (tau.a - a_oracle).amax() < 1e-12,
            "{} vs {}",
            tau.a,
            a_oracle
        );
        assert!((tau.w_b - monomial(1, 1, 1)).abs() < 1e-15);
        assert!((tau.a - tau.a.transpose()).amax() < 1e-13);
        assert!(tau.a.cholesky().is_some());
    }

    #[test]
    fn tau_viscosity_homogeneity() {
        let m = triangle(1.0);
        let t1 = compute_tau(&m, 0, &[[0.0; 2]; 3], 0.7).unwrap();
        for c in [0.01, 3.0, 250.0] {
            let tc = compute_tau(&m, 0, &[[0.0; 2]; 3], 0.7 * c).unwrap();
            let d = tc.at(0.02) - t1.at(0.02) / c;
            assert!(d.amax() <= 1e-12 * t1.at(0.02).amax() / c);
        }
    }

    #[test]
    fn tau_scales_with_h_squared() {
        let t1 = compute_tau(&triangle(1.0), 0, &[[0.0; 2]; 3], 1.0).unwrap();
        let th = compute_tau(&triangle(0.5), 0, &[[0.0; 2]; 3], 1.0).unwrap();
        assert!((th.w_b - 0.25 * t1.w_b).abs() < 1e-15);
        assert!((th.a - t1.a).amax() < 1e-13);
        assert!((th.at(1.0).norm() - 0.25 * t1.at(1.0).norm()).abs() < 1e-13);
    }

    #[test]
    fn tau_with_convection_uses_iterate_gradient() {
        // Oracle: integrate A with an independent degree-12 rule.
        let m = triangle(1.0);
        let vc = [[1.0, -0.5], [0.25, 2.0], [-1.0, 0.5]];
        let nu = 0.1;
        let tau = compute_tau(&m, 0, &vc, nu).unwrap();
        let rule = triangle_quadrature(12).unwrap();
        let gc = [
            [vc[0][0] - vc[2][0], vc[1][0] - vc[2][0]],
            [vc[0][1] - vc[2][1], vc[1][1] - vc[2][1]],
        ];
        let mut a = Matrix2::zeros();
        for (xi, w) in rule.iter() {
            let (x1, x2) = (xi[0], xi[1]);
            let x3 = 1.0 - x1 - x2;
            let b = x1 * x2 * x3;
            let gb = [x2 * x3 - x1 * x2, x1 * x3 - x1 * x2];
            let v = [
                x1 * vc[0][0] + x2 * vc[1][0] + x3 * vc[2][0],
                x1 * vc[0][1] + x2 * vc[1][1] + x3 * vc[2][1],
            ];
            let diag = b * (v[0] * gb[0] + v[1] * gb[1]) + nu * (gb[0] * gb[0] + gb[1] * gb[1]);
            for i in 0..2 {
                for j in 0..2 {
                    a[(i, j)] += w
                        * (if i == j { diag } else { 0.0 } + b * b * gc[i][j] + nu * gb[i] * gb[j]);
                }
            }
        }
        assert!((tau.a - a).amax() < 1e-14);
    }

    #[test]
    fn unstabilized_system_is_plain_galerkin() {
        let m = triangle(1.0);
        let zero = [[0.0; 2]; 3];
        let sys =
            fp_element_system(&m, 0, &zero, None, 1.0, &zero_field(), Stabilization::Off).unwrap();
        // Stokes Galerkin: symmetric velocity block, zero pressure block,
        // divergence rows the negative transpose of the gradient columns.
        let kvv = sys.k.fixed_view::<6, 6>(0, 0);
        assert!((kvv - kvv.transpose()).amax() < 1e-12);
        assert!(sys.k.fixed_view::<3, 3>(6, 6).amax() == 0.0);
        let kvp = sys.k.fixed_view::<6, 3>(0, 6);
        let kpv = sys.k.fixed_view::<3, 6>(6, 0);
        assert!((kvp + kpv.transpose()).amax() < 1e-14);
        assert_eq!(sys.f, Vector9::zeros());
    }

    #[test]
    fn stokes_stabilization_is_pressure_laplacian() {
        let m = triangle(1.0);
        let zero = [[0.0; 2]; 3];
        let on =
            fp_element_system(&m, 0, &zero, None, 1.0, &zero_field(), Stabilization::Tau).unwrap();
        let off =
            fp_element_system(&m, 0, &zero, None, 1.0, &zero_field(), Stabilization::Off).unwrap();
        let d = on.k - off.k;
        // Only the ∇q·τ∇p block survives at v^c = 0.
        assert!(d.fixed_view::<6, 9>(0, 0).amax() < 1e-15);
        assert!(d.fixed_view::<3, 6>(6, 0).amax() < 1e-15);
        let kpp = d.fixed_view::<3, 3>(6, 6);
        assert!((kpp - kpp.transpose()).amax() < 1e-15);
        assert!(kpp.symmetric_eigenvalues().iter().all(|&l| l > -1e-15));
    }

    #[test]
    fn stabilization_block_is_not_symmetric() {
        let m = triangle(1.0);
        let vc = [[1.0, -0.5], [0.25, 2.0], [-1.0, 0.5]];
        let on =
            fp_element_system(&m, 0, &vc, None, 0.1, &zero_field(), Stabilization::Tau).unwrap();
        let off =
            fp_element_system(&m, 0, &vc, None, 0.1, &zero_field(), Stabilization::Off).unwrap();
        let d = on.k - off.k;
        assert!((d - d.transpose()).amax() > 1e-6 * d.amax());
    }

    #[test]
    fn zero_strong_residual_leaves_equations_unchanged() {
        // Uniform v^c, constant pressure and zero force give a zero strong residual.
        let m = triangle(1.0);
        let vc = [[0.3, 0.8]; 3];
        let on =
            fp_element_system(&m, 0, &vc, None, 0.05, &zero_field(), Stabilization::Tau).unwrap();
        let off =
            fp_element_system(&m, 0, &vc, None, 0.05, &zero_field(), Stabilization::Off).unwrap();
        let x = Vector9::from_column_slice(&[0.3, 0.8, 0.3, 0.8, 0.3, 0.8, 2.0, 2.0, 2.0]);
        let r_on = on.k * x - on.f;
        let r_off = off.k * x - off.f;
        assert!((r_on - r_off).amax() < 1e-14);
    }

    fn stokes_cavity(n: usize) -> Problem {
        let mut bc = BoundaryConditions::new();
        for t in ["left", "right", "bottom", "top"] {
            bc = bc.dirichlet(t, zero_field());
        }
        Problem::new(
            unit_square_mesh(n).unwrap(),
            bc.pin_pressure(0, 0.0),
            1.0,
            field(|x| [10.0 * (x[0] - 0.5), 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn system_dimension_counts_free_dofs() {
        let p = stokes_cavity(4);
        let sys = fp_assemble(&p, &State::lifted(&p), Stabilization::Tau).unwrap();
        let n = p.mesh.n_nodes();
        let boundary = 16;
        assert_eq!(sys.rhs.len(), 2 * (n - boundary) + (n - 1));
        assert_eq!(sys.matrix.nrows(), sys.rhs.len());
    }

    #[test]
    fn galerkin_stokes_velocity_block_is_symmetric() {
        let p = stokes_cavity(4);
        let sys = fp_assemble(&p, &State::lifted(&p), Stabilization::Off).unwrap();
        let dense = sys.matrix.to_dense();
        let nv = (0..p.dofs.n_free())
            .filter(|&k| p.dofs.free_dofs()[k] < p.dofs.n_velocity())
            .count();
        for i in 0..nv {
            for j in 0..nv {
                assert!((dense[(i, j)] - dense[(j, i)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_fixed_point_reproduces_iterate() {
        let p = stokes_cavity(6).with_nu(0.05);
        let mut s = State::lifted(&p);
        for _ in 0..60 {
            let sys = fp_assemble(&p, &s, Stabilization::Tau).unwrap();
            let x = linear_solve(&sys.matrix, &sys.rhs, DEFAULT_LINEAR_TOL).unwrap();
            set_free_values(&p, &mut s, &x);
        }
        let sys = fp_assemble(&p, &s, Stabilization::Tau).unwrap();
        let x = linear_solve(&sys.matrix, &sys.rhs, DEFAULT_LINEAR_TOL).unwrap();
        let mut next = s.clone();
        set_free_values(&p, &mut next, &x);
        assert!(next.max_velocity_difference(&s) < 1e-10);
        assert!(sys.residual_norm(&p, &s) < 1e-10);
    }

    fn max_pressure_jump(p: &Problem, s: &State) -> f64 {
        let mut jump: f64 = 0.0;
        for t in p.mesh.triangles() {
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                jump = jump.max((s.p[t[a]] - s.p[t[b]]).abs());
            }
        }
        jump
    }

    #[test]
    fn stabilization_removes_pressure_oscillation() {
        let p = stokes_cavity(8);
        let solve = |stab| -> Option<State> {
            let mut s = State::lifted(&p);
            let sys = fp_assemble(&p, &s, stab).ok()?;
            let x = linear_solve(&sys.matrix, &sys.rhs, DEFAULT_LINEAR_TOL).ok()?;
            set_free_values(&p, &mut s, &x);
            Some(s)
        };
        let stable = solve(Stabilization::Tau).expect("stabilized Stokes system must solve");
        // Body force is a pressure gradient: p = 5(x − 1/2)², jumps ≈ 5·h·|2x−1|.
        let smooth = max_pressure_jump(&p, &stable);
        assert!(smooth < 1.5, "stabilized jump {smooth}");
        match solve(Stabilization::Off) {
            None => {}
            Some(s) => assert!(max_pressure_jump(&p, &s) > 10.0 * smooth),
        }
    }

    #[test]
    fn random_iterates_give_finite_systems() {
        let p = stokes_cavity(4).with_nu(0.01);
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..5 {
            let mut s = State::lifted(&p);
            for v in &mut s.vbar {
                *v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            }
            s.impose_constraints(&p);
            let sys = fp_assemble(&p, &s, Stabilization::Tau).unwrap();
            assert!(sys.rhs.iter().all(|v| v.is_finite()));
        }
    }
}

//! Consistent Newton–Raphson discretization of the bubble-enriched
//! multiscale equations.
//!
//! Each element carries three coarse nodes (velocity and pressure) and one
//! bubble with a 2-vector coefficient `β`, so the total velocity on an element
//! is `u = v̄ + b β`. Element-local unknowns are ordered
//! `[v0x, v0y, v1x, v1y, v2x, v2y, p0, p1, p2, βx, βy]`.
//!
//! The viscous term is `(∇w, 2ν ε(u))` with `ε` the symmetric gradient; for
//! divergence-free fields its strong form is `−ν∇²u`.
//!
//! Residuals per element (transient terms only when a previous step is set):
//!
//! ```text
//! Rc = ∫ N (u·∇u + (v̄ − v̄ₙ)/Δt − f) + 2ν ∇N : ε(u) − ∇N p
//! Rp = −∫ N ∇·u
//! Rf = ∫ b (u·∇u + (v̄ − v̄ₙ)/Δt − f) + 2ν ∇b : ε(u) − ∇b p
//! ```
//!
//! The fine coefficients are statically condensed per element before global
//! assembly and recovered after each linear solve.

use faer::sparse::Triplet;
use nalgebra::{Matrix2, SMatrix, SVector, Vector2};
use rayon::prelude::*;

use crate::element::{interpolate, nodal_gradient, ElementQuadrature};
use crate::error::{Error, Result};
use crate::fem::gauss_legendre_unit;
use crate::linear::{from_triplets, norm2, SparseMatrix};
use crate::mesh::{Mesh, VectorField};
use crate::problem::Problem;

/// Velocity from the previous time step, for backward-Euler runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PreviousStep {
    pub vbar: Vec<[f64; 2]>,
    pub dt: f64,
}

/// Discrete solution: nodal coarse velocity and pressure plus per-element
/// bubble coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub vbar: Vec<[f64; 2]>,
    pub p: Vec<f64>,
    pub beta: Vec<[f64; 2]>,
    pub previous: Option<PreviousStep>,
}

impl State {
    pub fn zeros(mesh: &Mesh) -> Self {
        State {
            vbar: vec![[0.0; 2]; mesh.n_nodes()],
            p: vec![0.0; mesh.n_nodes()],
            beta: vec![[0.0; 2]; mesh.n_elements()],
            previous: None,
        }
    }

    /// Zero interior state carrying the Dirichlet and pressure-pin values.
    pub fn lifted(problem: &Problem) -> Self {
        let mut s = State::zeros(&problem.mesh);
        s.impose_constraints(problem);
        s
    }

    pub fn impose_constraints(&mut self, problem: &Problem) {
        for (&dof, &value) in problem.dofs.constrained() {
            self.set_global(problem, dof, value);
        }
    }

    pub fn global(&self, problem: &Problem, dof: usize) -> f64 {
        let nv = problem.dofs.n_velocity();
        if dof < nv {
            self.vbar[dof / 2][dof % 2]
        } else {
            self.p[dof - nv]
        }
    }

    pub fn set_global(&mut self, problem: &Problem, dof: usize, value: f64) {
        let nv = problem.dofs.n_velocity();
        if dof < nv {
            self.vbar[dof / 2][dof % 2] = value;
        } else {
            self.p[dof - nv] = value;
        }
    }

    pub fn with_previous(mut self, vbar: Vec<[f64; 2]>, dt: f64) -> Self {
        self.previous = Some(PreviousStep { vbar, dt });
        self
    }

    /// Hash of every numeric entry; used to detect stale condensation data.
    pub fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x100000001b3;
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |v: f64| {
            h ^= v.to_bits();
            h = h.wrapping_mul(PRIME);
        };
        self.vbar.iter().flatten().copied().for_each(&mut eat);
        self.p.iter().copied().for_each(&mut eat);
        self.beta.iter().flatten().copied().for_each(&mut eat);
        if let Some(prev) = &self.previous {
            eat(prev.dt);
            prev.vbar.iter().flatten().copied().for_each(&mut eat);
        }
        h
    }

    /// Max-norm distance between the coarse fields of two states.
    pub fn max_coarse_difference(&self, other: &State) -> f64 {
        let dv = self
            .vbar
            .iter()
            .zip(&other.vbar)
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()]);
        let dp = self.p.iter().zip(&other.p).map(|(a, b)| (a - b).abs());
        dv.chain(dp).fold(0.0, f64::max)
    }

    pub fn max_velocity_difference(&self, other: &State) -> f64 {
        self.vbar
            .iter()
            .zip(&other.vbar)
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
            .fold(0.0, f64::max)
    }
}

/// Element-local copy of the state.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LocalState {
    pub v: [[f64; 2]; 3],
    pub p: [f64; 3],
    pub beta: [f64; 2],
    pub previous: Option<([[f64; 2]; 3], f64)>,
}

impl LocalState {
    pub fn gather(mesh: &Mesh, e: usize, state: &State) -> Self {
        let t = mesh.triangles()[e];
        LocalState {
            v: t.map(|n| state.vbar[n]),
            p: t.map(|n| state.p[n]),
            beta: state.beta[e],
            previous: state
                .previous
                .as_ref()
                .map(|prev| (t.map(|n| prev.vbar[n]), prev.dt)),
        }
    }
}

pub type Vector6 = SVector<f64, 6>;
pub type Vector3 = SVector<f64, 3>;
pub type Vector9 = SVector<f64, 9>;
pub type Vector11 = SVector<f64, 11>;
pub type Matrix11 = SMatrix<f64, 11, 11>;
pub type Matrix9 = SMatrix<f64, 9, 9>;

#[derive(Debug, Clone, PartialEq)]
pub struct ElementResiduals {
    pub rc: Vector6,
    pub rp: Vector3,
    pub rf: Vector2<f64>,
}

impl ElementResiduals {
    pub fn to_vector(&self) -> Vector11 {
        let mut r = Vector11::zeros();
        r.fixed_rows_mut::<6>(0).copy_from(&self.rc);
        r.fixed_rows_mut::<3>(6).copy_from(&self.rp);
        r.fixed_rows_mut::<2>(9).copy_from(&self.rf);
        r
    }

    fn from_vector(r: &Vector11) -> Self {
        ElementResiduals {
            rc: r.fixed_rows::<6>(0).into(),
            rp: r.fixed_rows::<3>(6).into(),
            rf: r.fixed_rows::<2>(9).into(),
        }
    }
}

/// The eight nonzero blocks of the element tangent (`Kpp ≡ 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct ElementTangent {
    pub kcc: SMatrix<f64, 6, 6>,
    pub kcp: SMatrix<f64, 6, 3>,
    pub kcf: SMatrix<f64, 6, 2>,
    pub kpc: SMatrix<f64, 3, 6>,
    pub kpf: SMatrix<f64, 3, 2>,
    pub kfc: SMatrix<f64, 2, 6>,
    pub kfp: SMatrix<f64, 2, 3>,
    pub kff: Matrix2<f64>,
}

impl ElementTangent {
    pub fn to_monolithic(&self) -> Matrix11 {
        let mut k = Matrix11::zeros();
        k.fixed_view_mut::<6, 6>(0, 0).copy_from(&self.kcc);
        k.fixed_view_mut::<6, 3>(0, 6).copy_from(&self.kcp);
        k.fixed_view_mut::<6, 2>(0, 9).copy_from(&self.kcf);
        k.fixed_view_mut::<3, 6>(6, 0).copy_from(&self.kpc);
        k.fixed_view_mut::<3, 2>(6, 9).copy_from(&self.kpf);
        k.fixed_view_mut::<2, 6>(9, 0).copy_from(&self.kfc);
        k.fixed_view_mut::<2, 3>(9, 6).copy_from(&self.kfp);
        k.fixed_view_mut::<2, 2>(9, 9).copy_from(&self.kff);
        k
    }

    pub fn from_monolithic(k: &Matrix11) -> Self {
        ElementTangent {
            kcc: k.fixed_view::<6, 6>(0, 0).into(),
            kcp: k.fixed_view::<6, 3>(0, 6).into(),
            kcf: k.fixed_view::<6, 2>(0, 9).into(),
            kpc: k.fixed_view::<3, 6>(6, 0).into(),
            kpf: k.fixed_view::<3, 2>(6, 9).into(),
            kfc: k.fixed_view::<2, 6>(9, 0).into(),
            kfp: k.fixed_view::<2, 3>(9, 6).into(),
            kff: k.fixed_view::<2, 2>(9, 9).into(),
        }
    }
}

/// Trial perturbation of the total velocity, its gradient, the pressure and
/// the coarse acceleration at one quadrature point.
#[derive(Clone, Copy)]
struct Perturbation {
    du: [f64; 2],
    dg: [[f64; 2]; 2],
    dp: f64,
    dacc: [f64; 2],
}

/// Evaluates the element residual and, optionally, the exact 11×11 tangent.
pub(crate) fn element_system(
    quad: &ElementQuadrature,
    local: &LocalState,
    nu: f64,
    body_force: Option<&VectorField>,
    with_tangent: bool,
) -> (Vector11, Option<Matrix11>) {
    let gn = quad.gn;
    let gv = nodal_gradient(&gn, &local.v);
    let beta = local.beta;
    let mut r = Vector11::zeros();
    let mut k = with_tangent.then(Matrix11::zeros);
    let inv_dt = local.previous.map(|(_, dt)| 1.0 / dt);

    for q in &quad.points {
        let vbar = interpolate(&q.n, &local.v);
        let u = [vbar[0] + q.b * beta[0], vbar[1] + q.b * beta[1]];
        let mut g = gv;
        for i in 0..2 {
            for j in 0..2 {
                g[i][j] += beta[i] * q.gb[j];
            }
        }
        let conv = [
            g[0][0] * u[0] + g[0][1] * u[1],
            g[1][0] * u[0] + g[1][1] * u[1],
        ];
        let s = [
            [2.0 * nu * g[0][0], nu * (g[0][1] + g[1][0])],
            [nu * (g[1][0] + g[0][1]), 2.0 * nu * g[1][1]],
        ];
        let div = g[0][0] + g[1][1];
        let p = q.n[0] * local.p[0] + q.n[1] * local.p[1] + q.n[2] * local.p[2];
        let f = body_force.map_or([0.0; 2], |bf| bf(q.x));
        let acc = match (local.previous, inv_dt) {
            (Some((prev, _)), Some(idt)) => {
                let vp = interpolate(&q.n, &prev);
                [(vbar[0] - vp[0]) * idt, (vbar[1] - vp[1]) * idt]
            }
            _ => [0.0; 2],
        };
        let w = q.w;

        // Momentum rows: coarse test functions N_a then the bubble b.
        let momentum_tests = [
            (q.n[0], gn[0], 0usize),
            (q.n[1], gn[1], 2),
            (q.n[2], gn[2], 4),
            (q.b, q.gb, 9),
        ];
        for &(phi, gamma, row0) in &momentum_tests {
            for i in 0..2 {
                r[row0 + i] += w
                    * (phi * (conv[i] + acc[i] - f[i]) + s[i][0] * gamma[0] + s[i][1] * gamma[1]
                        - gamma[i] * p);
            }
        }
        for a in 0..3 {
            r[6 + a] -= w * q.n[a] * div;
        }

        let Some(k) = k.as_mut() else { continue };
        for d in 0..11 {
            let pert = match d {
                0..=5 => {
                    let (a, c) = (d / 2, d % 2);
                    let mut du = [0.0; 2];
                    du[c] = q.n[a];
                    let mut dg = [[0.0; 2]; 2];
                    dg[c] = gn[a];
                    let mut dacc = [0.0; 2];
                    if let Some(idt) = inv_dt {
                        dacc[c] = q.n[a] * idt;
                    }
                    Perturbation {
                        du,
                        dg,
                        dp: 0.0,
                        dacc,
                    }
                }
                6..=8 => Perturbation {
                    du: [0.0; 2],
                    dg: [[0.0; 2]; 2],
                    dp: q.n[d - 6],
                    dacc: [0.0; 2],
                },
                _ => {
                    let c = d - 9;
                    let mut du = [0.0; 2];
                    du[c] = q.b;
                    let mut dg = [[0.0; 2]; 2];
                    dg[c] = q.gb;
                    Perturbation {
                        du,
                        dg,
                        dp: 0.0,
                        dacc: [0.0; 2],
                    }
                }
            };
            let Perturbation { du, dg, dp, dacc } = pert;
            let dconv = [
                dg[0][0] * u[0] + dg[0][1] * u[1] + g[0][0] * du[0] + g[0][1] * du[1],
                dg[1][0] * u[0] + dg[1][1] * u[1] + g[1][0] * du[0] + g[1][1] * du[1],
            ];
            let ds = [
                [2.0 * nu * dg[0][0], nu * (dg[0][1] + dg[1][0])],
                [nu * (dg[1][0] + dg[0][1]), 2.0 * nu * dg[1][1]],
            ];
            let ddiv = dg[0][0] + dg[1][1];
            for &(phi, gamma, row0) in &momentum_tests {
                for i in 0..2 {
                    k[(row0 + i, d)] += w
                        * (phi * (dconv[i] + dacc[i]) + ds[i][0] * gamma[0] + ds[i][1] * gamma[1]
                            - gamma[i] * dp);
                }
            }
            for a in 0..3 {
                k[(6 + a, d)] -= w * q.n[a] * ddiv;
            }
        }
    }
    (r, k)
}

pub fn element_residuals(
    mesh: &Mesh,
    element: usize,
    state: &State,
    nu: f64,
    body_force: &VectorField,
) -> Result<ElementResiduals> {
    let quad = ElementQuadrature::new(mesh, element)?;
    let local = LocalState::gather(mesh, element, state);
    let (r, _) = element_system(&quad, &local, nu, Some(body_force), false);
    Ok(ElementResiduals::from_vector(&r))
}

pub fn element_tangent(
    mesh: &Mesh,
    element: usize,
    state: &State,
    nu: f64,
) -> Result<ElementTangent> {
    let quad = ElementQuadrature::new(mesh, element)?;
    let local = LocalState::gather(mesh, element, state);
    let (_, k) = element_system(&quad, &local, nu, None, true);
    Ok(ElementTangent::from_monolithic(
        &k.expect("tangent requested"),
    ))
}

/// Element system with the fine coefficients eliminated.
#[derive(Debug, Clone)]
pub struct CondensedElement {
    pub k_hat: Matrix9,
    pub r_hat: Vector9,
    pub kff_inv: Matrix2<f64>,
    /// `[Kfc Kfp]`.
    pub kf_coarse: SMatrix<f64, 2, 9>,
    pub rf: Vector2<f64>,
}

impl CondensedElement {
    /// `Δβ = −Kff⁻¹ (Rf + Kfc Δv + Kfp Δp)` for local coarse increments.
    pub fn recover(&self, delta: &Vector9) -> Vector2<f64> {
        -(self.kff_inv * (self.rf + self.kf_coarse * delta))
    }
}

pub fn condense(
    res: &ElementResiduals,
    tan: &ElementTangent,
    element: usize,
) -> Result<CondensedElement> {
    let kff = tan.kff;
    let det = kff.determinant();
    let scale = kff.norm_squared();
    if !(det.abs() > 1e-14 * scale) {
        return Err(Error::FineScaleSingular { element, det });
    }
    let kff_inv = Matrix2::new(kff[(1, 1)], -kff[(0, 1)], -kff[(1, 0)], kff[(0, 0)]) / det;
    let k = tan.to_monolithic();
    let r = res.to_vector();
    let k_cc: Matrix9 = k.fixed_view::<9, 9>(0, 0).into();
    let k_cf: SMatrix<f64, 9, 2> = k.fixed_view::<9, 2>(0, 9).into();
    let kf_coarse: SMatrix<f64, 2, 9> = k.fixed_view::<2, 9>(9, 0).into();
    let r_c: Vector9 = r.fixed_rows::<9>(0).into();
    let coupling = k_cf * kff_inv;
    Ok(CondensedElement {
        k_hat: k_cc - coupling * kf_coarse,
        r_hat: r_c - coupling * res.rf,
        kff_inv,
        kf_coarse,
        rf: res.rf,
    })
}

/// Condensed elements for one Newton iteration, tied to the state they were
/// built from.
#[derive(Debug, Clone)]
pub struct Condensation {
    pub elements: Vec<CondensedElement>,
    fingerprint: u64,
}

/// Reduced Newton system over the unconstrained coarse DOFs.
#[derive(Debug, Clone)]
pub struct NewtonSystem {
    pub matrix: SparseMatrix,
    /// `−R̂` restricted to the free DOFs.
    pub rhs: Vec<f64>,
    pub condensation: Condensation,
    /// `‖[Rc; Rp]_free, Rf‖₂` at the assembly state.
    pub residual_norm: f64,
}

/// Element residuals and tangents of every element, evaluated in parallel
/// and returned in element order.
fn all_element_systems(
    problem: &Problem,
    state: &State,
    with_tangent: bool,
) -> Result<Vec<(Vector11, Option<Matrix11>)>> {
    check_state(problem, state)?;
    let mesh = &problem.mesh;
    (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let quad = ElementQuadrature::new(mesh, e)?;
            let local = LocalState::gather(mesh, e, state);
            Ok(element_system(
                &quad,
                &local,
                problem.nu,
                Some(&problem.body_force),
                with_tangent,
            ))
        })
        .collect()
}

fn check_state(problem: &Problem, state: &State) -> Result<()> {
    let mesh = &problem.mesh;
    let ok = state.vbar.len() == mesh.n_nodes()
        && state.p.len() == mesh.n_nodes()
        && state.beta.len() == mesh.n_elements()
        && state
            .previous
            .as_ref()
            .is_none_or(|p| p.vbar.len() == mesh.n_nodes() && p.dt > 0.0);
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension("state does not match the mesh".into()))
    }
}

/// Subtracts `∫ N h dΓ` on Neumann edges (2-point Gauss) from the global
/// coarse residual.
pub(crate) fn add_traction(problem: &Problem, global: &mut [f64], sign: f64) {
    if problem.bc.neumann.is_empty() {
        return;
    }
    let (s, w) = gauss_legendre_unit(2);
    let mesh = &problem.mesh;
    for (tag, traction) in &problem.bc.neumann {
        for edge in mesh.boundary_edges().iter().filter(|e| &e.tag == tag) {
            let [a, b] = edge.nodes;
            let (xa, xb) = (mesh.nodes()[a], mesh.nodes()[b]);
            let len = ((xb[0] - xa[0]).powi(2) + (xb[1] - xa[1]).powi(2)).sqrt();
            for (si, wi) in s.iter().zip(&w) {
                let x = [xa[0] + si * (xb[0] - xa[0]), xa[1] + si * (xb[1] - xa[1])];
                let h = traction(x);
                for c in 0..2 {
                    global[2 * a + c] += sign * wi * len * (1.0 - si) * h[c];
                    global[2 * b + c] += sign * wi * len * si * h[c];
                }
            }
        }
    }
}

/// Full nonlinear residual in the extended ordering
/// `[free coarse DOFs | β of every element]`.
pub fn assemble_residual(problem: &Problem, state: &State) -> Result<Vec<f64>> {
    let systems = all_element_systems(problem, state, false)?;
    let dofs = &problem.dofs;
    let mut coarse = vec![0.0; dofs.total()];
    let mut fine = vec![0.0; 2 * problem.mesh.n_elements()];
    for (e, (r, _)) in systems.iter().enumerate() {
        for (l, &g) in dofs.element_dofs(&problem.mesh, e).iter().enumerate() {
            coarse[g] += r[l];
        }
        fine[2 * e] = r[9];
        fine[2 * e + 1] = r[10];
    }
    add_traction(problem, &mut coarse, -1.0);
    let mut out: Vec<f64> = dofs.free_dofs().iter().map(|&g| coarse[g]).collect();
    out.extend(fine);
    Ok(out)
}

pub fn residual_norm(problem: &Problem, state: &State) -> Result<f64> {
    Ok(norm2(&assemble_residual(problem, state)?))
}

/// Uncondensed consistent tangent over `[free coarse DOFs | β]`.
pub fn assemble_full_tangent(problem: &Problem, state: &State) -> Result<SparseMatrix> {
    let systems = all_element_systems(problem, state, true)?;
    let dofs = &problem.dofs;
    let nf = dofs.n_free();
    let mut trips = Vec::with_capacity(121 * systems.len());
    for (e, (_, k)) in systems.iter().enumerate() {
        let k = k.as_ref().expect("tangent requested");
        let gd = dofs.element_dofs(&problem.mesh, e);
        let ext = |l: usize| -> Option<usize> {
            if l < 9 {
                dofs.free_index(gd[l])
            } else {
                Some(nf + 2 * e + (l - 9))
            }
        };
        for i in 0..11 {
            let Some(gi) = ext(i) else { continue };
            for j in 0..11 {
                if let Some(gj) = ext(j) {
                    trips.push(Triplet::new(gi, gj, k[(i, j)]));
                }
            }
        }
    }
    from_triplets(nf + 2 * problem.mesh.n_elements(), &trips)
}

/// Adds `scale·delta` (extended ordering) to the state.
pub fn apply_extended(problem: &Problem, state: &mut State, delta: &[f64], scale: f64) {
    let dofs = &problem.dofs;
    let nf = dofs.n_free();
    for (k, &g) in dofs.free_dofs().iter().enumerate() {
        let v = state.global(problem, g) + scale * delta[k];
        state.set_global(problem, g, v);
    }
    for (e, beta) in state.beta.iter_mut().enumerate() {
        beta[0] += scale * delta[nf + 2 * e];
        beta[1] += scale * delta[nf + 2 * e + 1];
    }
}

/// Condensed global Newton system at `state`.
pub fn assemble_global(problem: &Problem, state: &State) -> Result<NewtonSystem> {
    let systems = all_element_systems(problem, state, true)?;
    let dofs = &problem.dofs;
    let mesh = &problem.mesh;
    let nf = dofs.n_free();
    let condensed: Vec<CondensedElement> = systems
        .par_iter()
        .enumerate()
        .map(|(e, (r, k))| {
            let res = ElementResiduals::from_vector(r);
            let tan = ElementTangent::from_monolithic(k.as_ref().expect("tangent requested"));
            condense(&res, &tan, e)
        })
        .collect::<Result<_>>()?;

    let mut residual = vec![0.0; dofs.total()];
    let mut fine_sq = 0.0;
    let mut reduced = vec![0.0; dofs.total()];
    let mut trips = Vec::with_capacity(81 * condensed.len());
    for (e, ce) in condensed.iter().enumerate() {
        let gd = dofs.element_dofs(mesh, e);
        let r = &systems[e].0;
        fine_sq += r[9] * r[9] + r[10] * r[10];
        for i in 0..9 {
            residual[gd[i]] += r[i];
            reduced[gd[i]] += ce.r_hat[i];
            let Some(fi) = dofs.free_index(gd[i]) else {
                continue;
            };
            for j in 0..9 {
                if let Some(fj) = dofs.free_index(gd[j]) {
                    trips.push(Triplet::new(fi, fj, ce.k_hat[(i, j)]));
                }
            }
        }
    }
    add_traction(problem, &mut residual, -1.0);
    add_traction(problem, &mut reduced, -1.0);
    let coarse_sq: f64 = dofs.free_dofs().iter().map(|&g| residual[g].powi(2)).sum();
    let rhs = dofs.free_dofs().iter().map(|&g| -reduced[g]).collect();
    Ok(NewtonSystem {
        matrix: from_triplets(nf, &trips)?,
        rhs,
        condensation: Condensation {
            elements: condensed,
            fingerprint: state.fingerprint(),
        },
        residual_norm: (coarse_sq + fine_sq).sqrt(),
    })
}

fn local_delta(problem: &Problem, e: usize, delta_free: &[f64]) -> Vector9 {
    let gd = problem.dofs.element_dofs(&problem.mesh, e);
    Vector9::from_fn(|l, _| {
        problem
            .dofs
            .free_index(gd[l])
            .map_or(0.0, |k| delta_free[k])
    })
}

/// Recovers `Δβ` for every element from the coarse increment (free-DOF
/// ordering), adds it to `state.beta` and returns it. Fails if `state` has
/// changed since `condensation` was built.
pub fn recover_fine_scale(
    problem: &Problem,
    condensation: &Condensation,
    state: &mut State,
    delta_free: &[f64],
) -> Result<Vec<[f64; 2]>> {
    if condensation.fingerprint != state.fingerprint() {
        return Err(Error::StaleCondensation);
    }
    if delta_free.len() != problem.dofs.n_free()
        || condensation.elements.len() != problem.mesh.n_elements()
    {
        return Err(Error::Dimension(
            "increment does not match the DOF map".into(),
        ));
    }
    let deltas: Vec<[f64; 2]> = condensation
        .elements
        .iter()
        .enumerate()
        .map(|(e, ce)| {
            let d = ce.recover(&local_delta(problem, e, delta_free));
            [d[0], d[1]]
        })
        .collect();
    for (beta, d) in state.beta.iter_mut().zip(&deltas) {
        beta[0] += d[0];
        beta[1] += d[1];
    }
    Ok(deltas)
}

/// Applies a condensed Newton increment: recovers `β`, then updates `v̄`, `p`.
pub fn apply_newton_update(
    problem: &Problem,
    system: &NewtonSystem,
    state: &mut State,
    delta_free: &[f64],
) -> Result<()> {
    recover_fine_scale(problem, &system.condensation, state, delta_free)?;
    for (k, &g) in problem.dofs.free_dofs().iter().enumerate() {
        let v = state.global(problem, g) + delta_free[k];
        state.set_global(problem, g, v);
    }
    Ok(())
}

/// Solves the local fine-scale equations `Rf(β) = 0` element by element with
/// the coarse fields held fixed (a few local Newton steps).
pub fn solve_fine_scales(problem: &Problem, state: &mut State) -> Result<()> {
    check_state(problem, state)?;
    let mesh = &problem.mesh;
    let betas: Vec<[f64; 2]> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let quad = ElementQuadrature::new(mesh, e)?;
            let mut local = LocalState::gather(mesh, e, state);
            for _ in 0..30 {
                let (r, k) =
                    element_system(&quad, &local, problem.nu, Some(&problem.body_force), true);
                let k = k.expect("tangent requested");
                let kff: Matrix2<f64> = k.fixed_view::<2, 2>(9, 9).into();
                let rf = Vector2::new(r[9], r[10]);
                let Some(inv) = kff.try_inverse() else {
                    return Err(Error::FineScaleSingular {
                        element: e,
                        det: kff.determinant(),
                    });
                };
                let d = -(inv * rf);
                local.beta[0] += d[0];
                local.beta[1] += d[1];
                let scale = local.beta[0].abs().max(local.beta[1].abs()).max(1e-300);
                if d.amax() <= 1e-14 * scale {
                    break;
                }
            }
            Ok(local.beta)
        })
        .collect::<Result<_>>()?;
    state.beta = betas;
    Ok(())
}

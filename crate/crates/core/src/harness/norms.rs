//! Discrete error norms against a closed-form solution, and point sampling
//! of discrete fields.

use serde::{Deserialize, Serialize};

use crate::element::{interpolate, nodal_gradient, ElementQuadrature};
use crate::error::{Error, Result};
use crate::harness::problems::ExactSolution;
use crate::mesh::{Mesh, Point};
use crate::newton::State;

/// Quadrature degree used for error integrals.
pub const ERROR_QUADRATURE_DEGREE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    /// `‖v_h − v‖_{L2}`.
    pub l2_velocity: f64,
    /// `|p_h − p|_{H1}`.
    pub h1_semi_pressure: f64,
    /// `‖p_h − p‖_{L2}`.
    pub l2_pressure: f64,
}

/// Errors of the coarse fields of `state` against `exact`.
pub fn error_norms(
    state: &State,
    exact: Option<&ExactSolution>,
    mesh: &Mesh,
) -> Result<ErrorNorms> {
    let exact =
        exact.ok_or_else(|| Error::InvalidArgument("error norms need an exact solution".into()))?;
    if state.vbar.len() != mesh.n_nodes() || state.p.len() != mesh.n_nodes() {
        return Err(Error::Dimension("state does not match the mesh".into()));
    }
    let (mut ev, mut ep, mut egp) = (0.0, 0.0, 0.0);
    for e in 0..mesh.n_elements() {
        let quad = ElementQuadrature::with_degree(mesh, e, ERROR_QUADRATURE_DEGREE)?;
        let t = mesh.triangles()[e];
        let v = t.map(|n| state.vbar[n]);
        let p = t.map(|n| [state.p[n], 0.0]);
        let gp = nodal_gradient(&quad.gn, &p)[0];
        for q in &quad.points {
            let vh = interpolate(&q.n, &v);
            let ph = interpolate(&q.n, &p)[0];
            let ve = (exact.velocity)(q.x);
            let ge = (exact.pressure_gradient)(q.x);
            ev += q.w * ((vh[0] - ve[0]).powi(2) + (vh[1] - ve[1]).powi(2));
            ep += q.w * (ph - (exact.pressure)(q.x)).powi(2);
            egp += q.w * ((gp[0] - ge[0]).powi(2) + (gp[1] - ge[1]).powi(2));
        }
    }
    Ok(ErrorNorms {
        l2_velocity: ev.sqrt(),
        h1_semi_pressure: egp.sqrt(),
        l2_pressure: ep.sqrt(),
    })
}

/// State holding the nodal values of `exact` (bubbles zero).
pub fn nodal_interpolant(mesh: &Mesh, exact: &ExactSolution) -> State {
    let mut s = State::zeros(mesh);
    for (i, &x) in mesh.nodes().iter().enumerate() {
        s.vbar[i] = (exact.velocity)(x);
        s.p[i] = (exact.pressure)(x);
    }
    s
}

/// `L2` norm of the velocity difference of two states on the same mesh.
pub fn l2_velocity_difference(mesh: &Mesh, a: &State, b: &State) -> Result<f64> {
    let mut acc = 0.0;
    for e in 0..mesh.n_elements() {
        let quad = ElementQuadrature::with_degree(mesh, e, 2)?;
        let t = mesh.triangles()[e];
        let d = t.map(|n| [a.vbar[n][0] - b.vbar[n][0], a.vbar[n][1] - b.vbar[n][1]]);
        for q in &quad.points {
            let v = interpolate(&q.n, &d);
            acc += q.w * (v[0] * v[0] + v[1] * v[1]);
        }
    }
    Ok(acc.sqrt())
}

/// Barycentric coordinates `[N0, N1, N2]` of `x` in element `e`.
fn barycentric(mesh: &Mesh, e: usize, x: Point) -> [f64; 3] {
    let [a, b, c] = mesh.element_coords(e);
    let det = (a[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (a[1] - c[1]);
    let l0 = ((x[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (x[1] - c[1])) / det;
    let l1 = ((a[0] - c[0]) * (x[1] - c[1]) - (x[0] - c[0]) * (a[1] - c[1])) / det;
    [l0, l1, 1.0 - l0 - l1]
}

/// Element containing `x` (within a small tolerance) and its barycentric
/// coordinates.
pub fn locate(mesh: &Mesh, x: Point) -> Option<(usize, [f64; 3])> {
    let mut best: Option<(usize, [f64; 3], f64)> = None;
    for e in 0..mesh.n_elements() {
        let l = barycentric(mesh, e, x);
        let worst = l.iter().copied().fold(f64::INFINITY, f64::min);
        if worst >= 0.0 {
            return Some((e, l));
        }
        if best.is_none_or(|(_, _, w)| worst > w) {
            best = Some((e, l, worst));
        }
    }
    best.filter(|&(_, _, w)| w > -1e-10).map(|(e, l, _)| (e, l))
}

/// Coarse velocity and pressure at `x`, or `None` outside the mesh.
pub fn sample(mesh: &Mesh, state: &State, x: Point) -> Option<([f64; 2], f64)> {
    let (e, l) = locate(mesh, x)?;
    let t = mesh.triangles()[e];
    let v = interpolate(&l, &t.map(|n| state.vbar[n]));
    let p = l[0] * state.p[t[0]] + l[1] * state.p[t[1]] + l[2] * state.p[t[2]];
    Some((v, p))
}

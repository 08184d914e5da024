//! Per-element quadrature data shared by the Newton and fixed-point kernels.

use crate::error::Result;
use crate::fem::{
    element_geometry, t3_bubble, t3_shape, triangle_quadrature, ElementGeometry,
    DEFAULT_QUADRATURE_DEGREE,
};
use crate::mesh::{Mesh, Point};

#[derive(Debug, Clone, Copy)]
pub(crate) struct QuadPoint {
    /// Quadrature weight times `det J`.
    pub w: f64,
    pub x: Point,
    pub n: [f64; 3],
    pub b: f64,
    pub gb: [f64; 2],
}

#[derive(Debug, Clone)]
pub(crate) struct ElementQuadrature {
    pub geom: ElementGeometry,
    /// Physical shape gradients, constant on an affine triangle.
    pub gn: [[f64; 2]; 3],
    pub points: Vec<QuadPoint>,
}

impl ElementQuadrature {
    pub fn new(mesh: &Mesh, e: usize) -> Result<Self> {
        Self::with_degree(mesh, e, DEFAULT_QUADRATURE_DEGREE)
    }

    pub fn with_degree(mesh: &Mesh, e: usize, degree: usize) -> Result<Self> {
        let geom = element_geometry(&mesh.element_coords(e), e)?;
        let rule = triangle_quadrature(degree)?;
        let gn = t3_shape([0.0, 0.0]).physical_gradients(&geom);
        let points = rule
            .iter()
            .map(|(xi, w)| {
                let s = t3_shape(xi);
                let bub = t3_bubble(xi);
                QuadPoint {
                    w: w * geom.det_j,
                    x: geom.map(xi),
                    n: s.n,
                    b: bub.b,
                    gb: bub.physical_gradient(&geom),
                }
            })
            .collect();
        Ok(ElementQuadrature { geom, gn, points })
    }
}

pub(crate) fn interpolate(n: &[f64; 3], values: &[[f64; 2]; 3]) -> [f64; 2] {
    let mut v = [0.0; 2];
    for a in 0..3 {
        v[0] += n[a] * values[a][0];
        v[1] += n[a] * values[a][1];
    }
    v
}

/// `(∇v)_ij = Σ_a v_a[i] ∂N_a/∂x_j` for nodal values `values`.
pub(crate) fn nodal_gradient(gn: &[[f64; 2]; 3], values: &[[f64; 2]; 3]) -> [[f64; 2]; 2] {
    let mut g = [[0.0; 2]; 2];
    for a in 0..3 {
        for i in 0..2 {
            for j in 0..2 {
                g[i][j] += values[a][i] * gn[a][j];
            }
        }
    }
    g
}

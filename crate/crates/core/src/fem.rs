//! Reference-element machinery for linear triangles (T3).
//!
//! Reference coordinates are `(ξ1, ξ2)` on the triangle `ξ1, ξ2 ≥ 0,
//! ξ1 + ξ2 ≤ 1`, with shape functions `N = [ξ1, ξ2, 1 − ξ1 − ξ2]`, so node 0
//! sits at `ξ = (1, 0)`, node 1 at `(0, 1)` and node 2 at the origin.
//!
//! Gradients of vector fields follow `(∇v)_ij = ∂v_i/∂x_j`, and `vec` stacks
//! columns, so `vec(∇v) = [∂v1/∂x1, ∂v2/∂x1, ∂v1/∂x2, ∂v2/∂x2]`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::mesh::Point;

/// T3 shape values and reference derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeEval {
    pub n: [f64; 3],
    /// `dn[a] = [∂N_a/∂ξ1, ∂N_a/∂ξ2]`.
    pub dn: [[f64; 2]; 3],
}

impl ShapeEval {
    /// Physical gradients `(DN)·J⁻¹`, one row per node.
    pub fn physical_gradients(&self, geom: &ElementGeometry) -> [[f64; 2]; 3] {
        self.dn.map(|row| geom.to_physical(row))
    }
}

pub fn t3_shape(xi: [f64; 2]) -> ShapeEval {
    ShapeEval {
        n: [xi[0], xi[1], 1.0 - xi[0] - xi[1]],
        dn: [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]],
    }
}

/// Element bubble `b = ξ1 ξ2 (1 − ξ1 − ξ2)` and its reference gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleEval {
    pub b: f64,
    pub grad_ref: [f64; 2],
}

impl BubbleEval {
    pub fn physical_gradient(&self, geom: &ElementGeometry) -> [f64; 2] {
        geom.to_physical(self.grad_ref)
    }
}

pub fn t3_bubble(xi: [f64; 2]) -> BubbleEval {
    let [x1, x2] = xi;
    BubbleEval {
        b: x1 * x2 * (1.0 - x1 - x2),
        grad_ref: [x2 * (1.0 - 2.0 * x1 - x2), x1 * (1.0 - x1 - 2.0 * x2)],
    }
}

/// Affine reference-to-physical map of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    /// `J_ij = ∂x_i/∂ξ_j`.
    pub j: Matrix2<f64>,
    pub det_j: f64,
    pub j_inv: Matrix2<f64>,
    origin: Point,
}

const MIN_DET_J: f64 = 1e-14;

impl ElementGeometry {
    /// Maps a reference-coordinate row gradient to physical coordinates
    /// (right-multiplication by `J⁻¹`).
    pub fn to_physical(&self, g_ref: [f64; 2]) -> [f64; 2] {
        let r = nalgebra::RowVector2::new(g_ref[0], g_ref[1]) * self.j_inv;
        [r[0], r[1]]
    }

    pub fn map(&self, xi: [f64; 2]) -> Point {
        let x = self.j * Vector2::new(xi[0], xi[1]);
        [self.origin[0] + x[0], self.origin[1] + x[1]]
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det_j
    }
}

/// Jacobian of element `element` with node positions `coords`. Fails with
/// [`Error::DegenerateElement`] when `det J ≤ 1e-14` (including clockwise order).
pub fn element_geometry(coords: &[Point; 3], element: usize) -> Result<ElementGeometry> {
    let [x0, x1, x2] = *coords;
    let j = Matrix2::new(x0[0] - x2[0], x1[0] - x2[0], x0[1] - x2[1], x1[1] - x2[1]);
    let det_j = j.determinant();
    if !(det_j > MIN_DET_J) {
        return Err(Error::DegenerateElement { element, det_j });
    }
    let j_inv = Matrix2::new(j[(1, 1)], -j[(0, 1)], -j[(1, 0)], j[(0, 0)]) / det_j;
    Ok(ElementGeometry {
        j,
        det_j,
        j_inv,
        origin: x2,
    })
}

/// Symmetric quadrature rule on the reference triangle (weights sum to 1/2).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }
}

/// Highest polynomial degree for which a triangle rule is available.
pub const MAX_QUADRATURE_DEGREE: usize = 24;

/// Degree used for all element integrals.
pub const DEFAULT_QUADRATURE_DEGREE: usize = 8;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Newton on P_n from the Chebyshev-like initial guess.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn centroid_rule() -> QuadratureRule {
    QuadratureRule {
        degree: 1,
        points: vec![[1.0 / 3.0, 1.0 / 3.0]],
        weights: vec![0.5],
    }
}

fn three_point_rule() -> QuadratureRule {
    let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
    QuadratureRule {
        degree: 2,
        points: vec![[a, a], [b, a], [a, b]],
        weights: vec![1.0 / 6.0; 3],
    }
}

/// Radon's seven-point degree-5 rule.
fn seven_point_rule() -> QuadratureRule {
    let s15 = 15f64.sqrt();
    let (a1, b1) = ((6.0 - s15) / 21.0, (9.0 + 2.0 * s15) / 21.0);
    let (a2, b2) = ((6.0 + s15) / 21.0, (9.0 - 2.0 * s15) / 21.0);
    let w1 = (155.0 - s15) / 2400.0;
    let w2 = (155.0 + s15) / 2400.0;
    QuadratureRule {
        degree: 5,
        points: vec![
            [1.0 / 3.0, 1.0 / 3.0],
            [a1, a1],
            [b1, a1],
            [a1, b1],
            [a2, a2],
            [b2, a2],
            [a2, b2],
        ],
        weights: vec![9.0 / 80.0, w1, w1, w1, w2, w2, w2],
    }
}

/// Conical product (collapsed Gauss) rule exact to `degree`.
fn collapsed_gauss_rule(degree: usize) -> QuadratureRule {
    // The (1 - s) Jacobian raises the degree in s by one.
    let n = (degree + 3) / 2;
    let (x, w) = gauss_legendre_unit(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (s, ws) in x.iter().zip(&w) {
        for (t, wt) in x.iter().zip(&w) {
            points.push([*s, t * (1.0 - s)]);
            weights.push(ws * wt * (1.0 - s));
        }
    }
    QuadratureRule {
        degree,
        points,
        weights,
    }
}

/// Positive-weight interior rule exact for polynomials of degree `min_degree`.
pub fn triangle_quadrature(min_degree: usize) -> Result<&'static QuadratureRule> {
    static RULES: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    if min_degree > MAX_QUADRATURE_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "no triangle rule of degree {min_degree} (maximum {MAX_QUADRATURE_DEGREE})"
        )));
    }
    let rules = RULES.get_or_init(|| {
        (0..=MAX_QUADRATURE_DEGREE)
            .map(|d| match d {
                0 | 1 => centroid_rule(),
                2 => three_point_rule(),
                3..=5 => seven_point_rule(),
                _ => collapsed_gauss_rule(d),
            })
            .collect()
    });
    Ok(&rules[min_degree])
}

/// Kronecker product `A ⊙ B = [a_ij B]`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = a.shape();
    let (r, s) = b.shape();
    DMatrix::from_fn(p * r, q * s, |i, j| a[(i / r, j / s)] * b[(i % r, j % s)])
}

/// Column-stacking `vec`.
pub fn vec(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().copied())
}

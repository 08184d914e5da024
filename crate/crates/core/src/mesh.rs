//! Structured triangulations, boundary tagging and degree-of-freedom numbering.
//!
//! Meshes are immutable once built. Global unknowns are numbered node-major
//! with interleaved velocity components (`v0x, v0y, v1x, v1y, ...`) followed
//! by one pressure unknown per node. Fine-scale bubble coefficients live on
//! elements and never enter the global numbering.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// A vector-valued function of position (prescribed velocity, traction, body force).
pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

/// Wraps a closure as a [`VectorField`].
pub fn field<F>(f: F) -> VectorField
where
    F: Fn(Point) -> [f64; 2] + Send + Sync + 'static,
{
    Arc::new(f)
}

/// The zero vector field.
pub fn zero_field() -> VectorField {
    field(|_| [0.0, 0.0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
}

const MIN_AREA: f64 = 1e-300;

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Builds a mesh and checks orientation, index ranges and the edge-manifold
    /// property (boundary edges are exactly the edges owned by one triangle).
    pub fn new(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        let mesh = Mesh {
            nodes,
            triangles,
            boundary_edges,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (e, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {e} references node out of range ({tri:?}, {n} nodes)"
                )));
            }
            let area = self.signed_area(e);
            if !(area > MIN_AREA) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {e} is not counterclockwise (signed area {area:e})"
                )));
            }
        }
        let owners = self.edge_owner_counts();
        if let Some((edge, count)) = owners.iter().find(|(_, &c)| c > 2) {
            return Err(Error::InvalidMesh(format!(
                "edge {edge:?} shared by {count} triangles"
            )));
        }
        let mut seen = BTreeSet::new();
        for be in &self.boundary_edges {
            let [a, b] = be.nodes;
            if a >= n || b >= n {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge {:?} out of range",
                    be.nodes
                )));
            }
            let key = edge_key(a, b);
            if owners.get(&key) != Some(&1) {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge {key:?} is not owned by exactly one triangle"
                )));
            }
            if !seen.insert(key) {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge {key:?} listed twice"
                )));
            }
        }
        let n_boundary = owners.values().filter(|&&c| c == 1).count();
        if n_boundary != seen.len() {
            return Err(Error::InvalidMesh(format!(
                "{} boundary edges in the triangulation but {} tagged",
                n_boundary,
                seen.len()
            )));
        }
        Ok(())
    }

    /// Number of triangles sharing each (sorted) edge.
    pub fn edge_owner_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut owners = HashMap::with_capacity(self.triangles.len() * 2);
        for tri in &self.triangles {
            for k in 0..3 {
                *owners
                    .entry(edge_key(tri[k], tri[(k + 1) % 3]))
                    .or_insert(0) += 1;
            }
        }
        owners
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.triangles.len()
    }

    /// Distinct boundary tags, sorted.
    pub fn tags(&self) -> BTreeSet<&str> {
        self.boundary_edges.iter().map(|e| e.tag.as_str()).collect()
    }

    pub fn element_coords(&self, e: usize) -> [Point; 3] {
        let t = self.triangles[e];
        [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]]
    }

    pub fn signed_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.element_coords(e);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.signed_area(e)).sum()
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Index of the node closest to `p`.
    pub fn nearest_node(&self, p: Point) -> usize {
        let d2 = |q: &Point| (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
        self.nodes
            .iter()
            .enumerate()
            .min_by(|a, b| d2(a.1).total_cmp(&d2(b.1)))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Plain-text export: node count then `x y` lines, triangle count then
    /// `i j k` lines, boundary-edge count then `a b tag` lines.
    pub fn to_text(&self) -> String {
        use fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{} {}", p[0], p[1]);
        }
        let _ = writeln!(s, "{}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "{}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let _ = writeln!(s, "{} {} {}", e.nodes[0], e.nodes[1], e.tag);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("unexpected end of input reading {what}")))
        };
        fn num<T: std::str::FromStr>(tok: &str, what: &str) -> Result<T> {
            tok.parse()
                .map_err(|_| Error::Parse(format!("bad {what}: {tok:?}")))
        }
        let n_nodes: usize = num(next("node count")?, "node count")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let x = num(next("x")?, "coordinate")?;
            let y = num(next("y")?, "coordinate")?;
            nodes.push([x, y]);
        }
        let n_tri: usize = num(next("triangle count")?, "triangle count")?;
        let mut triangles = Vec::with_capacity(n_tri);
        for _ in 0..n_tri {
            let mut t = [0usize; 3];
            for v in &mut t {
                *v = num(next("triangle index")?, "triangle index")?;
            }
            triangles.push(t);
        }
        let n_edges: usize = num(next("edge count")?, "edge count")?;
        let mut edges = Vec::with_capacity(n_edges);
        for _ in 0..n_edges {
            let a = num(next("edge node")?, "edge node")?;
            let b = num(next("edge node")?, "edge node")?;
            let tag = next("edge tag")?.to_string();
            edges.push(BoundaryEdge { nodes: [a, b], tag });
        }
        if let Some(extra) = tokens.next() {
            return Err(Error::Parse(format!("trailing token {extra:?}")));
        }
        Mesh::new(nodes, triangles, edges)
    }
}

/// Builds a triangulation from the active cells of a uniform lattice. Each
/// cell is cut along its lower-left to upper-right diagonal; boundary edges
/// are extracted and tagged by `tag_of(midpoint)`.
fn lattice_mesh(
    nx: usize,
    ny: usize,
    h: [f64; 2],
    cell_active: impl Fn(usize, usize) -> bool,
    tag_of: impl Fn(Point, Point) -> String,
) -> Result<Mesh> {
    let lattice = |i: usize, j: usize| j * (nx + 1) + i;
    let mut used = vec![false; (nx + 1) * (ny + 1)];
    let mut cells = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if cell_active(i, j) {
                cells.push((i, j));
                for (di, dj) in [(0, 0), (1, 0), (1, 1), (0, 1)] {
                    used[lattice(i + di, j + dj)] = true;
                }
            }
        }
    }
    let mut renumber = vec![usize::MAX; used.len()];
    let mut nodes = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let l = lattice(i, j);
            if used[l] {
                renumber[l] = nodes.len();
                nodes.push([i as f64 * h[0], j as f64 * h[1]]);
            }
        }
    }
    let mut triangles = Vec::with_capacity(2 * cells.len());
    for &(i, j) in &cells {
        let a = renumber[lattice(i, j)];
        let b = renumber[lattice(i + 1, j)];
        let c = renumber[lattice(i + 1, j + 1)];
        let d = renumber[lattice(i, j + 1)];
        triangles.push([a, b, c]);
        triangles.push([a, c, d]);
    }
    // Boundary edges keep the counterclockwise orientation of their owner.
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &triangles {
        for k in 0..3 {
            *count.entry(edge_key(t[k], t[(k + 1) % 3])).or_insert(0) += 1;
        }
    }
    let mut boundary_edges = Vec::new();
    for t in &triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if count[&edge_key(a, b)] == 1 {
                boundary_edges.push(BoundaryEdge {
                    nodes: [a, b],
                    tag: tag_of(nodes[a], nodes[b]),
                });
            }
        }
    }
    Mesh::new(nodes, triangles, boundary_edges)
}

/// Uniform `n × n` triangulation of the unit square with tags
/// `left`, `right`, `bottom`, `top`.
pub fn unit_square_mesh(n: usize) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "unit square needs at least 2 subdivisions, got {n}"
        )));
    }
    let h = 1.0 / n as f64;
    let eps = 0.25 * h;
    lattice_mesh(
        n,
        n,
        [h, h],
        |_, _| true,
        |a, b| {
            let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            if m[1] < eps {
                "bottom"
            } else if m[1] > 1.0 - eps {
                "top"
            } else if m[0] < eps {
                "left"
            } else {
                "right"
            }
            .to_string()
        },
    )
}

/// Dimensions of the backward-facing step channel. The inflow section spans
/// `x = 0`, `y ∈ [step_height, channel_height]`; the step corner sits at
/// `(upstream_len, step_height)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepGeometry {
    pub upstream_len: f64,
    pub downstream_len: f64,
    pub step_height: f64,
    pub channel_height: f64,
}

impl Default for StepGeometry {
    fn default() -> Self {
        StepGeometry {
            upstream_len: 1.0,
            downstream_len: 7.0,
            step_height: 0.5,
            channel_height: 1.0,
        }
    }
}

impl StepGeometry {
    pub fn length(&self) -> f64 {
        self.upstream_len + self.downstream_len
    }

    pub fn area(&self) -> f64 {
        self.upstream_len * (self.channel_height - self.step_height)
            + self.downstream_len * self.channel_height
    }
}

fn cells_along(len: f64, h: f64, what: &str) -> Result<usize> {
    let k = len / h;
    let r = k.round();
    if r < 1.0 || (k - r).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "edge length {h} does not divide {what} = {len}"
        )));
    }
    Ok(r as usize)
}

/// Structured triangulation of the L-shaped backward-facing step channel with
/// tags `inflow`, `outflow`, `walls`.
pub fn backward_step_mesh(geom: StepGeometry, h: f64) -> Result<Mesh> {
    let StepGeometry {
        upstream_len,
        downstream_len,
        step_height,
        channel_height,
    } = geom;
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "edge length must be positive, got {h}"
        )));
    }
    if !(step_height > 0.0 && step_height < channel_height) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < step_height < channel_height, got {step_height} and {channel_height}"
        )));
    }
    if !(upstream_len > 0.0 && downstream_len > 0.0) {
        return Err(Error::InvalidArgument(
            "channel lengths must be positive".into(),
        ));
    }
    let nu = cells_along(upstream_len, h, "upstream length")?;
    let nd = cells_along(downstream_len, h, "downstream length")?;
    let ns = cells_along(step_height, h, "step height")?;
    let ny = cells_along(channel_height, h, "channel height")?;
    let total = geom.length();
    let eps = 0.25 * h;
    lattice_mesh(
        nu + nd,
        ny,
        [h, h],
        |i, j| !(i < nu && j < ns),
        |a, b| {
            if a[0] < eps && b[0] < eps {
                "inflow"
            } else if a[0] > total - eps && b[0] > total - eps {
                "outflow"
            } else {
                "walls"
            }
            .to_string()
        },
    )
}

/// Velocity (Dirichlet), traction (Neumann) and pressure-pin data.
///
/// Dirichlet entries are kept in priority order: a node touched by several
/// Dirichlet tags takes the value of the first one listed.
#[derive(Clone, Default)]
pub struct BoundaryConditions {
    pub dirichlet: Vec<(String, VectorField)>,
    pub neumann: Vec<(String, VectorField)>,
    pub pressure_pin: Option<(usize, f64)>,
}

impl fmt::Debug for BoundaryConditions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryConditions")
            .field(
                "dirichlet",
                &self.dirichlet.iter().map(|d| &d.0).collect::<Vec<_>>(),
            )
            .field(
                "neumann",
                &self.neumann.iter().map(|d| &d.0).collect::<Vec<_>>(),
            )
            .field("pressure_pin", &self.pressure_pin)
            .finish()
    }
}

impl BoundaryConditions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dirichlet(mut self, tag: &str, value: VectorField) -> Self {
        self.dirichlet.push((tag.to_string(), value));
        self
    }

    pub fn neumann(mut self, tag: &str, traction: VectorField) -> Self {
        self.neumann.push((tag.to_string(), traction));
        self
    }

    pub fn pin_pressure(mut self, node: usize, value: f64) -> Self {
        self.pressure_pin = Some((node, value));
        self
    }

    pub fn is_dirichlet(&self, tag: &str) -> bool {
        self.dirichlet.iter().any(|(t, _)| t == tag)
    }
}

/// Global equation numbering with the Dirichlet/pin constraints resolved.
#[derive(Debug, Clone)]
pub struct DofMap {
    n_nodes: usize,
    n_elements: usize,
    constrained: BTreeMap<usize, f64>,
    free: Vec<usize>,
    free_index: Vec<Option<usize>>,
}

impl DofMap {
    pub fn velocity_dof(&self, node: usize, component: usize) -> usize {
        debug_assert!(component < 2);
        2 * node + component
    }

    pub fn pressure_dof(&self, node: usize) -> usize {
        2 * self.n_nodes + node
    }

    /// Element-local fine-scale coefficients, numbered `2e, 2e + 1` in their own space.
    pub fn fine_dofs(&self, element: usize) -> [usize; 2] {
        [2 * element, 2 * element + 1]
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn n_velocity(&self) -> usize {
        2 * self.n_nodes
    }

    pub fn total(&self) -> usize {
        3 * self.n_nodes
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn constrained(&self) -> &BTreeMap<usize, f64> {
        &self.constrained
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.constrained.contains_key(&dof)
    }

    /// Position of a global DOF in the reduced (unconstrained) system.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    /// Global indices of the unconstrained DOFs, ascending.
    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    /// Global DOF indices of element `e` in local order
    /// `[v0x, v0y, v1x, v1y, v2x, v2y, p0, p1, p2]`.
    pub fn element_dofs(&self, mesh: &Mesh, e: usize) -> [usize; 9] {
        let t = mesh.triangles()[e];
        let mut d = [0; 9];
        for a in 0..3 {
            d[2 * a] = self.velocity_dof(t[a], 0);
            d[2 * a + 1] = self.velocity_dof(t[a], 1);
            d[6 + a] = self.pressure_dof(t[a]);
        }
        d
    }
}

pub fn build_dof_map(mesh: &Mesh, bc: &BoundaryConditions) -> Result<DofMap> {
    let tags = mesh.tags();
    for (tag, _) in bc.dirichlet.iter().chain(&bc.neumann) {
        if !tags.contains(tag.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "boundary tag {tag:?} is not present in the mesh (tags: {tags:?})"
            )));
        }
    }
    if let Some((tag, _)) = bc.neumann.iter().find(|(t, _)| bc.is_dirichlet(t)) {
        return Err(Error::InvalidArgument(format!(
            "tag {tag:?} is both Dirichlet and Neumann"
        )));
    }
    let all_dirichlet = mesh
        .boundary_edges()
        .iter()
        .all(|e| bc.is_dirichlet(&e.tag));
    if all_dirichlet && bc.pressure_pin.is_none() {
        return Err(Error::InvalidArgument(
            "velocity is prescribed on the whole boundary: a pressure pin is required".into(),
        ));
    }
    let n = mesh.n_nodes();
    let mut constrained = BTreeMap::new();
    let mut assigned = vec![false; n];
    for (tag, value) in &bc.dirichlet {
        for edge in mesh.boundary_edges().iter().filter(|e| &e.tag == tag) {
            for &node in &edge.nodes {
                if !assigned[node] {
                    assigned[node] = true;
                    let v = value(mesh.nodes()[node]);
                    constrained.insert(2 * node, v[0]);
                    constrained.insert(2 * node + 1, v[1]);
                }
            }
        }
    }
    if let Some((node, value)) = bc.pressure_pin {
        if node >= n {
            return Err(Error::InvalidArgument(format!(
                "pressure pin node {node} out of range"
            )));
        }
        constrained.insert(2 * n + node, value);
    }
    let total = 3 * n;
    let mut free = Vec::with_capacity(total - constrained.len());
    let mut free_index = vec![None; total];
    for (dof, slot) in free_index.iter_mut().enumerate() {
        if !constrained.contains_key(&dof) {
            *slot = Some(free.len());
            free.push(dof);
        }
    }
    Ok(DofMap {
        n_nodes: n,
        n_elements: mesh.n_elements(),
        constrained,
        free,
        free_index,
    })
}

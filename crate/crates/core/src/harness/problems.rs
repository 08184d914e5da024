//! Built-in benchmark problems.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{
    backward_step_mesh, field, unit_square_mesh, zero_field, BoundaryConditions, Point,
    StepGeometry,
};
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemName {
    BodyForceCavity,
    LidCavity,
    BackwardStep,
}

impl ProblemName {
    pub const ALL: [ProblemName; 3] = [
        ProblemName::BodyForceCavity,
        ProblemName::LidCavity,
        ProblemName::BackwardStep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemName::BodyForceCavity => "body_force_cavity",
            ProblemName::LidCavity => "lid_cavity",
            ProblemName::BackwardStep => "backward_step",
        }
    }
}

impl fmt::Display for ProblemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown problem '{s}'")))
    }
}

/// Closed-form velocity, pressure and pressure gradient.
#[derive(Clone, Copy)]
pub struct ExactSolution {
    pub velocity: fn(Point) -> [f64; 2],
    pub pressure: fn(Point) -> f64,
    pub pressure_gradient: fn(Point) -> [f64; 2],
}

impl fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ExactSolution")
    }
}

/// Mesh resolution of a benchmark: cells per side for the cavities, edge
/// length for the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshParams {
    Cells(usize),
    EdgeLength(f64),
}

impl MeshParams {
    /// Representative element edge length.
    pub fn h(self) -> f64 {
        match self {
            MeshParams::Cells(n) => 1.0 / n as f64,
            MeshParams::EdgeLength(h) => h,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: ProblemName,
    pub mesh_params: MeshParams,
    pub problem: Problem,
    /// Present only for the body-force cavity at unit viscosity.
    pub exact: Option<ExactSolution>,
}

impl ProblemSpec {
    /// The same benchmark at another Reynolds number.
    pub fn with_reynolds(&self, re: f64) -> Result<Self> {
        check_re(re)?;
        let problem = self.problem.with_reynolds(re);
        let exact = match self.name {
            ProblemName::BodyForceCavity if problem.nu == 1.0 => Some(body_force_exact()),
            _ => None,
        };
        Ok(ProblemSpec {
            problem,
            exact,
            ..self.clone()
        })
    }
}

fn check_re(re: f64) -> Result<()> {
    if re > 0.0 && re.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "Reynolds number must be positive, got {re}"
        )))
    }
}

fn closed_square(
    n: usize,
    min_n: usize,
    top: [f64; 2],
) -> Result<(crate::mesh::Mesh, BoundaryConditions)> {
    if n < min_n {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_n} cells per side, got {n}"
        )));
    }
    let mesh = unit_square_mesh(n)?;
    let bc = BoundaryConditions::new()
        .dirichlet("left", zero_field())
        .dirichlet("right", zero_field())
        .dirichlet("bottom", zero_field())
        .dirichlet("top", field(move |_| top));
    Ok((mesh, bc))
}

pub fn body_force(x: Point) -> [f64; 2] {
    let [x, y] = x;
    let (x2, x3, x4) = (x * x, x * x * x, x * x * x * x);
    let (y2, y3, y4) = (y * y, y * y * y, y * y * y * y);
    let vx = x2 * (1.0 - x).powi(2) * (2.0 * y - 6.0 * y2 + 4.0 * y3);
    let vy = -y2 * (1.0 - y).powi(2) * (2.0 * x - 6.0 * x2 + 4.0 * x3);
    let bx = (12.0 - 24.0 * y) * x4
        + (-24.0 + 48.0 * y) * x3
        + (-48.0 * y + 72.0 * y2 - 48.0 * y3 + 12.0) * x2
        + (-2.0 + 24.0 * y - 72.0 * y2 + 48.0 * y3) * x
        + 1.0
        - 4.0 * y
        + 12.0 * y2
        - 8.0 * y3
        + (4.0 * x * y - 12.0 * x * y2 + 8.0 * x * y3 - 12.0 * x2 * y + 36.0 * x2 * y2
            - 24.0 * x2 * y3
            + 8.0 * x3 * y
            - 24.0 * x3 * y2
            + 16.0 * x3 * y3)
            * vx
        + (2.0 * x2 - 12.0 * x2 * y + 12.0 * x2 * y2 - 4.0 * x3 + 24.0 * x3 * y - 24.0 * x3 * y2
            + 2.0 * x4
            - 12.0 * x4 * y
            + 12.0 * x4 * y2)
            * vy;
    let by = (8.0 - 48.0 * y + 48.0 * y2) * x3
        + (-12.0 + 72.0 * y - 72.0 * y2) * x2
        + (4.0 - 24.0 * y + 48.0 * y2 - 48.0 * y3 + 24.0 * y4) * x
        - 12.0 * y2
        + 24.0 * y3
        - 12.0 * y4
        + (-2.0 * y2 + 12.0 * y2 * x - 12.0 * y2 * x2 + 4.0 * y3 - 24.0 * y3 * x + 24.0 * y3 * x2
            - 2.0 * y4
            + 12.0 * y4 * x
            - 12.0 * y4 * x2)
            * vx
        + (-4.0 * y * x + 12.0 * y * x2 - 8.0 * y * x3 + 12.0 * y2 * x - 36.0 * y2 * x2
            + 24.0 * y2 * x3
            - 8.0 * y3 * x
            + 24.0 * y3 * x2
            - 16.0 * y3 * x3)
            * vy;
    [bx, by]
}

fn exact_velocity(x: Point) -> [f64; 2] {
    let [x, y] = x;
    [
        x * x * (1.0 - x).powi(2) * (2.0 * y - 6.0 * y * y + 4.0 * y.powi(3)),
        -y * y * (1.0 - y).powi(2) * (2.0 * x - 6.0 * x * x + 4.0 * x.powi(3)),
    ]
}

fn exact_pressure(x: Point) -> f64 {
    x[0] * (1.0 - x[0])
}

fn exact_pressure_gradient(x: Point) -> [f64; 2] {
    [1.0 - 2.0 * x[0], 0.0]
}

pub fn body_force_exact() -> ExactSolution {
    ExactSolution {
        velocity: exact_velocity,
        pressure: exact_pressure,
        pressure_gradient: exact_pressure_gradient,
    }
}

/// Unit-square cavity with no-slip walls driven by the manufactured body
/// force. The exact solution holds at `ν = 1` (`re = 1`); the pressure is
/// pinned at the corner node `(0, 0)` to its exact value there.
pub fn body_force_cavity(n: usize, re: f64) -> Result<ProblemSpec> {
    check_re(re)?;
    let (mesh, bc) = closed_square(n, 4, [0.0, 0.0])?;
    let pin = mesh.nearest_node([0.0, 0.0]);
    let pin_value = exact_pressure(mesh.nodes()[pin]);
    let problem = Problem::new(
        mesh,
        bc.pin_pressure(pin, pin_value),
        1.0 / re,
        field(body_force),
    )?;
    let exact = (problem.nu == 1.0).then(body_force_exact);
    Ok(ProblemSpec {
        name: ProblemName::BodyForceCavity,
        mesh_params: MeshParams::Cells(n),
        problem,
        exact,
    })
}

/// Lid-driven unit cavity: `u = (1, 0)` on the top, no-slip elsewhere. The top
/// corner nodes belong to the vertical walls and carry zero velocity.
pub fn lid_cavity(n: usize, re: f64) -> Result<ProblemSpec> {
    check_re(re)?;
    let (mesh, bc) = closed_square(n, 8, [1.0, 0.0])?;
    let pin = mesh.nearest_node([0.0, 0.0]);
    let problem = Problem::new(mesh, bc.pin_pressure(pin, 0.0), 1.0 / re, zero_field())?;
    Ok(ProblemSpec {
        name: ProblemName::LidCavity,
        mesh_params: MeshParams::Cells(n),
        problem,
        exact: None,
    })
}

/// Backward-facing step with a parabolic inflow of unit peak speed, no-slip
/// walls and a traction-free outflow. The Reynolds number is based on the
/// peak inflow speed and the channel height.
pub fn backward_step(h: f64, re: f64) -> Result<ProblemSpec> {
    backward_step_with(StepGeometry::default(), h, re)
}

pub fn backward_step_with(geom: StepGeometry, h: f64, re: f64) -> Result<ProblemSpec> {
    check_re(re)?;
    let mesh = backward_step_mesh(geom, h)?;
    let (s, top) = (geom.step_height, geom.channel_height);
    let inflow = field(move |x: Point| {
        let y = x[1].clamp(s, top);
        [4.0 * (y - s) * (top - y) / (top - s).powi(2), 0.0]
    });
    let bc = BoundaryConditions::new()
        .dirichlet("walls", zero_field())
        .dirichlet("inflow", inflow);
    let mut problem = Problem::new(mesh, bc, 1.0, zero_field())?;
    problem.reynolds_scale = top;
    let problem = problem.with_reynolds(re);
    Ok(ProblemSpec {
        name: ProblemName::BackwardStep,
        mesh_params: MeshParams::EdgeLength(h),
        problem,
        exact: None,
    })
}

/// Builds a benchmark by name; `resolution` is cells per side for the
/// cavities and the edge length for the step.
pub fn build(name: ProblemName, resolution: f64, re: f64) -> Result<ProblemSpec> {
    let cells = || -> Result<usize> {
        if resolution >= 1.0 && resolution.fract() == 0.0 {
            Ok(resolution as usize)
        } else {
            Err(Error::InvalidArgument(format!(
                "cavity resolution must be a whole number of cells, got {resolution}"
            )))
        }
    };
    match name {
        ProblemName::BodyForceCavity => body_force_cavity(cells()?, re),
        ProblemName::LidCavity => lid_cavity(cells()?, re),
        ProblemName::BackwardStep => backward_step(resolution, re),
    }
}

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{build_dof_map, BoundaryConditions, DofMap, Mesh, VectorField};

/// A discrete steady or transient Navier–Stokes problem: mesh, boundary data,
/// viscosity and body force.
///
/// The Reynolds number is `reynolds_scale / nu`, where `reynolds_scale` is the
/// product of the reference velocity and length (1 for all built-in benchmarks).
#[derive(Clone)]
pub struct Problem {
    pub mesh: Arc<Mesh>,
    pub bc: Arc<BoundaryConditions>,
    pub dofs: Arc<DofMap>,
    pub nu: f64,
    pub body_force: VectorField,
    pub reynolds_scale: f64,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("nodes", &self.mesh.n_nodes())
            .field("elements", &self.mesh.n_elements())
            .field("bc", &self.bc)
            .field("nu", &self.nu)
            .finish()
    }
}

impl Problem {
    pub fn new(
        mesh: Mesh,
        bc: BoundaryConditions,
        nu: f64,
        body_force: VectorField,
    ) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "viscosity must be positive, got {nu}"
            )));
        }
        let dofs = build_dof_map(&mesh, &bc)?;
        Ok(Problem {
            mesh: Arc::new(mesh),
            bc: Arc::new(bc),
            dofs: Arc::new(dofs),
            nu,
            body_force,
            reynolds_scale: 1.0,
        })
    }

    pub fn with_nu(&self, nu: f64) -> Self {
        Problem { nu, ..self.clone() }
    }

    pub fn with_reynolds(&self, re: f64) -> Self {
        self.with_nu(self.reynolds_scale / re)
    }

    pub fn reynolds(&self) -> f64 {
        self.reynolds_scale / self.nu
    }
}

//! Geometric multigrid V-cycle used as the CG preconditioner.

use mhb_comm::Communicator;

use crate::error::Result;
use crate::geometry::Geometry;
use crate::halo::{setup_halo, HaloPlan};
use crate::kernels::{spmv, symgs};
use crate::problem::{generate_coarse_problem, CsrMatrix, DistVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MgConfig {
    /// Total levels including the finest. Coarsening stops early when a
    /// local dimension becomes odd.
    pub levels: usize,
    pub pre_smooth: usize,
    pub post_smooth: usize,
}

impl Default for MgConfig {
    fn default() -> Self {
        MgConfig { levels: 4, pre_smooth: 1, post_smooth: 1 }
    }
}

#[derive(Debug)]
pub struct MgLevel {
    pub geometry: Geometry,
    pub matrix: CsrMatrix,
    pub plan: HaloPlan,
    /// Fine local index of each point of the next coarser level.
    pub f2c: Vec<usize>,
    pub coarser: Option<Box<MgLevel>>,
    pub pre_smooth: usize,
    pub post_smooth: usize,
    /// `A x` on this level during restriction.
    ax: DistVector,
    coarse_rhs: DistVector,
    coarse_x: DistVector,
}

impl MgLevel {
    /// Sets up the halo for `matrix` (which must still carry global column
    /// ids) and builds the coarser levels below it. Collective.
    pub fn new(comm: &Communicator, geometry: Geometry, mut matrix: CsrMatrix, cfg: &MgConfig) -> Result<MgLevel> {
        let plan = setup_halo(comm, &geometry, &mut matrix)?;
        let mut level = MgLevel::from_parts(geometry, matrix, plan);
        level.pre_smooth = cfg.pre_smooth;
        level.post_smooth = cfg.post_smooth;
        let g = &level.geometry;
        let can_coarsen = g.nx.is_multiple_of(2) && g.ny.is_multiple_of(2) && g.nz.is_multiple_of(2);
        if cfg.levels > 1 && can_coarsen {
            let coarse = generate_coarse_problem(&level.geometry)?;
            let sub = MgConfig { levels: cfg.levels - 1, ..*cfg };
            let coarser = MgLevel::new(comm, coarse.geometry, coarse.matrix, &sub)?;
            level.coarse_rhs = DistVector::zeros(coarser.matrix.nrows);
            level.coarse_x = coarser.plan.new_vector();
            level.f2c = coarse.f2c;
            level.coarser = Some(Box::new(coarser));
        }
        Ok(level)
    }

    /// Single level from a matrix already in local numbering.
    pub fn from_parts(geometry: Geometry, matrix: CsrMatrix, plan: HaloPlan) -> MgLevel {
        let ax = DistVector::zeros(matrix.nrows);
        MgLevel {
            geometry,
            matrix,
            plan,
            f2c: Vec::new(),
            coarser: None,
            pre_smooth: 1,
            post_smooth: 1,
            ax,
            coarse_rhs: DistVector::zeros(0),
            coarse_x: DistVector::zeros(0),
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.coarser.as_ref().map_or(0, |c| c.depth())
    }

    /// Vector with room for this level's external slots.
    pub fn new_vector(&self) -> DistVector {
        self.plan.new_vector()
    }

    pub fn coarse_rhs(&self) -> &DistVector {
        &self.coarse_rhs
    }

    pub fn coarse_x(&self) -> &DistVector {
        &self.coarse_x
    }

    pub fn coarse_x_mut(&mut self) -> &mut DistVector {
        &mut self.coarse_x
    }
}

/// Injects the fine residual `rhs - A x` into the coarse right-hand side.
pub fn restrict_residual(comm: &Communicator, level: &mut MgLevel, rhs: &DistVector, x: &mut DistVector) -> Result<()> {
    assert!(level.coarser.is_some(), "restriction needs a coarser level");
    spmv(comm, &level.matrix, &level.plan, x, &mut level.ax)?;
    let (r, ax) = (rhs.owned(), level.ax.owned());
    for (c, out) in level.coarse_rhs.owned_mut().iter_mut().enumerate() {
        let f = level.f2c[c];
        *out = r[f] - ax[f];
    }
    Ok(())
}

/// Adds the coarse correction to the coarse-aligned fine points of `x`.
pub fn prolong_add(level: &MgLevel, x: &mut DistVector) {
    let xf = x.owned_mut();
    for (c, &v) in level.coarse_x.owned().iter().enumerate() {
        xf[level.f2c[c]] += v;
    }
}

/// `z = M⁻¹ rhs` by one V-cycle from a zero initial guess.
pub fn mg_precondition(comm: &Communicator, level: &mut MgLevel, rhs: &DistVector, z: &mut DistVector) -> Result<()> {
    z.as_mut_slice().fill(0.0);
    if level.coarser.is_none() {
        for _ in 0..level.pre_smooth.max(1) {
            symgs(comm, &level.matrix, &level.plan, rhs, z)?;
        }
        return Ok(());
    }
    for _ in 0..level.pre_smooth {
        symgs(comm, &level.matrix, &level.plan, rhs, z)?;
    }
    restrict_residual(comm, level, rhs, z)?;
    {
        let MgLevel { coarser, coarse_rhs, coarse_x, .. } = level;
        let coarser = coarser.as_deref_mut().unwrap();
        mg_precondition(comm, coarser, coarse_rhs, coarse_x)?;
    }
    prolong_add(level, z);
    for _ in 0..level.post_smooth {
        symgs(comm, &level.matrix, &level.plan, rhs, z)?;
    }
    Ok(())
}

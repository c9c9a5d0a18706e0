//! Fusion algorithms that estimate the super-resolution cube from an
//! HSI/MSI pair: SVD-based coupled Tucker solvers in [`tucker`] and the
//! CP-based baselines in [`cp`].

pub mod cp;
pub mod tucker;

use crate::cube::DataCube;
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Spatial split counts for the blocked algorithms. `b1` must divide the
/// first spatial dimension of both cubes, `b2` the second.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockGrid {
    pub b1: usize,
    pub b2: usize,
}

impl BlockGrid {
    pub fn new(b1: usize, b2: usize) -> Result<Self> {
        if b1 == 0 || b2 == 0 {
            return Err(Error::InvalidArg("block counts must be >= 1".into()));
        }
        Ok(Self { b1, b2 })
    }

    fn check_divides(&self, hsi: &DataCube, msi: &DataCube) -> Result<()> {
        let (ih, jh, _) = hsi.dims();
        let (i, j, _) = msi.dims();
        for (label, dim, b) in [
            ("msi rows", i, self.b1),
            ("msi cols", j, self.b2),
            ("hsi rows", ih, self.b1),
            ("hsi cols", jh, self.b2),
        ] {
            if dim % b != 0 {
                return Err(Error::InvalidArg(format!(
                    "block grid {}x{} does not divide {label} ({dim})",
                    self.b1, self.b2
                )));
            }
        }
        Ok(())
    }
}

/// Run `per_block` over matching spatial blocks of the HSI/MSI pair and
/// assemble the outputs in place. Blocks are disjoint, so they are
/// processed in parallel; the result does not depend on the schedule.
fn run_blocked<F>(
    hsi: &DataCube,
    msi: &DataCube,
    grid: BlockGrid,
    per_block: F,
) -> Result<(DataCube, bool)>
where
    F: Fn(&DataCube, &DataCube) -> Result<(DataCube, bool)> + Sync,
{
    grid.check_divides(hsi, msi)?;
    let (i, j, _) = msi.dims();
    let (ih, jh, k) = hsi.dims();
    let (bi, bj) = (i / grid.b1, j / grid.b2);
    let (bih, bjh) = (ih / grid.b1, jh / grid.b2);

    let coords: Vec<(usize, usize)> = (0..grid.b1)
        .flat_map(|gi| (0..grid.b2).map(move |gj| (gi, gj)))
        .collect();
    let blocks: Vec<(usize, usize, DataCube, bool)> = coords
        .into_par_iter()
        .map(|(gi, gj)| {
            let msi_blk = msi.spatial_block(gi * bi, bi, gj * bj, bj);
            let hsi_blk = hsi.spatial_block(gi * bih, bih, gj * bjh, bjh);
            let (est, flag) =
                per_block(&hsi_blk, &msi_blk).map_err(|e| e.in_block(gi, gj))?;
            Ok((gi, gj, est, flag))
        })
        .collect::<Result<_>>()?;

    let mut out = DataCube::zeros((i, j, k));
    let mut any_flag = false;
    for (gi, gj, est, flag) in blocks {
        out.set_spatial_block(gi * bi, gj * bj, &est);
        any_flag |= flag;
    }
    Ok((out, any_flag))
}

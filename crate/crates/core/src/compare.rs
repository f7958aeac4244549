//! Side-by-side runs of the atomistic and QNL models along chain-length
//! sweeps, and the finite-n mesh data fed to the limit functionals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{mesh_from_rule, ChainConfig, MeshDescriptor, MeshRule, Model};
use crate::error::Result;
use crate::limits::{Count, QcMeshLimits};
use crate::minimize::{global_minimize, MinimizeOptions, MinimizeResult, Region};
use crate::potentials::Potential;

/// One chain length of a convergence sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConvergenceRow {
    pub n: usize,
    pub min_atomistic: f64,
    #[serde(rename = "minQNL")]
    pub min_qnl: f64,
    /// `minAtomistic - minQNL`.
    pub gap: f64,
    /// `gap / lambda = n * gap`.
    pub gap_over_lambda: f64,
    pub first_order_atomistic: f64,
    #[serde(rename = "firstOrderQNL")]
    pub first_order_qnl: f64,
    /// Reference coordinate of the first crack, `NaN` without a crack.
    pub crack_location_atomistic: f64,
    #[serde(rename = "crackLocationQNL")]
    pub crack_location_qnl: f64,
}

/// Both minimisers behind a [`ConvergenceRow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparePoint {
    pub row: ConvergenceRow,
    pub mesh: MeshDescriptor,
    pub atomistic: MinimizeResult,
    pub qnl: MinimizeResult,
}

impl ComparePoint {
    pub fn converged(&self) -> bool {
        self.atomistic.converged && self.qnl.converged
    }

    /// Region of the first QNL crack.
    pub fn qnl_crack_region(&self) -> Option<Region> {
        self.qnl.cracks.jumps.first().map(|j| j.region)
    }
}

/// Global minima of both models for one chain length.
pub fn compare_at(pot: &Potential, cfg: &ChainConfig, rule: &MeshRule, opts: &MinimizeOptions) -> Result<ComparePoint> {
    let (mesh, desc) = mesh_from_rule(cfg.n, rule)?;
    let atomistic = global_minimize(pot, cfg, &Model::Atomistic, opts)?;
    let qnl = global_minimize(pot, cfg, &Model::Qnl { mesh }, opts)?;
    let gap = atomistic.energy - qnl.energy;
    let row = ConvergenceRow {
        n: cfg.n,
        min_atomistic: atomistic.energy,
        min_qnl: qnl.energy,
        gap,
        gap_over_lambda: gap / cfg.lambda(),
        first_order_atomistic: atomistic.first_order,
        first_order_qnl: qnl.first_order,
        crack_location_atomistic: atomistic.cracks.first_location().unwrap_or(f64::NAN),
        crack_location_qnl: qnl.cracks.first_location().unwrap_or(f64::NAN),
    };
    Ok(ComparePoint { row, mesh: desc, atomistic, qnl })
}

/// Runs [`compare_at`] for every `n`, in parallel, returning rows in input order.
pub fn convergence_sweep(
    pot: &Potential,
    ns: &[usize],
    ell: f64,
    u0_1: f64,
    u1_1: f64,
    rule: &MeshRule,
    opts: &MinimizeOptions,
) -> Result<Vec<ComparePoint>> {
    ns.par_iter()
        .map(|&n| {
            let cfg = ChainConfig::new(n, ell, u0_1, u1_1)?;
            compare_at(pot, &cfg, rule, opts)
        })
        .collect()
}

/// CSV of the rows with the [`ConvergenceRow`] column order.
pub fn rows_to_csv(rows: &[ConvergenceRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| crate::Error::Serialization(e.to_string()))
}

/// Whether successive differences of `values` shrink in absolute value.
pub fn is_cauchy_like(values: &[f64]) -> bool {
    let d: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    d.windows(2).all(|w| w[1] <= w[0])
}

/// Reads the mesh descriptor of a finite chain as limiting mesh data.
/// `interior_samples` points in `(0, 1)` are used to sample `b(x)`.
pub fn mesh_limits(desc: &MeshDescriptor, interior_samples: usize) -> QcMeshLimits {
    let spacing = |x: f64| desc.spacing_at(x).map_or(Count::Infinite, Count::from_usize);
    let interior = (1..=interior_samples)
        .map(|i| {
            let x = i as f64 / (interior_samples + 1) as f64;
            (x, spacing(x))
        })
        .collect();
    QcMeshLimits {
        r_hat: Count::from_usize(desc.r_hat),
        l_hat: Count::from_usize(desc.l_hat),
        b0: spacing(0.0),
        b1: spacing(1.0),
        interior,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::WindowSize;
    use crate::potentials::PotentialSpec;

    #[test]
    fn csv_header_order() {
        let row = ConvergenceRow {
            n: 8,
            min_atomistic: -1.0,
            min_qnl: -1.5,
            gap: 0.5,
            gap_over_lambda: 4.0,
            first_order_atomistic: 0.1,
            first_order_qnl: 0.2,
            crack_location_atomistic: 0.0,
            crack_location_qnl: f64::NAN,
        };
        let csv = rows_to_csv(&[row]).unwrap();
        let header = csv.lines().next().unwrap();
        assert_eq!(
            header,
            "n,minAtomistic,minQNL,gap,gapOverLambda,firstOrderAtomistic,firstOrderQNL,crackLocationAtomistic,crackLocationQNL"
        );
    }

    #[test]
    fn cauchy_check() {
        assert!(is_cauchy_like(&[1.0, 0.5, 0.3, 0.25]));
        assert!(!is_cauchy_like(&[1.0, 0.9, 0.3]));
    }

    #[test]
    fn mesh_limits_of_uniform_spacing() {
        let rule = MeshRule::AtomisticWindow { window: WindowSize::Atoms { count: 8 }, spacing: 2 };
        let (_, desc) = mesh_from_rule(64, &rule).unwrap();
        let m = mesh_limits(&desc, 3);
        assert_eq!(m.r_hat, Count::Finite(2));
        assert_eq!(m.l_hat, Count::Finite(2));
        assert!(m.interior.iter().all(|&(_, b)| b == Count::Finite(2)));
    }

    #[test]
    fn affine_regime_has_no_gap_in_order_zero() {
        let pot = Potential::new(PotentialSpec::lennard_jones(1.0, 1.0).unwrap()).unwrap();
        let g = pot.gamma();
        let rule = MeshRule::AtomisticWindow { window: WindowSize::Atoms { count: 4 }, spacing: 2 };
        let cfg = ChainConfig::new(24, 0.95 * g, 0.95 * g, 0.95 * g).unwrap();
        let p = compare_at(&pot, &cfg, &rule, &MinimizeOptions::default()).unwrap();
        assert!(p.converged());
        assert!(p.row.gap.abs() < 1e-10, "{:?}", p.row);
        assert!(p.row.crack_location_qnl.is_nan());
    }
}

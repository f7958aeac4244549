//! Local and global minimisation of chain energies, crack detection and an
//! exhaustive grid oracle for small chains.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{
    first_order_energy, lift, restrict, ChainConfig, ChainProblem, Deformation, MeshConfig, Model,
};
use crate::error::{Error, Result};
use crate::linalg::SymBand;
use crate::potentials::Potential;

/// A smooth function of free coordinates with a banded Hessian.
pub trait Objective {
    fn dim(&self) -> usize;
    /// Value, `+inf` outside the domain.
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn hessian(&self, x: &[f64]) -> Result<SymBand>;
    /// Whether `x` is safely inside the domain (used to guard line searches).
    fn admissible(&self, x: &[f64]) -> bool;
}

impl Objective for ChainProblem {
    fn dim(&self) -> usize {
        ChainProblem::dim(self)
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.energy(x)
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        ChainProblem::gradient(self, x)
    }
    fn hessian(&self, x: &[f64]) -> Result<SymBand> {
        ChainProblem::hessian(self, x)
    }
    fn admissible(&self, x: &[f64]) -> bool {
        ChainProblem::admissible(self, x)
    }
}

/// Settings of the damped Newton iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalOptions {
    /// Stop when the sup-norm of the gradient is at most this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Largest sup-norm of a single step.
    pub max_step: f64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-10, max_iter: 100_000, max_step: f64::INFINITY }
    }
}

/// Outcome of a local minimisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    /// The line search could not make progress before the tolerance was met.
    pub stalled: bool,
    /// Energies after each accepted step, starting with the initial value.
    #[serde(skip)]
    pub history: Vec<f64>,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Damped Newton method with a shifted Cholesky factorisation of the banded
/// Hessian and an Armijo backtracking line search that rejects trial points
/// outside the admissible set. When the decrease predicted by the model is
/// below floating-point resolution of the energy, a step is accepted if it
/// does not raise the energy beyond rounding and reduces the gradient.
pub fn local_minimize<O: Objective + ?Sized>(obj: &O, x0: &[f64], opts: &LocalOptions) -> Result<LocalResult> {
    if x0.len() != obj.dim() {
        return Err(Error::InvalidConfig(format!("start has {} coordinates, need {}", x0.len(), obj.dim())));
    }
    let mut x = x0.to_vec();
    if !obj.admissible(&x) {
        return Err(Error::Inadmissible);
    }
    let mut f = obj.value(&x);
    if !f.is_finite() {
        return Err(Error::Inadmissible);
    }
    let mut history = vec![f];
    let mut g = obj.gradient(&x)?;
    let mut gn = sup_norm(&g);
    let mut it = 0;
    loop {
        if gn <= opts.grad_tol {
            return Ok(LocalResult { x, value: f, iterations: it, converged: true, grad_norm: gn, stalled: false, history });
        }
        if it >= opts.max_iter {
            return Ok(LocalResult { x, value: f, iterations: it, converged: false, grad_norm: gn, stalled: false, history });
        }
        let h = obj.hessian(&x)?;
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut d = h.solve_shifted(&neg).map(|p| p.0).unwrap_or_else(|| neg.clone());
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) || d.iter().any(|v| !v.is_finite()) {
            let scale = (0..h.dim()).map(|i| h.get(i, i).abs()).fold(1e-300, f64::max);
            d = neg.iter().map(|v| v / scale).collect();
            slope = dot(&g, &d);
        }
        let dn = sup_norm(&d);
        let mut t = if dn > opts.max_step { opts.max_step / dn } else { 1.0 };
        let noise = 1e-13 * (1.0 + f.abs());
        let mut accepted = None;
        for _ in 0..80 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            if obj.admissible(&xt) {
                let ft = obj.value(&xt);
                if ft.is_finite() {
                    if ft <= f + 1e-4 * t * slope {
                        let gt = obj.gradient(&xt)?;
                        accepted = Some((xt, ft, gt));
                        break;
                    }
                    if -t * slope <= noise && ft <= f + noise {
                        let gt = obj.gradient(&xt)?;
                        if sup_norm(&gt) < gn {
                            accepted = Some((xt, ft, gt));
                            break;
                        }
                    }
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((xt, ft, gt)) => {
                x = xt;
                f = ft;
                gn = sup_norm(&gt);
                g = gt;
                history.push(f);
                it += 1;
            }
            None => {
                return Ok(LocalResult { x, value: f, iterations: it, converged: false, grad_norm: gn, stalled: true, history });
            }
        }
    }
}

/// Which crack starts a global minimisation tries besides the elastic one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchSet {
    /// One start per free bond `1..=n-2`.
    AllBonds,
    /// One start per repatom interval other than the two prescribed bonds.
    RepatomIntervals,
    ElasticOnly,
}

/// Settings of the chain minimisers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// A bond is cracked when its strain exceeds this multiple of `gamma`.
    pub crack_strain_factor: f64,
    /// `None` picks `AllBonds` for the atomistic and `RepatomIntervals` for the QNL model.
    pub branch_set: Option<BranchSet>,
    /// Run the branches on the rayon thread pool.
    pub parallel: bool,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-10, max_iter: 100_000, crack_strain_factor: 2.0, branch_set: None, parallel: true }
    }
}

impl MinimizeOptions {
    fn local(&self, cfg: &ChainConfig) -> LocalOptions {
        LocalOptions { grad_tol: self.grad_tol, max_iter: self.max_iter, max_step: 0.25 * cfg.ell }
    }

    fn branch_set_for(&self, model: &Model) -> BranchSet {
        self.branch_set.unwrap_or(match model {
            Model::Atomistic => BranchSet::AllBonds,
            Model::Qnl { .. } => BranchSet::RepatomIntervals,
        })
    }
}

/// Part of the chain a crack lies in, relative to a QNL mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    /// One of the two prescribed bonds `0` and `n-1`.
    Boundary,
    /// Bonds `1..k1`.
    LeftAtomistic,
    /// Bonds from `k1` to the first repatom interval inside the continuum
    /// region, and the mirror image at `k2`.
    Interface,
    Continuum,
    /// Bonds `k2..=n-2`.
    RightAtomistic,
    /// No mesh to classify against.
    Bulk,
}

/// A maximal run of consecutive cracked bonds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub first_bond: usize,
    pub last_bond: usize,
    /// Opening `sum (u^{i+1} - u^i - lambda gamma)` over the run.
    pub size: f64,
    /// Centre of the run in reference coordinates `x in [0, 1]`.
    pub location: f64,
    pub region: Region,
}

/// Cracks of a deformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrackReport {
    /// Strain above which a bond counts as cracked.
    pub threshold: f64,
    pub jumps: Vec<Jump>,
}

impl CrackReport {
    pub fn count(&self) -> usize {
        self.jumps.len()
    }

    /// Location of the first jump, if any.
    pub fn first_location(&self) -> Option<f64> {
        self.jumps.first().map(|j| j.location)
    }
}

fn classify(bond: usize, n: usize, mesh: Option<&MeshConfig>) -> Region {
    if bond == 0 || bond == n - 1 {
        return Region::Boundary;
    }
    let Some(m) = mesh else { return Region::Bulk };
    let (r, l) = (m.r(), m.l());
    if bond < m.k1 {
        Region::LeftAtomistic
    } else if bond >= m.k2 {
        Region::RightAtomistic
    } else if bond < r || bond >= l {
        Region::Interface
    } else {
        Region::Continuum
    }
}

/// Bonds with strain above `factor * gamma`, grouped into runs and
/// classified against `mesh` when one is given.
pub fn detect_cracks(pot: &Potential, u: &Deformation, mesh: Option<&MeshConfig>, factor: f64) -> CrackReport {
    let n = u.n();
    let gamma = pot.gamma();
    let threshold = factor * gamma;
    let s = u.strains();
    let lam = 1.0 / n as f64;
    let mut jumps = Vec::new();
    let mut i = 0;
    while i < n {
        if s[i] > threshold {
            let start = i;
            let mut size = 0.0;
            while i < n && s[i] > threshold {
                size += (s[i] - gamma) * lam;
                i += 1;
            }
            let last = i - 1;
            jumps.push(Jump {
                first_bond: start,
                last_bond: last,
                size,
                location: 0.5 * (start + last + 1) as f64 * lam,
                region: classify(start, n, mesh),
            });
        } else {
            i += 1;
        }
    }
    CrackReport { threshold, jumps }
}

/// How a branch was started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Start {
    Elastic,
    /// Opening concentrated on bonds `first_bond..=last_bond`.
    Crack { first_bond: usize, last_bond: usize },
}

/// Outcome of one branch of a global minimisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub start: Start,
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub cracks: usize,
}

/// Minimiser of a chain energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeResult {
    pub model: String,
    pub n: usize,
    pub u: Deformation,
    pub energy: f64,
    pub first_order: f64,
    pub cracks: CrackReport,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub branch: Start,
    pub branch_log: Vec<BranchRecord>,
}

impl MinimizeResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Affine interpolation between the prescribed atoms `1` and `n-1`.
pub fn elastic_start(cfg: &ChainConfig) -> Deformation {
    let n = cfg.n;
    let [_, a, b, _] = cfg.boundary_values();
    let mut u = vec![0.0; n + 1];
    for (i, ui) in u.iter_mut().enumerate().take(n).skip(1) {
        *ui = a + (b - a) * (i - 1) as f64 / (n - 2) as f64;
    }
    cfg.apply_bc(&mut u);
    Deformation { u }
}

/// Strain `gamma` on every free bond except `first..=last`, which share the
/// remaining length equally. When the mean free strain is at most `gamma`,
/// the background strain is `0.9` times the mean so the opening stays
/// positive.
fn opening_start(pot: &Potential, cfg: &ChainConfig, first: usize, last: usize) -> Deformation {
    let n = cfg.n;
    let lam = cfg.lambda();
    let width = (last - first + 1) as f64;
    let free_len = n as f64 * cfg.ell - cfg.u0_1 - cfg.u1_1;
    let mean = free_len / (n as f64 - 2.0);
    let g = if mean > pot.gamma() { pot.gamma() } else { 0.9 * mean };
    let s_open = (free_len - g * (n as f64 - 2.0 - width)) / width;
    let mut u = vec![0.0; n + 1];
    u[1] = lam * cfg.u0_1;
    for i in 1..n - 1 {
        let s = if i >= first && i <= last { s_open } else { g };
        u[i + 1] = u[i] + lam * s;
    }
    u[n] = cfg.ell;
    cfg.apply_bc(&mut u);
    Deformation { u }
}

/// Repatom intervals `(first_bond, last_bond)` available for crack starts.
fn interval_starts(cfg: &ChainConfig, model: &Model, set: BranchSet) -> Vec<(usize, usize)> {
    let n = cfg.n;
    match set {
        BranchSet::ElasticOnly => Vec::new(),
        BranchSet::AllBonds => (1..=n - 2).map(|j| (j, j)).collect(),
        BranchSet::RepatomIntervals => match model {
            Model::Atomistic => (1..=n - 2).map(|j| (j, j)).collect(),
            Model::Qnl { mesh } => mesh
                .repatoms
                .windows(2)
                .filter(|w| w[0] >= 1 && w[1] <= n - 1)
                .map(|w| (w[0], w[1] - 1))
                .collect(),
        },
    }
}

/// Deformation with strain `gamma` away from bond `bond` and the remaining
/// length opened at that bond (or, for a QNL mesh, across the repatom
/// interval containing it). The prescribed bonds `0` and `n-1` cannot open,
/// so those indices are moved to the adjacent free bond.
pub fn crack_start(pot: &Potential, cfg: &ChainConfig, model: &Model, bond: usize) -> Result<Deformation> {
    let n = cfg.n;
    if bond >= n {
        return Err(Error::InvalidConfig(format!("bond {bond} does not exist for n = {n}")));
    }
    let j = bond.clamp(1, n - 2);
    let (first, last) = match model {
        Model::Atomistic => (j, j),
        Model::Qnl { mesh } => {
            let a = mesh.repatoms.partition_point(|&t| t <= j) - 1;
            (mesh.repatoms[a], mesh.repatoms[a + 1] - 1)
        }
    };
    Ok(opening_start(pot, cfg, first, last))
}

/// Local minimisation of a chain energy from `start` (projected onto the
/// mesh for the QNL model).
pub fn minimize_from(
    pot: &Potential,
    cfg: &ChainConfig,
    model: &Model,
    start: &Deformation,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    let prob = ChainProblem::new(&pot.spec, cfg, model)?;
    let mut u0 = start.u.clone();
    cfg.apply_bc(&mut u0);
    let x0 = prob.free_from_positions(&u0);
    let lr = local_minimize(&prob, &x0, &opts.local(cfg))?;
    let u = Deformation { u: prob.positions(&lr.x) };
    let cracks = detect_cracks(pot, &u, model.mesh(), opts.crack_strain_factor);
    Ok(MinimizeResult {
        model: model.name().to_string(),
        n: cfg.n,
        first_order: first_order_energy(pot, cfg, model, &u)?,
        energy: lr.value,
        u,
        cracks,
        iterations: lr.iterations,
        converged: lr.converged,
        grad_norm: lr.grad_norm,
        branch: Start::Elastic,
        branch_log: Vec::new(),
    })
}

/// Elastic start followed by a local minimisation.
pub fn local_minimize_chain(pot: &Potential, cfg: &ChainConfig, model: &Model, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    minimize_from(pot, cfg, model, &elastic_start(cfg), opts)
}

/// Runs the elastic start and every crack start of the branch set and keeps
/// the lowest energy. Energies within `1e-11 (1 + |E|)` count as equal; ties
/// go to the result whose first crack has the smallest bond index, then to
/// the earlier start (the elastic start comes first).
pub fn global_minimize(pot: &Potential, cfg: &ChainConfig, model: &Model, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    let set = opts.branch_set_for(model);
    let mut starts = vec![Start::Elastic];
    starts.extend(
        interval_starts(cfg, model, set)
            .into_iter()
            .map(|(first_bond, last_bond)| Start::Crack { first_bond, last_bond }),
    );
    let run = |s: &Start| -> Result<MinimizeResult> {
        let u0 = match *s {
            Start::Elastic => elastic_start(cfg),
            Start::Crack { first_bond, last_bond } => opening_start(pot, cfg, first_bond, last_bond),
        };
        let mut r = minimize_from(pot, cfg, model, &u0, opts)?;
        r.branch = *s;
        Ok(r)
    };
    let results: Vec<Result<MinimizeResult>> = if opts.parallel {
        starts.par_iter().map(run).collect()
    } else {
        starts.iter().map(run).collect()
    };
    let mut log = Vec::with_capacity(results.len());
    let mut best: Option<MinimizeResult> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(r) => {
                log.push(BranchRecord {
                    start: r.branch,
                    energy: r.energy,
                    iterations: r.iterations,
                    converged: r.converged,
                    cracks: r.cracks.count(),
                });
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let tol = 1e-11 * (1.0 + b.energy.abs());
                        if r.energy < b.energy - tol {
                            true
                        } else if r.energy <= b.energy + tol {
                            let key = |m: &MinimizeResult| m.cracks.jumps.first().map_or(usize::MAX, |j| j.first_bond);
                            key(&r) < key(b)
                        } else {
                            false
                        }
                    }
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let mut best = match best {
        Some(b) => b,
        None => return Err(first_err.unwrap_or(Error::Inadmissible)),
    };
    best.branch_log = log;
    Ok(best)
}

/// Result of the grid oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Lowest energy on the grid.
    pub grid_energy: f64,
    /// Energy after a local polish from the grid minimiser.
    pub energy: f64,
    pub u: Deformation,
}

/// Exhaustive search over a uniform grid of atom positions between the
/// prescribed atoms `1` and `n-1`, followed by a local polish.
///
/// When every atom is a representative atom the search is a dynamic
/// programme over consecutive position pairs, exact on the grid, with cost
/// `O(n G^3)`. In the fracture regime the programme is repeated once per
/// free bond with the opening forced onto that bond, and every class is
/// polished: crack basins at different bonds can differ by less than the
/// grid resolution. Coarser QNL meshes enumerate repatom values directly
/// and are limited to 6 free variables.
pub fn brute_force_oracle(
    pot: &Potential,
    cfg: &ChainConfig,
    model: &Model,
    grid_points: usize,
) -> Result<OracleResult> {
    const ENUM_CAP: usize = 6;
    let prob = ChainProblem::new(&pot.spec, cfg, model)?;
    let full = prob.repatoms().len() == cfg.n + 1;
    let [_, lo, hi, _] = cfg.boundary_values();
    let g = grid_points.max(3);
    let grid: Vec<f64> = (1..=g).map(|k| lo + (hi - lo) * k as f64 / (g + 1) as f64).collect();
    let mut candidates = Vec::new();
    if full {
        candidates.push(dp_search(pot, cfg, model, &grid, None)?);
        let n = cfg.n;
        let gamma = pot.gamma();
        let s_open = (n as f64 * cfg.ell - cfg.u0_1 - cfg.u1_1) - gamma * (n as f64 - 3.0);
        if s_open > 1.05 * gamma {
            let tau = 0.5 * (gamma + s_open);
            for j in 1..=n - 2 {
                candidates.push(dp_search(pot, cfg, model, &grid, Some((j, tau)))?);
            }
        }
    } else {
        let k = prob.dim();
        if k > ENUM_CAP {
            return Err(Error::TooLarge { vars: k, cap: ENUM_CAP });
        }
        candidates.push(enumerate_search(&prob, &grid, k));
    }
    let grid_energy = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    if !grid_energy.is_finite() {
        return Err(Error::NonConvergence { what: "grid oracle", detail: "no admissible grid point".into() });
    }
    let opts = LocalOptions { grad_tol: 1e-10, max_iter: 10_000, max_step: 0.25 * cfg.ell };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (e, x) in candidates {
        if !e.is_finite() {
            continue;
        }
        let lr = local_minimize(&prob, &x, &opts)?;
        if best.as_ref().map_or(true, |b| lr.value < b.0) {
            best = Some((lr.value, lr.x));
        }
    }
    let (energy, x) = best.expect("at least one finite candidate");
    Ok(OracleResult { grid_energy, energy, u: Deformation { u: prob.positions(&x) } })
}

/// Grid minimum over position paths. `crack = Some((j, tau))` restricts to
/// paths whose free bond `j` has strain at least `tau` and every other free
/// bond strain below `tau`.
fn dp_search(pot: &Potential, cfg: &ChainConfig, model: &Model, grid: &[f64], crack: Option<(usize, f64)>) -> Result<(f64, Vec<f64>)> {
    let spec = &pot.spec;
    let n = cfg.n;
    let lam = cfg.lambda();
    let bv = cfg.boundary_values();
    let choices = |i: usize| -> Vec<f64> {
        match i {
            0 => vec![bv[0]],
            1 => vec![bv[1]],
            _ if i == n - 1 => vec![bv[2]],
            _ if i == n => vec![bv[3]],
            _ => grid.to_vec(),
        }
    };
    let local = |i: usize| match model {
        Model::Qnl { mesh } => i >= mesh.k1 && i + 2 <= mesh.k2,
        Model::Atomistic => false,
    };
    let pts: Vec<Vec<f64>> = (0..=n).map(choices).collect();
    // value[(a, b)] over positions of atoms (i, i+1); back pointers per stage
    let mut value: Vec<f64> = vec![lam * spec.j1((pts[1][0] - pts[0][0]) / lam)];
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n - 1 {
        let (pa, pb, pc) = (&pts[i], &pts[i + 1], &pts[i + 2]);
        let mut next = vec![f64::INFINITY; pb.len() * pc.len()];
        let mut arg = vec![usize::MAX; pb.len() * pc.len()];
        for (bi, &b) in pb.iter().enumerate() {
            for (ci, &c) in pc.iter().enumerate() {
                let s1 = (c - b) / lam;
                let bond = spec.j1(s1);
                if !bond.is_finite() {
                    continue;
                }
                if let Some((j, tau)) = crack {
                    // bond i+1; bonds 0 and n-1 are prescribed
                    if i + 1 <= n - 2 && ((i + 1 == j) != (s1 >= tau)) {
                        continue;
                    }
                }
                let mut best = f64::INFINITY;
                let mut besta = usize::MAX;
                for (ai, &a) in pa.iter().enumerate() {
                    let v = value[ai * pb.len() + bi];
                    if !v.is_finite() {
                        continue;
                    }
                    let s0 = (b - a) / lam;
                    let cell = if local(i) {
                        0.5 * (spec.j2(s0) + spec.j2(s1))
                    } else {
                        spec.j2(0.5 * (s0 + s1))
                    };
                    let tot = v + lam * cell;
                    if tot < best {
                        best = tot;
                        besta = ai;
                    }
                }
                next[bi * pc.len() + ci] = best + lam * bond;
                arg[bi * pc.len() + ci] = besta;
            }
        }
        value = next;
        back.push(arg);
    }
    let e = value[0];
    // backtrack: last state is (n-1, n), both single points
    let mut idx = vec![0usize; n + 1];
    let (mut bi, mut ci) = (0usize, 0usize);
    for i in (0..n - 1).rev() {
        let ncols = pts[i + 2].len();
        let ai = back[i][bi * ncols + ci];
        if ai == usize::MAX {
            return Ok((f64::INFINITY, Vec::new()));
        }
        idx[i + 2] = ci;
        idx[i + 1] = bi;
        idx[i] = ai;
        ci = bi;
        bi = ai;
    }
    let u: Vec<f64> = (0..=n).map(|i| pts[i][idx[i]]).collect();
    Ok((e, u[2..=n - 2].to_vec()))
}

fn enumerate_search(prob: &ChainProblem, grid: &[f64], k: usize) -> (f64, Vec<f64>) {
    let g = grid.len();
    let mut best = (f64::INFINITY, vec![0.0; k]);
    let mut idx = vec![0usize; k];
    let mut x = vec![0.0; k];
    'outer: loop {
        let increasing = idx.windows(2).all(|w| w[0] < w[1]);
        if increasing {
            for (xi, &i) in x.iter_mut().zip(&idx) {
                *xi = grid[i];
            }
            let e = prob.energy(&x);
            if e < best.0 {
                best = (e, x.clone());
            }
        }
        for d in (0..k).rev() {
            idx[d] += 1;
            if idx[d] < g {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    best
}

/// Restricts `u` to the mesh of `model` and lifts it back.
pub fn project(model: &Model, u: &Deformation) -> Result<Deformation> {
    match model {
        Model::Atomistic => Ok(u.clone()),
        Model::Qnl { mesh } => lift(mesh, &restrict(mesh, u)),
    }
}

//! Discrete chains: boundary conditions, quasicontinuum meshes, the atomistic
//! and quasinonlocal (QNL) energies with their derivatives, and the
//! rescaled first-order energies.
//!
//! Atom positions are `u^0, ..., u^n` with spacing `lambda = 1/n`. The first
//! and last bonds are prescribed: `u^0 = 0`, `u^1 = lambda u0_1`,
//! `u^{n-1} = ell - lambda u1_1`, `u^n = ell`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymBand;
use crate::potentials::{Potential, PotentialSpec, Which};

/// Length, macroscopic strain and boundary slopes of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n: usize,
    pub ell: f64,
    pub u0_1: f64,
    pub u1_1: f64,
}

impl ChainConfig {
    pub fn new(n: usize, ell: f64, u0_1: f64, u1_1: f64) -> Result<Self> {
        let c = Self { n, ell, u0_1, u1_1 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::InvalidConfig(format!("need n >= 4, got {}", self.n)));
        }
        let ok = [self.ell, self.u0_1, self.u1_1].iter().all(|v| v.is_finite() && *v > 0.0);
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "ell, u0_1 and u1_1 must be positive, got {}, {}, {}",
                self.ell, self.u0_1, self.u1_1
            )));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// The four prescribed positions `(u^0, u^1, u^{n-1}, u^n)`.
    pub fn boundary_values(&self) -> [f64; 4] {
        let l = self.lambda();
        [0.0, l * self.u0_1, self.ell - l * self.u1_1, self.ell]
    }

    /// Overwrites the prescribed positions of `u`.
    pub fn apply_bc(&self, u: &mut [f64]) {
        let n = self.n;
        let [a, b, c, d] = self.boundary_values();
        u[0] = a;
        u[1] = b;
        u[n - 1] = c;
        u[n] = d;
    }
}

/// Atomistic windows `{0..k1}` and `{k2..n}` and the representative atoms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshConfig {
    pub n: usize,
    pub k1: usize,
    pub k2: usize,
    /// Sorted representative atom indices; contains both windows.
    pub repatoms: Vec<usize>,
}

impl MeshConfig {
    /// Validates and sorts the representative atoms. The windows must satisfy
    /// `0 < k1 < k2 < n - 2` and be fully contained in `repatoms`.
    pub fn new(n: usize, k1: usize, k2: usize, mut repatoms: Vec<usize>) -> Result<Self> {
        if !(0 < k1 && k1 < k2 && k2 + 2 < n) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < k1 < k2 < n - 2, got k1 = {k1}, k2 = {k2}, n = {n}"
            )));
        }
        repatoms.sort_unstable();
        repatoms.dedup();
        if repatoms.iter().any(|&t| t > n) {
            return Err(Error::InvalidConfig("repatom index exceeds n".into()));
        }
        for i in (0..=k1).chain(k2..=n) {
            if repatoms.binary_search(&i).is_err() {
                return Err(Error::InvalidConfig(format!(
                    "atom {i} lies in an atomistic window but is not a repatom"
                )));
            }
        }
        Ok(Self { n, k1, k2, repatoms })
    }

    /// Every atom is a representative atom.
    pub fn full(n: usize, k1: usize, k2: usize) -> Result<Self> {
        Self::new(n, k1, k2, (0..=n).collect())
    }

    /// First repatom right of `k1`.
    pub fn r(&self) -> usize {
        *self.repatoms.iter().find(|&&t| t > self.k1).expect("k2 > k1 is a repatom")
    }

    /// Last repatom left of `k2`.
    pub fn l(&self) -> usize {
        *self.repatoms.iter().rev().find(|&&t| t < self.k2).expect("k1 < k2 is a repatom")
    }

    pub fn describe(&self) -> MeshDescriptor {
        let intervals = self
            .repatoms
            .windows(2)
            .filter(|w| w[0] > self.k1 && w[1] < self.k2)
            .map(|w| (w[0], w[1] - w[0]))
            .collect();
        MeshDescriptor {
            n: self.n,
            k1: self.k1,
            k2: self.k2,
            r_hat: self.r() - self.k1,
            l_hat: self.k2 - self.l(),
            continuum_intervals: intervals,
        }
    }
}

/// Finite-n summary of a mesh: interface gaps and continuum spacing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshDescriptor {
    pub n: usize,
    pub k1: usize,
    pub k2: usize,
    /// `r(T) - k1`.
    pub r_hat: usize,
    /// `k2 - l(T)`.
    pub l_hat: usize,
    /// `(start, gap)` of repatom intervals with both ends strictly inside `(k1, k2)`.
    pub continuum_intervals: Vec<(usize, usize)>,
}

impl MeshDescriptor {
    /// Smallest repatom gap among continuum intervals nearest to atom `x n`;
    /// `None` when the continuum region has no interior interval.
    pub fn spacing_at(&self, x: f64) -> Option<usize> {
        let target = x * self.n as f64;
        let dist = |&(s, g): &(usize, usize)| {
            let (a, b) = (s as f64, (s + g) as f64);
            if target < a {
                a - target
            } else if target > b {
                target - b
            } else {
                0.0
            }
        };
        let dmin = self.continuum_intervals.iter().map(dist).fold(f64::INFINITY, f64::min);
        if !dmin.is_finite() {
            return None;
        }
        let reach = self.continuum_intervals.iter().map(|iv| iv.1).max().unwrap_or(0) as f64;
        self.continuum_intervals
            .iter()
            .filter(|iv| dist(iv) <= dmin + reach)
            .map(|iv| iv.1)
            .min()
    }
}

/// Width of an atomistic window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowSize {
    /// `k1 = round(coeff * sqrt(n))`.
    Sqrt { coeff: f64 },
    /// Fixed number of atoms.
    Atoms { count: usize },
}

impl WindowSize {
    pub fn k1(&self, n: usize) -> usize {
        match *self {
            WindowSize::Sqrt { coeff } => (coeff * (n as f64).sqrt()).round() as usize,
            WindowSize::Atoms { count } => count,
        }
    }
}

/// Rules that produce a mesh for each chain length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum MeshRule {
    /// Every atom is a repatom.
    Full { window: WindowSize },
    /// Atomistic windows of width `k1` at both ends and a uniform repatom
    /// spacing in between. `k2` starts at `n - k1` and is lowered until the
    /// spacing divides `k2 - k1`, so every continuum gap equals `spacing`.
    AtomisticWindow { window: WindowSize, spacing: usize },
}

pub fn mesh_from_rule(n: usize, rule: &MeshRule) -> Result<(MeshConfig, MeshDescriptor)> {
    let (window, spacing) = match *rule {
        MeshRule::Full { window } => (window, 1),
        MeshRule::AtomisticWindow { window, spacing } => (window, spacing),
    };
    if spacing == 0 {
        return Err(Error::RuleInfeasible("spacing must be positive".into()));
    }
    let k1 = window.k1(n).max(1);
    if n < 2 * k1 + 3 {
        return Err(Error::RuleInfeasible(format!("n = {n} is too small for k1 = {k1}")));
    }
    let k2 = n - k1 - (n - 2 * k1) % spacing;
    if k2 <= k1 || k2 + 2 >= n {
        return Err(Error::RuleInfeasible(format!(
            "windows k1 = {k1}, k2 = {k2} do not fit n = {n}"
        )));
    }
    let mut rep: Vec<usize> = (0..=k1).collect();
    rep.extend((k1 + spacing..k2).step_by(spacing));
    rep.extend(k2..=n);
    let mesh = MeshConfig::new(n, k1, k2, rep)?;
    let desc = mesh.describe();
    Ok((mesh, desc))
}

/// Which discrete energy is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Model {
    Atomistic,
    Qnl { mesh: MeshConfig },
}

impl Model {
    pub fn mesh(&self) -> Option<&MeshConfig> {
        match self {
            Model::Atomistic => None,
            Model::Qnl { mesh } => Some(mesh),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Atomistic => "atomistic",
            Model::Qnl { .. } => "qnl",
        }
    }
}

/// Positions of all `n + 1` atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deformation {
    pub u: Vec<f64>,
}

impl Deformation {
    /// `u^i = i lambda z`.
    pub fn affine(n: usize, z: f64) -> Self {
        let l = 1.0 / n as f64;
        Self { u: (0..=n).map(|i| i as f64 * l * z).collect() }
    }

    pub fn n(&self) -> usize {
        self.u.len() - 1
    }

    /// Discrete gradients `(u^{i+1} - u^i)/lambda`.
    pub fn strains(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.u.windows(2).map(|w| (w[1] - w[0]) * n).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// CSV with columns `i, x, u, strain` (strain of the bond to the right,
    /// empty for the last atom).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["i", "x", "u", "strain"])?;
        let n = self.n();
        let s = self.strains();
        for i in 0..=n {
            let strain = if i < n { format!("{:.17e}", s[i]) } else { String::new() };
            w.write_record([
                i.to_string(),
                format!("{:.17e}", i as f64 / n as f64),
                format!("{:.17e}", self.u[i]),
                strain,
            ])?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?)
            .map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Values at the representative atoms, in repatom order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedDeformation {
    pub values: Vec<f64>,
}

/// Piecewise-affine interpolation of repatom values.
pub fn lift(mesh: &MeshConfig, r: &ReducedDeformation) -> Result<Deformation> {
    if r.values.len() != mesh.repatoms.len() {
        return Err(Error::InvalidConfig(format!(
            "{} repatom values for {} repatoms",
            r.values.len(),
            mesh.repatoms.len()
        )));
    }
    let mut u = vec![0.0; mesh.n + 1];
    for (a, w) in mesh.repatoms.windows(2).enumerate() {
        let (t0, t1) = (w[0], w[1]);
        let (v0, v1) = (r.values[a], r.values[a + 1]);
        for (j, uj) in u.iter_mut().enumerate().take(t1 + 1).skip(t0) {
            let s = (j - t0) as f64 / (t1 - t0) as f64;
            *uj = v0 + s * (v1 - v0);
        }
    }
    Ok(Deformation { u })
}

/// Samples a deformation at the representative atoms.
pub fn restrict(mesh: &MeshConfig, u: &Deformation) -> ReducedDeformation {
    ReducedDeformation { values: mesh.repatoms.iter().map(|&t| u.u[t]).collect() }
}

/// Which next-to-nearest-neighbour cells use the local (Cauchy-Born split)
/// form `(J2(s_i) + J2(s_{i+1}))/2` instead of `J2((s_i + s_{i+1})/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct CellLayout {
    /// Inclusive range of local cells.
    local: Option<(usize, usize)>,
}

impl CellLayout {
    pub(crate) fn for_model(model: &Model) -> Self {
        match model {
            Model::Atomistic => Self { local: None },
            Model::Qnl { mesh } => Self { local: Some((mesh.k1, mesh.k2 - 2)) },
        }
    }

    #[inline]
    fn is_local(&self, i: usize) -> bool {
        matches!(self.local, Some((a, b)) if i >= a && i <= b)
    }
}

/// Total energy of positions `u` (all atoms) with the given cell layout.
pub(crate) fn layout_energy(spec: &PotentialSpec, layout: CellLayout, u: &[f64]) -> f64 {
    let n = u.len() - 1;
    let lam = 1.0 / n as f64;
    let s: Vec<f64> = u.windows(2).map(|w| (w[1] - w[0]) / lam).collect();
    let mut e = 0.0;
    for &si in &s {
        e += lam * spec.j1(si);
    }
    for i in 0..n - 1 {
        if layout.is_local(i) {
            e += lam * 0.5 * (spec.j2(s[i]) + spec.j2(s[i + 1]));
        } else {
            e += lam * spec.j2(0.5 * (s[i] + s[i + 1]));
        }
    }
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

fn check_strains(spec: &PotentialSpec, u: &[f64]) -> Result<Vec<f64>> {
    let n = (u.len() - 1) as f64;
    let s: Vec<f64> = u.windows(2).map(|w| (w[1] - w[0]) * n).collect();
    if let Some(&z) = s.iter().find(|&&z| !spec.in_domain(z) || z.is_nan()) {
        return Err(Error::Domain { z, low: spec.domain_low() });
    }
    Ok(s)
}

/// Gradient of [`layout_energy`] with respect to every position.
pub(crate) fn layout_gradient(spec: &PotentialSpec, layout: CellLayout, u: &[f64]) -> Result<Vec<f64>> {
    let n = u.len() - 1;
    let s = check_strains(spec, u)?;
    let mut g = vec![0.0; n + 1];
    for i in 0..n {
        let d = spec.raw(Which::J1, s[i], 1);
        g[i] -= d;
        g[i + 1] += d;
    }
    for i in 0..n - 1 {
        if layout.is_local(i) {
            let a = 0.5 * spec.raw(Which::J2, s[i], 1);
            let b = 0.5 * spec.raw(Which::J2, s[i + 1], 1);
            g[i] -= a;
            g[i + 1] += a - b;
            g[i + 2] += b;
        } else {
            let c = 0.5 * spec.raw(Which::J2, 0.5 * (s[i] + s[i + 1]), 1);
            g[i] -= c;
            g[i + 2] += c;
        }
    }
    Ok(g)
}

/// Hessian of [`layout_energy`] (bandwidth 2) with respect to every position.
pub(crate) fn layout_hessian(spec: &PotentialSpec, layout: CellLayout, u: &[f64]) -> Result<SymBand> {
    let n = u.len() - 1;
    let s = check_strains(spec, u)?;
    let inv_lam = n as f64;
    let mut h = SymBand::zeros(n + 1, 2);
    let bond = |h: &mut SymBand, i: usize, k: f64| {
        h.add(i, i, k);
        h.add(i + 1, i + 1, k);
        h.add(i + 1, i, -k);
    };
    for i in 0..n {
        bond(&mut h, i, spec.raw(Which::J1, s[i], 2) * inv_lam);
    }
    for i in 0..n - 1 {
        if layout.is_local(i) {
            bond(&mut h, i, 0.5 * spec.raw(Which::J2, s[i], 2) * inv_lam);
            bond(&mut h, i + 1, 0.5 * spec.raw(Which::J2, s[i + 1], 2) * inv_lam);
        } else {
            let k = 0.25 * spec.raw(Which::J2, 0.5 * (s[i] + s[i + 1]), 2) * inv_lam;
            h.add(i, i, k);
            h.add(i + 2, i + 2, k);
            h.add(i + 2, i, -k);
        }
    }
    Ok(h)
}

fn checked_positions(cfg: &ChainConfig, u: &Deformation, enforce_bc: bool) -> Result<Vec<f64>> {
    cfg.validate()?;
    if u.u.len() != cfg.n + 1 {
        return Err(Error::InvalidConfig(format!(
            "deformation has {} positions, chain needs {}",
            u.u.len(),
            cfg.n + 1
        )));
    }
    let mut v = u.u.clone();
    if enforce_bc {
        cfg.apply_bc(&mut v);
    }
    Ok(v)
}

fn check_mesh(cfg: &ChainConfig, mesh: &MeshConfig) -> Result<()> {
    if mesh.n != cfg.n {
        return Err(Error::InvalidConfig(format!(
            "mesh is for n = {}, chain has n = {}",
            mesh.n, cfg.n
        )));
    }
    Ok(())
}

/// Atomistic energy; `+inf` when a bond leaves the domain. With `enforce_bc`
/// the prescribed positions are taken from `cfg` instead of `u`.
pub fn energy_atomistic(
    spec: &PotentialSpec,
    cfg: &ChainConfig,
    u: &Deformation,
    enforce_bc: bool,
) -> Result<f64> {
    let v = checked_positions(cfg, u, enforce_bc)?;
    Ok(layout_energy(spec, CellLayout::for_model(&Model::Atomistic), &v))
}

/// QNL energy with local cells `k1..=k2-2`.
pub fn energy_qnl(
    spec: &PotentialSpec,
    cfg: &ChainConfig,
    mesh: &MeshConfig,
    u: &Deformation,
    enforce_bc: bool,
) -> Result<f64> {
    check_mesh(cfg, mesh)?;
    let v = checked_positions(cfg, u, enforce_bc)?;
    let model = Model::Qnl { mesh: mesh.clone() };
    Ok(layout_energy(spec, CellLayout::for_model(&model), &v))
}

/// Energy of either model.
pub fn energy(spec: &PotentialSpec, cfg: &ChainConfig, model: &Model, u: &Deformation, enforce_bc: bool) -> Result<f64> {
    match model {
        Model::Atomistic => energy_atomistic(spec, cfg, u, enforce_bc),
        Model::Qnl { mesh } => energy_qnl(spec, cfg, mesh, u, enforce_bc),
    }
}

/// Gradient of the atomistic energy with respect to the free atoms
/// `u^2, ..., u^{n-2}` (boundary conditions applied).
pub fn grad_atomistic(spec: &PotentialSpec, cfg: &ChainConfig, u: &Deformation) -> Result<Vec<f64>> {
    let v = checked_positions(cfg, u, true)?;
    let g = layout_gradient(spec, CellLayout::for_model(&Model::Atomistic), &v)?;
    Ok(g[2..=cfg.n - 2].to_vec())
}

/// Gradient of the QNL energy with respect to the free atoms `u^2, ..., u^{n-2}`.
pub fn grad_qnl(spec: &PotentialSpec, cfg: &ChainConfig, mesh: &MeshConfig, u: &Deformation) -> Result<Vec<f64>> {
    check_mesh(cfg, mesh)?;
    let v = checked_positions(cfg, u, true)?;
    let model = Model::Qnl { mesh: mesh.clone() };
    let g = layout_gradient(spec, CellLayout::for_model(&model), &v)?;
    Ok(g[2..=cfg.n - 2].to_vec())
}

/// QNL energy of the interpolated deformation and its gradient with respect
/// to the free repatom values (all repatoms except `0, 1, n-1, n`).
/// The prescribed repatom values are taken from `cfg`.
pub fn reduced_energy_and_grad(
    spec: &PotentialSpec,
    cfg: &ChainConfig,
    mesh: &MeshConfig,
    r: &ReducedDeformation,
) -> Result<(f64, Vec<f64>)> {
    let p = ChainProblem::new(spec, cfg, &Model::Qnl { mesh: mesh.clone() })?;
    if r.values.len() != p.repatoms.len() {
        return Err(Error::InvalidConfig("wrong number of repatom values".into()));
    }
    let x = r.values[2..r.values.len() - 2].to_vec();
    let e = p.energy(&x);
    let g = p.gradient(&x)?;
    Ok((e, g))
}

/// `(E - J0**(ell)) / lambda` with the boundary conditions of `cfg` applied.
pub fn first_order_energy(pot: &Potential, cfg: &ChainConfig, model: &Model, u: &Deformation) -> Result<f64> {
    let e = energy(&pot.spec, cfg, model, u, true)?;
    let (env, _) = pot.j0_star_star(cfg.ell)?;
    Ok((e - env) / cfg.lambda())
}

/// Cell energies `J2((u^{i+2}-u^i)/2lambda) + (J1(s_{i+1}) + J1(s_i))/2` for `i = 0..=n-2`.
pub fn cell_energies(spec: &PotentialSpec, u: &Deformation) -> Vec<f64> {
    let s = u.strains();
    (0..s.len() - 1)
        .map(|i| spec.j2(0.5 * (s[i] + s[i + 1])) + 0.5 * (spec.j1(s[i + 1]) + spec.j1(s[i])))
        .collect()
}

/// Tangent-corrected cell (`sigma`) and bond (`mu`) energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaMu {
    /// `(i, sigma_i)` for the atomistic cells.
    pub sigma: Vec<(usize, f64)>,
    /// `(i, mu_i)` for the continuum bonds `k1..=k2-1`.
    pub mu: Vec<(usize, f64)>,
    /// The first-order energy reassembled from `sigma` and `mu`.
    pub recombined: f64,
}

/// Decomposes the first-order energy of `u` (with boundary conditions
/// applied) into nonnegative cell and bond contributions.
pub fn sigma_mu_breakdown(pot: &Potential, cfg: &ChainConfig, model: &Model, u: &Deformation) -> Result<SigmaMu> {
    let v = Deformation { u: checked_positions(cfg, u, true)? };
    if let Some(mesh) = model.mesh() {
        check_mesh(cfg, mesh)?;
    }
    let spec = &pot.spec;
    let n = cfg.n;
    let lam = cfg.lambda();
    let (env, denv) = pot.j0_star_star(cfg.ell)?;
    let s = v.strains();
    let cells = cell_energies(spec, &v);
    let sigma_at = |i: usize| {
        let m = (v.u[i + 2] - v.u[i]) / (2.0 * lam);
        cells[i] - env - denv * (m - cfg.ell)
    };
    let mu_at = |i: usize| spec.jcb(s[i]) - env - denv * (s[i] - cfg.ell);

    let (sigma_idx, mu_idx): (Vec<usize>, Vec<usize>) = match model {
        Model::Atomistic => ((0..=n - 2).collect(), Vec::new()),
        Model::Qnl { mesh } => (
            (0..mesh.k1).chain(mesh.k2 - 1..=n - 2).collect(),
            (mesh.k1..=mesh.k2 - 1).collect(),
        ),
    };
    let sigma: Vec<(usize, f64)> = sigma_idx.iter().map(|&i| (i, sigma_at(i))).collect();
    let mu: Vec<(usize, f64)> = mu_idx.iter().map(|&i| (i, mu_at(i))).collect();

    let mut total = 0.5 * spec.j1(cfg.u0_1) + 0.5 * spec.j1(cfg.u1_1);
    total += sigma.iter().map(|p| p.1).sum::<f64>();
    if let Some(mesh) = model.mesh() {
        for &(i, m) in &mu {
            let w = if i == mesh.k1 || i == mesh.k2 - 1 { 0.5 } else { 1.0 };
            total += w * m;
        }
    }
    total -= env + denv * (0.5 * (cfg.u0_1 + cfg.u1_1) - cfg.ell);
    Ok(SigmaMu { sigma, mu, recombined: total })
}

/// Linear interpolation weights of one atom on the repatom list.
#[derive(Debug, Clone, Copy)]
struct Interp {
    a: usize,
    wa: f64,
    /// Second repatom and weight; weight zero when the atom is a repatom.
    b: usize,
    wb: f64,
}

/// A chain energy as a function of its free coordinates: the interior atom
/// positions (atomistic) or the free repatom values (QNL). The prescribed
/// positions come from the boundary conditions.
#[derive(Debug, Clone)]
pub struct ChainProblem {
    spec: PotentialSpec,
    cfg: ChainConfig,
    layout: CellLayout,
    repatoms: Vec<usize>,
    interp: Vec<Interp>,
    /// Lower bound for admissible strains in line searches.
    strain_floor: f64,
}

impl ChainProblem {
    pub fn new(spec: &PotentialSpec, cfg: &ChainConfig, model: &Model) -> Result<Self> {
        cfg.validate()?;
        let repatoms: Vec<usize> = match model {
            Model::Atomistic => (0..=cfg.n).collect(),
            Model::Qnl { mesh } => {
                check_mesh(cfg, mesh)?;
                mesh.repatoms.clone()
            }
        };
        let mut interp = Vec::with_capacity(cfg.n + 1);
        for (a, w) in repatoms.windows(2).enumerate() {
            let (t0, t1) = (w[0], w[1]);
            for j in t0..t1 {
                let s = (j - t0) as f64 / (t1 - t0) as f64;
                interp.push(Interp { a, wa: 1.0 - s, b: a + 1, wb: s });
            }
        }
        interp.push(Interp { a: repatoms.len() - 1, wa: 1.0, b: repatoms.len() - 1, wb: 0.0 });
        let delta1 = crate::potentials::compute_constants(spec).map(|a| a.delta1).unwrap_or(1.0);
        let strain_floor = match spec.kind {
            crate::potentials::PotentialKind::LennardJones => 1e-3 * delta1,
            crate::potentials::PotentialKind::Morse => f64::NEG_INFINITY,
        };
        Ok(Self {
            spec: *spec,
            cfg: *cfg,
            layout: CellLayout::for_model(model),
            repatoms,
            interp,
            strain_floor,
        })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    pub fn repatoms(&self) -> &[usize] {
        &self.repatoms
    }

    /// Number of free coordinates.
    pub fn dim(&self) -> usize {
        self.repatoms.len() - 4
    }

    /// All repatom values for the free coordinates `x`.
    pub fn reduced_from_free(&self, x: &[f64]) -> Vec<f64> {
        let [a, b, c, d] = self.cfg.boundary_values();
        let mut r = Vec::with_capacity(x.len() + 4);
        r.extend([a, b]);
        r.extend_from_slice(x);
        r.extend([c, d]);
        r
    }

    /// All atom positions for the free coordinates `x`.
    pub fn positions(&self, x: &[f64]) -> Vec<f64> {
        let r = self.reduced_from_free(x);
        self.interp.iter().map(|p| p.wa * r[p.a] + p.wb * r[p.b]).collect()
    }

    /// Free coordinates of a full deformation (sampled at the repatoms).
    pub fn free_from_positions(&self, u: &[f64]) -> Vec<f64> {
        let k = self.repatoms.len();
        self.repatoms[2..k - 2].iter().map(|&t| u[t]).collect()
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        layout_energy(&self.spec, self.layout, &self.positions(x))
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let gu = layout_gradient(&self.spec, self.layout, &self.positions(x))?;
        let mut gr = vec![0.0; self.repatoms.len()];
        for (j, p) in self.interp.iter().enumerate() {
            gr[p.a] += p.wa * gu[j];
            if p.wb != 0.0 {
                gr[p.b] += p.wb * gu[j];
            }
        }
        let k = gr.len();
        Ok(gr[2..k - 2].to_vec())
    }

    pub fn hessian(&self, x: &[f64]) -> Result<SymBand> {
        let hu = layout_hessian(&self.spec, self.layout, &self.positions(x))?;
        let k = self.repatoms.len();
        let mut hr = SymBand::zeros(k, 2);
        let n = self.cfg.n;
        let pairs = |j: usize| {
            let p = self.interp[j];
            let mut v = vec![(p.a, p.wa)];
            if p.wb != 0.0 {
                v.push((p.b, p.wb));
            }
            v
        };
        for j in 0..=n {
            for k2 in j.saturating_sub(2)..=(j + 2).min(n) {
                let hjk = hu.get(j, k2);
                if hjk == 0.0 {
                    continue;
                }
                for (a, wa) in pairs(j) {
                    for &(b, wb) in &pairs(k2) {
                        if a >= b {
                            hr.add(a, b, wa * wb * hjk);
                        }
                    }
                }
            }
        }
        Ok(hr.principal(2, k - 4))
    }

    /// Whether every strain stays above the line-search floor.
    pub fn admissible(&self, x: &[f64]) -> bool {
        let u = self.positions(x);
        let n = self.cfg.n as f64;
        u.windows(2).all(|w| {
            let s = (w[1] - w[0]) * n;
            s.is_finite() && s >= self.strain_floor
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lj() -> Potential {
        Potential::new(PotentialSpec::lennard_jones(1.0, 1.0).unwrap()).unwrap()
    }

    /// QNL energy written as boundary halves, atomistic cell energies and
    /// Cauchy-Born bond energies, summed independently of the layout code.
    fn qnl_oracle(spec: &PotentialSpec, cfg: &ChainConfig, mesh: &MeshConfig, u: &[f64]) -> f64 {
        let n = cfg.n;
        let lam = cfg.lambda();
        let s = |i: usize| (u[i + 1] - u[i]) / lam;
        let cell = |i: usize| {
            spec.j2((u[i + 2] - u[i]) / (2.0 * lam)) + 0.5 * (spec.j1(s(i + 1)) + spec.j1(s(i)))
        };
        let (k1, k2) = (mesh.k1, mesh.k2);
        let mut e = 0.5 * lam * spec.j1(cfg.u0_1);
        for i in 0..k1 {
            e += lam * cell(i);
        }
        e += 0.5 * lam * spec.jcb(s(k1));
        for i in k1 + 1..=k2 - 2 {
            e += lam * spec.jcb(s(i));
        }
        e += 0.5 * lam * spec.jcb(s(k2 - 1));
        for i in k2 - 1..=n - 2 {
            e += lam * cell(i);
        }
        e + 0.5 * lam * spec.j1(cfg.u1_1)
    }

    fn perturbed(cfg: &ChainConfig, z: f64, seed: u64, amp: f64) -> Deformation {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut u = Deformation::affine(cfg.n, z);
        for v in u.u.iter_mut() {
            *v += amp * cfg.lambda() * rng.gen_range(-1.0..1.0);
        }
        cfg.apply_bc(&mut u.u);
        u
    }

    #[test]
    fn affine_energy_of_small_chain() {
        let spec = lj().spec;
        let cfg = ChainConfig::new(4, 1.0, 1.0, 1.0).unwrap();
        let e = energy_atomistic(&spec, &cfg, &Deformation::affine(4, 1.0), false).unwrap();
        assert!((e - (-189.0 / 16384.0)).abs() < 1e-15);
    }

    #[test]
    fn collapsed_bond_has_infinite_energy() {
        let spec = lj().spec;
        let cfg = ChainConfig::new(6, 1.0, 1.0, 1.0).unwrap();
        let mut u = Deformation::affine(6, 1.0);
        u.u[3] = u.u[2];
        assert_eq!(energy_atomistic(&spec, &cfg, &u, false).unwrap(), f64::INFINITY);
        assert!(matches!(grad_atomistic(&spec, &cfg, &u), Err(Error::Domain { .. })));
    }

    #[test]
    fn mesh_validation() {
        assert!(MeshConfig::full(10, 2, 7).is_ok());
        assert!(MeshConfig::full(10, 0, 7).is_err());
        assert!(MeshConfig::full(10, 2, 8).is_err());
        assert!(MeshConfig::new(10, 2, 7, vec![0, 1, 2, 7, 8, 9, 10]).is_ok());
        assert!(MeshConfig::new(10, 2, 7, vec![0, 1, 7, 8, 9, 10]).is_err());
    }

    #[test]
    fn rule_with_spacing_two() {
        let rule = MeshRule::AtomisticWindow { window: WindowSize::Atoms { count: 8 }, spacing: 2 };
        let (mesh, desc) = mesh_from_rule(64, &rule).unwrap();
        assert_eq!((mesh.k1, mesh.k2), (8, 56));
        assert_eq!((desc.r_hat, desc.l_hat), (2, 2));
        assert!(desc.continuum_intervals.iter().all(|iv| iv.1 == 2));
        assert_eq!(desc.spacing_at(0.0), Some(2));
        assert_eq!(desc.spacing_at(0.5), Some(2));
        assert_eq!(desc.spacing_at(1.0), Some(2));
    }

    #[test]
    fn rule_aligns_k2_to_spacing() {
        let rule = MeshRule::AtomisticWindow { window: WindowSize::Sqrt { coeff: 1.0 }, spacing: 3 };
        for n in [64, 100, 128, 256, 512] {
            let (mesh, desc) = mesh_from_rule(n, &rule).unwrap();
            assert_eq!((mesh.k2 - mesh.k1) % 3, 0);
            assert_eq!(desc.l_hat, 3);
            assert_eq!(desc.r_hat, 3);
        }
        assert!(mesh_from_rule(6, &rule).is_err());
    }

    #[test]
    fn full_rule_sqrt_window() {
        let (mesh, desc) = mesh_from_rule(64, &MeshRule::Full { window: WindowSize::Sqrt { coeff: 1.0 } }).unwrap();
        assert_eq!(mesh.k1, 8);
        assert_eq!(mesh.repatoms.len(), 65);
        assert_eq!((desc.r_hat, desc.l_hat), (1, 1));
    }

    #[test]
    fn lift_restrict_round_trip() {
        let mesh = MeshConfig::new(12, 2, 9, vec![0, 1, 2, 5, 7, 9, 10, 11, 12]).unwrap();
        let r = ReducedDeformation { values: vec![0.0, 0.1, 0.2, 0.45, 0.6, 0.8, 0.9, 0.95, 1.0] };
        let u = lift(&mesh, &r).unwrap();
        assert_eq!(restrict(&mesh, &u), r);
        assert!((u.u[3] - (0.2 + 0.25 / 3.0)).abs() < 1e-15);
        assert!(lift(&mesh, &ReducedDeformation { values: vec![0.0] }).is_err());
    }

    #[test]
    fn reduced_gradient_is_chain_rule_of_atom_gradient() {
        let spec = lj().spec;
        let cfg = ChainConfig::new(16, 1.1, 1.05, 1.0).unwrap();
        let mesh = MeshConfig::new(16, 3, 12, vec![0, 1, 2, 3, 5, 7, 9, 11, 12, 13, 14, 15, 16]).unwrap();
        let u = perturbed(&cfg, 1.1, 3, 0.05);
        let mut r = restrict(&mesh, &u);
        let lifted = lift(&mesh, &r).unwrap();
        let (e, g) = reduced_energy_and_grad(&spec, &cfg, &mesh, &r).unwrap();
        assert!((e - energy_qnl(&spec, &cfg, &mesh, &lifted, true).unwrap()).abs() < 1e-14);
        for (k, gk) in g.iter().enumerate() {
            let h = 1e-7;
            r.values[k + 2] += h;
            let ep = reduced_energy_and_grad(&spec, &cfg, &mesh, &r).unwrap().0;
            r.values[k + 2] -= 2.0 * h;
            let em = reduced_energy_and_grad(&spec, &cfg, &mesh, &r).unwrap().0;
            r.values[k + 2] += h;
            let fd = (ep - em) / (2.0 * h);
            assert!((fd - gk).abs() < 1e-6 * (1.0 + gk.abs()), "k = {k}: {fd} vs {gk}");
        }
    }

    #[test]
    fn reduced_hessian_matches_gradient_differences() {
        let spec = lj().spec;
        let cfg = ChainConfig::new(16, 1.1, 1.05, 1.0).unwrap();
        let mesh = MeshConfig::new(16, 3, 12, vec![0, 1, 2, 3, 6, 7, 9, 12, 13, 14, 15, 16]).unwrap();
        let p = ChainProblem::new(&spec, &cfg, &Model::Qnl { mesh: mesh.clone() }).unwrap();
        let u = perturbed(&cfg, 1.1, 5, 0.05);
        let x = p.free_from_positions(&u.u);
        let h = p.hessian(&x).unwrap();
        for j in 0..p.dim() {
            let eps = 1e-6;
            let mut xp = x.clone();
            xp[j] += eps;
            let mut xm = x.clone();
            xm[j] -= eps;
            let gp = p.gradient(&xp).unwrap();
            let gm = p.gradient(&xm).unwrap();
            for i in 0..p.dim() {
                let fd = (gp[i] - gm[i]) / (2.0 * eps);
                let hv = h.get(i, j);
                assert!((fd - hv).abs() < 1e-4 * (1.0 + hv.abs()), "({i},{j}): {fd} vs {hv}");
            }
        }
    }

    #[test]
    fn serialisation_round_trip() {
        let u = Deformation::affine(5, 1.0);
        let back: Deformation = serde_json::from_str(&u.to_json().unwrap()).unwrap();
        assert_eq!(back, u);
        let csv = u.to_csv().unwrap();
        assert!(csv.starts_with("i,x,u,strain"));
        assert_eq!(csv.lines().count(), 7);
    }

    proptest! {
        #[test]
        fn qnl_matches_resummed_oracle(seed in 0u64..1000, n in 10usize..40, z in 0.95f64..1.4) {
            let spec = lj().spec;
            let cfg = ChainConfig::new(n, z, 1.0, 1.1).unwrap();
            let k1 = 2 + (seed as usize % 3);
            let k2 = n - 3 - (seed as usize % 2);
            let mesh = MeshConfig::full(n, k1, k2).unwrap();
            let u = perturbed(&cfg, z, seed, 0.1);
            let e = energy_qnl(&spec, &cfg, &mesh, &u, true).unwrap();
            let o = qnl_oracle(&spec, &cfg, &mesh, &u.u);
            prop_assert!((e - o).abs() <= 1e-12 * (1.0 + o.abs()));
        }

        #[test]
        fn affine_states_agree(n in 8usize..60, z in 0.9f64..2.0) {
            let spec = lj().spec;
            let cfg = ChainConfig::new(n, z, z, z).unwrap();
            let mesh = MeshConfig::full(n, 2, n - 3).unwrap();
            let u = Deformation::affine(n, z);
            let ea = energy_atomistic(&spec, &cfg, &u, true).unwrap();
            let eq = energy_qnl(&spec, &cfg, &mesh, &u, true).unwrap();
            prop_assert!((ea - eq).abs() <= 1e-12 * (1.0 + ea.abs()));
        }

        #[test]
        fn no_ghost_forces_at_affine_states(n in 8usize..60, z in 0.9f64..2.0, k1 in 1usize..4) {
            let spec = lj().spec;
            let cfg = ChainConfig::new(n, z, z, z).unwrap();
            let mesh = MeshConfig::full(n, k1, n - 3).unwrap();
            let g = grad_qnl(&spec, &cfg, &mesh, &Deformation::affine(n, z)).unwrap();
            prop_assert!(g.iter().all(|v| v.abs() < 1e-10));
            let ga = grad_atomistic(&spec, &cfg, &Deformation::affine(n, z)).unwrap();
            prop_assert!(ga.iter().all(|v| v.abs() < 1e-10));
        }

        #[test]
        fn energies_are_translation_invariant(seed in 0u64..500, c in -3.0f64..3.0) {
            let spec = lj().spec;
            let cfg = ChainConfig::new(12, 1.1, 1.0, 1.0).unwrap();
            let mesh = MeshConfig::full(12, 2, 9).unwrap();
            let u = perturbed(&cfg, 1.1, seed, 0.1);
            let shifted = Deformation { u: u.u.iter().map(|v| v + c).collect() };
            for model in [Model::Atomistic, Model::Qnl { mesh: mesh.clone() }] {
                let e0 = energy(&spec, &cfg, &model, &u, false).unwrap();
                let e1 = energy(&spec, &cfg, &model, &shifted, false).unwrap();
                prop_assert!((e0 - e1).abs() <= 1e-12 * (1.0 + e0.abs()));
            }
        }

        #[test]
        fn gradients_match_finite_differences(seed in 0u64..500, qnl in proptest::bool::ANY) {
            let spec = lj().spec;
            let cfg = ChainConfig::new(12, 1.15, 1.05, 1.1).unwrap();
            let model = if qnl { Model::Qnl { mesh: MeshConfig::full(12, 3, 8).unwrap() } } else { Model::Atomistic };
            let u = perturbed(&cfg, 1.15, seed, 0.1);
            let g = match &model {
                Model::Atomistic => grad_atomistic(&spec, &cfg, &u).unwrap(),
                Model::Qnl { mesh } => grad_qnl(&spec, &cfg, mesh, &u).unwrap(),
            };
            for (k, gk) in g.iter().enumerate() {
                let h = 1e-7;
                let mut up = u.clone();
                up.u[k + 2] += h;
                let mut um = u.clone();
                um.u[k + 2] -= h;
                let fd = (energy(&spec, &cfg, &model, &up, true).unwrap()
                    - energy(&spec, &cfg, &model, &um, true).unwrap()) / (2.0 * h);
                prop_assert!((fd - gk).abs() <= 1e-6 * (1.0 + gk.abs()));
            }
        }

        #[test]
        fn sigma_mu_reassemble_first_order_energy(seed in 0u64..500, n in 12usize..40, ell in 0.95f64..1.5) {
            let pot = lj();
            let cfg = ChainConfig::new(n, ell, 1.12, 1.0).unwrap();
            let mesh = MeshConfig::full(n, 3, n - 4).unwrap();
            let u = perturbed(&cfg, ell, seed, 0.1);
            for model in [Model::Atomistic, Model::Qnl { mesh: mesh.clone() }] {
                let br = sigma_mu_breakdown(&pot, &cfg, &model, &u).unwrap();
                let fo = first_order_energy(&pot, &cfg, &model, &u).unwrap();
                prop_assert!((br.recombined - fo).abs() <= 1e-9 * (1.0 + fo.abs()));
                for &(_, v) in br.sigma.iter().chain(br.mu.iter()) {
                    prop_assert!(v >= -1e-12);
                }
            }
        }
    }
}

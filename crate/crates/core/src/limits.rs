//! Boundary-layer and jump energies of semi-infinite chains and the
//! first-order limit functionals assembled from them.
//!
//! All layer problems are solved in strain variables `s_i = v^{i+1} - v^i`.
//! A cell couples two consecutive strains `a, b` through
//! `J2((a+b)/2) + J1(a)/2 + J1(b)/2 - c0 - c1 ((a+b)/2 - ell)`, where
//! `(c0, c1)` is the tangent of the convex envelope at `ell` for elastic
//! layers and `(J0(gamma), 0)` for the fracture layers.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymBand;
use crate::minimize::{local_minimize, LocalOptions, Objective};
use crate::potentials::{Potential, PotentialKind, PotentialSpec, Which};

/// A natural number or `+inf`. Serialised as a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "CountRepr", into = "CountRepr")]
pub enum Count {
    Finite(u32),
    Infinite,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CountRepr {
    Num(u32),
    Text(String),
}

impl TryFrom<CountRepr> for Count {
    type Error = String;
    fn try_from(r: CountRepr) -> std::result::Result<Self, String> {
        match r {
            CountRepr::Num(n) => Ok(Count::Finite(n)),
            CountRepr::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "+inf" | "∞" => Ok(Count::Infinite),
                other => other.parse::<u32>().map(Count::Finite).map_err(|_| format!("not a count: {s}")),
            },
        }
    }
}

impl From<Count> for CountRepr {
    fn from(c: Count) -> Self {
        match c {
            Count::Finite(n) => CountRepr::Num(n),
            Count::Infinite => CountRepr::Text("inf".into()),
        }
    }
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Count::Finite(n) => write!(f, "{n}"),
            Count::Infinite => write!(f, "inf"),
        }
    }
}

impl Count {
    /// Value as a real number, `+inf` for `Infinite`.
    pub fn as_f64(&self) -> f64 {
        match self {
            Count::Finite(n) => *n as f64,
            Count::Infinite => f64::INFINITY,
        }
    }

    pub fn from_usize(n: usize) -> Self {
        Count::Finite(n as u32)
    }
}

/// Which boundary-layer problem to solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BLKind {
    /// `B(theta, ell)` for `0 < ell <= gamma`: first strain `theta`, tail strain `ell`.
    ElasticB { theta: f64, ell: f64 },
    /// `B(gamma)`: free surface, tail strain `gamma`.
    BGamma,
    /// `B_b(theta)`: free surface and `k` cells ending in the boundary bond `theta`.
    Bb { theta: f64 },
    /// `B_IF(m)`: free surface and `k` cells ending in a bond penalised with weight `(2m+1)/2`.
    BIF { m: u32 },
}

/// A boundary-layer query with its truncation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BLQuery {
    pub kind: BLKind,
    /// Initial truncation (number of free cells), at least 4.
    pub n: usize,
    pub tol: f64,
    /// Largest truncation tried.
    pub max_n: usize,
}

impl BLQuery {
    pub fn new(kind: BLKind) -> Self {
        Self { kind, n: 8, tol: 1e-10, max_n: 1 << 14 }
    }
}

/// Converged value of a layer problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BLResult {
    pub value: f64,
    pub n_used: usize,
    /// `|value(N) - value(N/2)|` at the last doubling.
    pub truncation_estimate: f64,
    pub converged: bool,
    /// Optimal `k` for the kinds that minimise over it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_k: Option<usize>,
    /// Strains of the minimiser.
    #[serde(default, skip_serializing)]
    pub strains: Vec<f64>,
    /// Values after each doubling, for monotonicity diagnostics.
    #[serde(default, skip_serializing)]
    pub trace: Vec<f64>,
}

/// A finite chain of strains `s_0..=s_L` with some strains clamped.
struct Layer<'a> {
    spec: &'a PotentialSpec,
    fixed: Vec<Option<f64>>,
    /// Free strains are `free_lo..free_hi`.
    free_lo: usize,
    free_hi: usize,
    c0: f64,
    c1: f64,
    ell: f64,
    penalty: f64,
    j0g: f64,
    floor: f64,
}

impl<'a> Layer<'a> {
    fn new(pot: &'a Potential, fixed: Vec<Option<f64>>, c0: f64, c1: f64, ell: f64, penalty: f64) -> Self {
        let free_lo = fixed.iter().position(|f| f.is_none()).unwrap_or(fixed.len());
        let free_hi = fixed.iter().rposition(|f| f.is_none()).map_or(free_lo, |i| i + 1);
        debug_assert!(fixed[free_lo..free_hi].iter().all(|f| f.is_none()));
        let floor = match pot.spec.kind {
            PotentialKind::LennardJones => 1e-3 * pot.delta1(),
            PotentialKind::Morse => f64::NEG_INFINITY,
        };
        Self { spec: &pot.spec, fixed, free_lo, free_hi, c0, c1, ell, penalty, j0g: pot.j0_gamma(), floor }
    }

    fn strains(&self, x: &[f64]) -> Vec<f64> {
        let mut s: Vec<f64> = self.fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        s[self.free_lo..self.free_hi].copy_from_slice(x);
        s
    }

    fn cells(&self) -> usize {
        self.fixed.len() - 1
    }

    fn value_of(&self, s: &[f64]) -> f64 {
        let sp = self.spec;
        let mut e = 0.5 * sp.j1(s[0]);
        for i in 0..self.cells() {
            let (a, b) = (s[i], s[i + 1]);
            let m = 0.5 * (a + b);
            e += sp.j2(m) + 0.5 * sp.j1(a) + 0.5 * sp.j1(b) - self.c0 - self.c1 * (m - self.ell);
        }
        if self.penalty != 0.0 {
            e += self.penalty * (sp.jcb(s[self.cells()]) - self.j0g);
        }
        if e.is_nan() {
            f64::INFINITY
        } else {
            e
        }
    }

    fn check(&self, s: &[f64]) -> Result<()> {
        match s.iter().find(|&&z| !self.spec.in_domain(z) || z.is_nan()) {
            Some(&z) => Err(Error::Domain { z, low: self.spec.domain_low() }),
            None => Ok(()),
        }
    }
}

impl Objective for Layer<'_> {
    fn dim(&self) -> usize {
        self.free_hi - self.free_lo
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.value_of(&self.strains(x))
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.strains(x);
        self.check(&s)?;
        let sp = self.spec;
        let mut g = vec![0.0; s.len()];
        g[0] += 0.5 * sp.raw(Which::J1, s[0], 1);
        for i in 0..self.cells() {
            let (a, b) = (s[i], s[i + 1]);
            let dm = 0.5 * (sp.raw(Which::J2, 0.5 * (a + b), 1) - self.c1);
            g[i] += dm + 0.5 * sp.raw(Which::J1, a, 1);
            g[i + 1] += dm + 0.5 * sp.raw(Which::J1, b, 1);
        }
        if self.penalty != 0.0 {
            let l = self.cells();
            g[l] += self.penalty * sp.raw(Which::Jcb, s[l], 1);
        }
        Ok(g[self.free_lo..self.free_hi].to_vec())
    }

    fn hessian(&self, x: &[f64]) -> Result<SymBand> {
        let s = self.strains(x);
        self.check(&s)?;
        let sp = self.spec;
        let mut h = SymBand::zeros(s.len(), 1);
        h.add(0, 0, 0.5 * sp.raw(Which::J1, s[0], 2));
        for i in 0..self.cells() {
            let (a, b) = (s[i], s[i + 1]);
            let q = 0.25 * sp.raw(Which::J2, 0.5 * (a + b), 2);
            h.add(i, i, q + 0.5 * sp.raw(Which::J1, a, 2));
            h.add(i + 1, i + 1, q + 0.5 * sp.raw(Which::J1, b, 2));
            h.add(i + 1, i, q);
        }
        if self.penalty != 0.0 {
            let l = self.cells();
            h.add(l, l, self.penalty * sp.raw(Which::Jcb, s[l], 2));
        }
        Ok(h.principal(self.free_lo, self.dim()))
    }

    fn admissible(&self, x: &[f64]) -> bool {
        x.iter().all(|&z| z.is_finite() && z >= self.floor)
    }
}

/// Lowest local minimum of `layer` over several starts (full strain vectors).
fn solve_layer(layer: &Layer, starts: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let opts = LocalOptions { grad_tol: 1e-12, max_iter: 10_000, max_step: 0.5 };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut last_err = None;
    for s0 in starts {
        let x0 = s0[layer.free_lo..layer.free_hi].to_vec();
        match local_minimize(layer, &x0, &opts) {
            Ok(r) => {
                if best.as_ref().map_or(true, |b| r.value < b.0) {
                    best = Some((r.value, layer.strains(&r.x)));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::Inadmissible))
}

fn with_fixed(mut s: Vec<f64>, fixed: &[Option<f64>]) -> Vec<f64> {
    for (v, f) in s.iter_mut().zip(fixed) {
        if let Some(f) = f {
            *v = *f;
        }
    }
    s
}

/// Minimises a layer problem, doubling the truncation until consecutive
/// values differ by at most `q.tol`.
pub fn solve_boundary_layer(pot: &Potential, q: &BLQuery) -> Result<BLResult> {
    if q.n < 4 {
        return Err(Error::InvalidConfig(format!("truncation N = {} < 4", q.n)));
    }
    if !(q.tol > 0.0) {
        return Err(Error::InvalidConfig("tolerance must be positive".into()));
    }
    let g = pot.gamma();
    match q.kind {
        BLKind::ElasticB { theta, ell } => {
            if !(ell > 0.0 && ell <= g * (1.0 + 1e-12)) || !pot.spec.in_domain(theta) {
                return Err(Error::InvalidConfig(format!(
                    "elastic layer needs 0 < ell <= gamma and theta in the domain, got ell = {ell}, theta = {theta}"
                )));
            }
            let (c0, c1) = pot.j0_star_star(ell)?;
            fixed_tail(pot, q, Some(theta), ell, c0, c1)
        }
        BLKind::BGamma => fixed_tail(pot, q, None, g, pot.j0_gamma(), 0.0),
        BLKind::Bb { theta } => {
            if !pot.spec.in_domain(theta) {
                return Err(Error::Domain { z: theta, low: pot.spec.domain_low() });
            }
            sweep(pot, q, Sweep::Boundary(theta))
        }
        BLKind::BIF { m } => sweep(pot, q, Sweep::Interface(0.5 * (2.0 * m as f64 + 1.0))),
    }
}

/// Layers with `N` cells and the last strain clamped to `tail`.
fn fixed_tail(pot: &Potential, q: &BLQuery, head: Option<f64>, tail: f64, c0: f64, c1: f64) -> Result<BLResult> {
    let d1 = pot.delta1();
    let solve = |n: usize, warm: Option<&[f64]>| -> Result<(f64, Vec<f64>)> {
        let mut fixed = vec![None; n + 1];
        fixed[0] = head;
        fixed[n] = Some(tail);
        let layer = Layer::new(pot, fixed.clone(), c0, c1, tail, 0.0);
        let mut starts = vec![with_fixed(vec![tail; n + 1], &fixed)];
        let mut d = vec![tail; n + 1];
        d[if head.is_some() { 1 } else { 0 }] = d1;
        starts.push(with_fixed(d, &fixed));
        if let Some(w) = warm {
            let mut s = vec![tail; n + 1];
            s[..w.len()].copy_from_slice(w);
            starts.push(with_fixed(s, &fixed));
        }
        solve_layer(&layer, &starts)
    };
    let mut n = q.n;
    let (mut prev, mut prof) = solve(n, None)?;
    let mut trace = vec![prev];
    let mut est = f64::INFINITY;
    while 2 * n <= q.max_n {
        let (cur, p) = solve(2 * n, Some(&prof))?;
        n *= 2;
        est = (prev - cur).abs();
        trace.push(cur);
        prev = cur;
        prof = p;
        if est <= q.tol {
            return Ok(BLResult { value: cur, n_used: n, truncation_estimate: est, converged: true, best_k: None, strains: prof, trace });
        }
    }
    Ok(BLResult { value: prev, n_used: n, truncation_estimate: est, converged: false, best_k: None, strains: prof, trace })
}

enum Sweep {
    /// Last strain clamped to `theta`.
    Boundary(f64),
    /// Last strain free with the given penalty weight.
    Interface(f64),
}

/// Layers minimised over the number of cells `k = 0..=N`.
fn sweep(pot: &Potential, q: &BLQuery, kind: Sweep) -> Result<BLResult> {
    let g = pot.gamma();
    let d1 = pot.delta1();
    let j0g = pot.j0_gamma();
    let solve_k = |k: usize, warm: Option<&[f64]>| -> Result<(f64, Vec<f64>)> {
        let mut fixed = vec![None; k + 1];
        let penalty = match kind {
            Sweep::Boundary(theta) => {
                fixed[k] = Some(theta);
                0.0
            }
            Sweep::Interface(w) => w,
        };
        let layer = Layer::new(pot, fixed.clone(), j0g, 0.0, g, penalty);
        let mut starts = vec![with_fixed(vec![g; k + 1], &fixed)];
        let mut d = vec![g; k + 1];
        d[0] = d1;
        starts.push(with_fixed(d, &fixed));
        if let Some(w) = warm {
            // previous optimum with one bulk bond inserted before the last bond
            let mut s = w[..w.len() - 1].to_vec();
            s.push(g);
            s.push(w[w.len() - 1]);
            starts.push(with_fixed(s, &fixed));
            let mut s = w.to_vec();
            s.push(g);
            starts.push(with_fixed(s, &fixed));
        }
        solve_layer(&layer, &starts)
    };
    let mut best = (f64::INFINITY, Vec::new(), 0usize);
    let mut warm: Option<Vec<f64>> = None;
    let mut k = 0usize;
    let advance = |upto: usize, best: &mut (f64, Vec<f64>, usize), warm: &mut Option<Vec<f64>>, k: &mut usize| -> Result<()> {
        while *k <= upto {
            let (v, s) = solve_k(*k, warm.as_deref())?;
            if v < best.0 {
                *best = (v, s.clone(), *k);
            }
            *warm = Some(s);
            *k += 1;
        }
        Ok(())
    };
    let mut n = q.n;
    advance(n, &mut best, &mut warm, &mut k)?;
    let mut prev = best.0;
    let mut trace = vec![prev];
    let mut est = f64::INFINITY;
    while 2 * n <= q.max_n {
        n *= 2;
        advance(n, &mut best, &mut warm, &mut k)?;
        est = (prev - best.0).abs();
        prev = best.0;
        trace.push(prev);
        if est <= q.tol {
            return Ok(BLResult { value: best.0, n_used: n, truncation_estimate: est, converged: true, best_k: Some(best.2), strains: best.1, trace });
        }
    }
    Ok(BLResult { value: best.0, n_used: n, truncation_estimate: est, converged: false, best_k: Some(best.2), strains: best.1, trace })
}

/// End of the chain a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// `x = 0`, slope `u0_1`.
    Left,
    /// `x = 1`, slope `u1_1`.
    Right,
}

/// Truncation settings shared by all layer problems of a table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerOptions {
    pub n: usize,
    pub tol: f64,
    pub max_n: usize,
}

impl Default for LayerOptions {
    fn default() -> Self {
        Self { n: 8, tol: 1e-10, max_n: 1 << 14 }
    }
}

impl LayerOptions {
    fn query(&self, kind: BLKind) -> BLQuery {
        BLQuery { kind, n: self.n, tol: self.tol, max_n: self.max_n }
    }
}

/// Boundary-layer energies of the fracture regime and the jump energies
/// composed from them, for boundary slopes `theta0` (left) and `theta1` (right).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitTable {
    pub theta0: f64,
    pub theta1: f64,
    pub gamma: f64,
    pub j0_gamma: f64,
    /// `B(theta0, gamma)`.
    pub b_elastic_u0: BLResult,
    /// `B(theta1, gamma)`.
    pub b_elastic_u1: BLResult,
    pub b_gamma: BLResult,
    pub bb_u0: BLResult,
    pub bb_u1: BLResult,
    pub b_bj_u0: f64,
    pub b_bj_u1: f64,
    pub b_ij: f64,
    /// `B_IF(m)` for the computed `m`.
    pub b_if: BTreeMap<u32, BLResult>,
}

/// One row of the flat table export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub name: String,
    pub value: f64,
    #[serde(rename = "N_used")]
    pub n_used: usize,
    pub truncation_estimate: f64,
}

impl LimitTable {
    /// Solves every layer problem and composes the jump energies. `B_IF(m)`
    /// is computed for `m = 0..=max_m`.
    pub fn compute(pot: &Potential, theta0: f64, theta1: f64, max_m: u32, opts: &LayerOptions) -> Result<Self> {
        let g = pot.gamma();
        let j0g = pot.j0_gamma();
        let b_elastic_u0 = solve_boundary_layer(pot, &opts.query(BLKind::ElasticB { theta: theta0, ell: g }))?;
        let b_elastic_u1 = solve_boundary_layer(pot, &opts.query(BLKind::ElasticB { theta: theta1, ell: g }))?;
        let b_gamma = solve_boundary_layer(pot, &opts.query(BLKind::BGamma))?;
        let bb_u0 = solve_boundary_layer(pot, &opts.query(BLKind::Bb { theta: theta0 }))?;
        let bb_u1 = solve_boundary_layer(pot, &opts.query(BLKind::Bb { theta: theta1 }))?;
        let mut b_if = BTreeMap::new();
        for m in 0..=max_m {
            b_if.insert(m, solve_boundary_layer(pot, &opts.query(BLKind::BIF { m }))?);
        }
        let b_bj = |theta: f64, bb: &BLResult| 0.5 * pot.spec.j1(theta) + bb.value + b_gamma.value - 2.0 * j0g;
        Ok(Self {
            theta0,
            theta1,
            gamma: g,
            j0_gamma: j0g,
            b_bj_u0: b_bj(theta0, &bb_u0),
            b_bj_u1: b_bj(theta1, &bb_u1),
            b_ij: 2.0 * b_gamma.value - 2.0 * j0g,
            b_elastic_u0,
            b_elastic_u1,
            b_gamma,
            bb_u0,
            bb_u1,
            b_if,
        })
    }

    /// Whether every layer problem met its truncation tolerance.
    pub fn converged(&self) -> bool {
        [&self.b_elastic_u0, &self.b_elastic_u1, &self.b_gamma, &self.bb_u0, &self.bb_u1]
            .into_iter()
            .chain(self.b_if.values())
            .all(|r| r.converged)
    }

    pub fn theta(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.theta0,
            Side::Right => self.theta1,
        }
    }

    /// `B(theta, gamma)` for the slope at `side`.
    pub fn b_elastic(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.b_elastic_u0.value,
            Side::Right => self.b_elastic_u1.value,
        }
    }

    pub fn b_bj(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.b_bj_u0,
            Side::Right => self.b_bj_u1,
        }
    }

    pub fn bb(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.bb_u0.value,
            Side::Right => self.bb_u1.value,
        }
    }

    /// `B_IF(m)`, with `B_IF(inf) = B(gamma)`.
    pub fn b_if(&self, m: Count) -> Result<f64> {
        match m {
            Count::Infinite => Ok(self.b_gamma.value),
            Count::Finite(m) => self.b_if.get(&m).map(|r| r.value).ok_or_else(|| Error::MissingEntry(format!("B_IF({m})"))),
        }
    }

    /// `B_AIF(n) = B_IF(n-1) + B(gamma) - 2 J0(gamma)` for `n >= 1`.
    pub fn b_aif(&self, n: Count) -> Result<f64> {
        let m = match n {
            Count::Finite(0) => return Err(Error::MissingEntry("B_AIF(0)".into())),
            Count::Finite(n) => Count::Finite(n - 1),
            Count::Infinite => Count::Infinite,
        };
        Ok(self.b_if(m)? + self.b_gamma.value - 2.0 * self.j0_gamma)
    }

    /// `min{B_AIF(n), B(gamma) - (1/2 + n) J0(gamma), -k J0(gamma)}`; terms with
    /// an infinite count are `+inf` since `J0(gamma) < 0`.
    pub fn b_ifj_tilde(&self, n: Count, k: Count) -> Result<f64> {
        let j = self.j0_gamma;
        let scaled = |c: f64, off: f64| if c.is_infinite() { f64::INFINITY } else { -(off + c) * j };
        let a = self.b_aif(n)?;
        let b = self.b_gamma.value + scaled(n.as_f64(), 0.5);
        let c = scaled(k.as_f64(), 0.0);
        Ok(a.min(b).min(c))
    }

    /// `min{B~_IFJ(n, k) + B(theta, gamma), B_BJ(theta)}` for the slope at `side`.
    pub fn b_ifj(&self, n: Count, k: Count, side: Side) -> Result<f64> {
        Ok((self.b_ifj_tilde(n, k)? + self.b_elastic(side)).min(self.b_bj(side)))
    }

    /// Flat export: every layer value and composite, including the
    /// `B_IFJ(n, k, theta)` grid for `n, k in {1, 2, 3, inf}`.
    pub fn entries(&self) -> Vec<TableEntry> {
        let mut v = Vec::new();
        let push = |v: &mut Vec<TableEntry>, name: String, value: f64, parts: &[&BLResult]| {
            let n_used = parts.iter().map(|r| r.n_used).max().unwrap_or(0);
            let est = parts.iter().fold(0.0, |acc, r| acc + r.truncation_estimate);
            v.push(TableEntry { name, value, n_used, truncation_estimate: est });
        };
        push(&mut v, "J0_gamma".into(), self.j0_gamma, &[]);
        push(&mut v, "B_elastic_u0".into(), self.b_elastic_u0.value, &[&self.b_elastic_u0]);
        push(&mut v, "B_elastic_u1".into(), self.b_elastic_u1.value, &[&self.b_elastic_u1]);
        push(&mut v, "B_gamma".into(), self.b_gamma.value, &[&self.b_gamma]);
        push(&mut v, "Bb_u0".into(), self.bb_u0.value, &[&self.bb_u0]);
        push(&mut v, "Bb_u1".into(), self.bb_u1.value, &[&self.bb_u1]);
        push(&mut v, "B_BJ_u0".into(), self.b_bj_u0, &[&self.bb_u0, &self.b_gamma]);
        push(&mut v, "B_BJ_u1".into(), self.b_bj_u1, &[&self.bb_u1, &self.b_gamma]);
        push(&mut v, "B_IJ".into(), self.b_ij, &[&self.b_gamma, &self.b_gamma]);
        for (m, r) in &self.b_if {
            push(&mut v, format!("B_IF({m})"), r.value, &[r]);
        }
        for (m, r) in &self.b_if {
            if let Ok(val) = self.b_aif(Count::Finite(m + 1)) {
                push(&mut v, format!("B_AIF({})", m + 1), val, &[r, &self.b_gamma]);
            }
        }
        let grid = [Count::Finite(1), Count::Finite(2), Count::Finite(3), Count::Infinite];
        for side in [Side::Left, Side::Right] {
            let (tag, el, bb) = match side {
                Side::Left => ("u0", &self.b_elastic_u0, &self.bb_u0),
                Side::Right => ("u1", &self.b_elastic_u1, &self.bb_u1),
            };
            for n in grid {
                for k in grid {
                    if let Ok(val) = self.b_ifj(n, k, side) {
                        let mut parts = vec![el, bb, &self.b_gamma];
                        if let Count::Finite(n) = n {
                            if let Some(r) = self.b_if.get(&(n - 1)) {
                                parts.push(r);
                            }
                        }
                        push(&mut v, format!("B_IFJ({n},{k},{tag})"), val, &parts);
                    }
                }
            }
        }
        v
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV with columns `name, value, N_used, truncation_estimate`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in self.entries() {
            w.serialize(e)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?)
            .map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// A point of the jump set of a limit deformation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "kebab-case")]
pub enum JumpPoint {
    Boundary0,
    Boundary1,
    /// Interior point `x` where the continuum repatom spacing is `b`.
    Interior { x: f64, b: Count },
}

impl JumpPoint {
    fn position(&self) -> f64 {
        match self {
            JumpPoint::Boundary0 => 0.0,
            JumpPoint::Boundary1 => 1.0,
            JumpPoint::Interior { x, .. } => *x,
        }
    }
}

/// Jump set of a piecewise affine limit deformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    pub jumps: Vec<JumpPoint>,
}

impl JumpSpec {
    pub fn new(jumps: Vec<JumpPoint>) -> Result<Self> {
        let s = Self { jumps };
        s.validate()?;
        Ok(s)
    }

    pub fn at0() -> Self {
        Self { jumps: vec![JumpPoint::Boundary0] }
    }

    pub fn at1() -> Self {
        Self { jumps: vec![JumpPoint::Boundary1] }
    }

    pub fn interior(x: f64, b: Count) -> Self {
        Self { jumps: vec![JumpPoint::Interior { x, b }] }
    }

    pub fn validate(&self) -> Result<()> {
        let mut xs: Vec<f64> = self.jumps.iter().map(|j| j.position()).collect();
        for j in &self.jumps {
            if let JumpPoint::Interior { x, .. } = j {
                if !(*x > 0.0 && *x < 1.0) {
                    return Err(Error::InvalidConfig(format!("interior jump at x = {x} is not in (0, 1)")));
                }
            }
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if xs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("jump locations must be distinct".into()));
        }
        Ok(())
    }

    fn counts(&self) -> (f64, f64, usize) {
        let c0 = self.jumps.iter().filter(|j| matches!(j, JumpPoint::Boundary0)).count() as f64;
        let c1 = self.jumps.iter().filter(|j| matches!(j, JumpPoint::Boundary1)).count() as f64;
        let ci = self.jumps.iter().filter(|j| matches!(j, JumpPoint::Interior { .. })).count();
        (c0, c1, ci)
    }
}

/// Limits of the mesh descriptors as `n -> inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcMeshLimits {
    pub r_hat: Count,
    pub l_hat: Count,
    /// Continuum spacing next to the left interface, `b(0)`.
    pub b0: Count,
    /// Continuum spacing next to the right interface, `b(1)`.
    pub b1: Count,
    /// Samples `(x, b(x))` of the interior spacing.
    pub interior: Vec<(f64, Count)>,
}

impl QcMeshLimits {
    /// Uniform spacing `s` everywhere, interfaces included.
    pub fn uniform(s: Count) -> Self {
        Self { r_hat: s, l_hat: s, b0: s, b1: s, interior: vec![(0.5, s)] }
    }
}

fn require_fracture_state(jump: &JumpSpec) -> Result<()> {
    jump.validate()?;
    if jump.jumps.is_empty() {
        return Err(Error::Infeasible("a strain above gamma needs at least one jump".into()));
    }
    Ok(())
}

/// Atomistic first-order limit energy of a fractured state.
pub fn limit_energy_atomistic(jump: &JumpSpec, table: &LimitTable) -> Result<f64> {
    require_fracture_state(jump)?;
    let (c0, c1, ci) = jump.counts();
    Ok(table.b_elastic(Side::Left) * (1.0 - c0) + table.b_elastic(Side::Right) * (1.0 - c1) - table.j0_gamma
        + table.b_bj(Side::Left) * c0
        + table.b_bj(Side::Right) * c1
        + table.b_ij * ci as f64)
}

/// QC first-order limit energy of a fractured state for the given mesh limits.
pub fn limit_energy_qc(jump: &JumpSpec, mesh: &QcMeshLimits, table: &LimitTable) -> Result<f64> {
    require_fracture_state(jump)?;
    let (c0, c1, _) = jump.counts();
    let mut e = table.b_elastic(Side::Left) * (1.0 - c0) + table.b_elastic(Side::Right) * (1.0 - c1) - table.j0_gamma;
    if c0 > 0.0 {
        e += c0 * table.b_ifj(mesh.r_hat, mesh.b0, Side::Left)?;
    }
    if c1 > 0.0 {
        e += c1 * table.b_ifj(mesh.l_hat, mesh.b1, Side::Right)?;
    }
    for j in &jump.jumps {
        if let JumpPoint::Interior { b, .. } = j {
            e += match b {
                Count::Infinite => f64::INFINITY,
                Count::Finite(b) => -(*b as f64) * table.j0_gamma,
            };
        }
    }
    Ok(e)
}

/// Limit functional whose minimum is sought.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum LimitModel {
    Atomistic,
    Qc { mesh: QcMeshLimits },
}

/// Minimum of a limit functional over single-jump states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinLimit {
    pub value: f64,
    pub argmin: JumpSpec,
    /// Other single-jump states within `1e-9` of the minimum.
    pub ties: Vec<JumpSpec>,
}

/// `min{B_BJ(theta0) + B(theta1, gamma), B_BJ(theta1) + B(theta0, gamma)} - J0(gamma)`.
pub fn min_formula_atomistic(table: &LimitTable) -> f64 {
    let a = table.b_bj(Side::Left) + table.b_elastic(Side::Right);
    let b = table.b_bj(Side::Right) + table.b_elastic(Side::Left);
    a.min(b) - table.j0_gamma
}

/// Minimises the limit functional over the states with one jump: at 0, at
/// 1, or in the interior (one candidate per distinct interior spacing).
/// States with several jumps cost an additional positive jump energy each
/// and are not enumerated.
pub fn min_limit(model: &LimitModel, table: &LimitTable) -> Result<MinLimit> {
    let mut cands: Vec<(JumpSpec, f64)> = Vec::new();
    match model {
        LimitModel::Atomistic => {
            for j in [JumpSpec::at0(), JumpSpec::at1(), JumpSpec::interior(0.5, Count::Infinite)] {
                let e = limit_energy_atomistic(&j, table)?;
                cands.push((j, e));
            }
        }
        LimitModel::Qc { mesh } => {
            let mut js = vec![JumpSpec::at0(), JumpSpec::at1()];
            let mut seen: Vec<Count> = Vec::new();
            for &(x, b) in &mesh.interior {
                if !seen.contains(&b) {
                    seen.push(b);
                    js.push(JumpSpec::interior(x, b));
                }
            }
            for j in js {
                let e = limit_energy_qc(&j, mesh, table)?;
                cands.push((j, e));
            }
        }
    }
    let (ibest, _) = cands
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, c)| if c.1 < acc.1 { (i, c.1) } else { acc });
    let value = cands[ibest].1;
    let ties = cands
        .iter()
        .enumerate()
        .filter(|(i, c)| *i != ibest && (c.1 - value).abs() <= 1e-9)
        .map(|(_, c)| c.0.clone())
        .collect();
    Ok(MinLimit { value, argmin: cands[ibest].0.clone(), ties })
}

/// One inequality or identity checked on a limit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub name: String,
    pub pass: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// Inequalities and identities satisfied by the boundary-layer energies:
/// bounds on `B(gamma)`, `B(theta, gamma)`, `B_b`, `B_IF`; the ordering of
/// `B(theta, gamma)`, `B_BJ(theta)` and `B(theta, gamma) + B_IJ`; positivity
/// of `B_IJ`; monotonicity of `B_IF` in `m`; the three closed forms of
/// `B~_IFJ`. `strict` adds `B(theta, gamma) < B_BJ(theta)`.
pub fn lemma_suite(pot: &Potential, table: &LimitTable, tol: f64, strict: bool) -> Vec<LemmaCheck> {
    let s = &pot.spec;
    let d1 = pot.delta1();
    let g = pot.gamma();
    let j0 = table.j0_gamma;
    let bg = table.b_gamma.value;
    let mut out = Vec::new();
    let le = |out: &mut Vec<LemmaCheck>, name: String, lhs: f64, rhs: f64| {
        out.push(LemmaCheck { pass: lhs <= rhs + tol, name, lhs, rhs });
    };
    let eq = |out: &mut Vec<LemmaCheck>, name: String, lhs: f64, rhs: f64| {
        out.push(LemmaCheck { pass: (lhs - rhs).abs() <= tol, name, lhs, rhs });
    };
    le(&mut out, "1/2 J1(delta1) <= B(gamma)".into(), 0.5 * s.j1(d1), bg);
    le(&mut out, "B(gamma) <= 1/2 J1(gamma)".into(), bg, 0.5 * s.j1(g));
    for side in [Side::Left, Side::Right] {
        let th = table.theta(side);
        let be = table.b_elastic(side);
        let bb = table.bb(side);
        let bbj = table.b_bj(side);
        le(&mut out, format!("1/2 J1(theta) <= B(theta, gamma) [{side:?}]"), 0.5 * s.j1(th), be);
        le(&mut out, format!("1/2 J1(delta1) <= B_b(theta) [{side:?}]"), 0.5 * s.j1(d1), bb);
        le(&mut out, format!("B_b(theta) <= 1/2 J1(theta) [{side:?}]"), bb, 0.5 * s.j1(th));
        le(&mut out, format!("B(theta, gamma) <= B_BJ(theta) [{side:?}]"), be, bbj);
        le(&mut out, format!("B_BJ(theta) <= B(theta, gamma) + B_IJ [{side:?}]"), bbj, be + table.b_ij);
        if strict {
            out.push(LemmaCheck { name: format!("B(theta, gamma) < B_BJ(theta) [{side:?}]"), pass: be < bbj, lhs: be, rhs: bbj });
        }
    }
    out.push(LemmaCheck { name: "B_IJ > 0".into(), pass: table.b_ij > 0.0, lhs: 0.0, rhs: table.b_ij });
    let mut prev: Option<(u32, f64)> = None;
    for (&m, r) in &table.b_if {
        le(&mut out, format!("1/2 J1(delta1) <= B_IF({m})"), 0.5 * s.j1(d1), r.value);
        le(&mut out, format!("B_IF({m}) <= 1/2 J1(gamma)"), r.value, 0.5 * s.j1(g));
        if let Some((pm, pv)) = prev {
            le(&mut out, format!("B_IF({pm}) <= B_IF({m})"), pv, r.value);
        }
        prev = Some((m, r.value));
    }
    let max_m = table.b_if.keys().max().copied().unwrap_or(0);
    let ns: Vec<Count> = (1..=max_m + 1).map(Count::Finite).chain([Count::Infinite]).collect();
    for &n in &ns {
        if let Ok(v) = table.b_ifj_tilde(n, Count::Finite(1)) {
            eq(&mut out, format!("B~_IFJ({n}, 1) = -J0(gamma)"), v, -j0);
        }
    }
    for k in [Count::Finite(2), Count::Finite(3), Count::Infinite] {
        if let Ok(v) = table.b_ifj_tilde(Count::Finite(1), k) {
            eq(&mut out, format!("B~_IFJ(1, {k}) = B(gamma) - 3/2 J0(gamma)"), v, bg - 1.5 * j0);
        }
        for &n in ns.iter().filter(|n| **n != Count::Finite(1)) {
            if let (Ok(v), Ok(a)) = (table.b_ifj_tilde(n, k), table.b_aif(n)) {
                eq(&mut out, format!("B~_IFJ({n}, {k}) = B_AIF({n})"), v, a);
            }
        }
    }
    out
}

//! Pair potentials, the Cauchy-Born and effective potentials derived from them,
//! and numerical verification of the structural hypotheses the limit analysis
//! relies on.
//!
//! `J1` is the nearest-neighbour potential, `J2(z) = J1(2z)` the
//! next-to-nearest-neighbour one, `J_CB = J1 + J2` the Cauchy-Born energy
//! density and `J0` the effective cell energy
//! `J0(z) = J2(z) + 1/2 inf { J1(z1) + J1(z2) : z1 + z2 = 2z }`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Family of the nearest-neighbour potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    /// `J1(z) = k1/z^12 - k2/z^6` on `z > 0`.
    LennardJones,
    /// `J1(z) = k1 (1 - exp(-k2 (z - delta1)))^2 - k1` on the whole line.
    Morse,
}

/// Which of the derived potentials to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    J1,
    J2,
    Jcb,
}

/// Parameters of a pair potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub k1: f64,
    pub k2: f64,
    /// Equilibrium bond length; only used (and required) for Morse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta1: Option<f64>,
}

impl PotentialSpec {
    /// Lennard-Jones potential. `k2 = 0` is accepted and describes a purely
    /// repulsive potential, which fails the hypothesis checks.
    pub fn lennard_jones(k1: f64, k2: f64) -> Result<Self> {
        let spec = Self { kind: PotentialKind::LennardJones, k1, k2, delta1: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn morse(k1: f64, k2: f64, delta1: f64) -> Result<Self> {
        let spec = Self { kind: PotentialKind::Morse, k1, k2, delta1: Some(delta1) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.k1.is_finite() && self.k2.is_finite();
        if !finite || self.k1 <= 0.0 || self.k2 < 0.0 {
            return Err(Error::InvalidPotential(format!(
                "need k1 > 0 and k2 >= 0, got k1 = {}, k2 = {}",
                self.k1, self.k2
            )));
        }
        match self.kind {
            PotentialKind::LennardJones => Ok(()),
            PotentialKind::Morse => match self.delta1 {
                Some(d) if d.is_finite() && d > 0.0 && self.k2 > 0.0 => Ok(()),
                _ => Err(Error::InvalidPotential(
                    "Morse needs k2 > 0 and a positive delta1".into(),
                )),
            },
        }
    }

    /// Infimum of the domain of `J1` (the domain is the open half line above it).
    pub fn domain_low(&self) -> f64 {
        match self.kind {
            PotentialKind::LennardJones => 0.0,
            PotentialKind::Morse => f64::NEG_INFINITY,
        }
    }

    pub fn in_domain(&self, z: f64) -> bool {
        z > self.domain_low()
    }

    /// `J1^(order)(z)` without a domain check. Outside the domain the result is
    /// meaningless; callers check first.
    #[inline]
    pub(crate) fn j1_raw(&self, z: f64, order: u8) -> f64 {
        match self.kind {
            PotentialKind::LennardJones => {
                let r = 1.0 / z;
                let r2 = r * r;
                let r6 = r2 * r2 * r2;
                let r12 = r6 * r6;
                match order {
                    0 => self.k1 * r12 - self.k2 * r6,
                    1 => (-12.0 * self.k1 * r12 + 6.0 * self.k2 * r6) * r,
                    _ => (156.0 * self.k1 * r12 - 42.0 * self.k2 * r6) * r2,
                }
            }
            PotentialKind::Morse => {
                let d = self.delta1.unwrap_or(1.0);
                let e = (-self.k2 * (z - d)).exp();
                match order {
                    0 => self.k1 * (1.0 - e) * (1.0 - e) - self.k1,
                    1 => 2.0 * self.k1 * self.k2 * e * (1.0 - e),
                    _ => 2.0 * self.k1 * self.k2 * self.k2 * e * (2.0 * e - 1.0),
                }
            }
        }
    }

    #[inline]
    pub(crate) fn raw(&self, which: Which, z: f64, order: u8) -> f64 {
        match which {
            Which::J1 => self.j1_raw(z, order),
            Which::J2 => self.j1_raw(2.0 * z, order) * 2f64.powi(order as i32),
            Which::Jcb => self.raw(Which::J1, z, order) + self.raw(Which::J2, z, order),
        }
    }

    /// Evaluates `which` or one of its first two derivatives at `z`.
    ///
    /// Values outside the domain are `+inf`; derivatives there are an error.
    pub fn eval(&self, which: Which, z: f64, order: u8) -> Result<f64> {
        if order > 2 {
            return Err(Error::InvalidConfig(format!("derivative order {order} > 2")));
        }
        if z.is_nan() {
            return Err(Error::Domain { z, low: self.domain_low() });
        }
        if !self.in_domain(z) {
            return if order == 0 {
                Ok(f64::INFINITY)
            } else {
                Err(Error::Domain { z, low: self.domain_low() })
            };
        }
        Ok(self.raw(which, z, order))
    }

    /// Value of `which` at `z`, `+inf` outside the domain.
    #[inline]
    pub fn value(&self, which: Which, z: f64) -> f64 {
        if self.in_domain(z) {
            self.raw(which, z, 0)
        } else {
            f64::INFINITY
        }
    }

    #[inline]
    pub fn j1(&self, z: f64) -> f64 {
        self.value(Which::J1, z)
    }

    #[inline]
    pub fn j2(&self, z: f64) -> f64 {
        self.value(Which::J2, z)
    }

    #[inline]
    pub fn jcb(&self, z: f64) -> f64 {
        self.value(Which::Jcb, z)
    }
}

/// Characteristic lengths and energies of a potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialAnalysis {
    /// Minimiser of `J1`.
    pub delta1: f64,
    /// Minimiser of `J2`, equal to `delta1 / 2`.
    pub delta2: f64,
    /// Minimiser of `J_CB` (and of `J0`).
    pub gamma: f64,
    /// Zero of `J1`.
    pub z0: f64,
    /// Inflection point of `J1 + 2 J2` (Lennard-Jones only).
    pub zc: Option<f64>,
    pub j0_gamma: f64,
    /// `J0` at `z_max`, used in place of `J0(+inf)`.
    pub j0_infinity: f64,
    pub z_max: f64,
}

/// Computes `delta1`, `gamma`, `z0`, `zc`, `J0(gamma)` and the far-field value of `J0`.
pub fn compute_constants(spec: &PotentialSpec) -> Result<PotentialAnalysis> {
    spec.validate()?;
    let (delta1, gamma, z0, zc) = match spec.kind {
        PotentialKind::LennardJones => {
            if spec.k2 <= 0.0 {
                return Err(Error::InvalidPotential(
                    "purely repulsive Lennard-Jones potential has no minimiser".into(),
                ));
            }
            let delta1 = (2.0 * spec.k1 / spec.k2).powf(1.0 / 6.0);
            let gamma = ((1.0 + 2f64.powi(-12)) / (1.0 + 2f64.powi(-6))).powf(1.0 / 6.0) * delta1;
            let z0 = (spec.k1 / spec.k2).powf(1.0 / 6.0);
            let zc = delta1
                * (13.0 / 7.0 * (1.0 + 2f64.powi(-11)) / (1.0 + 2f64.powi(-5))).powf(1.0 / 6.0);
            (delta1, gamma, z0, Some(zc))
        }
        PotentialKind::Morse => {
            let delta1 = spec.delta1.expect("validated");
            let gamma = bisect(
                "J_CB'",
                |z| spec.raw(Which::Jcb, z, 1),
                0.5 * delta1,
                delta1,
            )?;
            let z0 = delta1 - std::f64::consts::LN_2 / spec.k2;
            (delta1, gamma, z0, None)
        }
    };
    let z_max = 1.0e3 * delta1;
    let j0_gamma = spec.jcb(gamma);
    let j0_infinity = j0_split_raw(spec, delta1, z_max)?.value;
    Ok(PotentialAnalysis {
        delta1,
        delta2: 0.5 * delta1,
        gamma,
        z0,
        zc,
        j0_gamma,
        j0_infinity,
        z_max,
    })
}

/// Root of a continuous function with a sign change on `[lo, hi]`.
pub(crate) fn bisect(
    what: &'static str,
    f: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
) -> Result<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::RootNotBracketed { what, lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Optimal split of a cell of mean strain `z` into two bonds `z1 <= z2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct J0Split {
    pub value: f64,
    pub z1: f64,
    pub z2: f64,
}

fn j0_split_raw(spec: &PotentialSpec, delta1: f64, z: f64) -> Result<J0Split> {
    if !spec.in_domain(z) {
        return Err(Error::Domain { z, low: spec.domain_low() });
    }
    // The pair energy is symmetric about z1 = z, so z1 <= z suffices.
    let g = |z1: f64| spec.j1(z1) + spec.j1(2.0 * z - z1);
    let dg = |z1: f64| spec.j1_raw(z1, 1) - spec.j1_raw(2.0 * z - z1, 1);
    let (lo, width) = match spec.kind {
        PotentialKind::LennardJones => (1.0e-3 * delta1, 0.5 * delta1),
        PotentialKind::Morse => (z.min(delta1) - 40.0 / spec.k2, 1.0 / spec.k2),
    };
    let mut best = J0Split { value: spec.j2(z) + 0.5 * g(z), z1: z, z2: z };
    if !(lo < z) {
        return Ok(best);
    }

    let mut xs: Vec<f64> = Vec::with_capacity(4200);
    const COARSE: usize = 2048;
    for i in 0..=COARSE {
        let t = i as f64 / COARSE as f64;
        let x = match spec.kind {
            PotentialKind::LennardJones => lo * (z / lo).powf(t),
            PotentialKind::Morse => lo + (z - lo) * t,
        };
        xs.push(x);
    }
    let (fa, fb) = ((delta1 - 5.0 * width).max(lo), (delta1 + 5.0 * width).min(z));
    if fa < fb {
        const FINE: usize = 1024;
        for i in 0..=FINE {
            xs.push(fa + (fb - fa) * i as f64 / FINE as f64);
        }
    }
    xs.push(z);
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();

    let vals: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let (imin, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let mut a = xs[imin.saturating_sub(1)];
    let mut b = xs[(imin + 1).min(xs.len() - 1)];

    // Golden section narrows the bracket, a sign change of g' then pins the
    // minimiser to full precision.
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..400 {
        if (b - a) <= 1e-14 * b.abs().max(1.0) {
            break;
        }
        if gc <= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + phi * (b - a);
            gd = g(d);
        }
    }
    let mut z1 = 0.5 * (a + b);
    let lo_b = xs[imin.saturating_sub(1)];
    let hi_b = xs[(imin + 1).min(xs.len() - 1)];
    if dg(lo_b) < 0.0 && dg(hi_b) > 0.0 {
        if let Ok(root) = bisect("J0 split", dg, lo_b, hi_b) {
            if g(root) <= g(z1) {
                z1 = root;
            }
        }
    }
    let gv = g(z1);
    if !gv.is_finite() {
        return Err(Error::NonConvergence {
            what: "J0 inner minimisation",
            detail: format!("no finite split found at z = {z}"),
        });
    }
    let cand = spec.j2(z) + 0.5 * gv;
    if cand < best.value {
        best = J0Split { value: cand, z1, z2: 2.0 * z - z1 };
    }
    Ok(best)
}

/// A potential together with its characteristic constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub spec: PotentialSpec,
    pub analysis: PotentialAnalysis,
}

impl Potential {
    pub fn new(spec: PotentialSpec) -> Result<Self> {
        let analysis = compute_constants(&spec)?;
        Ok(Self { spec, analysis })
    }

    pub fn gamma(&self) -> f64 {
        self.analysis.gamma
    }

    pub fn delta1(&self) -> f64 {
        self.analysis.delta1
    }

    pub fn j0_gamma(&self) -> f64 {
        self.analysis.j0_gamma
    }

    /// `J0(z)` together with the optimal bond split.
    pub fn j0_split(&self, z: f64) -> Result<J0Split> {
        j0_split_raw(&self.spec, self.analysis.delta1, z)
    }

    pub fn j0(&self, z: f64) -> Result<f64> {
        Ok(self.j0_split(z)?.value)
    }

    /// Convex envelope of `J0` and its derivative: `J_CB` up to `gamma`,
    /// constant `J0(gamma)` beyond.
    pub fn j0_star_star(&self, z: f64) -> Result<(f64, f64)> {
        if !self.spec.in_domain(z) || z.is_nan() {
            return Err(Error::Domain { z, low: self.spec.domain_low() });
        }
        let g = self.analysis.gamma;
        if z <= g {
            Ok((self.spec.raw(Which::Jcb, z, 0), self.spec.raw(Which::Jcb, z, 1)))
        } else {
            Ok((self.analysis.j0_gamma, 0.0))
        }
    }

    /// `R(t) = J2((gamma+t)/2) + (J1(gamma) + J1(t))/2 - J0(gamma) - 3/2 (J_CB(t) - J0(gamma))`.
    pub fn r(&self, t: f64) -> Result<f64> {
        if !self.spec.in_domain(t) || t.is_nan() {
            return Err(Error::Domain { z: t, low: self.spec.domain_low() });
        }
        let s = &self.spec;
        let g = self.analysis.gamma;
        let j0g = self.analysis.j0_gamma;
        Ok(s.j2(0.5 * (g + t)) + 0.5 * (s.j1(g) + s.j1(t)) - j0g - 1.5 * (s.jcb(t) - j0g))
    }

    /// Upper bound for `R(t)` obtained by dropping `J2((gamma+t)/2) <= 0`:
    /// `-J2(t)/2 - J_CB(t) + (J1(gamma) + J0(gamma))/2`.
    pub fn r_tail_bound(&self, t: f64) -> Result<f64> {
        if !self.spec.in_domain(t) || t.is_nan() {
            return Err(Error::Domain { z: t, low: self.spec.domain_low() });
        }
        let s = &self.spec;
        let g = self.analysis.gamma;
        Ok(-0.5 * s.j2(t) - s.jcb(t) + 0.5 * (s.j1(g) + self.analysis.j0_gamma))
    }
}

/// Sampling grid for the hypothesis checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    /// Default grid: 20000 points on `(domainLow + 1e-3 delta1, 10 delta1]`,
    /// log-spaced for Lennard-Jones. For Morse the lower end is
    /// `z0 - 5/k2`, where `J1` already exceeds `k1 e^10`.
    pub fn default_for(spec: &PotentialSpec, analysis: Option<&PotentialAnalysis>) -> Self {
        let delta1 = analysis.map(|a| a.delta1).unwrap_or(1.0);
        let lo = match spec.kind {
            PotentialKind::LennardJones => 1e-3 * delta1,
            PotentialKind::Morse => {
                analysis.map(|a| a.z0).unwrap_or(delta1) - 5.0 / spec.k2.max(1e-12)
            }
        };
        Self { lo, hi: 10.0 * delta1, points: 20_000 }
    }

    pub fn points_for(&self, spec: &PotentialSpec) -> Vec<f64> {
        let m = self.points.max(2);
        (0..m)
            .map(|i| {
                let t = i as f64 / (m - 1) as f64;
                if spec.kind == PotentialKind::LennardJones && self.lo > 0.0 {
                    self.lo * (self.hi / self.lo).powf(t)
                } else {
                    self.lo + (self.hi - self.lo) * t
                }
            })
            .collect()
    }
}

/// Outcome of one named hypothesis check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub pass: bool,
    /// Value of the checked quantity at the witness (NaN, serialised as null,
    /// when the quantity does not exist).
    pub worst_value: f64,
    pub witness_z: f64,
}

/// Named pass/fail results, serialised as `{name: {pass, worst_value, witness_z}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CheckReport {
    pub checks: BTreeMap<String, CheckEntry>,
}

impl CheckReport {
    pub fn all_pass(&self) -> bool {
        self.checks.values().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&CheckEntry> {
        self.checks.get(name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn put(&mut self, name: &str, pass: bool, worst_value: f64, witness_z: f64) {
        self.checks.insert(name.to_string(), CheckEntry { pass, worst_value, witness_z });
    }
}

/// Names of the checks, in report order.
pub const CHECK_NAMES: [&str; 8] = [
    "j1_gamma_negative",
    "j2_gamma_negative",
    "j2_delta1_negative",
    "j2_gamma_exceeds_twice_j2_mid",
    "r_nonpositive",
    "j0_equals_jcb_below_gamma",
    "j0_gamma_below_j0_infinity",
    "boundary_jump_sublevel",
];

/// Options for [`check_assumptions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub grid: Option<GridSpec>,
    /// Boundary slope for the sublevel-set check; defaults to `delta1`.
    pub theta: Option<f64>,
    /// Sublevel margin; defaults to `(J1(0) - J1(theta))/2` where `J1(0)` is
    /// finite and to a margin covering the whole grid otherwise.
    pub eta: Option<f64>,
    /// Slack allowed in the sign checks on the grid.
    pub tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { grid: None, theta: None, eta: None, tol: 1e-10 }
    }
}

/// Verifies the hypotheses on `spec` numerically.
///
/// A potential without a minimiser (e.g. purely repulsive) has no `gamma`;
/// every check is then reported as failed, with the grid minimum of `J2`
/// as witness for the sign checks on `J2`.
pub fn check_assumptions(spec: &PotentialSpec, opts: &CheckOptions) -> Result<CheckReport> {
    spec.validate()?;
    let mut rep = CheckReport::default();
    let pot = match Potential::new(*spec) {
        Ok(p) => p,
        Err(Error::InvalidPotential(_)) | Err(Error::RootNotBracketed { .. }) => {
            let grid = opts.grid.unwrap_or_else(|| GridSpec::default_for(spec, None));
            let zs = grid.points_for(spec);
            let (wz, wv) = zs
                .iter()
                .map(|&z| (z, spec.j2(z)))
                .fold((f64::NAN, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            for name in CHECK_NAMES {
                let neg_j2 = name == "j2_gamma_negative" || name == "j2_delta1_negative";
                if neg_j2 {
                    rep.put(name, false, wv, wz);
                } else {
                    rep.put(name, false, f64::NAN, f64::NAN);
                }
            }
            return Ok(rep);
        }
        Err(e) => return Err(e),
    };
    let a = pot.analysis;
    let (g, d1) = (a.gamma, a.delta1);
    let tol = opts.tol;

    let v = spec.j1(g);
    rep.put("j1_gamma_negative", v < 0.0, v, g);
    let v = spec.j2(g);
    rep.put("j2_gamma_negative", v < 0.0, v, g);
    let v = spec.j2(d1);
    rep.put("j2_delta1_negative", v < 0.0, v, d1);
    let v = spec.j2(g) - 2.0 * spec.j2(0.5 * (d1 + g));
    rep.put("j2_gamma_exceeds_twice_j2_mid", v > 0.0, v, g);

    let grid = opts.grid.unwrap_or_else(|| GridSpec::default_for(spec, Some(&a)));
    let zs = grid.points_for(spec);

    let (mut wz, mut wv) = (f64::NAN, f64::NEG_INFINITY);
    for &t in &zs {
        let r = pot.r(t)?;
        if r > wv {
            wv = r;
            wz = t;
        }
    }
    rep.put("r_nonpositive", wv <= tol, wv, wz);

    let (mut wz, mut wv) = (f64::NAN, 0.0f64);
    for &z in zs.iter().step_by(10).filter(|&&z| z <= g) {
        let diff = (pot.j0(z)? - spec.jcb(z)).abs() / spec.jcb(z).abs().max(1.0);
        if diff >= wv {
            wv = diff;
            wz = z;
        }
    }
    rep.put("j0_equals_jcb_below_gamma", wv <= 1e-10, wv, wz);

    let v = a.j0_infinity - a.j0_gamma;
    rep.put("j0_gamma_below_j0_infinity", v > 0.0, v, a.z_max);

    let theta = opts.theta.unwrap_or(d1);
    let level_cap = match opts.eta {
        Some(eta) => spec.j1(theta) + 2.0 * eta,
        None => match spec.kind {
            PotentialKind::Morse => spec.j1(0.0),
            PotentialKind::LennardJones => f64::INFINITY,
        },
    };
    let (mut wz, mut wv) = (f64::NAN, f64::NEG_INFINITY);
    for &t in zs.iter().filter(|&&t| spec.j1(t) < level_cap) {
        let q = 0.5 * spec.j1(g) + spec.j2(0.5 * (t + g));
        if q > wv {
            wv = q;
            wz = t;
        }
    }
    rep.put("boundary_jump_sublevel", wv <= tol, wv, wz);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lj() -> Potential {
        Potential::new(PotentialSpec::lennard_jones(1.0, 1.0).unwrap()).unwrap()
    }

    fn morse() -> Potential {
        Potential::new(PotentialSpec::morse(1.0, 1.0, 1.0).unwrap()).unwrap()
    }

    /// Independent evaluation of the Lennard-Jones family by direct powers.
    fn lj_oracle(k1: f64, k2: f64, z: f64) -> f64 {
        k1 / z.powi(12) - k2 / z.powi(6)
    }

    #[test]
    fn lj_values_match_direct_powers() {
        let s = PotentialSpec::lennard_jones(1.3, 0.7).unwrap();
        for &z in &[0.5, 0.9, 1.0, 1.2, 2.0, 7.5] {
            let j1 = s.eval(Which::J1, z, 0).unwrap();
            assert!((j1 - lj_oracle(1.3, 0.7, z)).abs() <= 1e-12 * j1.abs().max(1.0));
            let j2 = s.eval(Which::J2, z, 0).unwrap();
            assert!((j2 - lj_oracle(1.3, 0.7, 2.0 * z)).abs() <= 1e-12 * j2.abs().max(1.0));
        }
        assert_eq!(s.eval(Which::J1, 1.0, 0).unwrap(), 1.3 - 0.7);
    }

    #[test]
    fn lj_unit_values() {
        let s = lj().spec;
        assert_eq!(s.eval(Which::J1, 1.0, 0).unwrap(), 0.0);
        let expected = 1.0 / 4096.0 - 1.0 / 64.0;
        assert!((s.eval(Which::J2, 1.0, 0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn out_of_domain_values_and_derivatives() {
        let s = lj().spec;
        assert_eq!(s.eval(Which::J1, 0.0, 0).unwrap(), f64::INFINITY);
        assert_eq!(s.eval(Which::Jcb, -1.0, 0).unwrap(), f64::INFINITY);
        assert!(matches!(s.eval(Which::J1, 0.0, 1), Err(Error::Domain { .. })));
        assert!(matches!(s.eval(Which::J2, -0.5, 2), Err(Error::Domain { .. })));
        let m = morse().spec;
        assert!(m.eval(Which::J1, -3.0, 1).is_ok());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(PotentialSpec::lennard_jones(0.0, 1.0).is_err());
        assert!(PotentialSpec::lennard_jones(1.0, -1.0).is_err());
        assert!(PotentialSpec::morse(1.0, 1.0, 0.0).is_err());
        assert!(PotentialSpec::morse(1.0, 0.0, 1.0).is_err());
        assert!(Potential::new(PotentialSpec::lennard_jones(1.0, 0.0).unwrap()).is_err());
    }

    #[test]
    fn lj_constants_match_closed_forms() {
        let p = lj();
        let a = p.analysis;
        let d1 = 2f64.powf(1.0 / 6.0);
        assert!((a.delta1 - d1).abs() < 1e-14);
        assert!((a.delta1 - 1.122462048309373).abs() < 1e-12);
        assert!((a.gamma - 1.1196108663112256).abs() < 1e-12);
        assert!((a.zc.unwrap() - 1.2381898096066015).abs() < 1e-12);
        assert!((a.z0 - 1.0).abs() < 1e-15);
        assert!((a.j0_gamma - (-0.25781059311691484)).abs() < 1e-13);
        // gamma is a critical point of J_CB
        assert!(p.spec.eval(Which::Jcb, a.gamma, 1).unwrap().abs() < 1e-12);
        // zc is an inflection point of J1 + 2 J2
        let h = |z: f64| p.spec.j1_raw(z, 2) + 2.0 * p.spec.raw(Which::J2, z, 2);
        assert!(h(a.zc.unwrap()).abs() < 1e-10);
        assert!(a.z0 < a.gamma && a.gamma < a.delta1);
    }

    #[test]
    fn morse_constants() {
        let p = morse();
        let a = p.analysis;
        assert!(p.spec.eval(Which::Jcb, a.gamma, 1).unwrap().abs() < 1e-12);
        assert!(a.gamma > 0.5 && a.gamma < 1.0);
        assert!((a.z0 - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert!(p.spec.j1(a.z0).abs() < 1e-14);
        assert!(a.zc.is_none());
    }

    #[test]
    fn j0_matches_jcb_below_gamma_and_splits_beyond() {
        for p in [lj(), morse()] {
            let g = p.gamma();
            for &f in &[0.9, 0.95, 0.99, 1.0] {
                let z = f * g;
                let s = p.j0_split(z).unwrap();
                assert!((s.value - p.spec.jcb(z)).abs() < 1e-12, "z = {z}");
                assert!((s.z1 - z).abs() < 1e-6);
            }
            let far = p.j0_split(3.0 * p.delta1()).unwrap();
            assert!(far.value < p.spec.jcb(3.0 * p.delta1()));
            assert!(far.z1 < far.z2);
        }
    }

    #[test]
    fn j0_far_field_is_above_j0_gamma() {
        for p in [lj(), morse()] {
            let a = p.analysis;
            assert!(a.j0_infinity > a.j0_gamma);
            // Far field: one bond at delta1, the other debonded.
            let expected = 0.5 * p.spec.j1(a.delta1);
            assert!((a.j0_infinity - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn envelope_is_tangent_at_gamma() {
        let p = lj();
        let g = p.gamma();
        let (v_lo, d_lo) = p.j0_star_star(g).unwrap();
        let (v_hi, d_hi) = p.j0_star_star(g + 1e-9).unwrap();
        assert!((v_lo - v_hi).abs() < 1e-12);
        assert!(d_lo.abs() < 1e-12 && d_hi == 0.0);
        assert_eq!(p.j0_star_star(2.0).unwrap().0, p.j0_gamma());
        assert!(p.j0_star_star(0.0).is_err());
    }

    #[test]
    fn r_values() {
        let p = lj();
        assert!(p.r(p.gamma()).unwrap().abs() < 1e-14);
        let zc = p.analysis.zc.unwrap();
        let r = p.r(zc).unwrap();
        let bound = p.r_tail_bound(zc).unwrap();
        assert!(r <= bound);
        assert!((bound - (-0.0469)).abs() < 1e-3);
        assert!(p.r(0.0).is_err());
    }

    #[test]
    fn reports_pass_for_lj_and_morse() {
        for p in [lj(), morse()] {
            let rep = check_assumptions(&p.spec, &CheckOptions::default()).unwrap();
            assert_eq!(rep.checks.len(), CHECK_NAMES.len());
            assert!(rep.all_pass(), "{rep:?}");
        }
    }

    #[test]
    fn repulsive_potential_fails_j2_check() {
        let s = PotentialSpec::lennard_jones(1.0, 0.0).unwrap();
        let rep = check_assumptions(&s, &CheckOptions::default()).unwrap();
        let e = rep.get("j2_gamma_negative").unwrap();
        assert!(!e.pass && e.worst_value >= 0.0);
        let json = rep.to_json().unwrap();
        assert!(json.contains("\"j2_gamma_negative\""));
    }

    #[test]
    fn report_serialises_as_map_of_entries() {
        let rep = check_assumptions(&lj().spec, &CheckOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        let e = &v["r_nonpositive"];
        assert_eq!(e["pass"], serde_json::Value::Bool(true));
        assert!(e["worst_value"].is_number() && e["witness_z"].is_number());
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(z in 0.8f64..4.0, k1 in 0.5f64..2.0, k2 in 0.5f64..2.0) {
            let s = PotentialSpec::lennard_jones(k1, k2).unwrap();
            for which in [Which::J1, Which::J2, Which::Jcb] {
                let h = 1e-6 * z;
                let f = |x: f64| s.eval(which, x, 0).unwrap();
                let d1 = s.eval(which, z, 1).unwrap();
                let fd1 = (f(z + h) - f(z - h)) / (2.0 * h);
                let scale = 1.0 + f(z).abs() + d1.abs();
                prop_assert!((d1 - fd1).abs() <= 1e-6 * scale * z.powi(-14).max(1.0));
                let g = |x: f64| s.eval(which, x, 1).unwrap();
                let d2 = s.eval(which, z, 2).unwrap();
                let fd2 = (g(z + h) - g(z - h)) / (2.0 * h);
                prop_assert!((d2 - fd2).abs() <= 1e-5 * (1.0 + d2.abs()) * z.powi(-14).max(1.0));
            }
        }

        #[test]
        fn morse_derivatives_match_finite_differences(z in -1.0f64..5.0) {
            let s = PotentialSpec::morse(1.0, 1.3, 1.1).unwrap();
            let h = 1e-6;
            let f = |x: f64| s.eval(Which::Jcb, x, 0).unwrap();
            let fd1 = (f(z + h) - f(z - h)) / (2.0 * h);
            let d1 = s.eval(Which::Jcb, z, 1).unwrap();
            prop_assert!((d1 - fd1).abs() <= 1e-6 * (1.0 + d1.abs()));
        }

        #[test]
        fn envelope_is_sandwiched(z in 0.5f64..6.0) {
            let p = lj();
            let (env, _) = p.j0_star_star(z).unwrap();
            let j0 = p.j0(z).unwrap();
            let tol = 1e-12 * (1.0 + j0.abs());
            prop_assert!(env <= j0 + tol);
            prop_assert!(j0 <= p.spec.jcb(z) + tol);
            prop_assert!(env >= p.j0_gamma() - 1e-15);
        }

        #[test]
        fn envelope_is_convex(a in 0.5f64..4.0, b in 0.5f64..4.0, t in 0.0f64..1.0) {
            let p = lj();
            let e = |z: f64| p.j0_star_star(z).unwrap().0;
            let m = t * a + (1.0 - t) * b;
            prop_assert!(e(m) <= t * e(a) + (1.0 - t) * e(b) + 1e-12);
        }

        #[test]
        fn r_is_nonpositive(t in 0.3f64..10.0) {
            prop_assert!(lj().r(t).unwrap() <= 1e-10);
        }
    }
}

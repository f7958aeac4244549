//! Scenario files: TOML or JSON, chosen by extension.

use std::path::Path;

use clap::ValueEnum;
use qnlchain_core::chain::{MeshRule, WindowSize};
use qnlchain_core::limits::{Count, LayerOptions, QcMeshLimits};
use qnlchain_core::minimize::MinimizeOptions;
use qnlchain_core::{ChainConfig, Potential, PotentialSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    PotentialCheck,
    Minimize,
    Converge,
    BoundaryLayer,
    FractureMap,
    LimitCompare,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::PotentialCheck => "potential-check",
            Task::Minimize => "minimize",
            Task::Converge => "converge",
            Task::BoundaryLayer => "boundary-layer",
            Task::FractureMap => "fracture-map",
            Task::LimitCompare => "limit-compare",
        }
    }
}

/// A slope given as a number or as one of the names `delta1`, `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Slope {
    Value(f64),
    Named(String),
}

impl Slope {
    pub fn resolve(&self, pot: &Potential) -> Result<f64, CliError> {
        match self {
            Slope::Value(v) => Ok(*v),
            Slope::Named(s) => match s.as_str() {
                "delta1" => Ok(pot.delta1()),
                "gamma" => Ok(pot.gamma()),
                other => Err(CliError::Config(format!("unknown slope name {other:?}; use a number, \"delta1\" or \"gamma\""))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub n: Option<usize>,
    pub ns: Option<Vec<usize>>,
    pub ell: Option<Slope>,
    pub ell_over_gamma: Option<f64>,
    pub u0_1: Slope,
    pub u1_1: Slope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    Full,
    AtomisticWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub rule: RuleKind,
    pub spacing: Option<usize>,
    pub spacings: Option<Vec<usize>>,
    /// `k1 = round(k1_coeff sqrt(n))`; the default when neither width is given.
    pub k1_coeff: Option<f64>,
    pub k1_atoms: Option<usize>,
}

impl MeshSection {
    fn window(&self) -> WindowSize {
        match (self.k1_atoms, self.k1_coeff) {
            (Some(count), _) => WindowSize::Atoms { count },
            (None, Some(coeff)) => WindowSize::Sqrt { coeff },
            (None, None) => WindowSize::Sqrt { coeff: 1.0 },
        }
    }

    pub fn rule_for(&self, spacing: usize) -> MeshRule {
        match self.rule {
            RuleKind::Full => MeshRule::Full { window: self.window() },
            RuleKind::AtomisticWindow => MeshRule::AtomisticWindow { window: self.window(), spacing },
        }
    }

    pub fn spacing(&self) -> usize {
        match self.rule {
            RuleKind::Full => 1,
            RuleKind::AtomisticWindow => self.spacing.unwrap_or(1),
        }
    }

    pub fn rule(&self) -> MeshRule {
        self.rule_for(self.spacing())
    }
}

/// Solver settings; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptionsSection {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub crack_strain_factor: f64,
    pub layer_n0: usize,
    pub layer_tol: f64,
    pub layer_max_n: usize,
    /// `B_IF(m)` is tabulated for `m = 0..=max_m`.
    pub max_m: u32,
}

impl Default for OptionsSection {
    fn default() -> Self {
        let m = MinimizeOptions::default();
        let l = LayerOptions::default();
        Self {
            grad_tol: m.grad_tol,
            max_iter: m.max_iter,
            crack_strain_factor: m.crack_strain_factor,
            layer_n0: l.n,
            layer_tol: l.tol,
            layer_max_n: l.max_n,
            max_m: 5,
        }
    }
}

impl OptionsSection {
    pub fn minimize(&self) -> MinimizeOptions {
        MinimizeOptions {
            grad_tol: self.grad_tol,
            max_iter: self.max_iter,
            crack_strain_factor: self.crack_strain_factor,
            ..MinimizeOptions::default()
        }
    }

    pub fn layers(&self) -> LayerOptions {
        LayerOptions { n: self.layer_n0, tol: self.layer_tol, max_n: self.layer_max_n }
    }
}

/// Limiting mesh data for `limit-compare`; each field defaults to the mesh spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSection {
    pub r_hat: Option<Count>,
    pub l_hat: Option<Count>,
    pub b0: Option<Count>,
    pub b1: Option<Count>,
    pub b_interior: Option<Count>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub task: Option<Task>,
    pub potential: PotentialSpec,
    pub chain: Option<ChainSection>,
    pub mesh: Option<MeshSection>,
    #[serde(default)]
    pub options: OptionsSection,
    pub limit: Option<LimitSection>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
    }

    /// Checks the parts of the scenario that `task` uses.
    pub fn validate(&self, task: Task) -> Result<(), CliError> {
        if let Some(t) = self.task {
            if t != task {
                return Err(CliError::Config(format!("scenario is for task {}, not {}", t.name(), task.name())));
            }
        }
        self.potential.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let needs_chain = !matches!(task, Task::PotentialCheck);
        if needs_chain && self.chain.is_none() {
            return Err(CliError::Config(format!("task {} needs a [chain] section", task.name())));
        }
        if let Some(c) = &self.chain {
            match (&c.ell, c.ell_over_gamma) {
                (Some(_), Some(_)) => return Err(CliError::Config("give either ell or ell_over_gamma, not both".into())),
                (None, None) if matches!(task, Task::Minimize | Task::Converge | Task::FractureMap) => {
                    return Err(CliError::Config("chain needs ell or ell_over_gamma".into()))
                }
                _ => {}
            }
            if let Some(ns) = &c.ns {
                if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(CliError::Config("chain.ns must be non-empty and strictly increasing".into()));
                }
            }
            match task {
                Task::Minimize if c.n.is_none() => return Err(CliError::Config("minimize needs chain.n".into())),
                Task::Converge | Task::FractureMap if c.ns.is_none() => {
                    return Err(CliError::Config(format!("{} needs chain.ns", task.name())))
                }
                _ => {}
            }
        }
        if matches!(task, Task::Converge | Task::FractureMap) && self.mesh.is_none() {
            return Err(CliError::Config(format!("task {} needs a [mesh] section", task.name())));
        }
        if let Some(m) = &self.mesh {
            let spacings: Vec<usize> = m.spacings.clone().unwrap_or_default().into_iter().chain(m.spacing).collect();
            if spacings.iter().any(|&s| s == 0) {
                return Err(CliError::Config("mesh spacing must be at least 1".into()));
            }
            if m.k1_atoms == Some(0) || m.k1_coeff.is_some_and(|c| !(c > 0.0)) {
                return Err(CliError::Config("atomistic window must be positive".into()));
            }
            if task == Task::FractureMap && m.rule == RuleKind::AtomisticWindow && m.spacings.is_none() {
                return Err(CliError::Config("fracture-map needs mesh.spacings".into()));
            }
        }
        Ok(())
    }

    pub fn chain_section(&self) -> &ChainSection {
        self.chain.as_ref().expect("validated")
    }

    /// Resolved macroscopic strain.
    pub fn ell(&self, pot: &Potential) -> Result<f64, CliError> {
        let c = self.chain_section();
        match (&c.ell, c.ell_over_gamma) {
            (Some(s), _) => s.resolve(pot),
            (None, Some(f)) => Ok(f * pot.gamma()),
            (None, None) => Ok(pot.gamma()),
        }
    }

    pub fn slopes(&self, pot: &Potential) -> Result<(f64, f64), CliError> {
        let c = self.chain_section();
        Ok((c.u0_1.resolve(pot)?, c.u1_1.resolve(pot)?))
    }

    pub fn chain_config(&self, pot: &Potential, n: usize) -> Result<ChainConfig, CliError> {
        let (a, b) = self.slopes(pot)?;
        ChainConfig::new(n, self.ell(pot)?, a, b).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Limiting mesh data: explicit `[limit]` entries, else the mesh spacing.
    pub fn mesh_limits(&self) -> QcMeshLimits {
        let s = Count::from_usize(self.mesh.as_ref().map_or(1, |m| m.spacing()));
        let l = self.limit.clone().unwrap_or(LimitSection { r_hat: None, l_hat: None, b0: None, b1: None, b_interior: None });
        QcMeshLimits {
            r_hat: l.r_hat.unwrap_or(s),
            l_hat: l.l_hat.unwrap_or(s),
            b0: l.b0.unwrap_or(s),
            b1: l.b1.unwrap_or(s),
            interior: vec![(0.5, l.b_interior.unwrap_or(s))],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOML: &str = r#"
name = "demo"
task = "converge"

[potential]
kind = "lennard-jones"
k1 = 1.0
k2 = 1.0

[chain]
ns = [32, 64]
ell_over_gamma = 1.5
u0_1 = "delta1"
u1_1 = "gamma"

[mesh]
rule = "atomistic-window"
spacing = 2

[limit]
l_hat = 1
b_interior = "inf"
"#;

    fn parse(s: &str) -> Scenario {
        toml::from_str(s).unwrap()
    }

    #[test]
    fn parses_toml_and_resolves_named_slopes() {
        let sc = parse(TOML);
        sc.validate(Task::Converge).unwrap();
        let pot = Potential::new(sc.potential).unwrap();
        assert_eq!(sc.slopes(&pot).unwrap(), (pot.delta1(), pot.gamma()));
        assert!((sc.ell(&pot).unwrap() - 1.5 * pot.gamma()).abs() < 1e-15);
        let m = sc.mesh_limits();
        assert_eq!(m.l_hat, Count::Finite(1));
        assert_eq!(m.r_hat, Count::Finite(2));
        assert_eq!(m.interior[0].1, Count::Infinite);
    }

    #[test]
    fn json_and_toml_agree() {
        let sc = parse(TOML);
        let json = serde_json::to_string(&sc).unwrap();
        let back: Scenario = serde_json::from_str(&json).unwrap();
        assert_eq!(sc, back);
    }

    #[test]
    fn rejects_task_mismatch_and_bad_lists() {
        let sc = parse(TOML);
        assert!(sc.validate(Task::Minimize).is_err());
        let bad = TOML.replace("ns = [32, 64]", "ns = [64, 32]");
        assert!(parse(&bad).validate(Task::Converge).is_err());
        let bad = TOML.replace("spacing = 2", "spacing = 0");
        assert!(parse(&bad).validate(Task::Converge).is_err());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let bad = TOML.replace("spacing = 2", "spacing = 2\nspasing = 3");
        assert!(toml::from_str::<Scenario>(&bad).is_err());
    }

    #[test]
    fn unknown_slope_name() {
        let sc = parse(&TOML.replace("\"delta1\"", "\"delta2\""));
        let pot = Potential::new(sc.potential).unwrap();
        assert!(matches!(sc.slopes(&pot), Err(CliError::Config(_))));
    }
}

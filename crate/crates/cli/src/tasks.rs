//! The six scenario tasks. Each returns its artifacts and one summary line
//! per sub-run; non-convergence is reported after the artifacts are built.

use qnlchain_core::chain::{mesh_from_rule, MeshRule, Model};
use qnlchain_core::compare::{convergence_sweep, is_cauchy_like, rows_to_csv, ComparePoint, ConvergenceRow};
use qnlchain_core::limits::{min_formula_atomistic, min_limit, LimitModel, LimitTable};
use qnlchain_core::minimize::{global_minimize, MinimizeResult};
use qnlchain_core::potentials::{check_assumptions, compute_constants, CheckOptions};
use qnlchain_core::Potential;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RuleKind, Scenario, Task};
use crate::error::CliError;
use crate::output::Artifact;

pub const SCHEMA: u32 = 1;

/// What a task produced.
#[derive(Debug, Default)]
pub struct Report {
    pub artifacts: Vec<Artifact>,
    pub summary: Vec<String>,
    /// Sub-runs that did not converge.
    pub unconverged: Vec<String>,
}

/// Files written by `task`.
pub fn outputs(task: Task, sc: &Scenario) -> Vec<&'static str> {
    match task {
        Task::PotentialCheck => vec!["potential_check.json"],
        Task::Minimize => {
            let mut v = vec!["minimize.json", "deformation_atomistic.csv"];
            if sc.mesh.is_some() {
                v.push("deformation_qnl.csv");
            }
            v
        }
        Task::Converge => vec!["convergence.csv", "convergence.json"],
        Task::BoundaryLayer => vec!["limit_table.csv", "limit_table.json"],
        Task::FractureMap => vec!["fracture_map.csv", "fracture_map.json"],
        Task::LimitCompare => vec!["limit_compare.json"],
    }
}

fn envelope(task: Task, sc: &Scenario, body: Value) -> Result<String, CliError> {
    let mut v = json!({ "schema": SCHEMA, "task": task.name(), "name": sc.name });
    if let (Value::Object(head), Value::Object(rest)) = (&mut v, body) {
        head.extend(rest);
    }
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::Output(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serialisable")
}

fn potential(sc: &Scenario) -> Result<Potential, CliError> {
    Potential::new(sc.potential).map_err(|e| CliError::Config(format!("potential: {e}")))
}

pub fn run(task: Task, sc: &Scenario) -> Result<Report, CliError> {
    match task {
        Task::PotentialCheck => potential_check(sc),
        Task::Minimize => minimize(sc),
        Task::Converge => converge(sc),
        Task::BoundaryLayer => boundary_layer(sc),
        Task::FractureMap => fracture_map(sc),
        Task::LimitCompare => limit_compare(sc),
    }
}

fn potential_check(sc: &Scenario) -> Result<Report, CliError> {
    let report = check_assumptions(&sc.potential, &CheckOptions::default())?;
    let constants = compute_constants(&sc.potential).ok();
    let passed = report.checks.values().filter(|c| c.pass).count();
    let body = json!({
        "potential": sc.potential,
        "constants": constants,
        "checks": report,
        "all_pass": report.all_pass(),
    });
    Ok(Report {
        artifacts: vec![Artifact { file: "potential_check.json", contents: envelope(Task::PotentialCheck, sc, body)? }],
        summary: vec![format!("potential-check {}: {passed}/{} checks pass", sc.name, report.checks.len())],
        unconverged: Vec::new(),
    })
}

fn minimize_line(r: &MinimizeResult) -> String {
    format!(
        "minimize n={} model={}: energy={:.12} first_order={:.9} cracks={} converged={}",
        r.n,
        r.model,
        r.energy,
        r.first_order,
        r.cracks.count(),
        r.converged
    )
}

fn minimize(sc: &Scenario) -> Result<Report, CliError> {
    let pot = potential(sc)?;
    let n = sc.chain_section().n.expect("validated");
    let cfg = sc.chain_config(&pot, n)?;
    let opts = sc.options.minimize();
    let mut models = vec![Model::Atomistic];
    if let Some(m) = &sc.mesh {
        let (mesh, _) = mesh_from_rule(n, &m.rule())?;
        models.push(Model::Qnl { mesh });
    }
    let results: Vec<MinimizeResult> =
        models.iter().map(|m| global_minimize(&pot, &cfg, m, &opts)).collect::<Result<_, _>>()?;
    let mut rep = Report::default();
    for r in &results {
        rep.summary.push(minimize_line(r));
        if !r.converged {
            rep.unconverged.push(format!("{} n={}", r.model, r.n));
        }
        let file = if r.model == "atomistic" { "deformation_atomistic.csv" } else { "deformation_qnl.csv" };
        rep.artifacts.push(Artifact { file, contents: r.u.to_csv()? });
    }
    let body = json!({ "chain": cfg, "results": results });
    rep.artifacts.insert(0, Artifact { file: "minimize.json", contents: envelope(Task::Minimize, sc, body)? });
    Ok(rep)
}

fn sweep(sc: &Scenario, pot: &Potential, rule: &MeshRule) -> Result<Vec<ComparePoint>, CliError> {
    let c = sc.chain_section();
    let ns = c.ns.clone().expect("validated");
    let (a, b) = sc.slopes(pot)?;
    Ok(convergence_sweep(pot, &ns, sc.ell(pot)?, a, b, rule, &sc.options.minimize())?)
}

fn converge(sc: &Scenario) -> Result<Report, CliError> {
    let pot = potential(sc)?;
    let rule = sc.mesh.as_ref().expect("validated").rule();
    let points = sweep(sc, &pot, &rule)?;
    let rows: Vec<ConvergenceRow> = points.iter().map(|p| p.row.clone()).collect();
    let mut rep = Report::default();
    for p in &points {
        let r = &p.row;
        rep.summary.push(format!(
            "converge n={}: minAtomistic={:.12} minQNL={:.12} gapOverLambda={:.3e}",
            r.n, r.min_atomistic, r.min_qnl, r.gap_over_lambda
        ));
        if !p.converged() {
            rep.unconverged.push(format!("n={}", r.n));
        }
    }
    let fa: Vec<f64> = rows.iter().map(|r| r.first_order_atomistic).collect();
    let fq: Vec<f64> = rows.iter().map(|r| r.first_order_qnl).collect();
    let body = json!({
        "rule": rule,
        "rows": rows,
        "meshes": points.iter().map(|p| to_value(&p.mesh)).collect::<Vec<_>>(),
        "first_order_cauchy": { "atomistic": is_cauchy_like(&fa), "qnl": is_cauchy_like(&fq) },
    });
    rep.artifacts.push(Artifact { file: "convergence.csv", contents: rows_to_csv(&rows)? });
    rep.artifacts.push(Artifact { file: "convergence.json", contents: envelope(Task::Converge, sc, body)? });
    Ok(rep)
}

fn table(sc: &Scenario, pot: &Potential) -> Result<LimitTable, CliError> {
    let (a, b) = sc.slopes(pot)?;
    Ok(LimitTable::compute(pot, a, b, sc.options.max_m, &sc.options.layers())?)
}

fn boundary_layer(sc: &Scenario) -> Result<Report, CliError> {
    let pot = potential(sc)?;
    let t = table(sc, &pot)?;
    let mut rep = Report::default();
    rep.summary.push(format!(
        "boundary-layer {}: B(gamma)={:.12} B_BJ(u0)={:.12} B_BJ(u1)={:.12} B_IJ={:.12} converged={}",
        sc.name,
        t.b_gamma.value,
        t.b_bj_u0,
        t.b_bj_u1,
        t.b_ij,
        t.converged()
    ));
    if !t.converged() {
        rep.unconverged.push("limit table".into());
    }
    rep.artifacts.push(Artifact { file: "limit_table.csv", contents: t.to_csv()? });
    let body = json!({ "table": t, "entries": t.entries() });
    rep.artifacts.push(Artifact { file: "limit_table.json", contents: envelope(Task::BoundaryLayer, sc, body)? });
    Ok(rep)
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct FractureRow {
    spacing: usize,
    n: usize,
    #[serde(rename = "crackRegionQNL")]
    crack_region_qnl: String,
    #[serde(rename = "crackLocationQNL")]
    crack_location_qnl: f64,
    crack_location_atomistic: f64,
    first_order_atomistic: f64,
    #[serde(rename = "firstOrderQNL")]
    first_order_qnl: f64,
}

fn fracture_map(sc: &Scenario) -> Result<Report, CliError> {
    let pot = potential(sc)?;
    let mesh = sc.mesh.as_ref().expect("validated");
    let spacings = match mesh.rule {
        RuleKind::Full => vec![1],
        RuleKind::AtomisticWindow => mesh.spacings.clone().expect("validated"),
    };
    let sweeps: Vec<(usize, Vec<ComparePoint>)> = spacings
        .par_iter()
        .map(|&s| sweep(sc, &pot, &mesh.rule_for(s)).map(|p| (s, p)))
        .collect::<Result<_, _>>()?;
    let mut rep = Report::default();
    let mut rows = Vec::new();
    for (s, points) in &sweeps {
        for p in points {
            let region = p.qnl_crack_region().map_or("none".to_string(), |r| to_value(&r).as_str().unwrap_or("").to_string());
            rep.summary.push(format!("fracture-map spacing={s} n={}: QNL crack region {region}", p.row.n));
            if !p.converged() {
                rep.unconverged.push(format!("spacing={s} n={}", p.row.n));
            }
            rows.push(FractureRow {
                spacing: *s,
                n: p.row.n,
                crack_region_qnl: region,
                crack_location_qnl: p.row.crack_location_qnl,
                crack_location_atomistic: p.row.crack_location_atomistic,
                first_order_atomistic: p.row.first_order_atomistic,
                first_order_qnl: p.row.first_order_qnl,
            });
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Output(e.to_string()))?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| CliError::Output(e.to_string()))?).expect("utf-8");
    let body = json!({
        "rows": rows,
        "cracks": sweeps.iter().flat_map(|(s, pts)| pts.iter().map(move |p| json!({
            "spacing": s, "n": p.row.n, "qnl": p.qnl.cracks, "atomistic": p.atomistic.cracks,
        }))).collect::<Vec<_>>(),
    });
    rep.artifacts.push(Artifact { file: "fracture_map.csv", contents: csv });
    rep.artifacts.push(Artifact { file: "fracture_map.json", contents: envelope(Task::FractureMap, sc, body)? });
    Ok(rep)
}

fn limit_compare(sc: &Scenario) -> Result<Report, CliError> {
    let pot = potential(sc)?;
    let t = table(sc, &pot)?;
    let mesh_limits = sc.mesh_limits();
    let atom = min_limit(&LimitModel::Atomistic, &t)?;
    let qc = min_limit(&LimitModel::Qc { mesh: mesh_limits.clone() }, &t)?;
    let mut rep = Report::default();
    rep.summary.push(format!(
        "limit-compare {}: atomistic={:.12} qc={:.12} qc argmin={}",
        sc.name,
        atom.value,
        qc.value,
        to_value(&qc.argmin.jumps)
    ));
    if !t.converged() {
        rep.unconverged.push("limit table".into());
    }
    let mut finite = Value::Null;
    let ns = sc.chain.as_ref().and_then(|c| c.ns.clone());
    if let (Some(_), Some(m)) = (ns, &sc.mesh) {
        let points = sweep(sc, &pot, &m.rule())?;
        for p in &points {
            rep.summary.push(format!(
                "limit-compare n={}: firstOrderAtomistic={:.9} firstOrderQNL={:.9}",
                p.row.n, p.row.first_order_atomistic, p.row.first_order_qnl
            ));
            if !p.converged() {
                rep.unconverged.push(format!("n={}", p.row.n));
            }
        }
        finite = to_value(&points.iter().map(|p| &p.row).collect::<Vec<_>>());
    }
    let body = json!({
        "mesh_limits": mesh_limits,
        "atomistic": atom,
        "atomistic_formula": min_formula_atomistic(&t),
        "qc": qc,
        "table": t,
        "finite_n": finite,
    });
    rep.artifacts.push(Artifact { file: "limit_compare.json", contents: envelope(Task::LimitCompare, sc, body)? });
    Ok(rep)
}

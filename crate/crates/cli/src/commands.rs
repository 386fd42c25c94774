//! Subcommand drivers. Each returns an [`Outcome`]; the binary maps it to an
//! exit status.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use qlab_core::propagator::{RelaxOptions, Trajectory};
use qlab_core::states::{mollify, random_ensemble, write_wavefunction_csv, MollifierSpec};
use qlab_core::verifier::{
    convergence_study, ehrenfest_residuals, hypothesis_trace, identity_check_all, kato_rellich_estimate,
    kato_rellich_from_samples, singularity_scaling, to_value, BoundConfig, BoundEstimate, BoundSample, CheckOutcome,
    ConvergenceSetup, OrderFit, Provenance, Report, Verdict,
};
use qlab_core::{
    build_state, evolve, imaginary_time_relax, EvolutionPlan, EvolveLimits, Hamiltonian, Lattice, StateSpec,
    WaveState,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{CliError, Result};
use crate::manifest::{write_atomic, RunManifest, MANIFEST_FILE};
use crate::scenario::{BoundField, Scenario};

/// Largest accepted change of `α*` when the bound ensemble is doubled.
pub const STABILITY_WINDOW: f64 = 0.05;
/// Accepted distance of a fitted convergence order from 2.
pub const ORDER_WINDOW: f64 = 0.3;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub summary: Vec<String>,
    pub files: Vec<PathBuf>,
}

/// Report plus the full result of the underlying computation.
#[derive(Serialize)]
struct Document<'a> {
    #[serde(flatten)]
    report: &'a Report,
    result: Value,
}

struct Setup {
    lattice: Arc<Lattice>,
    h: Hamiltonian,
    psi0: WaveState,
    manifest: RunManifest,
}

fn setup(s: &Scenario, command: &str) -> Result<Setup> {
    let lattice = Lattice::new(s.lattice.clone())?;
    let h = Hamiltonian::new(lattice.clone(), s.potential.clone(), s.masses.clone())?;
    let psi0 = build_state(&s.state, &lattice)?;
    let manifest = RunManifest::new(s, command, h.warnings().to_vec());
    Ok(Setup {
        lattice,
        h,
        psi0,
        manifest,
    })
}

/// Plane waves fill the box by construction, so the edge check does not apply.
fn limits(s: &Scenario) -> EvolveLimits {
    let mut l = EvolveLimits::from(s.tolerances);
    if matches!(s.state, StateSpec::PlaneWave { .. }) {
        l.boundary_mass = f64::INFINITY;
    }
    l
}

fn trajectory(s: &Scenario, st: &Setup) -> Result<Trajectory> {
    let e = s.evolution;
    let plan = EvolutionPlan::new(&st.h, e.dt, e.steps, e.stride)?;
    Ok(evolve(&st.h, &st.psi0, &plan, &limits(s))?)
}

fn series_csv(tr: &Trajectory, manifest: &RunManifest) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    tr.series.write_csv(&mut buf, Some(&manifest.tag()))?;
    Ok(buf)
}

fn base_inputs(s: &Scenario) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("scenario".into(), json!(s.name));
    m.insert("scenario_hash".into(), json!(s.hash()));
    m.insert("dims".into(), json!(s.dims()));
    m.insert("potential".into(), json!(s.potential.kind()));
    m.insert("state".into(), json!(s.state.kind()));
    m.insert("masses".into(), json!(s.masses.as_slice()));
    m.insert("seed".into(), json!(s.seed));
    m
}

fn document(report: &Report, result: Value) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(&Document { report, result })
        .map_err(|e| CliError::Usage(format!("report serialization: {e}")))?;
    text.push('\n');
    Ok(text.into_bytes())
}

/// Write artifacts, then the manifest listing them.
fn finish(
    s: &Scenario,
    mut manifest: RunManifest,
    artifacts: Vec<(&str, Vec<u8>)>,
    verdict: Option<&Verdict>,
) -> Result<Outcome> {
    let dir = &s.output_dir;
    let mut files = Vec::new();
    for (name, bytes) in &artifacts {
        files.push(write_atomic(dir, name, bytes)?);
        manifest.artifacts.push(name.to_string());
    }
    files.push(write_atomic(dir, MANIFEST_FILE, manifest.to_json().as_bytes())?);
    let mut summary: Vec<String> = manifest.warnings.iter().map(|w| format!("warning: {w}")).collect();
    if let Some(v) = verdict {
        summary.extend(v.summary_lines());
    }
    for f in &files {
        summary.push(format!("wrote {}", f.display()));
    }
    Ok(Outcome {
        passed: verdict.is_none_or(|v| v.passed),
        summary,
        files,
    })
}

pub fn cmd_run(s: &Scenario) -> Result<Outcome> {
    let st = setup(s, "run")?;
    let tr = trajectory(s, &st)?;
    let csv = series_csv(&tr, &st.manifest)?;
    finish(s, st.manifest, vec![("series.csv", csv)], None)
}

fn wants(s: &Scenario, check: &str) -> bool {
    s.checks.iter().any(|c| c == check)
}

pub fn cmd_verify(s: &Scenario) -> Result<Outcome> {
    let st = setup(s, "verify")?;
    let tr = trajectory(s, &st)?;
    let tol = s.tolerances;
    let d = s.dims();
    let mut checks = Vec::new();
    let mut per_axis: Vec<Map<String, Value>> = (0..d)
        .map(|j| {
            let mut m = Map::new();
            m.insert("axis".into(), json!(j + 1));
            m.insert("mass".into(), json!(s.masses.get(j)));
            m
        })
        .collect();
    let mut result = Map::new();

    if wants(s, "ehrenfest") {
        let rep = ehrenfest_residuals(&tr.series, &s.masses, tol.residual, tol.exact)?;
        let worst = |f: fn(&qlab_core::verifier::AxisResiduals) -> f64| {
            rep.per_axis.iter().map(f).fold(0.0, f64::max)
        };
        let exact = if rep.exact { "exact" } else { "" };
        checks.push(CheckOutcome::at_most("ehrenfest_r1", worst(|a| a.max_r1), tol.residual).with_detail(exact));
        checks.push(CheckOutcome::at_most("ehrenfest_r2", worst(|a| a.max_r2), tol.residual).with_detail(exact));
        checks.push(CheckOutcome::at_most(
            "form_vs_classical",
            worst(|a| a.form_vs_classical),
            tol.residual,
        ));
        for a in &rep.per_axis {
            let m = &mut per_axis[a.axis];
            m.insert("max_r1".into(), json!(a.max_r1));
            m.insert("rms_r1".into(), json!(a.rms_r1));
            m.insert("max_r2".into(), json!(a.max_r2));
            m.insert("rms_r2".into(), json!(a.rms_r2));
            m.insert("max_r1_form".into(), json!(a.max_r1_form));
            m.insert("max_r2_form".into(), json!(a.max_r2_form));
            m.insert("form_vs_classical".into(), json!(a.form_vs_classical));
            m.insert("derivative_increment".into(), json!(a.derivative_increment));
        }
        result.insert(
            "ehrenfest".into(),
            json!({
                "stencil": rep.stencil,
                "spacing": rep.spacing,
                "records": rep.times.len(),
                "edge_records_excluded": rep.edge.iter().filter(|e| **e).count(),
                "max_residual": rep.max_residual,
                "exact": rep.exact,
                "c1_bounded": rep.c1_bounded,
            }),
        );
    }

    if wants(s, "identity") {
        let mut worst: f64 = 0.0;
        for (label, psi) in [("initial", &st.psi0), ("final", &tr.final_state)] {
            let defects = identity_check_all(&st.h, psi)?;
            for dft in &defects {
                worst = worst.max(dft.max());
                per_axis[dft.axis].insert(format!("identity_{label}"), to_value(dft)?);
            }
        }
        checks.push(
            CheckOutcome::at_most("identity", worst, tol.identity).with_detail("initial and final states"),
        );
    }

    if wants(s, "hypothesis") || wants(s, "h_opnorm") {
        let last = tr.series.records().last().map(|r| r.t).unwrap_or(0.0);
        let interval = s.trace_interval.unwrap_or([0.0, last]);
        let trace = hypothesis_trace(&tr.series, interval, tol.h_opnorm, tol.stabilization)?;
        if wants(s, "hypothesis") {
            let detail = format!(
                "{} on [{}, {}]; {}",
                trace.verdict,
                interval[0],
                interval[1],
                if trace.stabilized { "stabilized" } else { "still growing" }
            );
            checks.push(CheckOutcome::flag("hypothesis_bounded", trace.bounded, detail));
        }
        if wants(s, "h_opnorm") {
            checks.push(CheckOutcome::at_most(
                "h_opnorm_drift",
                trace.h_opnorm_deviation,
                tol.h_opnorm,
            ));
        }
        for (j, m) in per_axis.iter_mut().enumerate() {
            m.insert("sup_x_opnorm".into(), json!(trace.sup_x_opnorm[j]));
            if let Some(v) = trace.sup_p_opnorm.get(j) {
                m.insert("sup_p_opnorm".into(), json!(v));
            }
        }
        result.insert("hypothesis".into(), to_value(&trace)?);
    }

    let verdict = Verdict::new(checks);
    let mut inputs = base_inputs(s);
    inputs.insert("dt".into(), json!(s.evolution.dt));
    inputs.insert("steps".into(), json!(s.evolution.steps));
    inputs.insert("stride".into(), json!(s.evolution.stride));
    inputs.insert("t_final".into(), json!(s.evolution.t_final()));
    inputs.insert("checks".into(), json!(s.checks));
    let report = Report::new(
        "residuals",
        Value::Object(inputs),
        tol,
        Value::Array(per_axis.into_iter().map(Value::Object).collect()),
        verdict.clone(),
        Provenance::new(Some(st.manifest.scenario_hash.clone())),
    );
    let json = document(&report, Value::Object(result))?;
    let csv = series_csv(&tr, &st.manifest)?;
    finish(
        s,
        st.manifest,
        vec![("series.csv", csv), ("residuals.json", json)],
        Some(&verdict),
    )
}

fn bound_field(st: &Setup, field: BoundField, axis: usize) -> Vec<f64> {
    match field {
        BoundField::Potential => st.h.potential().iter().map(|v| v.abs()).collect(),
        BoundField::SqrtGrad => st.h.factorization(axis).f.clone(),
        BoundField::Grad => st.h.gradient(axis).iter().map(|v| v.abs()).collect(),
        BoundField::Kinetic => Vec::new(),
    }
}

fn bound_estimate(s: &Scenario, st: &Setup, field: &[f64], count: usize) -> Result<BoundEstimate> {
    let b = &s.bound;
    let mut ensemble = random_ensemble(&st.lattice, count, b.decay, s.seed)?;
    if let Some(r) = b.mollify {
        let m = MollifierSpec::new(r)?;
        ensemble = ensemble
            .par_iter()
            .map(|psi| mollify(psi, &m))
            .collect::<qlab_core::Result<_>>()?;
    }
    let cfg = BoundConfig {
        alpha_max: b.alpha_max,
        alpha_step: b.alpha_step,
        ceiling: b.ceiling,
    };
    let target = format!("{:?} of {}", b.field, s.potential.kind());
    let est = match b.field {
        BoundField::Kinetic => {
            let samples = ensemble
                .par_iter()
                .map(|psi| {
                    let t_norm = st.h.apply_t(psi)?.norm();
                    Ok(BoundSample {
                        t_norm,
                        norm: psi.norm(),
                        f_norm: t_norm,
                    })
                })
                .collect::<qlab_core::Result<Vec<_>>>()?;
            kato_rellich_from_samples(&target, samples, &cfg)?
        }
        _ => kato_rellich_estimate(&target, field, &s.masses, &ensemble, &cfg)?,
    };
    Ok(est)
}

pub fn cmd_bound(s: &Scenario) -> Result<Outcome> {
    let st = setup(s, "bound")?;
    let b = &s.bound;
    let field = bound_field(&st, b.field, b.axis);
    let est = bound_estimate(s, &st, &field, b.ensemble)?;
    let mut checks = vec![
        CheckOutcome::flag("c_alpha_monotone", est.is_monotone(), ""),
        CheckOutcome::flag("alpha_star_found", est.alpha_star.is_some(), est.verdict),
    ];
    let mut doubled = None;
    if b.stability {
        let big = bound_estimate(s, &st, &field, 2 * b.ensemble)?;
        let check = match (est.alpha_star, big.alpha_star) {
            (Some(a), Some(c)) => CheckOutcome::at_most("alpha_star_stability", (a - c).abs(), STABILITY_WINDOW)
                .with_detail(format!("ensemble {} vs {}", b.ensemble, 2 * b.ensemble)),
            _ => CheckOutcome::flag("alpha_star_stability", false, "no admissible alpha in one of the ensembles"),
        };
        checks.push(check);
        doubled = Some(big.alpha_star);
    }
    let verdict = Verdict::new(checks);
    let mut inputs = base_inputs(s);
    inputs.insert("bound".into(), to_value(b)?);
    let per_axis = json!([{
        "axis": b.axis + 1,
        "field": b.field,
        "alpha_star": est.alpha_star,
        "c_at_alpha_star": est.c_at_alpha_star,
        "consistent": est.consistent,
        "alpha_star_doubled_ensemble": doubled,
    }]);
    let report = Report::new(
        "bound",
        Value::Object(inputs),
        s.tolerances,
        per_axis,
        verdict.clone(),
        Provenance::new(Some(st.manifest.scenario_hash.clone())),
    );
    let json = document(&report, to_value(&est)?)?;
    finish(s, st.manifest, vec![("bound.json", json)], Some(&verdict))
}

pub fn cmd_scaling(s: &Scenario) -> Result<Outcome> {
    let st = setup(s, "scaling")?;
    let sc = &s.scaling;
    let h = st.lattice.max_spacing();
    let s_list: Vec<f64> = sc.softenings.iter().map(|k| k * h).collect();
    let phi = st.psi0.clone().normalized()?;
    let rep = singularity_scaling(&phi, sc.charge, &sc.center, &s_list, sc.axis)?;
    let [lo, hi] = sc.exponent_window;
    let in_window = rep.beta >= lo && rep.beta <= hi;
    let checks = vec![
        CheckOutcome {
            name: "exponent_window".into(),
            passed: in_window,
            value: rep.beta,
            tolerance: hi,
            detail: format!("fitted exponent {:.4} ± {:.4}, window [{lo}, {hi}]", rep.beta, rep.beta_stderr),
        },
        CheckOutcome::flag(
            "force_form_cauchy",
            rep.b_cauchy,
            format!("B limit estimate {:.6e}", rep.b_limit),
        ),
    ];
    let verdict = Verdict::new(checks);
    let mut inputs = base_inputs(s);
    inputs.insert("scaling".into(), to_value(sc)?);
    inputs.insert("softenings_absolute".into(), json!(s_list));
    let per_axis = json!([{
        "axis": sc.axis + 1,
        "beta": rep.beta,
        "beta_stderr": rep.beta_stderr,
        "b_cauchy": rep.b_cauchy,
        "a_diverges": rep.a_diverges,
    }]);
    let report = Report::new(
        "scaling",
        Value::Object(inputs),
        s.tolerances,
        per_axis,
        verdict.clone(),
        Provenance::new(Some(st.manifest.scenario_hash.clone())),
    );
    let json = document(&report, to_value(&rep)?)?;
    finish(s, st.manifest, vec![("scaling.json", json)], Some(&verdict))
}

pub fn cmd_relax(s: &Scenario) -> Result<Outcome> {
    let st = setup(s, "relax")?;
    let r = &s.relax;
    let opts = RelaxOptions {
        dtau: r.dtau,
        max_steps: r.max_steps,
        energy_tol: Some(r.energy_tol),
        patience: r.patience,
    };
    let out = imaginary_time_relax(&st.h, &st.psi0, &opts)?;
    let last_change = match out.energies.as_slice() {
        [.., a, b] => (b - a).abs(),
        _ => f64::INFINITY,
    };
    let verdict = Verdict::new(vec![CheckOutcome::at_most("energy_change", last_change, r.energy_tol)
        .with_detail(format!("E = {:.12} after {} steps", out.energy, out.steps))]);
    let snap = st.h.snapshot(&out.state)?;
    let per_axis: Vec<Value> = (0..s.dims())
        .map(|j| {
            json!({
                "axis": j + 1,
                "x_mean": snap.x_mean[j],
                "p_mean": snap.p_mean[j],
                "x_opnorm": snap.x_opnorm[j],
            })
        })
        .collect();
    let mut inputs = base_inputs(s);
    inputs.insert("relax".into(), to_value(r)?);
    let report = Report::new(
        "relax",
        Value::Object(inputs),
        s.tolerances,
        Value::Array(per_axis),
        verdict.clone(),
        Provenance::new(Some(st.manifest.scenario_hash.clone())),
    );
    let tail = out.energies.len().saturating_sub(10);
    let result = json!({
        "energy": out.energy,
        "steps": out.steps,
        "last_energies": out.energies[tail..],
        "boundary_mass": out.state.boundary_mass(),
    });
    let json = document(&report, result)?;
    let mut csv = format!("# {}\n", st.manifest.tag()).into_bytes();
    write_wavefunction_csv(&mut csv, &out.state)?;
    finish(
        s,
        st.manifest,
        vec![("relax.json", json), ("ground_state.csv", csv)],
        Some(&verdict),
    )
}

/// Scenario with `parameter` set to `value`; integers are tried when the
/// key rejects a float.
fn variant(s: &Scenario, parameter: &str, value: f64) -> Result<Scenario> {
    match s.with_override(parameter, toml::Value::Float(value)) {
        Err(CliError::Config { msg, .. }) if msg.contains("integer") && value.fract() == 0.0 => {
            s.with_override(parameter, toml::Value::Integer(value as i64))
        }
        other => other,
    }
}

fn order_check(name: &str, fit: Option<&OrderFit>, exact: bool) -> CheckOutcome {
    if exact {
        return CheckOutcome::flag(name, true, "exact at every resolution");
    }
    match fit {
        Some(f) => CheckOutcome {
            name: name.into(),
            passed: (f.order - 2.0).abs() <= ORDER_WINDOW,
            value: f.order,
            tolerance: ORDER_WINDOW,
            detail: format!("order {:.3} ± {:.3}, accepted 2 ± {ORDER_WINDOW}", f.order, f.stderr),
        },
        None => CheckOutcome::flag(name, false, "order could not be fitted"),
    }
}

/// Round `x` to the nearest positive multiple of `step`.
fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round().max(1.0) * step
}

pub fn cmd_sweep(s: &Scenario, parameter: Option<&str>, values: Option<&[f64]>) -> Result<Outcome> {
    let base = s.sweep.clone();
    let parameter = parameter
        .map(str::to_string)
        .or_else(|| base.as_ref().map(|b| b.parameter.clone()))
        .ok_or_else(|| CliError::config("sweep.parameter", "missing; give [sweep] or --parameter"))?;
    let values: Vec<f64> = values
        .map(<[f64]>::to_vec)
        .or_else(|| base.as_ref().map(|b| b.values.clone()))
        .ok_or_else(|| CliError::config("sweep.values", "missing; give [sweep] or --values"))?;
    if values.is_empty() {
        return Err(CliError::config("sweep.values", "needs at least one value"));
    }
    let st = setup(s, "sweep")?;
    let mut inputs = base_inputs(s);
    inputs.insert("parameter".into(), json!(parameter));
    inputs.insert("values".into(), json!(values));

    let (verdict, per_run, result) = if parameter == "evolution.dt" {
        let mut dts = values.clone();
        dts.sort_by(|a, b| b.total_cmp(a));
        let max_dt = dts[0];
        let e = s.evolution;
        let tau_base = e.dt * e.stride as f64;
        let t_final = round_to(base.as_ref().and_then(|b| b.t_final).unwrap_or(e.t_final()), max_dt);
        let record_interval = base
            .as_ref()
            .and_then(|b| b.record_interval)
            .unwrap_or(max_dt * (tau_base / max_dt - 1e-9).ceil().max(1.0));
        let setup_c = ConvergenceSetup {
            t_final,
            record_interval,
        };
        let rep = convergence_study(&st.h, &st.psi0, setup_c, &dts, &s.tolerances)?;
        let checks = vec![
            order_check("r1_order", rep.r1_order.as_ref(), rep.r1_exact),
            order_check("r2_order", rep.r2_order.as_ref(), rep.r2_exact),
            order_check("state_order", rep.state_order.as_ref(), rep.state_exact),
        ];
        inputs.insert("t_final".into(), json!(t_final));
        inputs.insert("record_interval".into(), json!(record_interval));
        let runs = to_value(&rep.runs)?;
        (Verdict::new(checks), runs, to_value(&rep)?)
    } else {
        let variants: Vec<Scenario> = values
            .iter()
            .map(|v| variant(s, &parameter, *v))
            .collect::<Result<_>>()?;
        let runs: Vec<Value> = variants
            .par_iter()
            .zip(&values)
            .map(|(v, value)| -> Result<Value> {
                let vs = setup(v, "sweep")?;
                let tr = trajectory(v, &vs)?;
                let rep = ehrenfest_residuals(&tr.series, &v.masses, v.tolerances.residual, v.tolerances.exact)?;
                let worst = |f: fn(&qlab_core::verifier::AxisResiduals) -> f64| {
                    rep.per_axis.iter().map(f).fold(0.0, f64::max)
                };
                let last = tr.series.records().last().expect("at least one record");
                Ok(json!({
                    "value": value,
                    "scenario_hash": v.hash(),
                    "max_r1": worst(|a| a.max_r1),
                    "max_r2": worst(|a| a.max_r2),
                    "form_vs_classical": worst(|a| a.form_vs_classical),
                    "final_norm": last.norm,
                    "final_energy": last.energy,
                    "exact": rep.exact,
                }))
            })
            .collect::<Result<_>>()?;
        let checks = runs
            .iter()
            .flat_map(|r| {
                let tag = format!("{parameter}={}", r["value"]);
                let tol = s.tolerances.residual;
                [
                    CheckOutcome::at_most(&format!("{tag} r1"), r["max_r1"].as_f64().unwrap_or(f64::NAN), tol),
                    CheckOutcome::at_most(&format!("{tag} r2"), r["max_r2"].as_f64().unwrap_or(f64::NAN), tol),
                ]
            })
            .collect();
        (Verdict::new(checks), Value::Array(runs.clone()), Value::Array(runs))
    };

    let report = Report::new(
        "sweep",
        Value::Object(inputs),
        s.tolerances,
        per_run,
        verdict.clone(),
        Provenance::new(Some(st.manifest.scenario_hash.clone())),
    );
    let json = document(&report, result)?;
    finish(s, st.manifest, vec![("sweep.json", json)], Some(&verdict))
}

/// The `manifest.json` next to `path`, if it exists and carries `hash`.
pub fn sibling_manifest(path: &Path, hash: &str) -> Option<RunManifest> {
    let m = RunManifest::read(&path.parent()?.join(MANIFEST_FILE)).ok()?;
    (m.scenario_hash == hash).then_some(m)
}

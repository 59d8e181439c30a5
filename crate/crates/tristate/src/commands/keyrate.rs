use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};
use tristate_core::finite_key::{optimize_nu, FiniteKeyError, SecurityReport};
use tristate_core::geometry::{overlap_c, SourceTriple};

use super::{SweepSpec, Verdict};
use crate::formats::{SecurityConfig, StateFile};
use crate::manifest::RunManifest;
use crate::output::{num, Artifact, Emitter, Table};

const REPORT_COLUMNS: [&str; 8] =
    ["key_length", "nu", "delta_prime", "epsilon_nu", "epsilon_pa", "epsilon_pe", "total_bound", "feasible"];

fn load(states: &Path, config: &Path) -> Result<(SourceTriple, SecurityConfig)> {
    let triple = StateFile::load(states)?.triple().with_context(|| format!("{}", states.display()))?;
    let cfg = SecurityConfig::load(config)?;
    Ok((triple, cfg))
}

fn source_json(triple: &SourceTriple) -> Value {
    json!({ "a": triple.a, "b": triple.b, "g": triple.g, "T": triple.t, "c": overlap_c(triple) })
}

fn report_row(report: Option<&SecurityReport>) -> Vec<String> {
    match report {
        Some(r) => vec![
            r.key_length.to_string(),
            num(r.nu),
            num(r.delta_prime),
            num(r.epsilon_nu),
            num(r.epsilon_pa),
            num(r.epsilon_pe),
            num(r.total_bound),
            r.feasible.to_string(),
        ],
        // Empty ν window.
        None => vec!["0".into(), String::new(), String::new(), String::new(), String::new(), String::new(), String::new(), "false".into()],
    }
}

/// `Ok(None)` for an empty ν window, which is a verdict rather than an error.
fn evaluate(triple: &SourceTriple, cfg: &SecurityConfig) -> Result<Option<SecurityReport>> {
    let inputs = cfg.inputs(triple)?;
    match optimize_nu(&inputs) {
        Ok(r) => Ok(Some(r)),
        Err(FiniteKeyError::InfeasibleWindow) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn report_text(triple: &SourceTriple, report: Option<&SecurityReport>) -> String {
    let mut s = format!("source: T = {}, c = {}\n", triple.t, overlap_c(triple));
    let Some(r) = report else {
        s.push_str(&format!("no admissible nu: {}\nverdict: no key\n", FiniteKeyError::InfeasibleWindow));
        return s;
    };
    s.push_str(&format!("nu* = {}\ndelta' = {}\n", r.nu, r.delta_prime));
    s.push_str(&format!("rate per information round = {}\n", r.rate_per_round));
    s.push_str(&format!("key length = {}\n", r.key_length));
    s.push_str(&format!(
        "epsilon_pa = {:e}, epsilon_pe = {:e}, total = {:e}\n",
        r.epsilon_pa, r.epsilon_pe, r.total_bound
    ));
    if let Some(t) = r.epsilon_target {
        s.push_str(&format!("target = {t:e}\n"));
    }
    s.push_str("assumptions:\n");
    for a in &r.assumptions {
        s.push_str(&format!("  - {}\n", a.note()));
    }
    s.push_str(if r.is_negative() { "verdict: no key\n" } else { "verdict: key\n" });
    s
}

pub fn keyrate(em: &Emitter, states: &Path, config: &Path) -> Result<Verdict> {
    let (triple, cfg) = load(states, config)?;
    let report = evaluate(&triple, &cfg).with_context(|| format!("{}", config.display()))?;
    let mut table = Table::new(&REPORT_COLUMNS);
    table.push(report_row(report.as_ref()));
    let mut body = json!({
        "source": source_json(&triple),
        "config": cfg,
        "report": report,
    });
    if report.is_none() {
        body["error"] = Value::String(FiniteKeyError::InfeasibleWindow.to_string());
    }
    let artifact = Artifact { name: "keyrate", json: body, table, text: report_text(&triple, report.as_ref()) };
    em.emit(RunManifest::new("keyrate", &[states, config], None), &artifact, &[])?;
    Ok(Verdict::from_ok(report.is_some_and(|r| !r.is_negative())))
}

/// Sets one field of the security configuration.
fn set_axis(cfg: &mut SecurityConfig, axis: &str, v: f64) -> Result<()> {
    let count = |v: f64| -> Result<u64> {
        if v < 0.0 {
            bail!("{axis} = {v} must be nonnegative");
        }
        Ok(v.round() as u64)
    };
    match axis {
        "delta" => cfg.delta = v,
        "delta_mismatch" | "delta-mismatch" => cfg.delta_mismatch = v,
        "n1" => cfg.n1 = count(v)?,
        "k" => {
            let k = count(v)?;
            (cfg.k1, cfg.k2, cfg.k3, cfg.k4) = (k, k, k, k);
        }
        "r" => cfg.r = count(v)?,
        "t" => cfg.t = u32::try_from(count(v)?).map_err(|_| anyhow!("t = {v} is too large"))?,
        "epsilon_target" | "epsilon-target" => {
            cfg.epsilon_target = Some(v);
            cfg.key_length = None;
        }
        "key_length" | "key-length" => {
            cfg.key_length = Some(count(v)?);
            cfg.epsilon_target = None;
        }
        _ => bail!("unknown sweep axis {axis:?}; expected delta, delta-mismatch, n1, k, r, t, epsilon-target or key-length"),
    }
    Ok(())
}

pub fn sweep(em: &Emitter, states: &Path, config: &Path, spec: &str) -> Result<Verdict> {
    let spec = SweepSpec::parse(spec)?;
    let (triple, base) = load(states, config)?;
    set_axis(&mut base.clone(), &spec.axis, spec.lo)?;
    let mut header = vec![spec.axis.as_str()];
    header.extend(REPORT_COLUMNS);
    let mut stream = em.row_stream(RunManifest::new("sweep", &[states, config], None), "sweep", &header)?;
    for v in spec.values() {
        let mut cfg = base.clone();
        let step = set_axis(&mut cfg, &spec.axis, v).and_then(|_| evaluate(&triple, &cfg));
        match step {
            Ok(report) => {
                let mut row = vec![num(v)];
                row.extend(report_row(report.as_ref()));
                stream.row(row)?;
            }
            Err(e) => {
                let e = e.context(format!("{} = {v}", spec.axis));
                stream.finish(Some(&e))?;
                return Err(e);
            }
        }
    }
    stream.finish(None)?;
    Ok(Verdict::Positive)
}

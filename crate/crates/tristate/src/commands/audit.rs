use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::json;
use tristate_core::audit::{audit_four_states, perturbation_sweep, AuditVerdict, SweepAxis};

use super::{SweepSpec, Verdict};
use crate::formats::StateFile;
use crate::manifest::RunManifest;
use crate::output::{num, Artifact, Emitter, Table};

fn axis(name: &str) -> Result<SweepAxis> {
    Ok(match name {
        "d-phase" | "d_phase" => SweepAxis::DPhase,
        "d-amplitude" | "d_amplitude" => SweepAxis::DAmplitude,
        "constrained-q" | "constrained_q" => SweepAxis::ConstrainedQ,
        _ => bail!("unknown audit sweep axis {name:?}; expected d-phase, d-amplitude or constrained-q"),
    })
}

fn complex(z: tristate_core::C64) -> String {
    if z.re.is_nan() {
        "undefined".into()
    } else if z.im == 0.0 {
        format!("{}", z.re)
    } else {
        format!("{} {} {}i", z.re, if z.im < 0.0 { '-' } else { '+' }, z.im.abs())
    }
}

fn text(v: &AuditVerdict) -> String {
    let mut s = format!(
        "a = {}, b = {}, c = {}, d = {}, g = {}\n",
        complex(v.a),
        complex(v.b),
        complex(v.c),
        complex(v.d),
        complex(v.g)
    );
    s.push_str(&format!("q = {}, p = {}\nresidual = {:e}\n", complex(v.q), complex(v.p), v.residual));
    match v.violated_condition {
        None => s.push_str("feasible: yes\n"),
        Some(c) => s.push_str(&format!("feasible: no\nviolated_condition: {}\n", c.id())),
    }
    s
}

pub fn audit4(em: &Emitter, states: &Path, sweep: Option<&str>, tau: f64) -> Result<Verdict> {
    let input = StateFile::load(states)?.four_states().with_context(|| format!("{}", states.display()))?;
    let manifest = RunManifest::new("audit4", &[states], None);
    if let Some(spec) = sweep {
        let spec = SweepSpec::parse(spec)?;
        let points = perturbation_sweep(&input, axis(&spec.axis)?, &spec.values(), tau)?;
        let mut stream = em.row_stream(manifest, "audit_sweep", &["magnitude", "residual", "feasible", "violated_condition"])?;
        for p in points {
            stream.row(vec![
                num(p.magnitude),
                num(p.residual),
                p.feasible.to_string(),
                p.violated_condition.map_or_else(String::new, |c| c.id().to_string()),
            ])?;
        }
        stream.finish(None)?;
        return Ok(Verdict::Positive);
    }
    let v = audit_four_states(&input, tau)?;
    let mut table = Table::new(&["feasible", "violated_condition", "residual", "q", "p"]);
    table.push(vec![
        v.feasible.to_string(),
        v.violated_condition.map_or_else(String::new, |c| c.id().to_string()),
        num(v.residual),
        num(v.q.re),
        num(v.p.re),
    ]);
    let body = json!({
        "verdict": v,
        "violated_condition": v.violated_condition.map(|c| c.id()),
        "tau": tau,
    });
    let artifact = Artifact { name: "audit4", json: body, table, text: text(&v) };
    em.emit(manifest, &artifact, &[])?;
    Ok(Verdict::from_ok(v.feasible))
}

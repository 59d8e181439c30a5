use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};
use tristate_core::protocol::{map_pm_to_eb, run_entanglement_based, run_prepare_measure, FlagState, Transcript};

use super::Verdict;
use crate::formats::{ChannelConfig, SimulationConfig, StateFile, VariantChoice};
use crate::manifest::RunManifest;
use crate::output::{num, Artifact, Emitter, Extra, Table};

fn flag(f: FlagState) -> String {
    match f {
        FlagState::Passed => "passed",
        FlagState::Aborted => "aborted",
        FlagState::NotReached => "not_reached",
    }
    .to_string()
}

fn rounds_table(t: &Transcript) -> Table {
    let mut table = Table::new(&["index", "alice_basis", "alice_bit", "discard", "bob_basis", "bob_outcome"]);
    for r in &t.records {
        table.push(vec![
            r.index.to_string(),
            r.alice_basis.to_string(),
            r.alice_bit.to_string(),
            r.discard.map_or_else(String::new, |d| (d as u8).to_string()),
            r.bob_basis.to_string(),
            r.bob_outcome.bit().map_or_else(|| "empty".to_string(), |b| b.to_string()),
        ]);
    }
    table
}

fn summary_table(t: &Transcript) -> Table {
    let mut table = Table::new(&[
        "seed", "rounds", "omega", "sift", "min", "pe", "ec", "keys_agree", "key_bits", "error_rate_zz",
        "error_rate_xx", "zero_rate_zx", "zero_rate_xz",
    ]);
    let stat = |f: fn(&tristate_core::protocol::TestStatistics) -> f64| t.statistics.as_ref().map_or_else(String::new, |s| num(f(s)));
    table.push(vec![
        t.config.seed.to_string(),
        t.config.rounds.to_string(),
        t.omega.len().to_string(),
        flag(t.flags.sift),
        flag(t.flags.min),
        flag(t.flags.pe),
        flag(t.flags.ec),
        t.keys_agree().to_string(),
        t.key_a.as_ref().map_or(0, |k| k.len()).to_string(),
        stat(|s| s.error_rate_zz),
        stat(|s| s.error_rate_xx),
        stat(|s| s.zero_rate_zx),
        stat(|s| s.zero_rate_xz),
    ]);
    table
}

fn text(t: &Transcript) -> String {
    let mut s = format!("{:?} run, seed {}, {} rounds, |Omega| = {}\n", t.variant, t.config.seed, t.config.rounds, t.omega.len());
    s.push_str(&format!(
        "flags: sift {}, min {}, pe {}, ec {}\n",
        flag(t.flags.sift),
        flag(t.flags.min),
        flag(t.flags.pe),
        flag(t.flags.ec)
    ));
    if let Some(st) = &t.statistics {
        s.push_str(&format!(
            "error rates zz {} xx {}, zero rates zx {} xz {}\n",
            st.error_rate_zz, st.error_rate_xx, st.zero_rate_zx, st.zero_rate_xz
        ));
    }
    match t.flags.first_abort() {
        Some(stage) => s.push_str(&format!("aborted at {stage}\n")),
        None => s.push_str(&format!(
            "key: {} bits, keys agree: {}\n",
            t.key_a.as_ref().map_or(0, |k| k.len()),
            t.keys_agree()
        )),
    }
    s
}

pub fn simulate(em: &Emitter, states: &Path, config: &Path, channel: Option<&Path>, seed: Option<u64>) -> Result<Verdict> {
    let triple = StateFile::load(states)?.triple().with_context(|| format!("{}", states.display()))?;
    let mut sim = SimulationConfig::load(config)?;
    if let Some(s) = seed {
        sim.protocol.seed = s;
    }
    let link = channel.map(ChannelConfig::load).transpose()?.unwrap_or_default();
    let povm = link.measurement.model();
    let mut eb_json = Value::Null;
    let transcript = match sim.variant {
        VariantChoice::PrepareMeasure => run_prepare_measure(&sim.protocol, &triple, &link.channel, &povm),
        VariantChoice::EntanglementBased => {
            let eb = map_pm_to_eb(&sim.protocol, triple.t, sim.nu0).with_context(|| format!("{}", config.display()))?;
            eb_json = json!(eb);
            run_entanglement_based(&eb, &triple, &link.channel, &povm, sim.ordering)
        }
    }
    .with_context(|| format!("{}", config.display()))?;

    let ok = transcript.succeeded() && transcript.keys_agree();
    let body = json!({
        "variant": transcript.variant,
        "ordering": transcript.ordering,
        "seed": transcript.config.seed,
        "flags": transcript.flags,
        "first_abort": transcript.flags.first_abort(),
        "statistics": transcript.statistics,
        "keys_agree": transcript.keys_agree(),
        "key_bits": transcript.key_a.as_ref().map(|k| k.len()),
        "omega": transcript.omega.len(),
        "eb_mapping": eb_json,
    });
    let artifact = Artifact { name: "simulate", json: body, table: summary_table(&transcript), text: text(&transcript) };
    let extra = [
        Extra::Json("transcript", json!(transcript)),
        Extra::Json("published", json!(transcript.published())),
        Extra::Csv("rounds", rounds_table(&transcript)),
    ];
    let paths: Vec<&Path> = [Some(states), Some(config), channel].into_iter().flatten().collect();
    em.emit(RunManifest::new("simulate", &paths, Some(transcript.config.seed)), &artifact, &extra)?;
    Ok(Verdict::from_ok(ok))
}

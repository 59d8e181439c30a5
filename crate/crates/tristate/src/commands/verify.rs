use anyhow::Result;
use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};
use tristate_core::bounds::{
    counting_identity_exhaustive, cross_check_epsilon_terms, standard_suite, subset_choice_exact,
    verify_sifting_probabilities, verify_two_stage_equivalence, BoundExperiment, LemmaId,
};
use tristate_core::geometry::SourceTriple;
use tristate_core::protocol::SubsetSizes;
use tristate_core::C64;

use super::Verdict;
use crate::manifest::RunManifest;
use crate::output::{Artifact, Emitter, Table};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    #[default]
    All,
    Sampling,
    Hoeffding,
    Counting,
    Sifting,
    TwoStage,
    Subsets,
    EpsilonTerms,
}

struct Check {
    name: String,
    passed: bool,
    summary: String,
    detail: Value,
}

impl Check {
    fn new<T: Serialize>(name: impl Into<String>, passed: bool, summary: String, detail: &T) -> Self {
        Check { name: name.into(), passed, summary, detail: json!(detail) }
    }
}

fn asymmetric_triple() -> SourceTriple {
    SourceTriple::from_coefficients(C64::new(0.6, 0.0), C64::new(0.6, 0.0), C64::new(7.0 / 18.0, 0.0))
        .expect("valid coefficients")
}

fn experiment(e: &BoundExperiment) -> Check {
    let p = &e.params;
    let name = match e.lemma {
        LemmaId::SubsetSampling => format!(
            "sampling a={} b={} delta={} nu={}",
            p.a.unwrap_or(0),
            p.b.unwrap_or(0),
            p.delta.unwrap_or(0.0),
            p.nu
        ),
        LemmaId::Hoeffding => format!("hoeffding n={} nu={}", p.n.unwrap_or(0), p.nu),
    };
    let summary = format!(
        "frequency {:.3e} vs bound {:.3e} (band {:.1e}, {} trials{})",
        e.frequency,
        e.bound,
        e.band,
        e.trials,
        if e.escalated { ", escalated" } else { "" }
    );
    Check::new(name, e.passed, summary, e)
}

fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    let wants = |s: Suite| suite == Suite::All || suite == s;
    let mut checks = Vec::new();
    if wants(Suite::Sampling) || wants(Suite::Hoeffding) {
        for e in standard_suite(seed) {
            let keep = match e.lemma {
                LemmaId::SubsetSampling => wants(Suite::Sampling),
                LemmaId::Hoeffding => wants(Suite::Hoeffding),
            };
            if keep {
                checks.push(experiment(&e));
            }
        }
    }
    if wants(Suite::Counting) {
        let (checked, failures) = counting_identity_exhaustive(10);
        checks.push(Check::new(
            "counting identity, 10-bit pairs",
            failures == 0,
            format!("{failures} failures in {checked} pairs"),
            &json!({ "checked": checked, "failures": failures }),
        ));
    }
    if wants(Suite::Sifting) {
        for (label, triple, pa_x) in [("ideal", SourceTriple::ideal_bb84(), 2.0 / 3.0), ("asymmetric", asymmetric_triple(), 0.5)] {
            let r = verify_sifting_probabilities(&triple, pa_x, 100_000, seed)?;
            let summary = format!("kept {:.4} vs {:.4}", r.kept.observed, r.kept.expected);
            checks.push(Check::new(format!("sifting {label} pA_x={pa_x:.4}"), r.passed, summary, &r));
        }
    }
    if wants(Suite::TwoStage) {
        let triple = asymmetric_triple();
        for rounds in [3, 10_000] {
            let r = verify_two_stage_equivalence(&triple, 0.6, rounds, seed)?;
            let summary = match r.exact_max_diff {
                Some(d) => format!("exact max difference {d:.1e}"),
                None => format!("chi2 {:.2} vs {:.2}", r.chi2.unwrap_or(f64::NAN), r.chi2_critical),
            };
            checks.push(Check::new(format!("two-stage M'={rounds}"), r.passed, summary, &r));
        }
    }
    if wants(Suite::Subsets) {
        let sizes = SubsetSizes { k: [1, 1, 1, 1], n1: 2 };
        let r = subset_choice_exact(8, &sizes, 0.5, 0.5)?;
        let summary = format!("{} tuples, max deviation {:.1e}", r.tuples, r.max_deviation);
        checks.push(Check::new("subset choice uniformity m=8", r.passed, summary, &r));
    }
    if wants(Suite::EpsilonTerms) {
        let r = cross_check_epsilon_terms(200, 100, 50, 1.0, 0.1, 0.1, 20_000, seed)?;
        let summary = format!("{} experiments, bound mismatch {:.1e}", r.experiments.len(), r.max_bound_mismatch);
        checks.push(Check::new("epsilon terms n1=200 k2=100 k4=50", r.passed, summary, &r));
    }
    Ok(checks)
}

pub fn verify(em: &Emitter, suite: Suite, seed: u64) -> Result<Verdict> {
    let checks = run_suite(suite, seed)?;
    let passed = checks.iter().filter(|c| c.passed).count();
    let mut table = Table::new(&["check", "passed", "summary"]);
    let mut text = String::new();
    for c in &checks {
        table.push(vec![c.name.clone(), c.passed.to_string(), c.summary.clone()]);
        text.push_str(&format!("[{}] {}: {}\n", if c.passed { "ok" } else { "FAIL" }, c.name, c.summary));
    }
    text.push_str(&format!("{passed} of {} checks passed\n", checks.len()));
    let json = json!({
        "suite": suite.to_possible_value().map(|v| v.get_name().to_string()),
        "passed": passed,
        "total": checks.len(),
        "checks": checks.iter().map(|c| json!({ "name": c.name, "passed": c.passed, "detail": c.detail })).collect::<Vec<_>>(),
    });
    let artifact = Artifact { name: "verify", json, table, text };
    em.emit(RunManifest::new("verify", &[], Some(seed)), &artifact, &[])?;
    Ok(Verdict::from_ok(passed == checks.len()))
}

mod audit;
mod keyrate;
mod simulate;
mod verify;

use anyhow::{bail, Context, Result};

pub use audit::audit4;
pub use keyrate::{keyrate, sweep};
pub use simulate::simulate;
pub use verify::{verify, Suite};

/// Outcome of a command that ran on valid input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Positive,
    /// No key, infeasible audit, protocol abort or failed check.
    Negative,
}

impl Verdict {
    pub fn from_ok(ok: bool) -> Self {
        if ok { Verdict::Positive } else { Verdict::Negative }
    }
}

/// `AXIS=lo:hi:steps`, with `steps` points including both ends.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub axis: String,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl SweepSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (axis, range) = s.split_once('=').context("sweep spec must look like AXIS=lo:hi:steps")?;
        let parts: Vec<&str> = range.split(':').collect();
        let [lo, hi, steps] = parts[..] else {
            bail!("sweep range must be lo:hi:steps, got {range:?}");
        };
        let lo: f64 = lo.trim().parse().with_context(|| format!("bad lower end {lo:?}"))?;
        let hi: f64 = hi.trim().parse().with_context(|| format!("bad upper end {hi:?}"))?;
        let steps: usize = steps.trim().parse().with_context(|| format!("bad step count {steps:?}"))?;
        if steps == 0 || !lo.is_finite() || !hi.is_finite() {
            bail!("sweep needs finite ends and at least one step");
        }
        Ok(SweepSpec { axis: axis.trim().to_string(), lo, hi, steps })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lo];
        }
        let last = (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.lo + (self.hi - self.lo) * i as f64 / last).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_spec_round_trip() {
        let s = SweepSpec::parse("delta=0:0.1:11").unwrap();
        assert_eq!(s.axis, "delta");
        let v = s.values();
        assert_eq!(v.len(), 11);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[10], 0.1);
        assert!(SweepSpec::parse("delta=0:0.1").is_err());
        assert!(SweepSpec::parse("delta").is_err());
        assert!(SweepSpec::parse("delta=0:1:0").is_err());
    }
}

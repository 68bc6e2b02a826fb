//! Per-compression fidelity bookkeeping: `F = prod_t f_t`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tt::CompressionEvent;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityEntry {
    pub step: usize,
    pub epsilon: f64,
    pub f: f64,
    /// Real part of the unit-normalized overlap the entry was derived from.
    #[serde(default = "one")]
    pub overlap_re: f64,
    pub chi_max: usize,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityLog {
    entries: Vec<FidelityEntry>,
    f_cumulative: f64,
    /// Entry count at the end of each completed round.
    round_marks: Vec<usize>,
    /// Compressions that cut through a degenerate multiplet.
    pub degenerate_splits: usize,
}

impl Default for FidelityLog {
    fn default() -> Self {
        FidelityLog { entries: Vec::new(), f_cumulative: 1.0, round_marks: Vec::new(), degenerate_splits: 0 }
    }
}

impl FidelityLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, ev: &CompressionEvent) {
        self.entries.push(FidelityEntry {
            step: self.entries.len(),
            epsilon: ev.epsilon,
            f: ev.f,
            overlap_re: ev.overlap.re,
            chi_max: ev.chi,
        });
        self.f_cumulative *= ev.f;
        if ev.split_degenerate {
            self.degenerate_splits += 1;
        }
    }

    pub fn mark_round(&mut self) {
        self.round_marks.push(self.entries.len());
    }

    pub fn entries(&self) -> &[FidelityEntry] {
        &self.entries
    }

    pub fn f_cumulative(&self) -> f64 {
        self.f_cumulative
    }

    /// Cumulative fidelity after `rounds` completed rounds.
    pub fn f_after_rounds(&self, rounds: usize) -> Option<f64> {
        let end = if rounds == 0 { 0 } else { *self.round_marks.get(rounds - 1)? };
        Some(self.entries[..end].iter().map(|e| e.f).product())
    }

    /// Product of the stored `f_t`, recomputed.
    pub fn recompute(&self) -> f64 {
        self.entries.iter().map(|e| e.f).product()
    }

    pub fn max_epsilon(&self) -> f64 {
        self.entries.iter().map(|e| e.epsilon).fold(0.0, f64::max)
    }

    pub fn truncations(&self) -> usize {
        self.entries.iter().filter(|e| e.epsilon > 0.0).count()
    }

    pub fn append(&mut self, other: &FidelityLog) {
        for e in &other.entries {
            self.entries.push(FidelityEntry { step: self.entries.len(), ..*e });
        }
        self.f_cumulative *= other.f_cumulative;
        self.degenerate_splits += other.degenerate_splits;
    }

    /// CSV with columns `step,epsilon,f,chi_max,F_cumulative`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["step", "epsilon", "f", "chi_max", "F_cumulative"]).map_err(csv_err)?;
        let mut acc = 1.0;
        for e in &self.entries {
            acc *= e.f;
            wr.write_record(&[
                e.step.to_string(),
                format!("{:e}", e.epsilon),
                format!("{:.17}", e.f),
                e.chi_max.to_string(),
                format!("{:.17}", acc),
            ])
            .map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;
    use proptest::prelude::*;

    fn event(ov: f64) -> CompressionEvent {
        CompressionEvent {
            epsilon: (2.0 * (1.0 - ov)).max(0.0).sqrt(),
            f: ov * ov,
            overlap: C64::new(ov, 0.0),
            chi: 4,
            split_degenerate: false,
            sweeps: 1,
            retained: ov * ov,
        }
    }

    #[test]
    fn exact_log_is_one() {
        let mut log = FidelityLog::new();
        for _ in 0..5 {
            log.push(&CompressionEvent::exact(1));
        }
        log.mark_round();
        assert_eq!(log.f_cumulative(), 1.0);
        assert_eq!(log.f_after_rounds(1), Some(1.0));
        assert_eq!(log.truncations(), 0);
    }

    #[test]
    fn csv_columns() {
        let mut log = FidelityLog::new();
        log.push(&event(0.9));
        log.push(&event(0.8));
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,epsilon,f,chi_max,F_cumulative");
        assert_eq!(lines.len(), 3);
        let last: f64 = lines[2].split(',').nth(4).unwrap().parse().unwrap();
        assert!((last - 0.81 * 0.64).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn product_telescopes(ovs in proptest::collection::vec(0.5f64..1.0, 1..60)) {
            let mut log = FidelityLog::new();
            for &o in &ovs {
                log.push(&event(o));
            }
            let f = log.f_cumulative();
            prop_assert!((log.recompute() - f).abs() <= 1e-12 * f);
            let bound: f64 = log.entries().iter().map(|e| 1.0 - e.f).sum();
            prop_assert!(-f.ln() >= bound - 1e-12);
        }
    }
}

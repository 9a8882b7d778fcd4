//! Run summary derived from a trace alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::engine::EventKind;
use crate::incentives::PayoutKind;
use crate::ledger::Coins;
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("trace has no header")]
    MissingHeader,
    #[error("malformed {kind} record at index {index}")]
    Malformed { kind: String, index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AckSummary {
    pub block: u64,
    pub instance: String,
    pub donor: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisSummary {
    pub correct: u64,
    pub total: u64,
}

impl AnalysisSummary {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    /// Final phase per instance, in order of first appearance.
    pub phases: Vec<(String, String)>,
    pub acknowledgments: Vec<AckSummary>,
    /// Count and total amount per payout kind.
    pub payouts: BTreeMap<PayoutKind, (u64, Coins)>,
    pub analysis: BTreeMap<String, AnalysisSummary>,
}

impl RunReport {
    pub fn from_trace(trace: &Trace) -> Result<Self, ReportError> {
        let (scenario, seed) = trace.header().ok_or(ReportError::MissingHeader)?;
        let mut report = RunReport {
            scenario,
            seed,
            ..Default::default()
        };
        for (index, r) in trace.events().iter().enumerate() {
            let malformed = || ReportError::Malformed {
                kind: r.kind.clone(),
                index,
            };
            let f = r.fields();
            match r.kind.as_str() {
                k if k == EventKind::Phase.name() => {
                    let [id, _, to] = f.as_slice() else {
                        return Err(malformed());
                    };
                    match report.phases.iter_mut().find(|(i, _)| i == id) {
                        Some(entry) => entry.1 = to.to_string(),
                        None => report.phases.push((id.to_string(), to.to_string())),
                    }
                }
                k if k == EventKind::Ack.name() => {
                    let [id, donor] = f.as_slice() else {
                        return Err(malformed());
                    };
                    report.acknowledgments.push(AckSummary {
                        block: r.block.0,
                        instance: id.to_string(),
                        donor: donor.to_string(),
                    });
                }
                k if k == EventKind::Payout.name() => {
                    let [_, kind, _, _, amount] = f.as_slice() else {
                        return Err(malformed());
                    };
                    let kind: PayoutKind = kind.parse().map_err(|_| malformed())?;
                    let amount: Coins = amount.parse().map_err(|_| malformed())?;
                    let slot = report.payouts.entry(kind).or_default();
                    slot.0 += 1;
                    slot.1 += amount;
                }
                "ANALYSIS" => {
                    let [label, correct, total] = f.as_slice() else {
                        return Err(malformed());
                    };
                    let summary = AnalysisSummary {
                        correct: correct.parse().map_err(|_| malformed())?,
                        total: total.parse().map_err(|_| malformed())?,
                    };
                    report.analysis.insert(label.to_string(), summary);
                }
                _ => {}
            }
        }
        Ok(report)
    }

    pub fn human(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario   {}", self.scenario);
        let _ = writeln!(s, "seed       {}", self.seed);
        let _ = writeln!(s, "instances  {}", self.phases.len());
        for (id, phase) in &self.phases {
            let _ = writeln!(s, "  {:<10} {}", &id[..id.len().min(8)], phase);
        }
        let _ = writeln!(s, "acknowledgments  {}", self.acknowledgments.len());
        for a in &self.acknowledgments {
            let _ = writeln!(
                s,
                "  block {:<6} instance {}  donor {}",
                a.block,
                &a.instance[..a.instance.len().min(8)],
                &a.donor[..a.donor.len().min(8)]
            );
        }
        let _ = writeln!(s, "payouts");
        let _ = writeln!(s, "  {:<22} {:>6} {:>10}", "kind", "count", "amount");
        for (kind, (count, amount)) in &self.payouts {
            let _ = writeln!(s, "  {:<22} {:>6} {:>10}", kind.name(), count, amount);
        }
        for (label, a) in &self.analysis {
            let _ = writeln!(
                s,
                "analyzer {label}  {}/{} = {:.2}",
                a.correct,
                a.total,
                a.rate()
            );
        }
        s
    }

    pub fn delimited(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario|{}", self.scenario);
        let _ = writeln!(s, "seed|{}", self.seed);
        for (id, phase) in &self.phases {
            let _ = writeln!(s, "instance|{id}|{phase}");
        }
        for a in &self.acknowledgments {
            let _ = writeln!(s, "ack|{}|{}|{}", a.block, a.instance, a.donor);
        }
        for (kind, (count, amount)) in &self.payouts {
            let _ = writeln!(s, "payout|{}|{count}|{amount}", kind.name());
        }
        for (label, a) in &self.analysis {
            let _ = writeln!(s, "analysis|{label}|{}|{}", a.correct, a.total);
        }
        s
    }
}

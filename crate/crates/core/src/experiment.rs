//! Phase runner and three-phase comparison. The phases share one scenario
//! and seed and differ only in which toggles are on.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Error;
use crate::ids::NodeId;
use crate::metrics::{bucketed_throughput, phase_report, write_csv, Phase, PhaseReport};
use crate::network::{RunOutcome, RunStats, Simulation, Toggles};
use crate::scenario::Scenario;
use crate::trace::Trace;
use crate::traffic::uj_to_joules;

impl Phase {
    pub fn toggles(self) -> Toggles {
        match self {
            Phase::Baseline => Toggles {
                adversary: false,
                detection: false,
            },
            Phase::Attack => Toggles {
                adversary: true,
                detection: false,
            },
            Phase::Defend => Toggles {
                adversary: true,
                detection: true,
            },
        }
    }
}

/// A finished run: its report, simulator-side bookkeeping and raw trace.
#[derive(Debug)]
pub struct PhaseRun {
    pub report: PhaseReport,
    pub outcome: RunOutcome<Vec<u8>>,
    pub trace: Trace,
}

impl PhaseRun {
    pub fn trace_bytes(&self) -> &[u8] {
        &self.outcome.sink
    }

    pub fn stats(&self) -> &RunStats {
        &self.outcome.stats
    }

    pub fn blacklisted(&self) -> BTreeSet<NodeId> {
        self.outcome.blacklisted_union()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

/// Runs one configuration in memory and cross-checks the trace-derived
/// report against the simulator's own packet accounting.
pub fn run_toggles(sc: &Scenario, phase: Phase, toggles: Toggles) -> Result<PhaseRun, Error> {
    let outcome = Simulation::new(sc, toggles, Vec::new()).run()?;
    let trace = Trace::parse(outcome.sink.as_slice())?;
    let report = phase_report(&trace, phase, sc.bucket)?;
    if report.in_flight != outcome.in_flight {
        return Err(Error::ConservationViolation(format!(
            "{phase}: trace leaves {} packets unaccounted but {} are buffered or on the air",
            report.in_flight, outcome.in_flight
        )));
    }
    if report.detects != outcome.stats.detects {
        return Err(Error::Invariant(format!(
            "{phase}: {} DETECT lines but {} malicious verdicts",
            report.detects, outcome.stats.detects
        )));
    }
    Ok(PhaseRun {
        report,
        outcome,
        trace,
    })
}

pub fn run_in_memory(sc: &Scenario, phase: Phase) -> Result<PhaseRun, Error> {
    run_toggles(sc, phase, phase.toggles())
}

/// Runs `phase` and writes `<phase>.trace` and `<phase>.csv` into `out_dir`.
pub fn run_phase(sc: &Scenario, phase: Phase, out_dir: &Path) -> Result<PhaseRun, Error> {
    let run = run_in_memory(sc, phase)?;
    write_phase_files(sc, &run, out_dir)?;
    Ok(run)
}

fn write_phase_files(sc: &Scenario, run: &PhaseRun, out_dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let phase = run.report.phase;
    let trace_path = out_dir.join(format!("{phase}.trace"));
    fs::write(&trace_path, run.trace_bytes()).map_err(io_err(&trace_path))?;
    let csv_path = out_dir.join(format!("{phase}.csv"));
    let mut csv = Vec::new();
    write_csv(&bucketed_throughput(&run.trace, sc.bucket)?, &mut csv).expect("writing to a Vec");
    fs::write(&csv_path, csv).map_err(io_err(&csv_path))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug)]
pub struct ComparisonSummary {
    pub baseline: PhaseRun,
    pub attack: PhaseRun,
    pub defend: PhaseRun,
    /// Defend configuration rerun with a zero screening cost.
    pub control_energy_uj: u64,
    pub checks: Vec<Check>,
}

impl ComparisonSummary {
    pub fn phases(&self) -> [&PhaseRun; 3] {
        [&self.baseline, &self.attack, &self.defend]
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "phase,sent,received,absorbed,no_route_drops,other_drops,in_flight,delivery_ratio,mean_throughput_bps,energy_spent_j,screened,detects,blacklisted"
        )?;
        for run in self.phases() {
            let r = &run.report;
            let blacklisted = run
                .blacklisted()
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(
                out,
                "{},{},{},{},{},{},{},{:.4},{:.3},{:.6},{},{},{}",
                r.phase,
                r.sent,
                r.received,
                r.absorbed,
                r.no_route_drops,
                r.other_drops,
                r.in_flight,
                r.delivery_ratio(),
                mean_throughput(r),
                r.energy_total_j(),
                run.stats().screened,
                r.detects,
                blacklisted
            )?;
        }
        for c in &self.checks {
            writeln!(
                out,
                "# check {}: {} ({})",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Received bits per second averaged over every bucket of the run.
fn mean_throughput(r: &PhaseReport) -> f64 {
    if r.throughput_series.is_empty() {
        return 0.0;
    }
    r.throughput_series.iter().map(|&(_, bps)| bps).sum::<f64>() / r.throughput_series.len() as f64
}

impl fmt::Display for ComparisonSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<9} {:>6} {:>9} {:>9} {:>9} {:>7} {:>10} {:>8}",
            "phase", "sent", "received", "absorbed", "no_route", "ratio", "energy_j", "detects"
        )?;
        for run in self.phases() {
            let r = &run.report;
            writeln!(
                f,
                "{:<9} {:>6} {:>9} {:>9} {:>9} {:>7.3} {:>10.3} {:>8}",
                r.phase.as_str(),
                r.sent,
                r.received,
                r.absorbed,
                r.no_route_drops,
                r.delivery_ratio(),
                r.energy_total_j(),
                r.detects
            )?;
        }
        let b = &self.baseline.report;
        for run in [&self.attack, &self.defend] {
            let r = &run.report;
            writeln!(
                f,
                "{} vs baseline: received {:+}, mean throughput {:+.1} bps, energy {:+.3} J",
                r.phase,
                r.received as i64 - b.received as i64,
                mean_throughput(r) - mean_throughput(b),
                r.energy_total_j() - b.energy_total_j()
            )?;
        }
        for c in &self.checks {
            writeln!(
                f,
                "[{}] {}: {}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Runs all three phases plus the zero-screening-cost control, then checks
/// the delivery ordering and the screening energy identity.
pub fn compare(sc: &Scenario) -> Result<ComparisonSummary, Error> {
    let mut control_sc = sc.clone();
    control_sc.energy.screen_uj = 0;
    let (baseline, attack, defend, control) = std::thread::scope(|s| {
        let b = s.spawn(|| run_in_memory(sc, Phase::Baseline));
        let a = s.spawn(|| run_in_memory(sc, Phase::Attack));
        let d = s.spawn(|| run_in_memory(sc, Phase::Defend));
        let c = s.spawn(|| run_in_memory(&control_sc, Phase::Defend));
        let join = |h: std::thread::ScopedJoinHandle<'_, Result<PhaseRun, Error>>| {
            h.join().expect("phase thread panicked")
        };
        (join(b), join(a), join(d), join(c))
    });
    let (baseline, attack, defend, control) = (baseline?, attack?, defend?, control?);

    let (rb, ra, rd) = (
        baseline.report.received,
        attack.report.received,
        defend.report.received,
    );
    let screened = defend.stats().screened;
    let expected_delta = sc.energy.screen_uj * screened;
    let defend_uj = defend.outcome.energy_spent_uj();
    let control_uj = control.outcome.energy_spent_uj();
    let checks = vec![
        Check {
            name: "baseline >= defend",
            passed: rb >= rd,
            detail: format!("{rb} vs {rd} received"),
        },
        Check {
            name: "defend >= attack",
            passed: rd >= ra,
            detail: format!("{rd} vs {ra} received"),
        },
        Check {
            name: "screening energy identity",
            passed: defend_uj >= control_uj && defend_uj - control_uj == expected_delta,
            detail: format!(
                "{:.6} J - {:.6} J = {} screened x {:.6} J",
                uj_to_joules(defend_uj),
                uj_to_joules(control_uj),
                screened,
                uj_to_joules(sc.energy.screen_uj)
            ),
        },
    ];
    Ok(ComparisonSummary {
        baseline,
        attack,
        defend,
        control_energy_uj: control_uj,
        checks,
    })
}

/// Runs [`compare`] and writes the three phase files plus `summary.csv`.
pub fn compare_to_dir(sc: &Scenario, out_dir: &Path) -> Result<ComparisonSummary, Error> {
    let summary = compare(sc)?;
    for run in summary.phases() {
        write_phase_files(sc, run, out_dir)?;
    }
    let path: PathBuf = out_dir.join("summary.csv");
    let mut buf = Vec::new();
    summary.write_csv(&mut buf).expect("writing to a Vec");
    fs::write(&path, buf).map_err(io_err(&path))?;
    Ok(summary)
}

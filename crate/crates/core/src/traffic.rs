//! CBR sources and the per-node energy ledger.

use crate::ids::{FlowId, NodeId};
use crate::time::{SimTime, TICKS_PER_SECOND};

#[derive(Debug, Clone, PartialEq)]
pub struct CbrFlow {
    pub flow: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    /// packets per second
    pub rate: f64,
    pub size_bytes: u32,
    pub start_at: SimTime,
    pub stop_at: SimTime,
}

impl CbrFlow {
    /// Emission instants `start_at + k/rate` for every k with the instant
    /// strictly before `stop_at`. Offsets are computed from `start_at` each
    /// time, so rounding never accumulates.
    pub fn emission_times(&self) -> Vec<SimTime> {
        let mut out = Vec::new();
        for k in 0u64.. {
            let offset = (k as f64 * TICKS_PER_SECOND as f64 / self.rate).round() as u64;
            let t = SimTime::from_micros(self.start_at.as_micros() + offset);
            if t >= self.stop_at {
                break;
            }
            out.push(t);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyAction {
    Tx,
    Rx,
    Screen,
}

/// Per-event costs, in microjoules so that ledger sums are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnergyCosts {
    pub initial_uj: u64,
    pub tx_uj: u64,
    pub rx_uj: u64,
    pub screen_uj: u64,
}

impl Default for EnergyCosts {
    fn default() -> Self {
        EnergyCosts {
            initial_uj: 100_000_000,
            tx_uj: 20_000,
            rx_uj: 10_000,
            screen_uj: 2_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnergyLedger {
    pub node: NodeId,
    pub initial_uj: u64,
    pub spent_tx_uj: u64,
    pub spent_rx_uj: u64,
    pub spent_screen_uj: u64,
}

impl EnergyLedger {
    pub fn new(node: NodeId, initial_uj: u64) -> Self {
        EnergyLedger {
            node,
            initial_uj,
            spent_tx_uj: 0,
            spent_rx_uj: 0,
            spent_screen_uj: 0,
        }
    }

    pub fn spent_uj(&self) -> u64 {
        self.spent_tx_uj + self.spent_rx_uj + self.spent_screen_uj
    }

    pub fn remaining_uj(&self) -> u64 {
        self.initial_uj - self.spent_uj()
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining_uj() == 0
    }

    /// Debits one event, capped at what is left. Returns the remaining
    /// balance.
    pub fn account(&mut self, action: EnergyAction, costs: &EnergyCosts) -> u64 {
        let remaining = self.remaining_uj();
        let (cost, spent) = match action {
            EnergyAction::Tx => (costs.tx_uj, &mut self.spent_tx_uj),
            EnergyAction::Rx => (costs.rx_uj, &mut self.spent_rx_uj),
            EnergyAction::Screen => (costs.screen_uj, &mut self.spent_screen_uj),
        };
        *spent += cost.min(remaining);
        self.remaining_uj()
    }
}

pub fn uj_to_joules(uj: u64) -> f64 {
    uj as f64 / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flow(rate: f64, start: SimTime, stop: SimTime) -> CbrFlow {
        CbrFlow {
            flow: FlowId(0),
            src: NodeId(21),
            dst: NodeId(18),
            rate,
            size_bytes: 512,
            start_at: start,
            stop_at: stop,
        }
    }

    #[test]
    fn four_per_second_over_eighteen_seconds() {
        let times = flow(4.0, SimTime::from_secs(1), SimTime::from_secs(19)).emission_times();
        assert_eq!(times.len(), 72);
        assert_eq!(times[0], SimTime::from_secs(1));
        assert_eq!(times[1], SimTime::from_micros(1_250_000));
        assert_eq!(*times.last().unwrap(), SimTime::from_micros(18_750_000));
    }

    #[test]
    fn one_tick_window_emits_once() {
        let start = SimTime::from_secs(3);
        let times = flow(4.0, start, SimTime::from_micros(3_000_001)).emission_times();
        assert_eq!(times, vec![start]);
    }

    #[test]
    fn non_integer_interval_does_not_drift() {
        let times = flow(3.0, SimTime::ZERO, SimTime::from_secs(3)).emission_times();
        assert_eq!(times.len(), 9);
        assert_eq!(times[3], SimTime::from_secs(1));
        assert_eq!(times[8], SimTime::from_micros(2_666_667));
    }

    #[test]
    fn ten_transmissions_cost_a_fifth_of_a_joule() {
        let costs = EnergyCosts::default();
        let mut l = EnergyLedger::new(NodeId(0), costs.initial_uj);
        for _ in 0..10 {
            l.account(EnergyAction::Tx, &costs);
        }
        assert_eq!(uj_to_joules(l.remaining_uj()), 99.8);
    }

    #[test]
    fn balance_never_goes_negative() {
        let costs = EnergyCosts {
            initial_uj: 25_000,
            ..EnergyCosts::default()
        };
        let mut l = EnergyLedger::new(NodeId(0), costs.initial_uj);
        assert_eq!(l.account(EnergyAction::Tx, &costs), 5_000);
        assert_eq!(l.account(EnergyAction::Rx, &costs), 0);
        assert!(l.is_exhausted());
        assert_eq!(l.account(EnergyAction::Screen, &costs), 0);
        assert_eq!(l.spent_uj(), 25_000);
    }
}

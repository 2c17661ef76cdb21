//! Run reports: `metric = value` lines derived only from the ledger and the
//! observation log, so a report can be rebuilt from a run's artifacts.

use std::collections::BTreeMap;
use std::fmt;

use crate::metrics::{equal_split, format4, log_utility};
use crate::registry::{window_stats, LedgerRecord, RecordKind};
use crate::sim::Observation;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.lines.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn lines(&self) -> &[(String, String)] {
        &self.lines
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.lines {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

pub fn export_observations(observations: &[Observation]) -> String {
    observations.iter().map(|o| format!("{o}\n")).collect()
}

pub fn parse_observations(text: &str) -> Result<Vec<Observation>, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Households are the hosts whose welfare the utility metrics measure.
fn is_household(role: &str) -> bool {
    matches!(role, "CONSUMER" | "VENDOR")
}

pub fn build_report(records: &[LedgerRecord], observations: &[Observation]) -> Report {
    let roles: BTreeMap<&str, &str> = observations
        .iter()
        .filter(|o| o.event == "host")
        .filter_map(|o| Some((o.host.as_str(), o.field("role")?)))
        .collect();

    let stats = window_stats(records, 0, u64::MAX);
    let mut balances: BTreeMap<String, u64> = roles.keys().map(|h| (h.to_string(), 0)).collect();
    let mut live: BTreeMap<&str, (&str, u64)> = BTreeMap::new();
    let mut burns: BTreeMap<String, u64> = BTreeMap::new();
    let mut tax = 0u64;
    for r in records {
        let ids = &r.unit_ids;
        match r.kind {
            RecordKind::Mint => {
                live.insert(&ids[0], (&r.parties[1], r.amounts[0]));
            }
            RecordKind::Transfer => {
                live.insert(&ids[0], (&r.parties[1], r.amounts[0]));
                if roles.get(r.parties[1].as_str()) == Some(&"TAX_AUTHORITY") {
                    tax += r.amounts[0];
                }
            }
            RecordKind::Split => {
                live.remove(ids[0].as_str());
                live.insert(&ids[1], (&r.parties[0], r.amounts[1]));
                live.insert(&ids[2], (&r.parties[0], r.amounts[2]));
            }
            RecordKind::Merge => {
                live.remove(ids[0].as_str());
                live.remove(ids[1].as_str());
                live.insert(&ids[2], (&r.parties[0], r.amounts[2]));
            }
            RecordKind::Burn => {
                live.remove(ids[0].as_str());
                *burns.entry(r.reason.clone().unwrap_or_default()).or_insert(0) += r.amounts[0];
            }
        }
    }
    for (owner, value) in live.values() {
        *balances.entry(owner.to_string()).or_insert(0) += value;
    }

    let mut events: BTreeMap<&str, u64> = BTreeMap::new();
    for o in observations {
        *events.entry(&o.event).or_insert(0) += 1;
    }

    let mut rep = Report::default();
    rep.push("records", records.len());
    rep.push("minted", stats.minted);
    rep.push("burned", stats.burned);
    rep.push("live_supply", stats.live_supply);
    rep.push("tx_count", stats.tx_count);
    rep.push("tx_volume", stats.tx_volume);
    rep.push("tax_collected", tax);
    rep.push("forbidden", events.get("forbidden").copied().unwrap_or(0));
    for (reason, amount) in &burns {
        rep.push(format!("burn.{reason}"), amount);
    }
    for (host, amount) in &balances {
        rep.push(format!("balance.{host}"), amount);
    }

    let households: Vec<u64> = balances
        .iter()
        .filter(|(h, _)| roles.get(h.as_str()).is_some_and(|r| is_household(r)))
        .map(|(_, v)| *v)
        .collect();
    let total: u64 = households.iter().sum();
    rep.push("utility.households", households.len());
    rep.push("utility.log_sum", format4(log_utility(&households)));
    rep.push(
        "utility.equal_split",
        format4(log_utility(&equal_split(total, households.len()))),
    );

    for o in observations.iter().filter(|o| o.event == "supply") {
        let f = |k| o.field(k).unwrap_or("0");
        rep.push(
            format!("supply.{}", f("period")),
            format!("{}|{}|{}|{}", f("supply"), f("mint"), f("burn"), f("tx_volume")),
        );
    }
    for (event, n) in &events {
        rep.push(format!("events.{event}"), n);
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_round_trip() {
        let o = Observation {
            tick: 4,
            host: "alice".into(),
            event: "sale".into(),
            details: "vendor=shop price=5 note=a|b".into(),
        };
        let text = export_observations(std::slice::from_ref(&o));
        assert_eq!(parse_observations(&text).unwrap(), vec![o.clone()]);
        assert_eq!(o.field("price"), Some("5"));
        assert_eq!(o.field("pric"), None);
    }

    #[test]
    fn empty_report_is_stable() {
        let r = build_report(&[], &[]);
        assert_eq!(r.get("live_supply"), Some("0"));
        assert_eq!(r.get("utility.log_sum"), Some("0.0000"));
        assert_eq!(r.to_string(), build_report(&[], &[]).to_string());
    }
}

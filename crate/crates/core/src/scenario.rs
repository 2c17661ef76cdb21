//! Scenario files: an INI-like description of hosts, law, policies, the
//! supply rule and a timed script.
//!
//! ```text
//! [sim]
//! seed = 7
//! latency = 1 3
//!
//! [hosts]
//! central_bank = CENTRAL_BANK HOME allowance=1000000
//! alice = CONSUMER HOME
//!
//! [policies]
//! taxed = @sales_tax(1/5)
//!
//! [script]
//! 0 MINT central_bank alice 1000 taxed
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::fiscal::{self, LawTable};
use crate::markets::Side;
use crate::policy::{compile, Action as PolicyAction, CheckedPolicy};
use crate::rate::Rate;
use crate::supply::SupplyRule;

/// `line` is 0 when the error is not tied to a line, such as an unreadable file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            0 => f.write_str(&self.message),
            n => write!(f, "line {n}: {}", self.message),
        }
    }
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError {
        line,
        message: message.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Consumer,
    Vendor,
    Bank,
    CentralBank,
    TaxAuthority,
    Government,
    LawServer,
    LocationAuthority,
    Adversary,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Consumer => "CONSUMER",
            Role::Vendor => "VENDOR",
            Role::Bank => "BANK",
            Role::CentralBank => "CENTRAL_BANK",
            Role::TaxAuthority => "TAX_AUTHORITY",
            Role::Government => "GOVERNMENT",
            Role::LawServer => "LAW_SERVER",
            Role::LocationAuthority => "LOCATION_AUTHORITY",
            Role::Adversary => "ADVERSARY",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "CONSUMER" => Role::Consumer,
            "VENDOR" => Role::Vendor,
            "BANK" => Role::Bank,
            "CENTRAL_BANK" => Role::CentralBank,
            "TAX_AUTHORITY" => Role::TaxAuthority,
            "GOVERNMENT" => Role::Government,
            "LAW_SERVER" => Role::LawServer,
            "LOCATION_AUTHORITY" => Role::LocationAuthority,
            "ADVERSARY" => Role::Adversary,
            _ => return Err(format!("unknown role `{s}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostSpec {
    pub id: String,
    pub role: Role,
    pub location: String,
    pub licence: Option<String>,
    /// Minting allowance granted by the registry.
    pub allowance: u64,
    /// Spending category that payments to this host fall under, e.g. the
    /// kind of deposit a bank takes.
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub seed: u64,
    pub year_ticks: u64,
    pub periods_per_year: u64,
    pub latency: (u64, u64),
    /// Last tick to simulate. Defaults to just past the last scripted tick
    /// plus the maximum latency, or the last supply period if later.
    pub end: Option<u64>,
    pub currency: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            year_ticks: 360,
            periods_per_year: 1,
            latency: (1, 1),
            end: None,
            currency: "SIM".into(),
        }
    }
}

impl SimConfig {
    pub fn period_ticks(&self) -> u64 {
        (self.year_ticks / self.periods_per_year.max(1)).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupplyPlan {
    pub rule: SupplyRule,
    pub issuer: String,
    pub policy: String,
    /// Minted to the issuer at tick 0.
    pub initial: u64,
    pub periods: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Mint {
        issuer: String,
        owner: String,
        value: u64,
        policy: String,
        expiry: Option<u64>,
        home: Option<String>,
    },
    Buy {
        buyer: String,
        vendor: String,
        price: u64,
        category: String,
    },
    Contact { host: String },
    MoveHost { host: String, location: String },
    Withhold { host: String },
    Restore { host: String },
    Send { from: String, to: String, text: String },
    Rate { bank: String, rate: Rate },
    Order { owner: String, side: Side, price: u64, qty: u64 },
    Split { host: String, amount: u64 },
    Merge { host: String },
    Zeroise { host: String, reason: String },
    /// Flip one byte of a victim unit's policy text.
    Tamper { adversary: String, target: String },
    /// Resubmit captured registry requests.
    Replay { adversary: String, count: u64 },
    /// Try to move a victim's unit using the adversary's own secret.
    Forge { adversary: String, target: String },
    /// Corrupt the next message in flight.
    Intercept { adversary: String },
}

impl Action {
    /// The host that performs the action.
    pub fn actor(&self) -> &str {
        match self {
            Action::Mint { issuer, .. } => issuer,
            Action::Buy { buyer, .. } => buyer,
            Action::Contact { host }
            | Action::MoveHost { host, .. }
            | Action::Withhold { host }
            | Action::Restore { host }
            | Action::Split { host, .. }
            | Action::Merge { host }
            | Action::Zeroise { host, .. } => host,
            Action::Send { from, .. } => from,
            Action::Rate { bank, .. } => bank,
            Action::Order { owner, .. } => owner,
            Action::Tamper { adversary, .. }
            | Action::Replay { adversary, .. }
            | Action::Forge { adversary, .. }
            | Action::Intercept { adversary } => adversary,
        }
    }

    /// Other hosts the action names.
    fn others(&self) -> Vec<&str> {
        match self {
            Action::Mint { owner, .. } => vec![owner],
            Action::Buy { vendor, .. } => vec![vendor],
            Action::Send { to, .. } => vec![to],
            Action::Tamper { target, .. } | Action::Forge { target, .. } => vec![target],
            _ => Vec::new(),
        }
    }

    fn is_attack(&self) -> bool {
        matches!(
            self,
            Action::Tamper { .. } | Action::Replay { .. } | Action::Forge { .. } | Action::Intercept { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptLine {
    pub tick: u64,
    pub action: Action,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub sim: SimConfig,
    pub hosts: Vec<HostSpec>,
    pub law: LawTable,
    pub policies: BTreeMap<String, CheckedPolicy>,
    pub supply: Option<SupplyPlan>,
    pub script: Vec<ScriptLine>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError {
            line: 0,
            message: e.to_string(),
        })?;
        Self::parse(&text, path.parent())
    }

    /// Parses scenario text. `file:` policy references resolve against
    /// `base`, or the working directory when `None`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, ScenarioError> {
        let mut sections: BTreeMap<&str, Vec<(usize, &str)>> = BTreeMap::new();
        let mut current: Option<&str> = None;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                match name {
                    "sim" | "hosts" | "law" | "policies" | "supply" | "script" => {
                        if sections.contains_key(name) {
                            return err(n, format!("duplicate section [{name}]"));
                        }
                        sections.insert(name, Vec::new());
                        current = Some(name);
                    }
                    _ => return err(n, format!("unknown section [{name}]")),
                }
                continue;
            }
            let Some(sec) = current else {
                return err(n, "content before first section");
            };
            sections.get_mut(sec).expect("section opened").push((n, line));
        }
        let get = |name: &str| sections.get(name).cloned().unwrap_or_default();

        let sim = parse_sim(&get("sim"))?;
        let hosts = parse_hosts(&get("hosts"))?;
        let mut law = LawTable::new();
        for (n, line) in get("law") {
            let (cat, rest) = key_value(n, line)?;
            law.insert(cat, rest.parse().map_err(|e: fiscal::FiscalError| ScenarioError {
                line: n,
                message: e.to_string(),
            })?);
        }
        let mut policies = BTreeMap::new();
        for (n, line) in get("policies") {
            let (name, spec) = key_value(n, line)?;
            let source = policy_source(n, spec, &law, sim.year_ticks, base)?;
            let checked = compile(&source).map_err(|e| ScenarioError {
                line: n,
                message: format!("policy `{name}`: {}", e.join("; ")),
            })?;
            if policies.insert(name.to_string(), checked).is_some() {
                return err(n, format!("duplicate policy `{name}`"));
            }
        }
        let supply = match sections.get("supply") {
            Some(lines) => Some(parse_supply(lines)?),
            None => None,
        };
        let mut script = Vec::new();
        for (n, line) in get("script") {
            script.push(parse_script_line(n, line)?);
        }
        script.sort_by_key(|s| s.tick);

        let scenario = Scenario {
            sim,
            hosts,
            law,
            policies,
            supply,
            script,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn host(&self, id: &str) -> Option<&HostSpec> {
        self.hosts.iter().find(|h| h.id == id)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        for (name, policy) in &self.policies {
            for rule in policy.rules() {
                for action in &rule.actions {
                    if let PolicyAction::Pay { payee, .. } = action {
                        if self.host(payee).is_none() {
                            return err(0, format!("policy `{name}` pays undeclared host `{payee}`"));
                        }
                    }
                }
            }
        }
        if let Some(plan) = &self.supply {
            let Some(issuer) = self.host(&plan.issuer) else {
                return err(0, format!("supply issuer `{}` is not a host", plan.issuer));
            };
            if issuer.allowance == 0 {
                return err(0, format!("supply issuer `{}` has no allowance", plan.issuer));
            }
            if !self.policies.contains_key(&plan.policy) {
                return err(0, format!("supply policy `{}` is not defined", plan.policy));
            }
        }
        for s in &self.script {
            let a = &s.action;
            for h in std::iter::once(a.actor()).chain(a.others()) {
                if self.host(h).is_none() {
                    return err(s.line, format!("unknown host `{h}`"));
                }
            }
            if a.is_attack() && self.host(a.actor()).map(|h| h.role) != Some(Role::Adversary) {
                return err(s.line, format!("`{}` is not an adversary", a.actor()));
            }
            match a {
                Action::Mint { issuer, policy, .. } => {
                    if !self.policies.contains_key(policy) {
                        return err(s.line, format!("unknown policy `{policy}`"));
                    }
                    if self.host(issuer).is_some_and(|h| h.allowance == 0) {
                        return err(s.line, format!("`{issuer}` has no minting allowance"));
                    }
                }
                Action::Buy { category, .. } if !self.law.is_empty() && !self.law.contains(category) => {
                    return err(s.line, format!("unknown category `{category}`"));
                }
                Action::Rate { bank, .. } if self.host(bank).map(|h| h.role) != Some(Role::Bank) => {
                    return err(s.line, format!("`{bank}` is not a bank"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Last tick the simulation should process.
    pub fn end_tick(&self) -> u64 {
        if let Some(end) = self.sim.end {
            return end;
        }
        // Leave room for the last messages to arrive.
        let script_end =
            self.script.iter().map(|s| s.tick).max().unwrap_or(0) + 1 + self.sim.latency.1;
        let supply_end = self
            .supply
            .as_ref()
            .map_or(0, |p| p.periods * self.sim.period_ticks());
        script_end.max(supply_end)
    }
}

fn strip_comment(line: &str) -> &str {
    // `#` starts a comment unless it sits inside a quoted string.
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn key_value(n: usize, line: &str) -> Result<(&str, &str), ScenarioError> {
    match line.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => err(n, format!("expected `key = value`, got `{line}`")),
    }
}

fn number<T: FromStr>(n: usize, word: &str) -> Result<T, ScenarioError> {
    word.parse()
        .or_else(|_| err(n, format!("expected a number, got `{word}`")))
}

fn parse_sim(lines: &[(usize, &str)]) -> Result<SimConfig, ScenarioError> {
    let mut c = SimConfig::default();
    for &(n, line) in lines {
        let (k, v) = key_value(n, line)?;
        match k {
            "seed" => c.seed = number(n, v)?,
            "year_ticks" => c.year_ticks = number(n, v)?,
            "periods_per_year" => c.periods_per_year = number(n, v)?,
            "end" => c.end = Some(number(n, v)?),
            "currency" => c.currency = v.to_string(),
            "latency" => {
                let parts: Vec<&str> = v.split_whitespace().collect();
                c.latency = match parts.as_slice() {
                    [a] => (number(n, a)?, number(n, a)?),
                    [a, b] => (number(n, a)?, number(n, b)?),
                    _ => return err(n, "latency takes `min max`"),
                };
            }
            _ => return err(n, format!("unknown sim key `{k}`")),
        }
    }
    if c.year_ticks == 0 || c.periods_per_year == 0 || c.periods_per_year > c.year_ticks {
        return err(0, "need 0 < periods_per_year <= year_ticks");
    }
    if c.latency.0 > c.latency.1 {
        return err(0, "latency min exceeds max");
    }
    Ok(c)
}

fn parse_hosts(lines: &[(usize, &str)]) -> Result<Vec<HostSpec>, ScenarioError> {
    let mut hosts: Vec<HostSpec> = Vec::new();
    for &(n, line) in lines {
        let (id, rest) = key_value(n, line)?;
        if id.contains(['|', ':', ' ']) || id == crate::registry::REGISTRY_KEY_ID {
            return err(n, format!("invalid host id `{id}`"));
        }
        let mut words = rest.split_whitespace();
        let role: Role = words
            .next()
            .ok_or_else(|| ScenarioError {
                line: n,
                message: "missing role".into(),
            })?
            .parse()
            .map_err(|m| ScenarioError { line: n, message: m })?;
        let Some(location) = words.next() else {
            return err(n, "missing location");
        };
        let mut spec = HostSpec {
            id: id.to_string(),
            role,
            location: location.to_string(),
            licence: None,
            allowance: 0,
            category: None,
        };
        for w in words {
            match w.split_once('=') {
                Some(("licence", l)) => spec.licence = Some(l.to_string()),
                Some(("allowance", a)) => spec.allowance = number(n, a)?,
                Some(("category", c)) => spec.category = Some(c.to_string()),
                _ => return err(n, format!("unknown host option `{w}`")),
            }
        }
        if hosts.iter().any(|h| h.id == spec.id) {
            return err(n, format!("duplicate host `{id}`"));
        }
        hosts.push(spec);
    }
    Ok(hosts)
}

fn parse_supply(lines: &[(usize, &str)]) -> Result<SupplyPlan, ScenarioError> {
    let (mut rule, mut issuer, mut policy, mut initial, mut periods) = (None, None, None, 0, None);
    let mut first = 0;
    for &(n, line) in lines {
        first = if first == 0 { n } else { first };
        let (k, v) = key_value(n, line)?;
        match k {
            "rule" => {
                rule = Some(SupplyRule::parse(v).map_err(|e| ScenarioError {
                    line: n,
                    message: e.to_string(),
                })?)
            }
            "issuer" => issuer = Some(v.to_string()),
            "policy" => policy = Some(v.to_string()),
            "initial" => initial = number(n, v)?,
            "periods" => periods = Some(number(n, v)?),
            _ => return err(n, format!("unknown supply key `{k}`")),
        }
    }
    match (rule, issuer, policy, periods) {
        (Some(rule), Some(issuer), Some(policy), Some(periods)) => Ok(SupplyPlan {
            rule,
            issuer,
            policy,
            initial,
            periods,
        }),
        _ => err(first, "[supply] needs rule, issuer, policy and periods"),
    }
}

/// Expands a policy spec: inline policy text, or a list of `@generator(...)`
/// calls and `file:path` references whose sources are concatenated.
fn policy_source(
    n: usize,
    spec: &str,
    law: &LawTable,
    year_ticks: u64,
    base: Option<&Path>,
) -> Result<String, ScenarioError> {
    let words: Vec<&str> = spec.split_whitespace().collect();
    let composite = !words.is_empty()
        && words.iter().all(|w| w.starts_with('@') || w.starts_with("file:"));
    if !composite {
        return Ok(spec.to_string());
    }
    let mut out = String::new();
    for w in words {
        if let Some(path) = w.strip_prefix("file:") {
            let full = base.map_or_else(|| Path::new(path).to_path_buf(), |b| b.join(path));
            let text = std::fs::read_to_string(&full).or_else(|e| {
                err(n, format!("{}: {e}", full.display()))
            })?;
            out.push_str(&text);
            out.push('\n');
            continue;
        }
        let call = &w[1..];
        let (name, args) = match call.split_once('(') {
            Some((name, rest)) => {
                let Some(inner) = rest.strip_suffix(')') else {
                    return err(n, format!("unterminated generator call `{w}`"));
                };
                let args: Vec<&str> = inner.split(',').map(str::trim).filter(|a| !a.is_empty()).collect();
                (name, args)
            }
            None => (call, Vec::new()),
        };
        let src = fiscal::expand(name, &args, law, year_ticks).map_err(|e| ScenarioError {
            line: n,
            message: e.to_string(),
        })?;
        out.push_str(&src);
    }
    Ok(out)
}

fn parse_script_line(n: usize, line: &str) -> Result<ScriptLine, ScenarioError> {
    let words: Vec<&str> = line.split_whitespace().collect();
    let [tick, verb, args @ ..] = words.as_slice() else {
        return err(n, "expected `<tick> <ACTION> ...`");
    };
    let tick: u64 = number(n, tick)?;
    let s = |w: &str| w.to_string();
    let arity = |want: usize| {
        if args.len() == want {
            Ok(())
        } else {
            err(n, format!("{verb} takes {want} arguments"))
        }
    };
    let action = match *verb {
        "MINT" => {
            if args.len() < 4 {
                return err(n, "MINT takes issuer owner value policy [expiry=N] [home=X]");
            }
            let (mut expiry, mut home) = (None, None);
            for opt in &args[4..] {
                match opt.split_once('=') {
                    Some(("expiry", e)) => expiry = Some(number(n, e)?),
                    Some(("home", h)) => home = Some(s(h)),
                    _ => return err(n, format!("unknown MINT option `{opt}`")),
                }
            }
            Action::Mint {
                issuer: s(args[0]),
                owner: s(args[1]),
                value: number(n, args[2])?,
                policy: s(args[3]),
                expiry,
                home,
            }
        }
        "BUY" => {
            arity(4)?;
            Action::Buy {
                buyer: s(args[0]),
                vendor: s(args[1]),
                price: number(n, args[2])?,
                category: s(args[3]),
            }
        }
        "CONTACT" => {
            arity(1)?;
            Action::Contact { host: s(args[0]) }
        }
        "MOVE_HOST" => {
            arity(2)?;
            Action::MoveHost {
                host: s(args[0]),
                location: s(args[1]),
            }
        }
        "WITHHOLD" => {
            arity(1)?;
            Action::Withhold { host: s(args[0]) }
        }
        "RESTORE" => {
            arity(1)?;
            Action::Restore { host: s(args[0]) }
        }
        "SEND" => {
            if args.len() < 3 {
                return err(n, "SEND takes from to text...");
            }
            Action::Send {
                from: s(args[0]),
                to: s(args[1]),
                text: args[2..].join(" "),
            }
        }
        "RATE" => {
            arity(2)?;
            Action::Rate {
                bank: s(args[0]),
                rate: args[1].parse().or_else(|m: String| err(n, m))?,
            }
        }
        "ORDER" => {
            arity(4)?;
            Action::Order {
                side: args[0].parse().or_else(|m: String| err(n, m))?,
                price: number(n, args[1])?,
                qty: number(n, args[2])?,
                owner: s(args[3]),
            }
        }
        "SPLIT" => {
            arity(2)?;
            Action::Split {
                host: s(args[0]),
                amount: number(n, args[1])?,
            }
        }
        "MERGE" => {
            arity(1)?;
            Action::Merge { host: s(args[0]) }
        }
        "ZEROISE" => {
            arity(2)?;
            Action::Zeroise {
                host: s(args[0]),
                reason: s(args[1]),
            }
        }
        "TAMPER" => {
            arity(2)?;
            Action::Tamper {
                adversary: s(args[0]),
                target: s(args[1]),
            }
        }
        "REPLAY" => {
            if args.is_empty() || args.len() > 2 {
                return err(n, "REPLAY takes adversary [count]");
            }
            Action::Replay {
                adversary: s(args[0]),
                count: args.get(1).map_or(Ok(1), |c| number(n, c))?,
            }
        }
        "FORGE" => {
            arity(2)?;
            Action::Forge {
                adversary: s(args[0]),
                target: s(args[1]),
            }
        }
        "INTERCEPT" => {
            arity(1)?;
            Action::Intercept {
                adversary: s(args[0]),
            }
        }
        other => return err(n, format!("unknown action `{other}`")),
    };
    Ok(ScriptLine {
        tick,
        action,
        line: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[sim]
seed = 9
latency = 1 2

[hosts]
central_bank = CENTRAL_BANK HOME allowance=5000
alice = CONSUMER HOME licence=arms_permit   # licensed
shop = VENDOR HOME
tax_authority = TAX_AUTHORITY HOME

[law]
sale = legal 1/5
weapons = licence arms_permit

[policies]
taxed = @sales_tax(1/5) @legality
plain = PERMISSION ON TRANSFER_REQUEST;

[script]
1 BUY alice shop 100 sale
0 MINT central_bank alice 1000 taxed expiry=50
"#;

    #[test]
    fn parses_and_sorts_script() {
        let s = Scenario::parse(BASIC, None).unwrap();
        assert_eq!(s.sim.seed, 9);
        assert_eq!(s.sim.latency, (1, 2));
        assert_eq!(s.hosts[1].licence.as_deref(), Some("arms_permit"));
        assert_eq!(s.policies["taxed"].rules().len(), 2);
        assert_eq!(s.script[0].tick, 0);
        assert!(matches!(
            s.script[0].action,
            Action::Mint {
                expiry: Some(50),
                ..
            }
        ));
        assert_eq!(s.end_tick(), 4);
    }

    #[test]
    fn rejects_configuration_errors() {
        let cases = [
            (BASIC.replace("1 BUY alice shop 100 sale", "1 BUY alice shop 100 bananas"), "unknown category"),
            (BASIC.replace("1 BUY alice shop", "1 BUY bob shop"), "unknown host"),
            (BASIC.replace("taxed expiry=50", "nope"), "unknown policy"),
            (BASIC.replace("tax_authority = TAX_AUTHORITY HOME", ""), "pays undeclared"),
            (BASIC.replace("[law]", "[laws]"), "unknown section"),
            (format!("{BASIC}\n2 TAMPER alice shop\n"), "not an adversary"),
            (BASIC.replace("@legality", "PROHIBITION ON TICK IF category > 1;"), "policy"),
        ];
        for (text, needle) in cases {
            let e = Scenario::parse(&text, None).unwrap_err();
            assert!(e.message.contains(needle), "{needle}: {e}");
        }
    }

    #[test]
    fn comment_inside_string_is_kept() {
        assert_eq!(strip_comment(r#"a "x#y" # c"#), r#"a "x#y" "#);
    }
}

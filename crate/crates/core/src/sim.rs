//! Discrete-event economic environment.
//!
//! Time advances in integer ticks. Within a tick, queued events run in
//! `(tick, seq)` order, then the tick phase runs: supply directives, location
//! attestations, per-unit TICK policies, interest, and finally the rate board
//! snapshot that delegated money will see on the next tick. Events created
//! during the tick phase with zero latency run before the tick ends.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::crypto::{payload, Attestation, Digest64, KeyPair, Signature, SignatureScheme};
use crate::fiscal::{FiscalError, LawAnswer};
use crate::markets::{select_best_rate, Book, Order, RateBoard, RateChoice};
use crate::money::{self, MintSpec, MoneyError, MoneyUnit, TransferOutcome, UnitState};
use crate::policy::{evaluate, EvalContext, EventKind, Field, Obligation};
use crate::registry::{EndorseRequest, RecordKind, Registry, RegistryError, StampDraft, UnitId};
use crate::scenario::{Action, Role, Scenario, ScenarioError};
use crate::supply::{issuance, SupplyInputs, TrajectoryPoint};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("cannot schedule at tick {at}: clock is at {now}")]
    SchedulePast { at: u64, now: u64 },
    #[error("unknown host `{0}`")]
    UnknownHost(String),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("issuer allowance exceeded: wanted {wanted}, {left} left")]
    AllowanceExceeded { wanted: u64, left: u64 },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Money(#[from] MoneyError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// One line of the observation log: `tick|host|event|details`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub tick: u64,
    pub host: String,
    pub event: String,
    pub details: String,
}

impl Observation {
    /// Value of `key=value` in the details, if present.
    pub fn field(&self, key: &str) -> Option<&str> {
        self.details
            .split(' ')
            .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}|{}", self.tick, self.host, self.event, self.details)
    }
}

impl FromStr for Observation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(4, '|');
        let (Some(tick), Some(host), Some(event), Some(details)) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(format!("malformed observation `{s}`"));
        };
        Ok(Observation {
            tick: tick.parse().map_err(|_| format!("bad tick in `{s}`"))?,
            host: host.to_string(),
            event: event.to_string(),
            details: details.to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Host {
    pub id: String,
    pub role: Role,
    pub location: String,
    pub licence: Option<String>,
    pub category: Option<String>,
    pub keys: KeyPair,
    pub wallet: BTreeSet<UnitId>,
    /// Attestations for this host are being suppressed.
    pub withholding: bool,
}

/// A signed message between hosts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub from: String,
    pub to: String,
    pub body: String,
    pub sig: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Script(Action),
    Deliver(Envelope),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent {
    pub at: u64,
    pub seq: u64,
    pub target: String,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sale {
    pub at: u64,
    pub buyer: String,
    pub vendor: String,
    pub price: u64,
    pub category: String,
    pub tax: u64,
}

/// Aggregates a scenario run is judged on.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScenarioOutcome {
    pub balances: BTreeMap<String, u64>,
    pub tax_collected: u64,
    pub burns: BTreeMap<String, u64>,
    pub forbidden: u64,
}

pub struct Simulation {
    scenario: Scenario,
    now: u64,
    next_seq: u64,
    queue: BTreeMap<(u64, u64), SimEvent>,
    scheduled: u64,
    processed: u64,
    rng: ChaCha8Rng,
    hosts: BTreeMap<String, Host>,
    units: BTreeMap<UnitId, MoneyUnit>,
    registry: Registry,
    authority: String,
    attestations: BTreeMap<String, Attestation>,
    board: RateBoard,
    board_seen: RateBoard,
    deposits: BTreeSet<UnitId>,
    book: Book,
    order_seq: u64,
    trajectory: Vec<TrajectoryPoint>,
    observations: Vec<Observation>,
    sales: Vec<Sale>,
    forbidden: u64,
    tax_collected: u64,
}

impl fmt::Debug for Simulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulation")
            .field("now", &self.now)
            .field("hosts", &self.hosts.len())
            .field("units", &self.units.len())
            .field("pending", &self.queue.len())
            .finish()
    }
}

fn sim_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        let seed = scenario.sim.seed;
        let mut registry = Registry::new();
        let mut hosts = BTreeMap::new();
        let mut specs = scenario.hosts.clone();
        if !specs.iter().any(|h| h.role == Role::LocationAuthority) {
            specs.push(crate::scenario::HostSpec {
                id: "location_authority".into(),
                role: Role::LocationAuthority,
                location: "-".into(),
                licence: None,
                allowance: 0,
                category: None,
            });
        }
        for spec in &specs {
            let keys = KeyPair::derive(&spec.id, seed);
            registry.register_key(&keys)?;
            if spec.allowance > 0 {
                registry.authorize_issuer(&spec.id, spec.allowance)?;
            }
            hosts.insert(
                spec.id.clone(),
                Host {
                    id: spec.id.clone(),
                    role: spec.role,
                    location: spec.location.clone(),
                    licence: spec.licence.clone(),
                    category: spec.category.clone(),
                    keys,
                    wallet: BTreeSet::new(),
                    withholding: false,
                },
            );
        }
        let authority = specs
            .iter()
            .find(|h| h.role == Role::LocationAuthority)
            .map(|h| h.id.clone())
            .expect("location authority present");

        let mut sim = Simulation {
            scenario,
            now: 0,
            next_seq: 0,
            queue: BTreeMap::new(),
            scheduled: 0,
            processed: 0,
            rng: sim_rng(seed),
            hosts,
            units: BTreeMap::new(),
            registry,
            authority,
            attestations: BTreeMap::new(),
            board: RateBoard::new(),
            board_seen: RateBoard::new(),
            deposits: BTreeSet::new(),
            book: Book::new(),
            order_seq: 0,
            trajectory: Vec::new(),
            observations: Vec::new(),
            sales: Vec::new(),
            forbidden: 0,
            tax_collected: 0,
        };
        for h in sim.hosts.values() {
            sim.observations.push(Observation {
                tick: 0,
                host: h.id.clone(),
                event: "host".into(),
                details: format!("role={} location={}", h.role, h.location),
            });
        }
        if let Some(plan) = sim.scenario.supply.clone() {
            if plan.initial > 0 {
                let policy = sim.scenario.policies[&plan.policy].clone();
                sim.mint_to(&plan.issuer, &plan.issuer, plan.initial, policy, None, None, 0)?;
            }
        }
        let script = sim.scenario.script.clone();
        for line in script {
            sim.schedule(line.tick, line.action)?;
        }
        Ok(sim)
    }

    /// Builds a simulation with the scenario's seed replaced.
    pub fn with_seed(mut scenario: Scenario, seed: u64) -> Result<Self, SimError> {
        scenario.sim.seed = seed;
        Self::new(scenario)
    }

    // ---- accessors ----

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn host(&self, id: &str) -> Option<&Host> {
        self.hosts.get(id)
    }

    pub fn hosts(&self) -> impl Iterator<Item = &Host> {
        self.hosts.values()
    }

    pub fn unit(&self, id: &str) -> Option<&MoneyUnit> {
        self.units.get(id)
    }

    pub fn units(&self) -> impl Iterator<Item = &MoneyUnit> {
        self.units.values()
    }

    /// Active units held by `host`.
    pub fn wallet(&self, host: &str) -> Vec<&MoneyUnit> {
        self.hosts
            .get(host)
            .map(|h| h.wallet.iter().filter_map(|id| self.units.get(id)).collect())
            .unwrap_or_default()
    }

    pub fn balance(&self, host: &str) -> u64 {
        self.wallet(host).iter().map(|u| u.value).sum()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn trajectory(&self) -> &[TrajectoryPoint] {
        &self.trajectory
    }

    pub fn sales(&self) -> &[Sale] {
        &self.sales
    }

    pub fn book(&self) -> &Book {
        &self.book
    }

    pub fn board(&self) -> &RateBoard {
        &self.board
    }

    pub fn attestation(&self, host: &str) -> Option<&Attestation> {
        self.attestations.get(host)
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// `(scheduled, processed)`. Every scheduled event is either processed
    /// or still pending.
    pub fn event_counts(&self) -> (u64, u64) {
        (self.scheduled, self.processed)
    }

    pub fn outcome(&self) -> ScenarioOutcome {
        let mut balances: BTreeMap<String, u64> =
            self.hosts.keys().map(|h| (h.clone(), 0)).collect();
        for (owner, v) in self.registry.state().balances() {
            *balances.entry(owner).or_insert(0) += v;
        }
        let mut burns = BTreeMap::new();
        for r in self.registry.records() {
            if r.kind == RecordKind::Burn {
                let reason = r.reason.clone().unwrap_or_default();
                *burns.entry(reason).or_insert(0) += r.amounts[0];
            }
        }
        ScenarioOutcome {
            balances,
            tax_collected: self.tax_collected,
            burns,
            forbidden: self.forbidden,
        }
    }

    pub fn report(&self) -> crate::report::Report {
        crate::report::build_report(self.registry.records(), &self.observations)
    }

    pub fn query_law(&self, category: &str) -> Result<LawAnswer, SimError> {
        self.scenario.law.query(category).map_err(|e| match e {
            FiscalError::UnknownCategory(c) => SimError::UnknownCategory(c),
            other => SimError::UnknownCategory(other.to_string()),
        })
    }

    // ---- scheduling and messaging ----

    pub fn schedule(&mut self, at: u64, action: Action) -> Result<u64, SimError> {
        let actor = action.actor().to_string();
        if !self.hosts.contains_key(&actor) {
            return Err(SimError::UnknownHost(actor));
        }
        self.push_event(at, actor, Payload::Script(action))
    }

    fn push_event(&mut self, at: u64, target: String, payload: Payload) -> Result<u64, SimError> {
        if at < self.now {
            return Err(SimError::SchedulePast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.scheduled += 1;
        self.queue.insert(
            (at, seq),
            SimEvent {
                at,
                seq,
                target,
                payload,
            },
        );
        Ok(seq)
    }

    /// Signs `body` as `from` and queues it for `to` after a random latency.
    /// Returns the delivery tick.
    pub fn send(&mut self, from: &str, to: &str, body: &str) -> Result<u64, SimError> {
        let sender = self
            .hosts
            .get(from)
            .ok_or_else(|| SimError::UnknownHost(from.to_string()))?;
        if !self.hosts.contains_key(to) {
            return Err(SimError::UnknownHost(to.to_string()));
        }
        let sig = self
            .registry
            .keys()
            .sign(&sender.keys, &envelope_bytes(from, to, body))
            .map_err(RegistryError::from)?;
        let (lo, hi) = self.scenario.sim.latency;
        let at = self.now + self.rng.random_range(lo..=hi);
        self.push_event(
            at,
            to.to_string(),
            Payload::Deliver(Envelope {
                from: from.to_string(),
                to: to.to_string(),
                body: body.to_string(),
                sig,
            }),
        )?;
        Ok(at)
    }

    fn observe(&mut self, host: &str, event: &str, details: String) {
        self.observations.push(Observation {
            tick: self.now,
            host: host.to_string(),
            event: event.to_string(),
            details,
        });
    }

    fn notify(&mut self, from: &str, target: &str, unit: &str, reason: &str) {
        let body = format!("notify {unit} {reason}");
        if self.send(from, target, &body).is_err() {
            self.observe(from, "undeliverable", format!("to={target} unit={unit}"));
        }
    }

    // ---- main loop ----

    /// Processes every tick from the current clock through `end` inclusive
    /// and returns the observations made along the way.
    pub fn run_until(&mut self, end: u64) -> Result<&[Observation], SimError> {
        let start = self.observations.len();
        while self.now <= end {
            self.step()?;
        }
        Ok(&self.observations[start..])
    }

    /// Runs to the scenario's end tick.
    pub fn run(&mut self) -> Result<&[Observation], SimError> {
        let end = self.scenario.end_tick();
        self.run_until(end)
    }

    fn step(&mut self) -> Result<(), SimError> {
        let t = self.now;
        self.registry.advance_to(t);
        self.drain(t)?;
        self.tick_phase(t)?;
        self.drain(t)?;
        self.now = t + 1;
        Ok(())
    }

    fn drain(&mut self, t: u64) -> Result<(), SimError> {
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > t {
                break;
            }
            let event = entry.remove();
            self.processed += 1;
            match event.payload {
                Payload::Script(action) => self.execute(action)?,
                Payload::Deliver(env) => self.deliver(env),
            }
        }
        Ok(())
    }

    fn deliver(&mut self, env: Envelope) {
        let ok = self
            .registry
            .keys()
            .verify(&env.from, &envelope_bytes(&env.from, &env.to, &env.body), &env.sig)
            .unwrap_or(false);
        if !ok {
            self.observe(&env.to, "bad_signature", format!("from={}", env.from));
        } else if env.body.starts_with("notify ") {
            self.observe(&env.to, "notice", format!("from={} {}", env.from, &env.body[7..]));
        } else {
            self.observe(&env.to, "message", format!("from={} text={}", env.from, env.body));
        }
    }

    fn tick_phase(&mut self, t: u64) -> Result<(), SimError> {
        let period = self.scenario.sim.period_ticks();
        let boundary = t > 0 && t.is_multiple_of(period);
        if boundary {
            self.apply_supply(t / period, t)?;
        }
        self.attest_all(t);
        let ids: Vec<UnitId> = self
            .units
            .iter()
            .filter(|(_, u)| u.state == UnitState::Active)
            .map(|(id, _)| id.clone())
            .collect();
        for id in ids {
            self.tick_unit(&id, t);
        }
        if boundary {
            self.pay_interest(t);
        }
        self.board_seen = self.board.clone();
        Ok(())
    }

    fn attest_all(&mut self, t: u64) {
        let authority = self.hosts[&self.authority].keys.clone();
        let targets: Vec<(String, String)> = self
            .hosts
            .values()
            .filter(|h| !h.withholding)
            .map(|h| (h.id.clone(), h.location.clone()))
            .collect();
        for (host, location) in targets {
            if let Ok(att) = self
                .registry
                .keys()
                .attest_location(&authority, &host, &location, t)
            {
                self.attestations.insert(host, att);
            }
        }
    }

    /// The attested location, when an attestation at most one tick old
    /// verifies.
    fn attested_location(&self, host: &str, t: u64) -> Option<String> {
        let att = self.attestations.get(host)?;
        let fresh = att.at + 1 >= t;
        let valid = self.registry.keys().verify_attestation(att).unwrap_or(false);
        (fresh && valid && att.host == host).then(|| att.location.clone())
    }

    fn context(&self, unit: &MoneyUnit, t: u64, location: String) -> EvalContext {
        let licence = self.hosts.get(&unit.owner).and_then(|h| h.licence.clone());
        EvalContext::new(unit.value, t)
            .location(location)
            .home(unit.home.clone())
            .expiry(unit.expiry)
            .last_contact(unit.last_contact)
            .licence(licence)
    }

    /// Integrity check on touch. A tampered unit is zeroised on the spot.
    fn touch(&mut self, id: &str) -> bool {
        let Some(unit) = self.units.get(id) else {
            return false;
        };
        if unit.state != UnitState::Active {
            return false;
        }
        match money::verify_integrity(unit, self.registry.keys()) {
            Ok(()) => true,
            Err(e) => {
                let owner = unit.owner.clone();
                self.observe(&owner, "tamper_detected", format!("unit={id} error={}", e.label()));
                self.zeroise_unit(id, "tamper", true);
                false
            }
        }
    }

    fn tick_unit(&mut self, id: &str, t: u64) {
        let Some(unit) = self.units.get(id) else { return };
        let policy = &unit.policy;
        let wants_tick = policy.handles(EventKind::Tick);
        let wants_location = policy.handles(EventKind::AttestFail)
            || policy.rules().iter().any(|r| r.references(Field::Location));
        if !wants_tick && !wants_location {
            return;
        }
        if !self.touch(id) {
            return;
        }
        let unit = self.units[id].clone();
        let owner = unit.owner.clone();
        let location = if wants_location {
            match self.attested_location(&owner, t) {
                Some(loc) => loc,
                None => {
                    self.observe(&owner, "attest_fail", format!("unit={id}"));
                    let ctx = self.context(&unit, t, String::new());
                    let d = evaluate(&unit.policy, EventKind::AttestFail, &ctx);
                    self.run_obligations(id, &d.obligations, t);
                    if self.units.get(id).is_none_or(|u| u.state != UnitState::Active) {
                        return;
                    }
                    String::new()
                }
            }
        } else {
            self.hosts[&owner].location.clone()
        };
        if wants_tick {
            let ctx = self.context(&unit, t, location);
            let d = evaluate(&unit.policy, EventKind::Tick, &ctx);
            if d.is_permit() {
                self.run_obligations(id, &d.obligations, t);
            }
        }
    }

    fn run_obligations(&mut self, id: &str, obligations: &[Obligation], t: u64) {
        let owner = match self.units.get(id) {
            Some(u) => u.owner.clone(),
            None => return,
        };
        let mut alive = true;
        let mut why = "policy".to_string();
        for o in obligations {
            match o {
                Obligation::Zeroise { reason } if alive => {
                    self.zeroise_unit(id, reason, false);
                    alive = false;
                    why = reason.clone();
                }
                Obligation::Notify { target } => {
                    self.notify(&owner, target, id, &why);
                }
                Obligation::MoveToBestRate if alive => self.delegated_move(id, t),
                Obligation::Pay { payee, amount } => {
                    self.observe(&owner, "obligation_skipped", format!("unit={id} pay={amount} to={payee}"));
                }
                _ => {}
            }
        }
    }

    fn zeroise_unit(&mut self, id: &str, reason: &str, send_notices: bool) {
        let Some(unit) = self.units.get(id).cloned() else { return };
        let owner = unit.owner.clone();
        let key = self.hosts[&owner].keys.clone();
        match money::zeroise(&unit, reason, &key, &mut self.registry, self.now) {
            Ok(out) => {
                self.hosts.get_mut(&owner).expect("owner").wallet.remove(id);
                self.deposits.remove(id);
                self.units.insert(id.to_string(), out.unit);
                self.observe(
                    &owner,
                    "zeroised",
                    format!("unit={id} value={} reason={reason}", out.burned),
                );
                if send_notices {
                    for target in out.notices {
                        self.notify(&owner, &target, id, reason);
                    }
                }
            }
            Err(e) => self.observe(&owner, "zeroise_failed", format!("unit={id} error={}", e.label())),
        }
    }

    fn delegated_move(&mut self, id: &str, t: u64) {
        let unit = self.units[id].clone();
        // A bank's own reserves are not deposits and stay where they are.
        let at_bank = self.hosts[&unit.owner].role == Role::Bank;
        if at_bank && !self.deposits.contains(id) {
            return;
        }
        let RateChoice::Move(bank) = select_best_rate(&self.board_seen, Some(&unit.owner)) else {
            return;
        };
        let category = self.hosts[&bank].category.clone().unwrap_or_else(|| "deposit".into());
        let ctx = self
            .context(&unit, t, self.hosts[&unit.owner].location.clone())
            .category(category.clone())
            .counterparty(bank.clone());
        let from = unit.owner.clone();
        match self.transfer_unit(id, &from, &bank, ctx) {
            Ok(out) => {
                if let Some(r) = &out.received {
                    self.deposits.insert(r.id.clone());
                }
                self.observe(&from, "delegated", format!("unit={id} bank={bank}"));
            }
            Err(e) => self.transfer_failed(&from, id, &category, unit.value, e),
        }
    }

    /// Moves a unit between hosts and files the results into wallets.
    fn transfer_unit(
        &mut self,
        id: &str,
        from: &str,
        to: &str,
        ctx: EvalContext,
    ) -> Result<TransferOutcome, MoneyError> {
        let unit = self.units[id].clone();
        let from_key = self.hosts[from].keys.clone();
        let to_key = self
            .hosts
            .get(to)
            .map(|h| h.keys.clone())
            .ok_or_else(|| RegistryError::UnknownKey(to.to_string()))?;
        let out = money::transfer(&unit, &from_key, &to_key, &ctx, &mut self.registry)?;
        self.units.remove(id);
        self.deposits.remove(id);
        self.hosts.get_mut(from).expect("sender").wallet.remove(id);
        let file = |sim: &mut Self, u: MoneyUnit| {
            if u.state == UnitState::Active {
                if let Some(h) = sim.hosts.get_mut(&u.owner) {
                    h.wallet.insert(u.id.clone());
                }
            }
            sim.units.insert(u.id.clone(), u);
        };
        if let Some(u) = out.received.clone() {
            file(self, u);
        }
        for p in out.payments.clone() {
            let is_tax = self.hosts.get(&p.owner).is_some_and(|h| h.role == Role::TaxAuthority);
            if is_tax {
                self.tax_collected += p.value;
            }
            file(self, p);
        }
        if let Some(z) = out.zeroised.clone() {
            self.observe(
                to,
                "zeroised",
                format!("unit={} value={} reason={}", z.unit.id, z.burned, z.reason),
            );
            file(self, z.unit);
        }
        for target in out.notices.clone() {
            self.notify(to, &target, id, "receive");
        }
        Ok(out)
    }

    fn transfer_failed(&mut self, actor: &str, id: &str, category: &str, amount: u64, e: MoneyError) {
        match e {
            MoneyError::PolicyForbids { .. } | MoneyError::ObligationUnpayable => {
                self.forbidden += 1;
                self.observe(
                    actor,
                    "forbidden",
                    format!("unit={id} category={category} amount={amount} error={}", e.label()),
                );
            }
            MoneyError::TamperDetected(_) => {
                self.observe(actor, "tamper_detected", format!("unit={id} error={}", e.label()));
                self.zeroise_unit(id, "tamper", true);
            }
            other => self.observe(
                actor,
                "transfer_failed",
                format!("unit={id} category={category} error={}", other.label()),
            ),
        }
    }

    /// Assembles a single unit worth exactly `amount` from `host`'s wallet,
    /// merging and splitting compatible units as needed.
    /// Picks the first (policy, currency, home) group in the wallet that
    /// covers `amount`: its members, smallest-first prefix covering the
    /// amount, and a unit of exactly that value if there is one.
    fn plan_gather(&self, host: &str, amount: u64) -> Option<(Vec<UnitId>, Option<UnitId>)> {
        let mut groups: BTreeMap<(Digest64, &str, &str), Vec<&MoneyUnit>> = BTreeMap::new();
        let mut order = Vec::new();
        for id in &self.hosts.get(host)?.wallet {
            let Some(u) = self.units.get(id).filter(|u| u.state == UnitState::Active) else {
                continue;
            };
            let key = (u.policy_hash, u.currency.as_str(), u.home.as_str());
            if !groups.contains_key(&key) {
                order.push(key);
            }
            groups.entry(key).or_default().push(u);
        }
        let chosen = order
            .into_iter()
            .find(|k| groups[k].iter().map(|u| u.value).sum::<u64>() >= amount)?;
        let members = &groups[&chosen];
        if let Some(exact) = members.iter().find(|u| u.value == amount) {
            return Some((Vec::new(), Some(exact.id.clone())));
        }
        let mut total = 0;
        let mut used = Vec::new();
        for u in members {
            used.push(u.id.clone());
            total += u.value;
            if total >= amount {
                break;
            }
        }
        Some((used, None))
    }

    fn gather(&mut self, host: &str, amount: u64) -> Option<UnitId> {
        if amount == 0 {
            return None;
        }
        // Only the units that will be spent are integrity-checked. A unit
        // that fails is zeroised, which changes the wallet, so plan again.
        let members = loop {
            let (members, exact) = self.plan_gather(host, amount)?;
            let used: Vec<UnitId> = match &exact {
                Some(id) => vec![id.clone()],
                None => members.clone(),
            };
            if used.iter().all(|id| self.touch(id)) {
                if exact.is_some() {
                    return exact;
                }
                break members;
            }
        };
        let key = self.hosts[host].keys.clone();
        let now = self.now;
        let mut iter = members.into_iter();
        let mut acc = iter.next()?;
        while self.units[&acc].value < amount {
            let next = iter.next()?;
            let merged = money::merge(&self.units[&acc], &self.units[&next], &key, &mut self.registry, now);
            match merged {
                Ok(m) => {
                    self.retire(host, &acc);
                    self.retire(host, &next);
                    acc = self.adopt(host, m);
                }
                Err(e) => {
                    self.observe(host, "merge_failed", format!("error={}", e.label()));
                    return None;
                }
            }
        }
        if self.units[&acc].value == amount {
            return Some(acc);
        }
        match money::split(&self.units[&acc], amount, &key, &mut self.registry, now) {
            Ok((part, rest)) => {
                self.retire(host, &acc);
                let part = self.adopt(host, part);
                self.adopt(host, rest);
                Some(part)
            }
            Err(e) => {
                self.observe(host, "split_failed", format!("error={}", e.label()));
                None
            }
        }
    }

    fn retire(&mut self, host: &str, id: &str) {
        self.units.remove(id);
        if let Some(h) = self.hosts.get_mut(host) {
            h.wallet.remove(id);
        }
        self.deposits.remove(id);
    }

    fn adopt(&mut self, host: &str, unit: MoneyUnit) -> UnitId {
        let id = unit.id.clone();
        if let Some(h) = self.hosts.get_mut(host) {
            h.wallet.insert(id.clone());
        }
        self.units.insert(id.clone(), unit);
        id
    }

    #[allow(clippy::too_many_arguments)]
    fn mint_to(
        &mut self,
        issuer: &str,
        owner: &str,
        value: u64,
        policy: crate::policy::CheckedPolicy,
        expiry: Option<u64>,
        home: Option<String>,
        at: u64,
    ) -> Result<UnitId, MoneyError> {
        let key = self.hosts[issuer].keys.clone();
        let home = home.unwrap_or_else(|| self.hosts[owner].location.clone());
        let spec = MintSpec::new(value, &self.scenario.sim.currency, owner, at)
            .home(&home)
            .expiry(expiry);
        let unit = money::mint(&mut self.registry, &key, policy, spec)?;
        let id = self.adopt(owner, unit);
        let mut details = format!("unit={id} owner={owner} value={value}");
        if let Some(e) = expiry {
            details.push_str(&format!(" expiry={e}"));
        }
        self.observe(issuer, "mint", details);
        Ok(id)
    }

    fn treasury(&self, host: &str, policy_hash: &str) -> Vec<UnitId> {
        self.hosts[host]
            .wallet
            .iter()
            .filter(|id| !self.deposits.contains(*id))
            .filter(|id| self.units[*id].policy_hash.to_string() == policy_hash)
            .cloned()
            .collect()
    }

    fn apply_supply(&mut self, period: u64, t: u64) -> Result<(), SimError> {
        let Some(plan) = self.scenario.supply.clone() else {
            return Ok(());
        };
        if period > plan.periods {
            return Ok(());
        }
        let pt = self.scenario.sim.period_ticks();
        let stats = self.registry.supply_stats(t - pt, t - 1)?;
        let policy = self.scenario.policies[&plan.policy].clone();
        let hash = policy.content_hash().to_string();
        let treasury_ids = self.treasury(&plan.issuer, &hash);
        let treasury: u64 = treasury_ids.iter().map(|id| self.units[id].value).sum();
        let d = issuance(
            &plan.rule,
            period - 1,
            SupplyInputs {
                supply: self.registry.state().live_supply(),
                tx_volume: stats.tx_volume,
                treasury,
                periods_per_year: self.scenario.sim.periods_per_year,
            },
        );
        if d.mint > 0 {
            let left = self.registry.state().issuers.get(&plan.issuer).copied().unwrap_or(0);
            if d.mint > left {
                return Err(SimError::AllowanceExceeded {
                    wanted: d.mint,
                    left,
                });
            }
            let id = self.mint_to(&plan.issuer, &plan.issuer, d.mint, policy, None, None, t)?;
            if let Some(base) = treasury_ids.first() {
                let key = self.hosts[&plan.issuer].keys.clone();
                let merged = money::merge(&self.units[base], &self.units[&id], &key, &mut self.registry, t)?;
                let base = base.clone();
                self.retire(&plan.issuer, &base);
                self.retire(&plan.issuer, &id);
                self.adopt(&plan.issuer, merged);
            }
        }
        if d.burn > 0 {
            match self.gather(&plan.issuer, d.burn) {
                Some(id) => self.zeroise_unit(&id, "supply_burn", false),
                None => self.observe(&plan.issuer, "burn_failed", format!("amount={}", d.burn)),
            }
        }
        let point = TrajectoryPoint {
            period,
            supply: self.registry.state().live_supply(),
            mint: d.mint,
            burn: d.burn,
            tx_volume: stats.tx_volume,
        };
        self.observe(
            &plan.issuer,
            "supply",
            format!(
                "period={} supply={} mint={} burn={} tx_volume={} clamped={}",
                point.period, point.supply, point.mint, point.burn, point.tx_volume, d.clamped
            ),
        );
        self.trajectory.push(point);
        Ok(())
    }

    /// Credits or debits each deposit at its bank's posted rate for one
    /// period. Interest comes out of the bank's own compatible funds.
    fn pay_interest(&mut self, t: u64) {
        let ppy = i128::from(self.scenario.sim.periods_per_year);
        let deposits: Vec<UnitId> = self.deposits.iter().cloned().collect();
        for id in deposits {
            let Some(unit) = self.units.get(&id).cloned() else { continue };
            let Some(rate) = self.board_seen.get(&unit.owner).copied() else { continue };
            let amount = i128::from(unit.value) * i128::from(rate.num()).abs()
                / (i128::from(rate.den()) * ppy);
            let amount = u64::try_from(amount).unwrap_or(0);
            if amount == 0 {
                continue;
            }
            let bank = unit.owner.clone();
            let key = self.hosts[&bank].keys.clone();
            if rate.is_negative() {
                if amount >= unit.value {
                    self.deposits.remove(&id);
                } else if let Ok((fee, rest)) = money::split(&unit, amount, &key, &mut self.registry, t) {
                    self.retire(&bank, &id);
                    self.adopt(&bank, fee);
                    let rest = self.adopt(&bank, rest);
                    self.deposits.insert(rest);
                }
                self.observe(&bank, "interest", format!("unit={id} amount=-{amount}"));
                continue;
            }
            let hash = unit.policy_hash.to_string();
            let funds: Vec<UnitId> = self
                .treasury(&bank, &hash)
                .into_iter()
                .filter(|f| self.units[f].home == unit.home && self.units[f].currency == unit.currency)
                .collect();
            let available: u64 = funds.iter().map(|f| self.units[f].value).sum();
            if available < amount {
                self.observe(&bank, "interest_unpaid", format!("unit={id} amount={amount}"));
                continue;
            }
            // Hide deposits from gather while assembling the payment.
            let paid = {
                let held: Vec<UnitId> = self.hosts[&bank]
                    .wallet
                    .iter()
                    .filter(|w| !funds.contains(w))
                    .cloned()
                    .collect();
                for w in &held {
                    self.hosts.get_mut(&bank).expect("bank").wallet.remove(w);
                }
                let got = self.gather(&bank, amount);
                for w in held {
                    self.hosts.get_mut(&bank).expect("bank").wallet.insert(w);
                }
                got
            };
            let Some(payment) = paid else {
                self.observe(&bank, "interest_unpaid", format!("unit={id} amount={amount}"));
                continue;
            };
            match money::merge(&self.units[&id], &self.units[&payment], &key, &mut self.registry, t) {
                Ok(m) => {
                    self.retire(&bank, &id);
                    self.retire(&bank, &payment);
                    let new_id = self.adopt(&bank, m);
                    self.deposits.insert(new_id);
                    self.observe(&bank, "interest", format!("unit={id} amount={amount}"));
                }
                Err(e) => self.observe(&bank, "interest_unpaid", format!("unit={id} error={}", e.label())),
            }
        }
    }

    // ---- script actions ----

    fn execute(&mut self, action: Action) -> Result<(), SimError> {
        let t = self.now;
        match action {
            Action::Mint {
                issuer,
                owner,
                value,
                policy,
                expiry,
                home,
            } => {
                let policy = self.scenario.policies[&policy].clone();
                if let Err(e) = self.mint_to(&issuer, &owner, value, policy, expiry, home, t) {
                    self.observe(&issuer, "mint_failed", format!("owner={owner} value={value} error={}", e.label()));
                }
            }
            Action::Buy {
                buyer,
                vendor,
                price,
                category,
            } => self.buy(&buyer, &vendor, price, &category)?,
            Action::Contact { host } => {
                let ids: Vec<UnitId> = self.hosts[&host].wallet.iter().cloned().collect();
                for id in &ids {
                    if let Some(u) = self.units.get_mut(id) {
                        u.last_contact = t;
                    }
                }
                self.observe(&host, "contact", format!("units={}", ids.len()));
            }
            Action::MoveHost { host, location } => {
                self.hosts.get_mut(&host).expect("validated").location = location.clone();
                self.observe(&host, "moved", format!("location={location}"));
            }
            Action::Withhold { host } => {
                self.hosts.get_mut(&host).expect("validated").withholding = true;
                self.observe(&host, "withhold", String::new());
            }
            Action::Restore { host } => {
                self.hosts.get_mut(&host).expect("validated").withholding = false;
                self.observe(&host, "restore", String::new());
            }
            Action::Send { from, to, text } => {
                let at = self.send(&from, &to, &text)?;
                self.observe(&from, "send", format!("to={to} deliver_at={at}"));
            }
            Action::Rate { bank, rate } => {
                self.board.insert(bank.clone(), rate);
                self.observe(&bank, "rate", format!("rate={rate}"));
            }
            Action::Order {
                owner,
                side,
                price,
                qty,
            } => self.order(&owner, side, price, qty),
            Action::Split { host, amount } => {
                let target = self.wallet(&host).iter().find(|u| u.value > amount).map(|u| u.id.clone());
                match target {
                    Some(id) if self.touch(&id) => {
                        let key = self.hosts[&host].keys.clone();
                        match money::split(&self.units[&id], amount, &key, &mut self.registry, t) {
                            Ok((a, b)) => {
                                self.retire(&host, &id);
                                let a = self.adopt(&host, a);
                                let b = self.adopt(&host, b);
                                self.observe(&host, "split", format!("unit={id} into={a},{b}"));
                            }
                            Err(e) => self.observe(&host, "split_failed", format!("error={}", e.label())),
                        }
                    }
                    _ => self.observe(&host, "split_failed", format!("amount={amount}")),
                }
            }
            Action::Merge { host } => {
                let units = self.wallet(&host);
                let pair = units.iter().enumerate().find_map(|(i, a)| {
                    units[i + 1..]
                        .iter()
                        .find(|b| {
                            a.policy_hash == b.policy_hash && a.currency == b.currency && a.home == b.home
                        })
                        .map(|b| (a.id.clone(), b.id.clone()))
                });
                match pair {
                    Some((a, b)) if self.touch(&a) && self.touch(&b) => {
                        let key = self.hosts[&host].keys.clone();
                        match money::merge(&self.units[&a], &self.units[&b], &key, &mut self.registry, t) {
                            Ok(m) => {
                                self.retire(&host, &a);
                                self.retire(&host, &b);
                                let m = self.adopt(&host, m);
                                self.observe(&host, "merge", format!("units={a},{b} into={m}"));
                            }
                            Err(e) => self.observe(&host, "merge_failed", format!("error={}", e.label())),
                        }
                    }
                    _ => self.observe(&host, "merge_failed", "error=no_pair".into()),
                }
            }
            Action::Zeroise { host, reason } => {
                let first = self.hosts[&host].wallet.iter().next().cloned();
                match first {
                    Some(id) if self.touch(&id) => self.zeroise_unit(&id, &reason, false),
                    _ => self.observe(&host, "zeroise_failed", "error=empty_wallet".into()),
                }
            }
            Action::Tamper { adversary, target } => self.tamper(&adversary, &target),
            Action::Replay { adversary, count } => self.replay(&adversary, count),
            Action::Forge { adversary, target } => self.forge(&adversary, &target),
            Action::Intercept { adversary } => self.intercept(&adversary),
        }
        Ok(())
    }

    fn buy(&mut self, buyer: &str, vendor: &str, price: u64, category: &str) -> Result<(), SimError> {
        if !self.scenario.law.is_empty() {
            self.query_law(category)?;
        }
        let Some(id) = self.gather(buyer, price) else {
            self.observe(buyer, "insufficient_funds", format!("vendor={vendor} price={price}"));
            return Ok(());
        };
        let unit = self.units[&id].clone();
        let ctx = self
            .context(&unit, self.now, self.hosts[buyer].location.clone())
            .category(category)
            .counterparty(vendor);
        match self.transfer_unit(&id, buyer, vendor, ctx) {
            Ok(out) => {
                let tax: u64 = out
                    .payments
                    .iter()
                    .filter(|p| self.hosts.get(&p.owner).is_some_and(|h| h.role == Role::TaxAuthority))
                    .map(|p| p.value)
                    .sum();
                self.sales.push(Sale {
                    at: self.now,
                    buyer: buyer.to_string(),
                    vendor: vendor.to_string(),
                    price,
                    category: category.to_string(),
                    tax,
                });
                self.observe(
                    buyer,
                    "sale",
                    format!("vendor={vendor} price={price} category={category} tax={tax}"),
                );
            }
            Err(e) => self.transfer_failed(buyer, &id, category, price, e),
        }
        Ok(())
    }

    fn order(&mut self, owner: &str, side: crate::markets::Side, price: u64, qty: u64) {
        self.order_seq += 1;
        let order = Order {
            side,
            price,
            qty,
            owner: owner.to_string(),
            seq: self.order_seq,
        };
        let trades = match self.book.submit(order, self.now) {
            Ok(t) => t,
            Err(e) => {
                self.observe(owner, "order_rejected", format!("error={}", e.to_string().replace(' ', "_")));
                return;
            }
        };
        self.observe(owner, "order", format!("side={side:?} price={price} qty={qty}"));
        for tr in trades {
            self.observe(
                &tr.buyer,
                "trade",
                format!("seller={} price={} qty={}", tr.seller, tr.price, tr.qty),
            );
            let cost = tr.price.saturating_mul(tr.qty);
            let Some(id) = self.gather(&tr.buyer, cost) else {
                self.observe(&tr.buyer, "settlement_failed", format!("seller={} cost={cost}", tr.seller));
                continue;
            };
            let unit = self.units[&id].clone();
            let ctx = self
                .context(&unit, self.now, self.hosts[&tr.buyer].location.clone())
                .category("trade")
                .counterparty(tr.seller.clone());
            if let Err(e) = self.transfer_unit(&id, &tr.buyer, &tr.seller, ctx) {
                self.transfer_failed(&tr.buyer, &id, "trade", cost, e);
            }
        }
    }

    fn tamper(&mut self, adversary: &str, target: &str) {
        let ids: Vec<UnitId> = self.hosts[target].wallet.iter().cloned().collect();
        if ids.is_empty() {
            self.observe(adversary, "tamper_noop", format!("target={target}"));
            return;
        }
        let id = ids[self.rng.random_range(0..ids.len())].clone();
        let len = self.units[&id].policy.source_canonical().len();
        let index = self.rng.random_range(0..len.max(1));
        let mask = self.rng.random_range(1..128u8);
        let unit = self.units.get_mut(&id).expect("wallet unit");
        if unit.policy.corrupt_canonical_byte(index, mask) {
            self.observe(adversary, "tamper", format!("target={target} unit={id}"));
        } else {
            self.observe(adversary, "tamper_noop", format!("target={target}"));
        }
    }

    fn replay(&mut self, adversary: &str, count: u64) {
        for _ in 0..count {
            let wire = self.registry.wire_log();
            if wire.is_empty() {
                self.observe(adversary, "replay_noop", String::new());
                return;
            }
            let pick = self.rng.random_range(0..wire.len());
            let req = wire[pick].clone();
            match self.registry.endorse(&req) {
                Ok(e) => self.observe(adversary, "replay_accepted", format!("request={pick} seq={}", e.seq)),
                Err(e) => self.observe(
                    adversary,
                    "replay_rejected",
                    format!("request={pick} error={}", e.label()),
                ),
            }
        }
    }

    fn forge(&mut self, adversary: &str, target: &str) {
        let Some(id) = self.hosts[target].wallet.iter().next().cloned() else {
            self.observe(adversary, "forge_noop", format!("target={target}"));
            return;
        };
        let unit = &self.units[&id];
        let nonce = unit.provenance.len() as u64;
        let req = EndorseRequest {
            kind: RecordKind::Transfer,
            inputs: vec![id.clone()],
            outputs: Vec::new(),
            from: target.to_string(),
            to: adversary.to_string(),
            at: self.now,
            reason: None,
        };
        let draft = StampDraft {
            unit: id.clone(),
            amount: unit.value,
            nonce,
            sender_sig: Signature::forge(target, &[], &[]),
        };
        let body = req.stamp_body(&draft);
        let secret = self.hosts[adversary].keys.secret.clone();
        let req = EndorseRequest {
            outputs: vec![StampDraft {
                sender_sig: Signature::forge(target, &secret, &body),
                ..draft
            }],
            ..req
        };
        match self.registry.endorse(&req) {
            Ok(_) => self.observe(adversary, "forge_accepted", format!("unit={id}")),
            Err(e) => self.observe(adversary, "forge_rejected", format!("unit={id} error={}", e.label())),
        }
    }

    fn intercept(&mut self, adversary: &str) {
        let victim = self
            .queue
            .values_mut()
            .find_map(|ev| match &mut ev.payload {
                Payload::Deliver(env) => Some(env),
                Payload::Script(_) => None,
            });
        match victim {
            Some(env) => {
                env.body.push('!');
                let to = env.to.clone();
                self.observe(adversary, "intercept", format!("to={to}"));
            }
            None => self.observe(adversary, "intercept_noop", String::new()),
        }
    }
}

fn envelope_bytes(from: &str, to: &str, body: &str) -> Vec<u8> {
    payload(["msg", from, to, body])
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[sim]
seed = 3
latency = 1 2

[hosts]
central_bank = CENTRAL_BANK HOME allowance=100000
alice = CONSUMER HOME
shop = VENDOR HOME
tax_authority = TAX_AUTHORITY HOME
government = GOVERNMENT HOME
mallory = ADVERSARY HOME

[law]
sale = legal
weapons = licence arms_permit

[policies]
taxed = @sales_tax(1/5) @legality
roaming = @jurisdiction(HOME)

[script]
0 MINT central_bank alice 1000 taxed
"#;

    fn sim(extra: &str) -> Simulation {
        let text = format!("{BASE}{extra}");
        Simulation::new(Scenario::parse(&text, None).unwrap()).unwrap()
    }

    #[test]
    fn sale_pays_tax_and_gathers_change() {
        let mut s = sim("1 BUY alice shop 300 sale\n");
        s.run_until(3).unwrap();
        assert_eq!(s.balance("alice"), 700);
        assert_eq!(s.balance("shop"), 240);
        assert_eq!(s.balance("tax_authority"), 60);
        assert_eq!(s.outcome().tax_collected, 60);
        let rep = s.report();
        assert_eq!(rep.get("tax_collected"), Some("60"));
        assert_eq!(rep.get("balance.shop"), Some("240"));
        assert!(s.registry().audit().is_ok());
    }

    #[test]
    fn unlicensed_weapons_are_forbidden() {
        let mut s = sim("1 BUY alice shop 100 weapons\n");
        s.run_until(2).unwrap();
        assert_eq!(s.outcome().forbidden, 1);
        assert_eq!(s.balance("alice"), 1000);
        assert!(s.observations().iter().any(|o| o.event == "forbidden"));
    }

    #[test]
    fn schedule_in_past_fails() {
        let mut s = sim("");
        s.run_until(5).unwrap();
        let err = s
            .schedule(
                s.now() - 1,
                Action::Contact {
                    host: "alice".into(),
                },
            )
            .unwrap_err();
        assert!(matches!(err, SimError::SchedulePast { .. }));
        assert!(matches!(s.send("alice", "nobody", "hi"), Err(SimError::UnknownHost(_))));
        assert!(matches!(s.query_law("cake"), Err(SimError::UnknownCategory(_))));
    }

    #[test]
    fn jurisdiction_zeroises_on_move() {
        let mut s = sim("0 MINT central_bank alice 500 roaming\n4 MOVE_HOST alice PANAMA\n");
        s.run_until(3).unwrap();
        assert_eq!(s.balance("alice"), 1500);
        s.run_until(4).unwrap();
        assert_eq!(s.balance("alice"), 1000);
        let z = s.observations().iter().find(|o| o.event == "zeroised").unwrap();
        assert_eq!(z.tick, 4);
        assert_eq!(z.field("reason"), Some("jurisdiction"));
        s.run_until(8).unwrap();
        assert!(s
            .observations()
            .iter()
            .any(|o| o.event == "notice" && o.host == "government"));
    }

    #[test]
    fn withheld_attestation_fails_after_a_tick() {
        let mut s = sim("0 MINT central_bank alice 500 roaming\n2 WITHHOLD alice\n");
        s.run_until(2).unwrap();
        assert_eq!(s.balance("alice"), 1500);
        s.run_until(3).unwrap();
        assert_eq!(s.balance("alice"), 1000);
        assert!(s.observations().iter().any(|o| o.event == "attest_fail" && o.tick == 3));
    }

    #[test]
    fn adversary_is_contained() {
        let mut s = sim(
            "1 BUY alice shop 100 sale\n2 REPLAY mallory 20\n3 FORGE mallory alice\n\
             4 SEND alice shop hello\n4 INTERCEPT mallory\n5 TAMPER mallory alice\n6 BUY alice shop 10 sale\n",
        );
        s.run_until(12).unwrap();
        let count = |e: &str| s.observations().iter().filter(|o| o.event == e).count();
        assert_eq!(count("replay_accepted"), 0);
        assert_eq!(count("replay_rejected"), 20);
        assert_eq!(count("forge_rejected"), 1);
        assert_eq!(count("bad_signature"), 1);
        assert_eq!(count("tamper"), 1);
        assert_eq!(count("tamper_detected"), 1);
        assert!(s.registry().audit().is_ok());
        assert_eq!(s.balance("mallory"), 0);
    }

    #[test]
    fn events_reconcile() {
        let mut s = sim("1 SEND alice shop hi\n9 CONTACT alice\n");
        s.run_until(4).unwrap();
        let (scheduled, processed) = s.event_counts();
        assert_eq!(scheduled, processed + s.pending() as u64);
        assert_eq!(s.pending(), 1);
    }

    #[test]
    fn same_seed_same_log() {
        let run = |seed| {
            let text = format!("{BASE}1 SEND alice shop a\n1 SEND shop alice b\n2 TAMPER mallory alice\n");
            let mut s = Simulation::with_seed(Scenario::parse(&text, None).unwrap(), seed).unwrap();
            s.run_until(10).unwrap();
            (
                s.observations().iter().map(|o| o.to_string()).collect::<Vec<_>>(),
                s.registry().export(),
            )
        };
        assert_eq!(run(5), run(5));
    }
}

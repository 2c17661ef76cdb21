//! Money units and their lifecycle.
//!
//! Every operation builds a signed request, has it endorsed by the
//! [`Registry`], and returns fresh unit values. Inputs are taken by
//! reference and never modified, so a failed operation leaves the caller's
//! units untouched; registry state only changes on the final, infallible
//! commit of each step.

use std::fmt::Write as _;

use thiserror::Error;

use crate::crypto::{payload, Digest64, KeyDirectory, KeyPair, Signature, SignatureScheme};
use crate::policy::{
    evaluate, CheckedPolicy, Decision, EvalContext, EventKind, ForbidCause, Obligation,
};
use crate::registry::{
    stamp_body, EndorseRequest, RecordKind, Registry, RegistryError, StampDraft, UnitId,
    REGISTRY_KEY_ID,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnitState {
    Active,
    Zeroised,
    Expired,
}

impl UnitState {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitState::Active => "ACTIVE",
            UnitState::Zeroised => "ZEROISED",
            UnitState::Expired => "EXPIRED",
        }
    }
}

/// One endorsed step in a unit's history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferStamp {
    pub kind: RecordKind,
    /// Id the lineage had when this stamp was issued.
    pub unit: UnitId,
    pub from: String,
    pub to: String,
    /// Value of the lineage after this step.
    pub amount: u64,
    pub at: u64,
    /// Position of this stamp in the provenance list.
    pub nonce: u64,
    pub endorsement: Signature,
    pub sender_sig: Signature,
}

impl TransferStamp {
    pub fn body(&self) -> Vec<u8> {
        stamp_body(
            &self.unit, self.kind, &self.from, &self.to, self.amount, self.at, self.nonce,
        )
    }

    fn line(&self) -> String {
        format!(
            "stamp={}|{}|{}|{}|{}|{}|{}|{}|{}",
            self.unit,
            self.kind,
            self.from,
            self.to,
            self.amount,
            self.at,
            self.nonce,
            self.endorsement,
            self.sender_sig
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoneyUnit {
    pub id: UnitId,
    pub value: u64,
    pub currency: String,
    pub owner: String,
    pub policy: CheckedPolicy,
    pub policy_hash: Digest64,
    pub mint_sig: Signature,
    pub provenance: Vec<TransferStamp>,
    pub state: UnitState,
    pub expiry: Option<u64>,
    pub home: String,
    pub last_contact: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoneyError {
    #[error("invalid amount: {0}")]
    InvalidAmount(String),
    #[error("unit {0} is not active")]
    NotActive(UnitId),
    #[error("policy failed integrity check")]
    InvalidPolicy,
    #[error("cannot merge units with different policies")]
    MixedPolicy,
    #[error("cannot merge units with different owners")]
    MixedOwner,
    #[error("cannot merge units with different currency or home")]
    MixedUnit,
    #[error("policy forbids {event} (rule {rule:?})")]
    PolicyForbids { event: EventKind, rule: Option<usize> },
    #[error("obligation cannot be paid from the received value")]
    ObligationUnpayable,
    #[error("tamper detected: {0}")]
    TamperDetected(String),
    #[error("unknown payee `{0}`")]
    UnknownPayee(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

impl MoneyError {
    pub fn label(&self) -> &'static str {
        match self {
            MoneyError::InvalidAmount(_) => "InvalidAmount",
            MoneyError::NotActive(_) => "NotActive",
            MoneyError::InvalidPolicy => "InvalidPolicy",
            MoneyError::MixedPolicy => "MixedPolicy",
            MoneyError::MixedOwner => "MixedOwner",
            MoneyError::MixedUnit => "MixedUnit",
            MoneyError::PolicyForbids { .. } => "PolicyForbids",
            MoneyError::ObligationUnpayable => "ObligationUnpayable",
            MoneyError::TamperDetected(_) => "TamperDetected",
            MoneyError::UnknownPayee(_) => "UnknownPayee",
            MoneyError::Registry(e) => e.label(),
        }
    }
}

fn mint_payload(id: &str, value: u64, currency: &str, policy_hash: Digest64) -> Vec<u8> {
    payload([id, &value.to_string(), currency, &policy_hash.to_string()])
}

#[derive(Debug, Clone)]
pub struct MintSpec {
    pub value: u64,
    pub currency: String,
    /// Recipient of the freshly minted unit; often the issuer itself.
    pub owner: String,
    pub home: String,
    pub expiry: Option<u64>,
    pub at: u64,
}

impl MintSpec {
    pub fn new(value: u64, currency: &str, owner: &str, at: u64) -> Self {
        Self {
            value,
            currency: currency.to_string(),
            owner: owner.to_string(),
            home: String::new(),
            expiry: None,
            at,
        }
    }

    pub fn home(mut self, home: &str) -> Self {
        self.home = home.to_string();
        self
    }

    pub fn expiry(mut self, expiry: Option<u64>) -> Self {
        self.expiry = expiry;
        self
    }
}

struct Draft<'a> {
    kind: RecordKind,
    signer: &'a KeyPair,
    to: &'a str,
    at: u64,
    inputs: Vec<UnitId>,
    outputs: Vec<(UnitId, u64, u64)>,
    reason: Option<String>,
}

impl Draft<'_> {
    fn submit(self, registry: &mut Registry) -> Result<Vec<TransferStamp>, MoneyError> {
        let mut req = EndorseRequest {
            kind: self.kind,
            inputs: self.inputs,
            outputs: Vec::with_capacity(self.outputs.len()),
            from: self.signer.key_id.clone(),
            to: self.to.to_string(),
            at: self.at,
            reason: self.reason,
        };
        for (unit, amount, nonce) in self.outputs {
            let body = stamp_body(&unit, self.kind, &req.from, &req.to, amount, self.at, nonce);
            let sender_sig = registry
                .keys()
                .sign(self.signer, &body)
                .map_err(RegistryError::from)?;
            req.outputs.push(StampDraft {
                unit,
                amount,
                nonce,
                sender_sig,
            });
        }
        let endorsement = registry.endorse(&req)?;
        Ok(req
            .outputs
            .iter()
            .zip(endorsement.stamp_sigs)
            .map(|(o, endorsement)| TransferStamp {
                kind: req.kind,
                unit: o.unit.clone(),
                from: req.from.clone(),
                to: req.to.clone(),
                amount: o.amount,
                at: req.at,
                nonce: o.nonce,
                endorsement,
                sender_sig: o.sender_sig.clone(),
            })
            .collect())
    }
}

fn ensure_active(unit: &MoneyUnit) -> Result<(), MoneyError> {
    if unit.state == UnitState::Active {
        Ok(())
    } else {
        Err(MoneyError::NotActive(unit.id.clone()))
    }
}

/// Issues a new unit. The issuer signs `id|value|currency|policy_hash`.
pub fn mint(
    registry: &mut Registry,
    bank: &KeyPair,
    policy: CheckedPolicy,
    spec: MintSpec,
) -> Result<MoneyUnit, MoneyError> {
    if spec.value == 0 {
        return Err(MoneyError::InvalidAmount("mint value must be positive".into()));
    }
    if !policy.is_intact() {
        return Err(MoneyError::InvalidPolicy);
    }
    let policy_hash = policy.content_hash();
    let id = registry.fresh_id();
    let mint_sig = registry
        .keys()
        .sign(bank, &mint_payload(&id, spec.value, &spec.currency, policy_hash))
        .map_err(RegistryError::from)?;
    let stamps = Draft {
        kind: RecordKind::Mint,
        signer: bank,
        to: &spec.owner,
        at: spec.at,
        inputs: Vec::new(),
        outputs: vec![(id.clone(), spec.value, 0)],
        reason: None,
    }
    .submit(registry)?;
    Ok(MoneyUnit {
        id,
        value: spec.value,
        currency: spec.currency,
        owner: spec.owner,
        policy,
        policy_hash,
        mint_sig,
        provenance: stamps,
        state: UnitState::Active,
        expiry: spec.expiry,
        home: spec.home,
        last_contact: spec.at,
    })
}

/// Divides a unit into `(amount, value - amount)`. Whole-unit movement is a
/// transfer, so `amount` must be strictly between zero and the value.
pub fn split(
    unit: &MoneyUnit,
    amount: u64,
    owner: &KeyPair,
    registry: &mut Registry,
    at: u64,
) -> Result<(MoneyUnit, MoneyUnit), MoneyError> {
    ensure_active(unit)?;
    if amount == 0 || amount >= unit.value {
        return Err(MoneyError::InvalidAmount(format!(
            "split of {amount} from {} must be strictly inside the value",
            unit.value
        )));
    }
    let nonce = unit.provenance.len() as u64;
    let (a, b) = (registry.fresh_id(), registry.fresh_id());
    let stamps = Draft {
        kind: RecordKind::Split,
        signer: owner,
        to: &owner.key_id,
        at,
        inputs: vec![unit.id.clone()],
        outputs: vec![
            (a.clone(), amount, nonce),
            (b.clone(), unit.value - amount, nonce),
        ],
        reason: None,
    }
    .submit(registry)?;
    let child = |id: UnitId, value: u64, stamp: TransferStamp| {
        let mut c = unit.clone();
        c.id = id;
        c.value = value;
        c.provenance.push(stamp);
        c
    };
    let mut stamps = stamps.into_iter();
    let first = child(a, amount, stamps.next().expect("two stamps"));
    let second = child(b, unit.value - amount, stamps.next().expect("two stamps"));
    Ok((first, second))
}

/// Joins two units with the same owner, policy, currency and home. The
/// result keeps the first unit's provenance and the earlier expiry.
pub fn merge(
    a: &MoneyUnit,
    b: &MoneyUnit,
    owner: &KeyPair,
    registry: &mut Registry,
    at: u64,
) -> Result<MoneyUnit, MoneyError> {
    ensure_active(a)?;
    ensure_active(b)?;
    if a.policy_hash != b.policy_hash {
        return Err(MoneyError::MixedPolicy);
    }
    if a.owner != b.owner {
        return Err(MoneyError::MixedOwner);
    }
    if a.currency != b.currency || a.home != b.home {
        return Err(MoneyError::MixedUnit);
    }
    let total = a
        .value
        .checked_add(b.value)
        .ok_or_else(|| MoneyError::InvalidAmount("merge overflows".into()))?;
    let id = registry.fresh_id();
    let stamps = Draft {
        kind: RecordKind::Merge,
        signer: owner,
        to: &owner.key_id,
        at,
        inputs: vec![a.id.clone(), b.id.clone()],
        outputs: vec![(id.clone(), total, a.provenance.len() as u64)],
        reason: None,
    }
    .submit(registry)?;
    let mut merged = a.clone();
    merged.id = id;
    merged.value = total;
    merged.provenance.extend(stamps);
    merged.expiry = match (a.expiry, b.expiry) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    };
    merged.last_contact = a.last_contact.min(b.last_contact);
    Ok(merged)
}

fn move_whole(
    unit: &MoneyUnit,
    signer: &KeyPair,
    to: &str,
    registry: &mut Registry,
    at: u64,
) -> Result<MoneyUnit, MoneyError> {
    let stamps = Draft {
        kind: RecordKind::Transfer,
        signer,
        to,
        at,
        inputs: vec![unit.id.clone()],
        outputs: vec![(unit.id.clone(), unit.value, unit.provenance.len() as u64)],
        reason: None,
    }
    .submit(registry)?;
    let mut moved = unit.clone();
    moved.owner = to.to_string();
    moved.provenance.extend(stamps);
    Ok(moved)
}

/// Result of a transfer once the receiving side's obligations have run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferOutcome {
    /// What the receiver keeps. `None` when obligations consumed it all or
    /// it was zeroised on receipt.
    pub received: Option<MoneyUnit>,
    pub payments: Vec<MoneyUnit>,
    pub notices: Vec<String>,
    pub zeroised: Option<ZeroiseOutcome>,
    pub receive_decision: Decision,
}

impl TransferOutcome {
    pub fn paid_to(&self, payee: &str) -> u64 {
        self.payments
            .iter()
            .filter(|u| u.owner == payee)
            .map(|u| u.value)
            .sum()
    }
}

fn forbids(event: EventKind, decision: &Decision) -> MoneyError {
    match decision.cause {
        Some(ForbidCause::Unpayable { .. }) => MoneyError::ObligationUnpayable,
        Some(ForbidCause::Prohibition { rule }) | Some(ForbidCause::ForbidAction { rule }) => {
            MoneyError::PolicyForbids {
                event,
                rule: Some(rule),
            }
        }
        None => MoneyError::PolicyForbids { event, rule: None },
    }
}

/// Moves a whole unit from its owner to `to`.
///
/// The unit's policy vetoes or permits the TRANSFER_REQUEST; the RECEIVE
/// decision is computed up front (counterparty = previous owner) so that an
/// unpayable obligation aborts before anything is endorsed. PAY obligations
/// are then carved out of the received value and sent to each payee.
pub fn transfer(
    unit: &MoneyUnit,
    from: &KeyPair,
    to: &KeyPair,
    ctx: &EvalContext,
    registry: &mut Registry,
) -> Result<TransferOutcome, MoneyError> {
    ensure_active(unit)?;
    verify_integrity(unit, registry.keys())?;
    if ctx.amount != unit.value {
        return Err(MoneyError::InvalidAmount(format!(
            "context amount {} does not match unit value {}",
            ctx.amount, unit.value
        )));
    }

    let request = evaluate(&unit.policy, EventKind::TransferRequest, ctx);
    if !request.is_permit() {
        return Err(forbids(EventKind::TransferRequest, &request));
    }
    let receive_ctx = ctx.clone().counterparty(unit.owner.clone());
    let receive = evaluate(&unit.policy, EventKind::Receive, &receive_ctx);
    if !receive.is_permit() {
        return Err(forbids(EventKind::Receive, &receive));
    }
    for o in &receive.obligations {
        if let Obligation::Pay { payee, .. } = o {
            if !registry.keys().contains(payee) {
                return Err(MoneyError::UnknownPayee(payee.clone()));
            }
        }
    }
    if !registry.keys().contains(&to.key_id) {
        return Err(RegistryError::UnknownKey(to.key_id.clone()).into());
    }

    let at = ctx.now;
    let mut held = Some(move_whole(unit, from, &to.key_id, registry, at)?);
    let mut outcome = TransferOutcome {
        received: None,
        payments: Vec::new(),
        notices: Vec::new(),
        zeroised: None,
        receive_decision: receive.clone(),
    };

    for obligation in &receive.obligations {
        match obligation {
            Obligation::Pay { payee, amount } => {
                let Some(current) = held.take() else { break };
                if *amount == 0 {
                    held = Some(current);
                } else if *amount == current.value {
                    outcome
                        .payments
                        .push(move_whole(&current, to, payee, registry, at)?);
                } else {
                    let (part, rest) = split(&current, *amount, to, registry, at)?;
                    outcome
                        .payments
                        .push(move_whole(&part, to, payee, registry, at)?);
                    held = Some(rest);
                }
            }
            Obligation::Notify { target } => outcome.notices.push(target.clone()),
            Obligation::Zeroise { reason } => {
                if let Some(current) = held.take() {
                    outcome.zeroised = Some(zeroise(&current, reason, to, registry, at)?);
                }
            }
            Obligation::MoveToBestRate => {}
        }
    }
    outcome.received = held;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroiseOutcome {
    pub unit: MoneyUnit,
    pub burned: u64,
    pub reason: String,
    /// NOTIFY targets declared by the policy for this kind of failure.
    pub notices: Vec<String>,
}

/// Destroys a unit's value. The burn amount comes from the registry, not from
/// the unit, so a tampered `value` field cannot understate it.
pub fn zeroise(
    unit: &MoneyUnit,
    reason: &str,
    owner: &KeyPair,
    registry: &mut Registry,
    at: u64,
) -> Result<ZeroiseOutcome, MoneyError> {
    ensure_active(unit)?;
    let entry = registry
        .live(&unit.id)
        .cloned()
        .ok_or_else(|| RegistryError::DoubleSpend(format!("unit {} not live", unit.id)))?;
    let stamps = Draft {
        kind: RecordKind::Burn,
        signer: owner,
        to: &owner.key_id,
        at,
        inputs: vec![unit.id.clone()],
        outputs: vec![(unit.id.clone(), entry.value, entry.nonce)],
        reason: Some(reason.to_string()),
    }
    .submit(registry)?;

    let event = match reason {
        "tamper" => Some(EventKind::Tamper),
        "attest_fail" => Some(EventKind::AttestFail),
        _ => None,
    };
    let notices = event
        .map(|e| {
            let ctx = EvalContext::new(entry.value, at)
                .home(unit.home.clone())
                .expiry(unit.expiry)
                .last_contact(unit.last_contact);
            evaluate(&unit.policy, e, &ctx)
                .obligations
                .into_iter()
                .filter_map(|o| match o {
                    Obligation::Notify { target } => Some(target),
                    _ => None,
                })
                .collect()
        })
        .unwrap_or_default();

    let mut dead = unit.clone();
    dead.value = 0;
    dead.state = if reason == "expiry" {
        UnitState::Expired
    } else {
        UnitState::Zeroised
    };
    dead.provenance.extend(stamps);
    Ok(ZeroiseOutcome {
        unit: dead,
        burned: entry.value,
        reason: reason.to_string(),
        notices,
    })
}

/// Recomputes the policy hash and every signature on the unit.
pub fn verify_integrity(unit: &MoneyUnit, keys: &KeyDirectory) -> Result<(), MoneyError> {
    let fail = |m: &str| Err(MoneyError::TamperDetected(m.to_string()));

    if unit.state == UnitState::Active {
        if !unit.policy.is_intact() {
            return fail("policy text does not match its hash");
        }
        if unit.policy.content_hash() != unit.policy_hash {
            return fail("policy hash mismatch");
        }
    }
    if (unit.value == 0) != (unit.state != UnitState::Active) {
        return fail("value inconsistent with state");
    }
    let Some(mint) = unit.provenance.first() else {
        return fail("missing mint stamp");
    };
    if mint.kind != RecordKind::Mint {
        return fail("provenance does not start with a mint");
    }
    let mint_ok = keys
        .verify(
            &mint.from,
            &mint_payload(&mint.unit, mint.amount, &unit.currency, unit.policy_hash),
            &unit.mint_sig,
        )
        .unwrap_or(false);
    if !mint_ok {
        return fail("mint signature does not verify");
    }

    let mut prev_at = 0;
    for (i, stamp) in unit.provenance.iter().enumerate() {
        if stamp.nonce != i as u64 || stamp.at < prev_at {
            return fail("provenance out of order");
        }
        prev_at = stamp.at;
        let body = stamp.body();
        let sender_ok = keys.verify(&stamp.from, &body, &stamp.sender_sig).unwrap_or(false);
        let registry_ok = keys
            .verify(REGISTRY_KEY_ID, &body, &stamp.endorsement)
            .unwrap_or(false);
        if !sender_ok || !registry_ok {
            return fail("provenance stamp signature does not verify");
        }
    }

    match replay_provenance(unit) {
        Some((owner, value)) if owner == unit.owner && value == unit.value => Ok(()),
        _ => fail("provenance does not reproduce owner and value"),
    }
}

/// Replays stamps from the mint forward, returning the owner and value they
/// imply. `None` when the chain is inconsistent.
pub fn replay_provenance(unit: &MoneyUnit) -> Option<(String, u64)> {
    let mut iter = unit.provenance.iter();
    let first = iter.next()?;
    if first.kind != RecordKind::Mint {
        return None;
    }
    let (mut owner, mut value) = (first.to.clone(), first.amount);
    let mut id = first.unit.clone();
    for s in iter {
        if s.from != owner {
            return None;
        }
        match s.kind {
            RecordKind::Transfer if s.unit == id && s.amount == value => owner = s.to.clone(),
            RecordKind::Split if s.amount < value => {
                value = s.amount;
                id = s.unit.clone();
            }
            RecordKind::Merge if s.amount > value => {
                value = s.amount;
                id = s.unit.clone();
            }
            RecordKind::Burn if s.unit == id && s.amount == value => value = 0,
            _ => return None,
        }
    }
    if value > 0 && id != unit.id {
        return None;
    }
    Some((owner, value))
}

/// Line-oriented `field=value` record, followed by one `stamp=` line per
/// provenance entry.
pub fn serialize_unit(unit: &MoneyUnit) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "id={}", unit.id);
    let _ = writeln!(out, "value={}", unit.value);
    let _ = writeln!(out, "currency={}", unit.currency);
    let _ = writeln!(out, "owner={}", unit.owner);
    let _ = writeln!(out, "policy_hash={}", unit.policy_hash);
    let _ = writeln!(out, "state={}", unit.state.as_str());
    let _ = writeln!(
        out,
        "expiry={}",
        unit.expiry.map_or_else(|| "NONE".to_string(), |e| e.to_string())
    );
    let _ = writeln!(out, "home={}", unit.home);
    let _ = writeln!(out, "last_contact={}", unit.last_contact);
    for s in &unit.provenance {
        let _ = writeln!(out, "{}", s.line());
    }
    out
}

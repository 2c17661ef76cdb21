//! The central trusted authority.
//!
//! Every lifecycle operation on a unit (mint, transfer, split, merge, burn)
//! must be endorsed here. The registry keeps an append-only signed ledger,
//! the set of live and consumed unit ids, issuer allowances and supply
//! totals. A unit id that is consumed, unknown, or presented with a stale
//! nonce is a double spend.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::crypto::{payload, CryptoError, KeyDirectory, KeyPair, Signature, SignatureScheme};

pub type UnitId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecordKind {
    Mint,
    Transfer,
    Split,
    Merge,
    Burn,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Mint => "MINT",
            RecordKind::Transfer => "TRANSFER",
            RecordKind::Split => "SPLIT",
            RecordKind::Merge => "MERGE",
            RecordKind::Burn => "BURN",
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "MINT" => RecordKind::Mint,
            "TRANSFER" => RecordKind::Transfer,
            "SPLIT" => RecordKind::Split,
            "MERGE" => RecordKind::Merge,
            "BURN" => RecordKind::Burn,
            _ => return Err(format!("unknown record kind `{s}`")),
        })
    }
}

/// Bytes covered by both the sender signature and the registry endorsement
/// of one provenance stamp: `unit|KIND|from|to|amount|at|nonce`.
pub fn stamp_body(
    unit: &str,
    kind: RecordKind,
    from: &str,
    to: &str,
    amount: u64,
    at: u64,
    nonce: u64,
) -> Vec<u8> {
    payload([
        unit,
        kind.as_str(),
        from,
        to,
        &amount.to_string(),
        &at.to_string(),
        &nonce.to_string(),
    ])
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("double spend: {0}")]
    DoubleSpend(String),
    #[error("bad signature: {0}")]
    BadSignature(String),
    #[error("unauthorized issuer `{0}`")]
    UnauthorizedIssuer(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("bad window [{0}, {1}]")]
    BadWindow(u64, u64),
}

impl RegistryError {
    pub fn label(&self) -> &'static str {
        match self {
            RegistryError::DoubleSpend(_) => "DoubleSpend",
            RegistryError::BadSignature(_) => "BadSignature",
            RegistryError::UnauthorizedIssuer(_) => "UnauthorizedIssuer",
            RegistryError::UnknownKey(_) => "UnknownKey",
            RegistryError::InvalidRequest(_) => "InvalidRequest",
            RegistryError::BadWindow(..) => "BadWindow",
        }
    }
}

impl From<CryptoError> for RegistryError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::UnknownKey(k) => RegistryError::UnknownKey(k),
            other => RegistryError::InvalidRequest(other.to_string()),
        }
    }
}

/// One output of an operation: the stamp the sender wants endorsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StampDraft {
    pub unit: UnitId,
    pub amount: u64,
    pub nonce: u64,
    pub sender_sig: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndorseRequest {
    pub kind: RecordKind,
    pub inputs: Vec<UnitId>,
    pub outputs: Vec<StampDraft>,
    pub from: String,
    pub to: String,
    pub at: u64,
    pub reason: Option<String>,
}

impl EndorseRequest {
    pub fn stamp_body(&self, draft: &StampDraft) -> Vec<u8> {
        stamp_body(
            &draft.unit,
            self.kind,
            &self.from,
            &self.to,
            draft.amount,
            self.at,
            draft.nonce,
        )
    }
}

/// Registry approval: the ledger sequence number and one signature per
/// output stamp, in output order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endorsement {
    pub seq: u64,
    pub stamp_sigs: Vec<Signature>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerRecord {
    pub seq: u64,
    pub at: u64,
    pub kind: RecordKind,
    pub unit_ids: Vec<UnitId>,
    pub amounts: Vec<u64>,
    pub parties: Vec<String>,
    pub reason: Option<String>,
    pub sig: Signature,
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl LedgerRecord {
    /// `seq|tick|kind|ids|amounts|parties|reason`; the bytes the registry signs.
    pub fn body(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}|{}",
            self.seq,
            self.at,
            self.kind,
            self.unit_ids.join(","),
            join(&self.amounts),
            self.parties.join(","),
            self.reason.as_deref().unwrap_or("")
        )
    }

    /// Export line: the signed body followed by the registry signature.
    pub fn export_line(&self) -> String {
        format!("{}|{}", self.body(), self.sig)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("ledger line {line}: {message}")]
pub struct LedgerParseError {
    pub line: usize,
    pub message: String,
}

fn split_list(s: &str) -> Vec<String> {
    if s.is_empty() {
        Vec::new()
    } else {
        s.split(',').map(str::to_string).collect()
    }
}

impl FromStr for LedgerRecord {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 8 {
            return Err(format!("expected 8 fields, found {}", fields.len()));
        }
        let num = |s: &str, what: &str| s.parse::<u64>().map_err(|_| format!("bad {what} `{s}`"));
        let amounts = split_list(fields[4])
            .iter()
            .map(|a| num(a, "amount"))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LedgerRecord {
            seq: num(fields[0], "seq")?,
            at: num(fields[1], "tick")?,
            kind: fields[2].parse()?,
            unit_ids: split_list(fields[3]),
            amounts,
            parties: split_list(fields[5]),
            reason: (!fields[6].is_empty()).then(|| fields[6].to_string()),
            sig: fields[7].parse().map_err(|e: CryptoError| e.to_string())?,
        })
    }
}

pub fn parse_ledger(text: &str) -> Result<Vec<LedgerRecord>, LedgerParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.parse().map_err(|message| LedgerParseError {
                line: i + 1,
                message,
            })
        })
        .collect()
}

pub fn export_ledger(records: &[LedgerRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.export_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveEntry {
    pub owner: String,
    pub value: u64,
    /// Index the unit's next provenance stamp must carry.
    pub nonce: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegistryState {
    pub live: BTreeMap<UnitId, LiveEntry>,
    pub consumed: BTreeSet<UnitId>,
    /// Remaining mint allowance per issuer.
    pub issuers: BTreeMap<String, u64>,
    pub minted: u64,
    pub burned: u64,
}

impl RegistryState {
    pub fn live_supply(&self) -> u64 {
        self.live.values().map(|e| e.value).sum()
    }

    pub fn balances(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for e in self.live.values() {
            *out.entry(e.owner.clone()).or_insert(0) += e.value;
        }
        out
    }

    pub fn conserved(&self) -> bool {
        self.minted.checked_sub(self.burned) == Some(self.live_supply())
            && self.live.keys().all(|id| !self.consumed.contains(id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SupplyStats {
    pub live_supply: u64,
    pub minted: u64,
    pub burned: u64,
    pub tx_count: u64,
    pub tx_volume: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub at: u64,
    pub kind: RecordKind,
    pub from: String,
    pub error: RegistryError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub seq: Option<u64>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.seq {
            Some(seq) => write!(f, "seq {seq}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

pub const REGISTRY_KEY_ID: &str = "registry";

/// The registry signing key. The authority's identity is fixed so that an
/// exported ledger can be audited without the scenario that produced it.
pub fn authority_key() -> KeyPair {
    KeyPair::new(REGISTRY_KEY_ID, b"progmoney-registry-authority".to_vec())
}

/// A key directory holding only the registry authority, enough to audit an
/// exported ledger.
pub fn audit_directory() -> KeyDirectory {
    let mut dir = KeyDirectory::new();
    dir.register(&authority_key()).expect("fresh directory");
    dir
}

#[derive(Debug, Clone)]
pub struct Registry {
    keys: KeyDirectory,
    authority: KeyPair,
    records: Vec<LedgerRecord>,
    state: RegistryState,
    allowances: BTreeMap<String, u64>,
    next_id: u64,
    now: u64,
    rejections: Vec<Rejection>,
    wire: Vec<EndorseRequest>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::new()
    }
}

impl Registry {
    pub fn new() -> Self {
        let authority = authority_key();
        let mut keys = KeyDirectory::new();
        keys.register(&authority).expect("fresh directory");
        Self {
            keys,
            authority,
            records: Vec::new(),
            state: RegistryState::default(),
            allowances: BTreeMap::new(),
            next_id: 0,
            now: 0,
            rejections: Vec::new(),
            wire: Vec::new(),
        }
    }

    pub fn register_key(&mut self, key: &KeyPair) -> Result<(), RegistryError> {
        self.keys.register(key).map_err(Into::into)
    }

    pub fn authorize_issuer(&mut self, key_id: &str, allowance: u64) -> Result<(), RegistryError> {
        if !self.keys.contains(key_id) {
            return Err(RegistryError::UnknownKey(key_id.to_string()));
        }
        *self.state.issuers.entry(key_id.to_string()).or_insert(0) += allowance;
        *self.allowances.entry(key_id.to_string()).or_insert(0) += allowance;
        Ok(())
    }

    pub fn keys(&self) -> &KeyDirectory {
        &self.keys
    }

    pub fn authority_id(&self) -> &str {
        &self.authority.key_id
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn state(&self) -> &RegistryState {
        &self.state
    }

    pub fn rejections(&self) -> &[Rejection] {
        &self.rejections
    }

    /// Every accepted request, as it crossed the wire. Anyone on the network
    /// can capture these, so replaying them must fail.
    pub fn wire_log(&self) -> &[EndorseRequest] {
        &self.wire
    }

    pub fn live(&self, id: &str) -> Option<&LiveEntry> {
        self.state.live.get(id)
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn advance_to(&mut self, tick: u64) {
        self.now = self.now.max(tick);
    }

    /// Reserves a fresh unit id.
    pub fn fresh_id(&mut self) -> UnitId {
        let id = format!("u{:06}", self.next_id);
        self.next_id += 1;
        id
    }

    pub fn export(&self) -> String {
        export_ledger(&self.records)
    }

    /// Endorses one request, logging any rejection.
    pub fn endorse(&mut self, req: &EndorseRequest) -> Result<Endorsement, RegistryError> {
        match self.validate(req) {
            Ok(()) => {
                self.wire.push(req.clone());
                Ok(self.commit(req))
            }
            Err(error) => {
                self.rejections.push(Rejection {
                    at: req.at,
                    kind: req.kind,
                    from: req.from.clone(),
                    error: error.clone(),
                });
                Err(error)
            }
        }
    }

    /// Processes requests in arrival order: tick, then sender id, then
    /// submission index. Results are returned in submission order.
    pub fn endorse_batch(
        &mut self,
        requests: &[EndorseRequest],
    ) -> Vec<Result<Endorsement, RegistryError>> {
        let mut order: Vec<usize> = (0..requests.len()).collect();
        order.sort_by(|&a, &b| {
            (requests[a].at, &requests[a].from, a).cmp(&(requests[b].at, &requests[b].from, b))
        });
        let mut results: Vec<Option<Result<Endorsement, RegistryError>>> =
            vec![None; requests.len()];
        for i in order {
            results[i] = Some(self.endorse(&requests[i]));
        }
        results.into_iter().map(|r| r.expect("every slot filled")).collect()
    }

    fn live_input(&self, id: &str) -> Result<&LiveEntry, RegistryError> {
        self.state.live.get(id).ok_or_else(|| {
            if self.state.consumed.contains(id) {
                RegistryError::DoubleSpend(format!("unit {id} already consumed"))
            } else {
                RegistryError::DoubleSpend(format!("unit {id} unknown"))
            }
        })
    }

    fn fresh_output(&self, id: &str) -> Result<(), RegistryError> {
        if self.state.live.contains_key(id) || self.state.consumed.contains(id) {
            Err(RegistryError::DoubleSpend(format!("unit {id} already exists")))
        } else {
            Ok(())
        }
    }

    fn check_nonce(entry: &LiveEntry, id: &str, nonce: u64) -> Result<(), RegistryError> {
        if nonce != entry.nonce {
            Err(RegistryError::DoubleSpend(format!(
                "stale nonce {nonce} for unit {id} (expected {})",
                entry.nonce
            )))
        } else {
            Ok(())
        }
    }

    fn check_owner(entry: &LiveEntry, id: &str, from: &str) -> Result<(), RegistryError> {
        if entry.owner != from {
            Err(RegistryError::BadSignature(format!(
                "`{from}` does not own unit {id}"
            )))
        } else {
            Ok(())
        }
    }

    fn validate(&self, req: &EndorseRequest) -> Result<(), RegistryError> {
        use RecordKind::*;
        let shape = |inputs: usize, outputs: usize| {
            if req.inputs.len() != inputs || req.outputs.len() != outputs {
                Err(RegistryError::InvalidRequest(format!(
                    "{} takes {inputs} inputs and {outputs} outputs",
                    req.kind
                )))
            } else {
                Ok(())
            }
        };
        if req.outputs.iter().any(|o| o.amount == 0) {
            return Err(RegistryError::InvalidRequest("zero amount".into()));
        }

        // Liveness and freshness first: replays must surface as double spends.
        match req.kind {
            Mint => {
                shape(0, 1)?;
                self.fresh_output(&req.outputs[0].unit)?;
                if req.outputs[0].nonce != 0 {
                    return Err(RegistryError::InvalidRequest("mint nonce must be 0".into()));
                }
            }
            Transfer | Burn => {
                shape(1, 1)?;
                let id = &req.inputs[0];
                let entry = self.live_input(id)?;
                let out = &req.outputs[0];
                Self::check_nonce(entry, id, out.nonce)?;
                if out.unit != *id || out.amount != entry.value {
                    return Err(RegistryError::InvalidRequest(format!(
                        "{} must carry unit {id} whole",
                        req.kind
                    )));
                }
                Self::check_owner(entry, id, &req.from)?;
                if req.kind == Burn && req.reason.is_none() {
                    return Err(RegistryError::InvalidRequest("burn needs a reason".into()));
                }
            }
            Split => {
                shape(1, 2)?;
                let id = &req.inputs[0];
                let entry = self.live_input(id)?;
                for out in &req.outputs {
                    self.fresh_output(&out.unit)?;
                    Self::check_nonce(entry, id, out.nonce)?;
                }
                if req.outputs[0].unit == req.outputs[1].unit {
                    return Err(RegistryError::InvalidRequest("split outputs collide".into()));
                }
                let sum = req.outputs[0].amount.checked_add(req.outputs[1].amount);
                if sum != Some(entry.value) {
                    return Err(RegistryError::InvalidRequest(format!(
                        "split amounts do not sum to {}",
                        entry.value
                    )));
                }
                Self::check_owner(entry, id, &req.from)?;
            }
            Merge => {
                shape(2, 1)?;
                let (a, b) = (&req.inputs[0], &req.inputs[1]);
                if a == b {
                    return Err(RegistryError::DoubleSpend(format!(
                        "unit {a} used twice in one merge"
                    )));
                }
                let ea = self.live_input(a)?;
                let eb = self.live_input(b)?;
                let out = &req.outputs[0];
                self.fresh_output(&out.unit)?;
                Self::check_nonce(ea, a, out.nonce)?;
                if ea.value.checked_add(eb.value) != Some(out.amount) {
                    return Err(RegistryError::InvalidRequest("merge amount mismatch".into()));
                }
                Self::check_owner(ea, a, &req.from)?;
                Self::check_owner(eb, b, &req.from)?;
            }
        }

        if req.kind != Mint && req.kind != Transfer && req.to != req.from {
            return Err(RegistryError::InvalidRequest(format!(
                "{} cannot change owner",
                req.kind
            )));
        }

        for out in &req.outputs {
            let ok = self
                .keys
                .verify(&req.from, &req.stamp_body(out), &out.sender_sig)?;
            if !ok {
                return Err(RegistryError::BadSignature(format!(
                    "sender signature on unit {} does not verify",
                    out.unit
                )));
            }
        }

        if !self.keys.contains(&req.to) {
            return Err(RegistryError::UnknownKey(req.to.clone()));
        }

        if req.kind == Mint {
            let amount = req.outputs[0].amount;
            match self.state.issuers.get(&req.from) {
                Some(&left) if left >= amount => {}
                _ => return Err(RegistryError::UnauthorizedIssuer(req.from.clone())),
            }
            if self.state.minted.checked_add(amount).is_none() {
                return Err(RegistryError::InvalidRequest("mint total overflows".into()));
            }
        }
        Ok(())
    }

    fn commit(&mut self, req: &EndorseRequest) -> Endorsement {
        let seq = self.records.len() as u64;
        let st = &mut self.state;
        let (unit_ids, amounts, parties) = match req.kind {
            RecordKind::Mint => {
                let out = &req.outputs[0];
                *st.issuers.get_mut(&req.from).expect("validated") -= out.amount;
                st.minted += out.amount;
                st.live.insert(
                    out.unit.clone(),
                    LiveEntry {
                        owner: req.to.clone(),
                        value: out.amount,
                        nonce: 1,
                    },
                );
                (
                    vec![out.unit.clone()],
                    vec![out.amount],
                    vec![req.from.clone(), req.to.clone()],
                )
            }
            RecordKind::Transfer => {
                let out = &req.outputs[0];
                let e = st.live.get_mut(&out.unit).expect("validated");
                e.owner = req.to.clone();
                e.nonce += 1;
                (
                    vec![out.unit.clone()],
                    vec![out.amount],
                    vec![req.from.clone(), req.to.clone()],
                )
            }
            RecordKind::Split => {
                let parent = &req.inputs[0];
                let e = st.live.remove(parent).expect("validated");
                st.consumed.insert(parent.clone());
                for out in &req.outputs {
                    st.live.insert(
                        out.unit.clone(),
                        LiveEntry {
                            owner: e.owner.clone(),
                            value: out.amount,
                            nonce: e.nonce + 1,
                        },
                    );
                }
                (
                    vec![
                        parent.clone(),
                        req.outputs[0].unit.clone(),
                        req.outputs[1].unit.clone(),
                    ],
                    vec![e.value, req.outputs[0].amount, req.outputs[1].amount],
                    vec![req.from.clone()],
                )
            }
            RecordKind::Merge => {
                let (a, b) = (&req.inputs[0], &req.inputs[1]);
                let ea = st.live.remove(a).expect("validated");
                let eb = st.live.remove(b).expect("validated");
                st.consumed.insert(a.clone());
                st.consumed.insert(b.clone());
                let out = &req.outputs[0];
                st.live.insert(
                    out.unit.clone(),
                    LiveEntry {
                        owner: ea.owner.clone(),
                        value: out.amount,
                        nonce: ea.nonce + 1,
                    },
                );
                (
                    vec![a.clone(), b.clone(), out.unit.clone()],
                    vec![ea.value, eb.value, out.amount],
                    vec![req.from.clone()],
                )
            }
            RecordKind::Burn => {
                let id = &req.inputs[0];
                let e = st.live.remove(id).expect("validated");
                st.consumed.insert(id.clone());
                st.burned += e.value;
                (vec![id.clone()], vec![e.value], vec![req.from.clone()])
            }
        };

        let mut record = LedgerRecord {
            seq,
            at: req.at,
            kind: req.kind,
            unit_ids,
            amounts,
            parties,
            reason: req.reason.clone(),
            sig: Signature {
                signer: String::new(),
                mac: Default::default(),
            },
        };
        record.sig = self
            .keys
            .sign(&self.authority, record.body().as_bytes())
            .expect("authority registered");
        self.records.push(record);
        self.now = self.now.max(req.at);

        let stamp_sigs = req
            .outputs
            .iter()
            .map(|o| {
                self.keys
                    .sign(&self.authority, &req.stamp_body(o))
                    .expect("authority registered")
            })
            .collect();
        Endorsement { seq, stamp_sigs }
    }

    /// Supply figures for the inclusive tick window `[from, to]`.
    /// `live_supply` is the supply standing at the end of the window.
    pub fn supply_stats(&self, from: u64, to: u64) -> Result<SupplyStats, RegistryError> {
        if from > to || to > self.now {
            return Err(RegistryError::BadWindow(from, to));
        }
        Ok(window_stats(&self.records, from, to))
    }

    /// Replays the ledger and compares the result with the live state.
    pub fn audit(&self) -> Result<(), Vec<Violation>> {
        let replayed = replay(&self.records, &self.keys, &self.allowances);
        let mut violations = match replayed {
            Ok(state) => {
                if state == self.state {
                    Vec::new()
                } else {
                    vec![Violation {
                        seq: None,
                        message: "replayed state differs from registry state".into(),
                    }]
                }
            }
            Err(v) => v,
        };
        if !self.state.conserved() {
            violations.push(Violation {
                seq: None,
                message: "conservation identity broken".into(),
            });
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }
}

pub fn window_stats(records: &[LedgerRecord], from: u64, to: u64) -> SupplyStats {
    let mut s = SupplyStats::default();
    let (mut minted_to, mut burned_to) = (0u64, 0u64);
    for r in records.iter().filter(|r| r.at <= to) {
        let total: u64 = match r.kind {
            RecordKind::Mint | RecordKind::Burn | RecordKind::Transfer => r.amounts[0],
            _ => 0,
        };
        match r.kind {
            RecordKind::Mint => minted_to += total,
            RecordKind::Burn => burned_to += total,
            _ => {}
        }
        if r.at < from {
            continue;
        }
        match r.kind {
            RecordKind::Mint => s.minted += total,
            RecordKind::Burn => s.burned += total,
            RecordKind::Transfer => {
                s.tx_count += 1;
                s.tx_volume += total;
            }
            _ => {}
        }
    }
    s.live_supply = minted_to - burned_to;
    s
}

/// Folds records from seq 0 into a registry state, checking density,
/// signatures and per-record consistency. `allowances` are the issuer grants
/// the ledger started from.
pub fn replay(
    records: &[LedgerRecord],
    keys: &KeyDirectory,
    allowances: &BTreeMap<String, u64>,
) -> Result<RegistryState, Vec<Violation>> {
    let mut st = RegistryState {
        issuers: allowances.clone(),
        ..RegistryState::default()
    };
    let mut violations = Vec::new();
    let mut live = 0u64;
    let mut flag = |seq: u64, message: String| {
        violations.push(Violation {
            seq: Some(seq),
            message,
        })
    };

    for (i, r) in records.iter().enumerate() {
        if r.seq != i as u64 {
            flag(r.seq, format!("seq gap: expected {i}"));
            break;
        }
        match keys.verify(REGISTRY_KEY_ID, r.body().as_bytes(), &r.sig) {
            Ok(true) => {}
            _ => {
                flag(r.seq, "registry signature mismatch".into());
                continue;
            }
        }
        let arity = match r.kind {
            RecordKind::Mint | RecordKind::Transfer => (1, 1, 2),
            RecordKind::Burn => (1, 1, 1),
            RecordKind::Split | RecordKind::Merge => (3, 3, 1),
        };
        if (r.unit_ids.len(), r.amounts.len(), r.parties.len()) != arity {
            flag(r.seq, "malformed record".into());
            continue;
        }
        let take = |st: &mut RegistryState, id: &str, owner: &str, value: u64| {
            match st.live.get(id) {
                Some(e) if e.owner == owner && e.value == value => {
                    let e = st.live.remove(id).expect("present");
                    st.consumed.insert(id.to_string());
                    Ok(e)
                }
                Some(_) => Err(format!("unit {id} owner or value mismatch")),
                None => Err(format!("unit {id} not live")),
            }
        };
        let outcome: Result<(), String> = (|| {
            match r.kind {
                RecordKind::Mint => {
                    let (id, v, issuer) = (&r.unit_ids[0], r.amounts[0], &r.parties[0]);
                    if st.live.contains_key(id) || st.consumed.contains(id) {
                        return Err(format!("unit {id} minted twice"));
                    }
                    if let Some(left) = st.issuers.get_mut(issuer) {
                        *left = left.checked_sub(v).ok_or("mint exceeds allowance")?;
                    } else if !allowances.is_empty() {
                        return Err(format!("`{issuer}` is not an issuer"));
                    }
                    st.minted += v;
                    st.live.insert(
                        id.clone(),
                        LiveEntry {
                            owner: r.parties[1].clone(),
                            value: v,
                            nonce: 1,
                        },
                    );
                }
                RecordKind::Transfer => {
                    let id = &r.unit_ids[0];
                    match st.live.get_mut(id) {
                        Some(e) if e.owner == r.parties[0] && e.value == r.amounts[0] => {
                            e.owner = r.parties[1].clone();
                            e.nonce += 1;
                        }
                        Some(_) => return Err(format!("unit {id} owner or value mismatch")),
                        None => return Err(format!("unit {id} not live")),
                    }
                }
                RecordKind::Split => {
                    let owner = &r.parties[0];
                    if r.amounts[1].checked_add(r.amounts[2]) != Some(r.amounts[0]) {
                        return Err("split does not conserve value".into());
                    }
                    let e = take(&mut st, &r.unit_ids[0], owner, r.amounts[0])?;
                    for k in 1..3 {
                        st.live.insert(
                            r.unit_ids[k].clone(),
                            LiveEntry {
                                owner: owner.clone(),
                                value: r.amounts[k],
                                nonce: e.nonce + 1,
                            },
                        );
                    }
                }
                RecordKind::Merge => {
                    let owner = &r.parties[0];
                    if r.amounts[0].checked_add(r.amounts[1]) != Some(r.amounts[2]) {
                        return Err("merge does not conserve value".into());
                    }
                    let ea = take(&mut st, &r.unit_ids[0], owner, r.amounts[0])?;
                    take(&mut st, &r.unit_ids[1], owner, r.amounts[1])?;
                    st.live.insert(
                        r.unit_ids[2].clone(),
                        LiveEntry {
                            owner: owner.clone(),
                            value: r.amounts[2],
                            nonce: ea.nonce + 1,
                        },
                    );
                }
                RecordKind::Burn => {
                    take(&mut st, &r.unit_ids[0], &r.parties[0], r.amounts[0])?;
                    st.burned += r.amounts[0];
                }
            }
            Ok(())
        })();
        match outcome {
            Err(message) => flag(r.seq, message),
            Ok(()) => {
                // Running total; the full recount happens once at the end.
                match r.kind {
                    RecordKind::Mint => live += r.amounts[0],
                    RecordKind::Burn => live -= r.amounts[0],
                    _ => {}
                }
                if st.minted.checked_sub(st.burned) != Some(live) {
                    flag(r.seq, "conservation identity broken".into());
                }
            }
        }
    }
    if violations.is_empty() && !st.conserved() {
        violations.push(Violation {
            seq: None,
            message: "conservation identity broken".into(),
        });
    }

    if violations.is_empty() {
        Ok(st)
    } else {
        Err(violations)
    }
}

/// Audits an exported ledger on its own: density, registry signatures and
/// conservation. Issuer allowances are not known here and are not checked.
pub fn audit_export(text: &str) -> Result<RegistryState, Vec<Violation>> {
    let records = parse_ledger(text).map_err(|e| {
        vec![Violation {
            seq: None,
            message: e.to_string(),
        }]
    })?;
    replay(&records, &audit_directory(), &BTreeMap::new())
}

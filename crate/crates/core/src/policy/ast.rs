use std::fmt::{self, Write as _};

use crate::crypto::{h64, Digest64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Obligation,
    Permission,
    Prohibition,
}

impl RuleKind {
    pub fn keyword(self) -> &'static str {
        match self {
            RuleKind::Obligation => "OBLIGATION",
            RuleKind::Permission => "PERMISSION",
            RuleKind::Prohibition => "PROHIBITION",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "OBLIGATION" => RuleKind::Obligation,
            "PERMISSION" => RuleKind::Permission,
            "PROHIBITION" => RuleKind::Prohibition,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    TransferRequest,
    Receive,
    Tick,
    AttestFail,
    Tamper,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::TransferRequest,
        EventKind::Receive,
        EventKind::Tick,
        EventKind::AttestFail,
        EventKind::Tamper,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            EventKind::TransferRequest => "TRANSFER_REQUEST",
            EventKind::Receive => "RECEIVE",
            EventKind::Tick => "TICK",
            EventKind::AttestFail => "ATTEST_FAIL",
            EventKind::Tamper => "TAMPER",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.keyword() == s)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Context fields a condition may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Amount,
    Category,
    Counterparty,
    Location,
    Now,
    Expiry,
    LastContact,
    Licence,
    Home,
}

impl Field {
    pub const ALL: [Field; 9] = [
        Field::Amount,
        Field::Category,
        Field::Counterparty,
        Field::Location,
        Field::Now,
        Field::Expiry,
        Field::LastContact,
        Field::Licence,
        Field::Home,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Amount => "amount",
            Field::Category => "category",
            Field::Counterparty => "counterparty",
            Field::Location => "location",
            Field::Now => "now",
            Field::Expiry => "expiry",
            Field::LastContact => "last_contact",
            Field::Licence => "licence",
            Field::Home => "home",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            Field::Amount | Field::Now | Field::Expiry | Field::LastContact
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        }
    }
}

/// Right-hand side of a comparison.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Int(u64),
    Str(String),
    None,
    /// Another context field, optionally shifted: `last_contact + 360`.
    Field { name: String, offset: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Comparison {
    pub field: String,
    pub op: CmpOp,
    pub rhs: Operand,
}

/// Disjunction of conjunctions; `AND` binds tighter than `OR`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Condition {
    pub any: Vec<Vec<Comparison>>,
}

impl Condition {
    pub fn comparisons(&self) -> impl Iterator<Item = &Comparison> {
        self.any.iter().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fraction {
    BasisPoints(u64),
    Ratio(u64, u64),
}

impl Fraction {
    /// `(numerator, denominator)`.
    pub fn parts(self) -> (u64, u64) {
        match self {
            Fraction::BasisPoints(bp) => (bp, 10_000),
            Fraction::Ratio(n, d) => (n, d),
        }
    }

    /// `floor(amount * num / den)`; zero denominator yields zero.
    pub fn apply(self, amount: u64) -> u64 {
        let (n, d) = self.parts();
        if d == 0 {
            return 0;
        }
        let v = u128::from(amount) * u128::from(n) / u128::from(d);
        u64::try_from(v).unwrap_or(u64::MAX)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fraction::BasisPoints(bp) => write!(f, "{bp}bp"),
            Fraction::Ratio(n, d) => write!(f, "{n}/{d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    Pay { fraction: Fraction, payee: String },
    Forbid,
    Zeroise,
    Notify(String),
    MoveToBestRate,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub kind: RuleKind,
    pub event: EventKind,
    pub condition: Option<Condition>,
    pub actions: Vec<Action>,
}

impl Rule {
    pub fn references(&self, field: Field) -> bool {
        self.condition.iter().flat_map(Condition::comparisons).any(|c| {
            c.field == field.name()
                || matches!(&c.rhs, Operand::Field { name, .. } if name == field.name())
        })
    }
}

/// A parsed policy. `content_hash` is always `h64(source_canonical)` unless
/// the canonical text has been corrupted after parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyProgram {
    rules: Vec<Rule>,
    source_canonical: String,
    content_hash: Digest64,
}

impl PolicyProgram {
    pub fn from_rules(rules: Vec<Rule>) -> Self {
        let source_canonical = print_rules(&rules);
        let content_hash = h64(source_canonical.as_bytes());
        Self {
            rules,
            source_canonical,
            content_hash,
        }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn source_canonical(&self) -> &str {
        &self.source_canonical
    }

    pub fn content_hash(&self) -> Digest64 {
        self.content_hash
    }

    /// Canonical text still matches the rules and the stored hash.
    pub fn is_intact(&self) -> bool {
        h64(self.source_canonical.as_bytes()) == self.content_hash
            && print_rules(&self.rules) == self.source_canonical
    }

    /// XORs one byte of the canonical text with `mask`. Adversary hook used
    /// to exercise tamper detection; the result stays valid UTF-8 because
    /// only ASCII bytes are touched and the mask is below 0x80.
    pub fn corrupt_canonical_byte(&mut self, index: usize, mask: u8) -> bool {
        let bytes = self.source_canonical.as_bytes();
        if index >= bytes.len() || !bytes[index].is_ascii() || mask == 0 || mask >= 0x80 {
            return false;
        }
        let mut owned = std::mem::take(&mut self.source_canonical).into_bytes();
        owned[index] ^= mask;
        self.source_canonical = String::from_utf8(owned).expect("ascii xor stays ascii");
        true
    }

    pub fn handles(&self, event: EventKind) -> bool {
        self.rules.iter().any(|r| r.event == event)
    }
}

pub(crate) fn quote(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn print_operand(rhs: &Operand, out: &mut String) {
    match rhs {
        Operand::Int(v) => {
            let _ = write!(out, "{v}");
        }
        Operand::Str(s) => quote(s, out),
        Operand::None => out.push_str("NONE"),
        Operand::Field { name, offset } => {
            out.push_str(name);
            if *offset > 0 {
                let _ = write!(out, " + {offset}");
            }
        }
    }
}

fn print_rule(rule: &Rule, out: &mut String) {
    out.push_str(rule.kind.keyword());
    out.push_str(" ON ");
    out.push_str(rule.event.keyword());
    if let Some(cond) = &rule.condition {
        out.push_str(" IF ");
        for (i, term) in cond.any.iter().enumerate() {
            if i > 0 {
                out.push_str(" OR ");
            }
            for (j, cmp) in term.iter().enumerate() {
                if j > 0 {
                    out.push_str(" AND ");
                }
                out.push_str(&cmp.field);
                out.push(' ');
                out.push_str(cmp.op.symbol());
                out.push(' ');
                print_operand(&cmp.rhs, out);
            }
        }
    }
    for (i, action) in rule.actions.iter().enumerate() {
        out.push_str(if i == 0 { " DO " } else { ", " });
        match action {
            Action::Pay { fraction, payee } => {
                let _ = write!(out, "PAY {fraction} TO ");
                quote(payee, out);
            }
            Action::Forbid => out.push_str("FORBID"),
            Action::Zeroise => out.push_str("ZEROISE"),
            Action::Notify(target) => {
                out.push_str("NOTIFY ");
                quote(target, out);
            }
            Action::MoveToBestRate => out.push_str("MOVE_TO_BEST_RATE"),
        }
    }
    out.push(';');
}

pub(crate) fn print_rules(rules: &[Rule]) -> String {
    let mut out = String::new();
    for (i, rule) in rules.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_rule(rule, &mut out);
    }
    out
}

use super::ast::{Action, CmpOp, Comparison, EventKind, Field, Operand, Rule, RuleKind};
use super::check::CheckedPolicy;

/// Everything a condition can observe. Optional fields compare as `NONE`
/// when absent.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvalContext {
    pub amount: u64,
    pub category: String,
    pub counterparty: String,
    pub location: String,
    pub now: u64,
    pub expiry: Option<u64>,
    pub last_contact: u64,
    pub licence: Option<String>,
    pub home: String,
}

impl EvalContext {
    pub fn new(amount: u64, now: u64) -> Self {
        Self {
            amount,
            now,
            ..Self::default()
        }
    }

    pub fn category(mut self, category: impl Into<String>) -> Self {
        self.category = category.into();
        self
    }

    pub fn counterparty(mut self, counterparty: impl Into<String>) -> Self {
        self.counterparty = counterparty.into();
        self
    }

    pub fn location(mut self, location: impl Into<String>) -> Self {
        self.location = location.into();
        self
    }

    pub fn home(mut self, home: impl Into<String>) -> Self {
        self.home = home.into();
        self
    }

    pub fn licence(mut self, licence: Option<String>) -> Self {
        self.licence = licence;
        self
    }

    pub fn expiry(mut self, expiry: Option<u64>) -> Self {
        self.expiry = expiry;
        self
    }

    pub fn last_contact(mut self, last_contact: u64) -> Self {
        self.last_contact = last_contact;
        self
    }

    fn value(&self, field: Field) -> Value<'_> {
        match field {
            Field::Amount => Value::Int(self.amount),
            Field::Category => Value::Str(&self.category),
            Field::Counterparty => Value::Str(&self.counterparty),
            Field::Location => Value::Str(&self.location),
            Field::Now => Value::Int(self.now),
            Field::Expiry => self.expiry.map_or(Value::None, Value::Int),
            Field::LastContact => Value::Int(self.last_contact),
            Field::Licence => self.licence.as_deref().map_or(Value::None, Value::Str),
            Field::Home => Value::Str(&self.home),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Value<'a> {
    Int(u64),
    Str(&'a str),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Permit,
    Forbid,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Obligation {
    Pay { payee: String, amount: u64 },
    Notify { target: String },
    Zeroise { reason: String },
    MoveToBestRate,
}

/// Why a decision came out FORBID. Indices are rule positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForbidCause {
    Prohibition { rule: usize },
    ForbidAction { rule: usize },
    /// Cumulative PAY obligations would exceed the amount.
    Unpayable { rule: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Decision {
    pub verdict: Verdict,
    pub obligations: Vec<Obligation>,
    pub cause: Option<ForbidCause>,
}

impl Decision {
    fn permit(obligations: Vec<Obligation>) -> Self {
        Self {
            verdict: Verdict::Permit,
            obligations,
            cause: None,
        }
    }

    fn forbid(cause: ForbidCause) -> Self {
        Self {
            verdict: Verdict::Forbid,
            obligations: Vec::new(),
            cause: Some(cause),
        }
    }

    pub fn is_permit(&self) -> bool {
        self.verdict == Verdict::Permit
    }

    pub fn pay_total(&self) -> u64 {
        self.obligations
            .iter()
            .map(|o| match o {
                Obligation::Pay { amount, .. } => *amount,
                _ => 0,
            })
            .sum()
    }
}

fn resolve<'a>(ctx: &'a EvalContext, rhs: &'a Operand) -> Value<'a> {
    match rhs {
        Operand::Int(v) => Value::Int(*v),
        Operand::Str(s) => Value::Str(s),
        Operand::None => Value::None,
        Operand::Field { name, offset } => {
            match Field::from_name(name).map(|f| ctx.value(f)) {
                Some(Value::Int(v)) => Value::Int(v.saturating_add(*offset)),
                Some(other) => other,
                None => Value::None,
            }
        }
    }
}

fn holds(cmp: &Comparison, ctx: &EvalContext) -> bool {
    let Some(field) = Field::from_name(&cmp.field) else {
        return false;
    };
    let lhs = ctx.value(field);
    let rhs = resolve(ctx, &cmp.rhs);
    match cmp.op {
        CmpOp::Eq => lhs == rhs,
        CmpOp::Ne => lhs != rhs,
        CmpOp::Lt => matches!((lhs, rhs), (Value::Int(a), Value::Int(b)) if a < b),
        CmpOp::Gt => matches!((lhs, rhs), (Value::Int(a), Value::Int(b)) if a > b),
    }
}

fn matches(rule: &Rule, event: EventKind, ctx: &EvalContext) -> bool {
    rule.event == event
        && rule
            .condition
            .as_ref()
            .is_none_or(|c| c.any.iter().any(|term| term.iter().all(|f| holds(f, ctx))))
}

/// Burn reason attached to a ZEROISE, derived from what the rule watches.
fn zeroise_reason(rule: &Rule) -> &'static str {
    if rule.references(Field::Expiry) {
        "expiry"
    } else if rule.references(Field::LastContact) {
        "no_contact"
    } else if rule.references(Field::Location) || rule.references(Field::Home) {
        "jurisdiction"
    } else {
        match rule.event {
            EventKind::Tamper => "tamper",
            EventKind::AttestFail => "attest_fail",
            _ => "policy",
        }
    }
}

/// Decides an event. Precedence is PROHIBITION > OBLIGATION > PERMISSION;
/// with no matching rule the verdict is PERMIT with no obligations.
/// PERMISSION rules never contribute obligations.
pub fn evaluate(policy: &CheckedPolicy, event: EventKind, ctx: &EvalContext) -> Decision {
    let matching: Vec<(usize, &Rule)> = policy
        .rules()
        .iter()
        .enumerate()
        .filter(|(_, r)| matches(r, event, ctx))
        .collect();

    if let Some((idx, _)) = matching
        .iter()
        .find(|(_, r)| r.kind == RuleKind::Prohibition)
    {
        return Decision::forbid(ForbidCause::Prohibition { rule: *idx });
    }

    let mut obligations = Vec::new();
    let mut paid: u64 = 0;
    for &(idx, rule) in matching.iter().filter(|(_, r)| r.kind == RuleKind::Obligation) {
        for action in &rule.actions {
            match action {
                Action::Forbid => return Decision::forbid(ForbidCause::ForbidAction { rule: idx }),
                Action::Pay { fraction, payee } => {
                    let amount = fraction.apply(ctx.amount);
                    paid = paid.saturating_add(amount);
                    if paid > ctx.amount {
                        return Decision::forbid(ForbidCause::Unpayable { rule: idx });
                    }
                    obligations.push(Obligation::Pay {
                        payee: payee.clone(),
                        amount,
                    });
                }
                Action::Zeroise => obligations.push(Obligation::Zeroise {
                    reason: zeroise_reason(rule).to_string(),
                }),
                Action::Notify(target) => obligations.push(Obligation::Notify {
                    target: target.clone(),
                }),
                Action::MoveToBestRate => obligations.push(Obligation::MoveToBestRate),
            }
        }
    }
    Decision::permit(obligations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{check, parse};

    fn policy(src: &str) -> CheckedPolicy {
        check(parse(src).unwrap()).unwrap()
    }

    const SALES_TAX: &str =
        r#"OBLIGATION ON RECEIVE IF category == "sale" DO PAY 2000bp TO "tax_authority";"#;

    #[test]
    fn sales_tax_on_receive() {
        let d = evaluate(
            &policy(SALES_TAX),
            EventKind::Receive,
            &EvalContext::new(1000, 0).category("sale"),
        );
        assert_eq!(d.verdict, Verdict::Permit);
        assert_eq!(
            d.obligations,
            vec![Obligation::Pay {
                payee: "tax_authority".into(),
                amount: 200
            }]
        );
        let other = evaluate(
            &policy(SALES_TAX),
            EventKind::Receive,
            &EvalContext::new(1000, 0).category("gift"),
        );
        assert!(other.obligations.is_empty());
    }

    #[test]
    fn weapons_prohibition() {
        let p = policy(
            r#"PROHIBITION ON TRANSFER_REQUEST IF category == "weapons" AND licence == NONE;"#,
        );
        let ctx = EvalContext::new(50, 3).category("weapons");
        let d = evaluate(&p, EventKind::TransferRequest, &ctx);
        assert_eq!(d.verdict, Verdict::Forbid);
        assert!(d.obligations.is_empty());
        let licensed = ctx.licence(Some("arms_permit".into()));
        assert!(evaluate(&p, EventKind::TransferRequest, &licensed).is_permit());
    }

    #[test]
    fn empty_policy_permits_everything() {
        let p = CheckedPolicy::empty();
        for e in EventKind::ALL {
            let d = evaluate(&p, e, &EvalContext::new(7, 1));
            assert_eq!(d, Decision::permit(vec![]));
        }
    }

    #[test]
    fn none_semantics() {
        let p = policy("PROHIBITION ON TICK IF now > expiry;");
        assert!(evaluate(&p, EventKind::Tick, &EvalContext::new(0, 500)).is_permit());
        let ctx = EvalContext::new(0, 101).expiry(Some(100));
        assert!(!evaluate(&p, EventKind::Tick, &ctx).is_permit());
        let inclusive = EvalContext::new(0, 100).expiry(Some(100));
        assert!(evaluate(&p, EventKind::Tick, &inclusive).is_permit());
    }

    #[test]
    fn overdrawn_obligations_forbid() {
        let p = policy(
            r#"OBLIGATION ON RECEIVE DO PAY 3/5 TO "a";
               OBLIGATION ON RECEIVE DO PAY 3/5 TO "b";"#,
        );
        let d = evaluate(&p, EventKind::Receive, &EvalContext::new(10, 0));
        assert_eq!(d.cause, Some(ForbidCause::Unpayable { rule: 1 }));
        assert!(d.obligations.is_empty());
    }

    #[test]
    fn forbid_action_and_reasons() {
        let p = policy(
            r#"OBLIGATION ON TICK IF now > last_contact + 360 DO ZEROISE, NOTIFY "government";
               OBLIGATION ON TRANSFER_REQUEST IF amount > 100 DO FORBID;"#,
        );
        let d = evaluate(&p, EventKind::Tick, &EvalContext::new(5, 361));
        assert_eq!(
            d.obligations,
            vec![
                Obligation::Zeroise {
                    reason: "no_contact".into()
                },
                Obligation::Notify {
                    target: "government".into()
                }
            ]
        );
        let still = evaluate(&p, EventKind::Tick, &EvalContext::new(5, 361).last_contact(300));
        assert!(still.obligations.is_empty());
        let big = evaluate(&p, EventKind::TransferRequest, &EvalContext::new(101, 0));
        assert_eq!(big.cause, Some(ForbidCause::ForbidAction { rule: 1 }));
    }
}

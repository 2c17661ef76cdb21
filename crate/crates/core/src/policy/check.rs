use std::fmt;
use std::ops::Deref;

use thiserror::Error;

use super::ast::{Action, CmpOp, Comparison, Field, Operand, PolicyProgram, RuleKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("rule {rule}: {message}")]
pub struct CheckError {
    pub rule: usize,
    pub message: String,
}

/// A program that passed [`check`]. Only obtainable through it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckedPolicy(PolicyProgram);

impl CheckedPolicy {
    pub fn program(&self) -> &PolicyProgram {
        &self.0
    }

    pub fn into_program(self) -> PolicyProgram {
        self.0
    }

    /// See [`PolicyProgram::corrupt_canonical_byte`].
    pub fn corrupt_canonical_byte(&mut self, index: usize, mask: u8) -> bool {
        self.0.corrupt_canonical_byte(index, mask)
    }

    pub fn empty() -> Self {
        CheckedPolicy(PolicyProgram::from_rules(Vec::new()))
    }
}

impl Deref for CheckedPolicy {
    type Target = PolicyProgram;

    fn deref(&self) -> &PolicyProgram {
        &self.0
    }
}

impl fmt::Display for CheckedPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0.source_canonical())
    }
}

fn check_comparison(cmp: &Comparison, errors: &mut Vec<String>) {
    let Some(field) = Field::from_name(&cmp.field) else {
        errors.push(format!("unknown field `{}`", cmp.field));
        return;
    };
    let ordering = matches!(cmp.op, CmpOp::Lt | CmpOp::Gt);
    match &cmp.rhs {
        Operand::Int(_) if !field.is_numeric() => {
            errors.push(format!("type mismatch: `{}` is text", field.name()))
        }
        Operand::Str(_) if field.is_numeric() => {
            errors.push(format!("type mismatch: `{}` is numeric", field.name()))
        }
        Operand::Str(_) if ordering => {
            errors.push(format!("ordering on text field `{}`", field.name()))
        }
        Operand::None if ordering => errors.push("ordering against NONE".into()),
        Operand::Field { name, offset } => match Field::from_name(name) {
            None => errors.push(format!("unknown field `{name}`")),
            Some(other) if other.is_numeric() != field.is_numeric() => errors.push(format!(
                "type mismatch: `{}` compared with `{}`",
                field.name(),
                other.name()
            )),
            Some(other) if !other.is_numeric() && (*offset > 0 || ordering) => errors.push(
                format!("arithmetic or ordering on text field `{}`", other.name()),
            ),
            Some(_) => {}
        },
        _ => {}
    }
}

/// Static checks: known fields, type-consistent comparisons, fractions in
/// `[0, 1]` with non-zero denominators, and no PAY inside a PROHIBITION.
pub fn check(program: PolicyProgram) -> Result<CheckedPolicy, Vec<CheckError>> {
    let mut errors = Vec::new();
    for (idx, rule) in program.rules().iter().enumerate() {
        let mut msgs = Vec::new();
        for cmp in rule.condition.iter().flat_map(|c| c.comparisons()) {
            check_comparison(cmp, &mut msgs);
        }
        for action in &rule.actions {
            if let Action::Pay { fraction, .. } = action {
                if rule.kind == RuleKind::Prohibition {
                    msgs.push("PAY inside PROHIBITION".into());
                }
                let (n, d) = fraction.parts();
                if d == 0 {
                    msgs.push("zero denominator".into());
                } else if n > d {
                    msgs.push("fraction > 1".into());
                }
            }
        }
        errors.extend(msgs.into_iter().map(|message| CheckError { rule: idx, message }));
    }
    if errors.is_empty() {
        Ok(CheckedPolicy(program))
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parse;

    fn errors(src: &str) -> Vec<CheckError> {
        check(parse(src).unwrap()).unwrap_err()
    }

    #[test]
    fn fraction_above_one() {
        let e = errors(r#"OBLIGATION ON RECEIVE DO PAY 15000bp TO "t";"#);
        assert_eq!(e, vec![CheckError { rule: 0, message: "fraction > 1".into() }]);
        assert_eq!(errors(r#"OBLIGATION ON RECEIVE DO PAY 6/5 TO "t";"#)[0].message, "fraction > 1");
        assert_eq!(
            errors(r#"OBLIGATION ON RECEIVE DO PAY 1/0 TO "t";"#)[0].message,
            "zero denominator"
        );
    }

    #[test]
    fn unknown_field() {
        let e = errors(
            "PERMISSION ON TICK;\nPROHIBITION ON TRANSFER_REQUEST IF colour == \"red\";",
        );
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].rule, 1);
        assert!(e[0].message.starts_with("unknown field"));
    }

    #[test]
    fn pay_inside_prohibition() {
        let e = errors(r#"PROHIBITION ON RECEIVE DO PAY 1/2 TO "t";"#);
        assert_eq!(e[0].message, "PAY inside PROHIBITION");
    }

    #[test]
    fn sales_tax_is_clean() {
        let src = r#"OBLIGATION ON RECEIVE IF category == "sale" DO PAY 2000bp TO "tax_authority";"#;
        let checked = check(parse(src).unwrap()).unwrap();
        assert_eq!(checked.rules().len(), 1);
    }

    #[test]
    fn type_errors() {
        assert!(!errors(r#"PROHIBITION ON TICK IF amount == "x";"#).is_empty());
        assert!(!errors("PROHIBITION ON TICK IF category == 3;").is_empty());
        assert!(!errors(r#"PROHIBITION ON TICK IF category < "b";"#).is_empty());
        assert!(!errors("PROHIBITION ON TICK IF expiry > NONE;").is_empty());
        assert!(!errors("PROHIBITION ON TICK IF now > home;").is_empty());
        assert!(!errors("PROHIBITION ON TICK IF location != home + 1;").is_empty());
        assert!(check(parse("PROHIBITION ON TICK IF location != home AND expiry == NONE;").unwrap()).is_ok());
    }

    #[test]
    fn every_violation_is_reported() {
        let e = errors(
            r#"PROHIBITION ON RECEIVE IF colour == 1 DO PAY 3/2 TO "t";"#,
        );
        assert_eq!(e.len(), 3);
        assert!(e.iter().all(|x| x.rule == 0));
    }
}

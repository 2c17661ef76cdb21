use std::fmt;

use thiserror::Error;

use super::ast::{
    Action, Comparison, Condition, EventKind, Fraction, Operand, PolicyProgram, Rule, RuleKind,
};
use super::lexer::{lex, Spanned, Tok};

/// Error at the first offending token, with 1-based line and column.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, col: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            col,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn error_here(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self
            .toks
            .get(self.pos)
            .map_or(self.end, |s| (s.line, s.col));
        ParseError::new(line, col, msg)
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(t) => self.error_here(format!("expected {expected}, found {}", t.describe())),
            None => self.error_here(format!("expected {expected}, found end of input")),
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        self.pos += 1;
        t
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Word(x)) if x == w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<(), ParseError> {
        if self.eat_word(w) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{w}`")))
        }
    }

    fn expect_string(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Str(_)) => match self.next() {
                Some(Tok::Str(s)) => Ok(s),
                _ => unreachable!(),
            },
            _ => Err(self.unexpected(what)),
        }
    }

    fn rule(&mut self) -> Result<Rule, ParseError> {
        let kind = match self.peek() {
            Some(Tok::Word(w)) => RuleKind::from_keyword(w)
                .ok_or_else(|| self.error_here(format!("unknown rule kind `{w}`")))?,
            _ => return Err(self.unexpected("rule kind")),
        };
        self.pos += 1;
        self.expect_word("ON")?;
        let event = match self.peek() {
            Some(Tok::Word(w)) => EventKind::from_keyword(w)
                .ok_or_else(|| self.error_here(format!("unknown event `{w}`")))?,
            _ => return Err(self.unexpected("event name")),
        };
        self.pos += 1;

        let condition = if self.eat_word("IF") {
            Some(self.condition()?)
        } else {
            None
        };

        let mut actions = Vec::new();
        if self.eat_word("DO") {
            actions.push(self.action()?);
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                actions.push(self.action()?);
            }
        }

        if self.peek() != Some(&Tok::Semi) {
            return Err(self.unexpected("`;`"));
        }
        self.pos += 1;
        Ok(Rule {
            kind,
            event,
            condition,
            actions,
        })
    }

    fn condition(&mut self) -> Result<Condition, ParseError> {
        let mut any = vec![self.term()?];
        while self.eat_word("OR") {
            any.push(self.term()?);
        }
        Ok(Condition { any })
    }

    fn term(&mut self) -> Result<Vec<Comparison>, ParseError> {
        let mut all = vec![self.factor()?];
        while self.eat_word("AND") {
            all.push(self.factor()?);
        }
        Ok(all)
    }

    fn factor(&mut self) -> Result<Comparison, ParseError> {
        let field = match self.peek() {
            Some(Tok::Word(w)) if is_field_ident(w) => w.clone(),
            _ => return Err(self.unexpected("field name")),
        };
        self.pos += 1;
        let op = match self.peek() {
            Some(Tok::Op(op)) => *op,
            _ => return Err(self.unexpected("comparison operator")),
        };
        self.pos += 1;
        let rhs = match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Operand::Int(v)
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Operand::Str(s)
            }
            Some(Tok::Word(w)) if w == "NONE" => {
                self.pos += 1;
                Operand::None
            }
            Some(Tok::Word(w)) if is_field_ident(&w) => {
                self.pos += 1;
                let mut offset = 0;
                if self.peek() == Some(&Tok::Plus) {
                    self.pos += 1;
                    match self.next() {
                        Some(Tok::Int(v)) => offset = v,
                        _ => {
                            self.pos -= 1;
                            return Err(self.unexpected("integer offset"));
                        }
                    }
                }
                Operand::Field { name: w, offset }
            }
            _ => return Err(self.unexpected("literal")),
        };
        Ok(Comparison { field, op, rhs })
    }

    fn action(&mut self) -> Result<Action, ParseError> {
        let word = match self.peek() {
            Some(Tok::Word(w)) => w.clone(),
            _ => return Err(self.unexpected("action")),
        };
        match word.as_str() {
            "PAY" => {
                self.pos += 1;
                let fraction = self.fraction()?;
                self.expect_word("TO")?;
                let payee = self.expect_string("payee string")?;
                Ok(Action::Pay { fraction, payee })
            }
            "FORBID" => {
                self.pos += 1;
                Ok(Action::Forbid)
            }
            "ZEROISE" => {
                self.pos += 1;
                Ok(Action::Zeroise)
            }
            "NOTIFY" => {
                self.pos += 1;
                Ok(Action::Notify(self.expect_string("notification target")?))
            }
            "MOVE_TO_BEST_RATE" => {
                self.pos += 1;
                Ok(Action::MoveToBestRate)
            }
            other => Err(self.error_here(format!("unknown action `{other}`"))),
        }
    }

    fn fraction(&mut self) -> Result<Fraction, ParseError> {
        match self.peek() {
            Some(Tok::Bp(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(Fraction::BasisPoints(v))
            }
            Some(Tok::Int(n)) => {
                let n = *n;
                self.pos += 1;
                if self.peek() != Some(&Tok::Slash) {
                    return Err(self.unexpected("`/`"));
                }
                self.pos += 1;
                match self.peek() {
                    Some(Tok::Int(d)) => {
                        let d = *d;
                        self.pos += 1;
                        Ok(Fraction::Ratio(n, d))
                    }
                    _ => Err(self.unexpected("denominator")),
                }
            }
            _ => Err(self.unexpected("fraction")),
        }
    }
}

/// Lowercase identifiers are field references; the checker decides whether
/// the name is known. Uppercase words are keywords.
fn is_field_ident(w: &str) -> bool {
    w.starts_with(|c: char| c.is_ascii_lowercase() || c == '_')
}

pub fn parse(source: &str) -> Result<PolicyProgram, ParseError> {
    let (toks, end) = lex(source)?;
    let mut p = Parser { toks, pos: 0, end };
    let mut rules = Vec::new();
    while p.peek().is_some() {
        rules.push(p.rule()?);
    }
    Ok(PolicyProgram::from_rules(rules))
}

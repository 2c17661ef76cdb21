//! Fiscal policy library: a law table and generators that turn common
//! government policies into policy-language source.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::rate::Rate;

/// Host id that receives tax payments.
pub const TAX_AUTHORITY: &str = "tax_authority";
/// Host id notified of enforcement actions.
pub const GOVERNMENT: &str = "government";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FiscalError {
    #[error("tax rate {0} must lie in [0, 1]")]
    BadRate(Rate),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("bad law entry: {0}")]
    BadEntry(String),
    #[error("bad generator arguments: {0}")]
    BadArgs(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Legality {
    Legal,
    /// Legal only for holders of the named licence.
    Licensed(String),
    Illegal,
}

impl fmt::Display for Legality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Legality::Legal => f.write_str("legal"),
            Legality::Licensed(l) => write!(f, "licence {l}"),
            Legality::Illegal => f.write_str("illegal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LawEntry {
    pub legality: Legality,
    pub tax: Option<Rate>,
}

impl FromStr for LawEntry {
    type Err = FiscalError;

    /// `legal [rate]`, `licence <name> [rate]` or `illegal`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let bad = || FiscalError::BadEntry(s.to_string());
        let (legality, rest) = match words.as_slice() {
            ["legal", rest @ ..] => (Legality::Legal, rest),
            ["licence", name, rest @ ..] => (Legality::Licensed(name.to_string()), rest),
            ["illegal"] => (Legality::Illegal, &[][..]),
            _ => return Err(bad()),
        };
        let tax = match rest {
            [] => None,
            [r] => Some(checked_rate(r.parse().map_err(|_| bad())?)?),
            _ => return Err(bad()),
        };
        Ok(LawEntry { legality, tax })
    }
}

/// What the law server answers for one category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LawAnswer {
    pub category: String,
    pub legality: Legality,
    pub tax: Option<Rate>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LawTable {
    entries: BTreeMap<String, LawEntry>,
}

impl LawTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, category: &str, entry: LawEntry) {
        self.entries.insert(category.to_string(), entry);
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, category: &str) -> bool {
        self.entries.contains_key(category)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &LawEntry)> {
        self.entries.iter()
    }

    pub fn query(&self, category: &str) -> Result<LawAnswer, FiscalError> {
        let entry = self
            .entries
            .get(category)
            .ok_or_else(|| FiscalError::UnknownCategory(category.to_string()))?;
        Ok(LawAnswer {
            category: category.to_string(),
            legality: entry.legality.clone(),
            tax: entry.tax,
        })
    }
}

fn checked_rate(rate: Rate) -> Result<Rate, FiscalError> {
    if rate.is_negative() || i128::from(rate.num()) > i128::from(rate.den()) {
        Err(FiscalError::BadRate(rate))
    } else {
        Ok(rate)
    }
}

fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Receive-side sales tax on purchases tagged `sale`.
pub fn sales_tax_policy(rate: Rate) -> Result<String, FiscalError> {
    let rate = checked_rate(rate)?;
    Ok(format!(
        "OBLIGATION ON RECEIVE IF category == \"sale\" DO PAY {rate} TO {};\n",
        quoted(TAX_AUTHORITY)
    ))
}

/// Per-category taxes taken from the law table.
pub fn category_tax_policy(law: &LawTable) -> String {
    law.entries()
        .filter_map(|(cat, e)| e.tax.filter(|r| r.num() > 0).map(|r| (cat, r)))
        .map(|(cat, r)| {
            format!(
                "OBLIGATION ON RECEIVE IF category == {} DO PAY {r} TO {};\n",
                quoted(cat),
                quoted(TAX_AUTHORITY)
            )
        })
        .collect()
}

/// Forbids spending on illegal categories, and on licensed categories
/// without the licence.
pub fn legality_policy(law: &LawTable) -> String {
    let mut out = String::new();
    for (cat, entry) in law.entries() {
        match &entry.legality {
            Legality::Legal => {}
            Legality::Illegal => out.push_str(&format!(
                "PROHIBITION ON TRANSFER_REQUEST IF category == {};\n",
                quoted(cat)
            )),
            Legality::Licensed(l) => out.push_str(&format!(
                "PROHIBITION ON TRANSFER_REQUEST IF category == {} AND licence != {};\n",
                quoted(cat),
                quoted(l)
            )),
        }
    }
    out
}

/// Zeroises money whose holder has not contacted the government within a
/// year.
pub fn annual_contact_policy(year_ticks: u64) -> Result<String, FiscalError> {
    if year_ticks == 0 {
        return Err(FiscalError::BadArgs("year must be positive".into()));
    }
    Ok(format!(
        "OBLIGATION ON TICK IF now > last_contact + {year_ticks} DO ZEROISE, NOTIFY {};\n",
        quoted(GOVERNMENT)
    ))
}

/// Zeroises money that leaves its home jurisdiction, or whose location can
/// no longer be attested.
pub fn jurisdiction_policy(home: &str) -> Result<String, FiscalError> {
    if home.is_empty() {
        return Err(FiscalError::BadArgs("home jurisdiction is empty".into()));
    }
    Ok(format!(
        "OBLIGATION ON TICK IF location != {} DO ZEROISE, NOTIFY {gov};\n\
         OBLIGATION ON ATTEST_FAIL DO ZEROISE, NOTIFY {gov};\n",
        quoted(home),
        gov = quoted(GOVERNMENT)
    ))
}

/// Forbids spending on the listed categories regardless of the law table.
pub fn owner_restriction_policy(categories: &[&str]) -> Result<String, FiscalError> {
    if categories.is_empty() {
        return Err(FiscalError::BadArgs("no categories given".into()));
    }
    Ok(categories
        .iter()
        .map(|c| format!("PROHIBITION ON TRANSFER_REQUEST IF category == {};\n", quoted(c)))
        .collect())
}

/// Money may be spent up to and including its expiry tick, and is zeroised
/// on the first tick after. The deadline itself lives on the unit.
pub fn expiry_policy() -> String {
    "PROHIBITION ON TRANSFER_REQUEST IF now > expiry;\n\
     OBLIGATION ON TICK IF now > expiry DO ZEROISE;\n"
        .to_string()
}

/// Each tick, moves the money to whichever bank advertises the best rate.
pub fn delegation_policy() -> String {
    "OBLIGATION ON TICK DO MOVE_TO_BEST_RATE;\n".to_string()
}

/// Expands one `@name(args)` generator call.
pub fn expand(name: &str, args: &[&str], law: &LawTable, year_ticks: u64) -> Result<String, FiscalError> {
    let bad = || FiscalError::BadArgs(format!("@{name}({})", args.join(",")));
    match (name, args) {
        ("sales_tax", [r]) => sales_tax_policy(r.parse().map_err(|_| bad())?),
        ("category_tax", []) => Ok(category_tax_policy(law)),
        ("legality", []) => Ok(legality_policy(law)),
        ("annual_contact", []) => annual_contact_policy(year_ticks),
        ("annual_contact", [y]) => annual_contact_policy(y.parse().map_err(|_| bad())?),
        ("jurisdiction", [home]) => jurisdiction_policy(home),
        ("owner_restriction", cats) => owner_restriction_policy(cats),
        ("expiry", []) => Ok(expiry_policy()),
        ("delegation", []) => Ok(delegation_policy()),
        _ => Err(bad()),
    }
}

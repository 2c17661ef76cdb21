//! Monetary rules: how much the central bank mints or burns each period.

use std::fmt;

use thiserror::Error;

use crate::rate::Rate;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SupplyRule {
    /// `r0 >> floor(t / halving)` minted in period `t`.
    FixedCapGeometric { r0: u64, halving: u64 },
    /// Supply changes by `k` per year.
    ConstantGrowth { k: Rate },
    /// `k_t = k0 + alpha * (V_t - v_star) / v_star`, floored at -1.
    VolumeResponsive { k0: Rate, alpha: Rate, v_star: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SupplyError {
    #[error("invalid supply rule: {0}")]
    InvalidRule(String),
    #[error("issuer allowance exceeded: wanted {wanted}, {left} left")]
    AllowanceExceeded { wanted: u64, left: u64 },
}

impl SupplyRule {
    pub fn validate(&self) -> Result<(), SupplyError> {
        let bad = |m: &str| Err(SupplyError::InvalidRule(m.to_string()));
        match self {
            SupplyRule::FixedCapGeometric { halving: 0, .. } => bad("halving period must be positive"),
            SupplyRule::ConstantGrowth { k } if !k.at_least_minus_one() => bad("k must be >= -1"),
            SupplyRule::VolumeResponsive { v_star: 0, .. } => bad("v_star must be positive"),
            _ => Ok(()),
        }
    }

    /// Parses `FIXED_CAP r0 H`, `CONSTANT_GROWTH k` or
    /// `VOLUME_RESPONSIVE k0 alpha v_star`.
    pub fn parse(text: &str) -> Result<Self, SupplyError> {
        let words: Vec<&str> = text.split_whitespace().collect();
        let bad = |m: String| SupplyError::InvalidRule(m);
        let int = |w: &str| w.parse::<u64>().map_err(|_| bad(format!("bad integer `{w}`")));
        let rate = |w: &str| w.parse::<Rate>().map_err(bad);
        let rule = match words.as_slice() {
            ["FIXED_CAP", r0, h] => SupplyRule::FixedCapGeometric {
                r0: int(r0)?,
                halving: int(h)?,
            },
            ["CONSTANT_GROWTH", k] => SupplyRule::ConstantGrowth { k: rate(k)? },
            ["VOLUME_RESPONSIVE", k0, alpha, v] => SupplyRule::VolumeResponsive {
                k0: rate(k0)?,
                alpha: rate(alpha)?,
                v_star: int(v)?,
            },
            _ => return Err(bad(format!("unrecognised rule `{text}`"))),
        };
        rule.validate()?;
        Ok(rule)
    }

    /// Annual rate for a period with volume `tx_volume`, as an exact
    /// fraction `(num, den)` with `den > 0`. `None` for FIXED_CAP.
    pub fn growth_rate(&self, tx_volume: u64) -> Option<(i128, i128)> {
        match *self {
            SupplyRule::FixedCapGeometric { .. } => None,
            SupplyRule::ConstantGrowth { k } => Some((k.num().into(), k.den().into())),
            SupplyRule::VolumeResponsive { k0, alpha, v_star } => {
                let (k0n, k0d) = (i128::from(k0.num()), i128::from(k0.den()));
                let (an, ad) = (i128::from(alpha.num()), i128::from(alpha.den()));
                let v = i128::from(v_star);
                let dv = i128::from(tx_volume) - v;
                let den = k0d * ad * v;
                let num = (k0n * ad * v + an * k0d * dv).max(-den);
                Some((num, den))
            }
        }
    }
}

impl fmt::Display for SupplyRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SupplyRule::FixedCapGeometric { r0, halving } => write!(f, "FIXED_CAP {r0} {halving}"),
            SupplyRule::ConstantGrowth { k } => write!(f, "CONSTANT_GROWTH {k}"),
            SupplyRule::VolumeResponsive { k0, alpha, v_star } => {
                write!(f, "VOLUME_RESPONSIVE {k0} {alpha} {v_star}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SupplyInputs {
    pub supply: u64,
    pub tx_volume: u64,
    /// What the central bank holds and could burn.
    pub treasury: u64,
    pub periods_per_year: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupplyDirective {
    pub period: u64,
    pub mint: u64,
    pub burn: u64,
    /// The rule asked to burn more than the treasury held.
    pub clamped: bool,
}

/// Mint or burn for period `t` (0-based).
pub fn issuance(rule: &SupplyRule, t: u64, inputs: SupplyInputs) -> SupplyDirective {
    let mut d = SupplyDirective {
        period: t,
        mint: 0,
        burn: 0,
        clamped: false,
    };
    if let SupplyRule::FixedCapGeometric { r0, halving } = *rule {
        let shift = t / halving.max(1);
        d.mint = if shift >= 64 { 0 } else { r0 >> shift };
        return d;
    }
    let (num, den) = rule.growth_rate(inputs.tx_volume).expect("growth rule");
    let ppy = i128::from(inputs.periods_per_year.max(1));
    let delta = i128::from(inputs.supply) * num.abs() / (den * ppy);
    let delta = u64::try_from(delta).unwrap_or(u64::MAX);
    if num >= 0 {
        d.mint = delta;
    } else if delta > inputs.treasury {
        d.burn = inputs.treasury;
        d.clamped = true;
    } else {
        d.burn = delta;
    }
    d
}

/// One line of a supply trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectoryPoint {
    /// 1-based period number.
    pub period: u64,
    /// Supply after the period's directive.
    pub supply: u64,
    pub mint: u64,
    pub burn: u64,
    pub tx_volume: u64,
}

impl TrajectoryPoint {
    pub fn line(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.period, self.supply, self.mint, self.burn, self.tx_volume
        )
    }
}

/// Applies a rule to a closed economy with no transactions: supply moves only
/// by the rule's own directives. The treasury starts as the whole supply.
pub fn project(
    rule: &SupplyRule,
    initial: u64,
    periods: u64,
    periods_per_year: u64,
    allowance: u64,
) -> Result<Vec<TrajectoryPoint>, SupplyError> {
    rule.validate()?;
    let (mut supply, mut left) = (initial, allowance);
    let mut out = Vec::with_capacity(periods as usize);
    for t in 0..periods {
        let d = issuance(
            rule,
            t,
            SupplyInputs {
                supply,
                tx_volume: 0,
                treasury: supply,
                periods_per_year,
            },
        );
        if d.mint > left {
            return Err(SupplyError::AllowanceExceeded {
                wanted: d.mint,
                left,
            });
        }
        left -= d.mint;
        supply = supply + d.mint - d.burn;
        out.push(TrajectoryPoint {
            period: t + 1,
            supply,
            mint: d.mint,
            burn: d.burn,
            tx_volume: 0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(supply: u64, tx_volume: u64) -> SupplyInputs {
        SupplyInputs {
            supply,
            tx_volume,
            treasury: supply,
            periods_per_year: 1,
        }
    }

    #[test]
    fn fixed_cap_halves() {
        let rule = SupplyRule::parse("FIXED_CAP 50 10").unwrap();
        let mints: Vec<u64> = (0..70).map(|t| issuance(&rule, t, inputs(0, 0)).mint).collect();
        assert_eq!(mints[0], 50);
        assert_eq!(mints[10], 25);
        assert_eq!(mints[39], 6);
        assert_eq!(mints[60], 0);
        let total: u64 = (0..1000).map(|t| issuance(&rule, t, inputs(0, 0)).mint).sum();
        assert_eq!(total, 970);
    }

    #[test]
    fn growth_and_clamp() {
        let grow = SupplyRule::parse("CONSTANT_GROWTH 2/100").unwrap();
        assert_eq!(issuance(&grow, 0, inputs(1_000_000, 0)).mint, 20_000);
        let shrink = SupplyRule::parse("CONSTANT_GROWTH -10/100").unwrap();
        let mut inp = inputs(1_000, 0);
        inp.treasury = 30;
        let d = issuance(&shrink, 0, inp);
        assert_eq!((d.burn, d.clamped), (30, true));
    }

    #[test]
    fn volume_rate_is_exact() {
        let rule = SupplyRule::parse("VOLUME_RESPONSIVE 1/100 1/2 1000").unwrap();
        // V = 1200: k = 0.01 + 0.5 * 0.2 = 0.11
        let (n, d) = rule.growth_rate(1200).unwrap();
        assert_eq!(n * 100, 11 * d);
        assert_eq!(issuance(&rule, 3, inputs(10_000, 1200)).mint, 1100);
        // V = 0 with a steep alpha floors at -1
        let steep = SupplyRule::parse("VOLUME_RESPONSIVE 0/1 5/1 10").unwrap();
        let (n, d) = steep.growth_rate(0).unwrap();
        assert_eq!(n, -d);
    }

    #[test]
    fn rejects_bad_rules() {
        assert!(SupplyRule::parse("FIXED_CAP 50 0").is_err());
        assert!(SupplyRule::parse("CONSTANT_GROWTH -3/2").is_err());
        assert!(SupplyRule::parse("VOLUME_RESPONSIVE 1/100 1/2 0").is_err());
        assert!(SupplyRule::parse("GOLD_STANDARD").is_err());
    }

    #[test]
    fn projection_matches_compound_growth() {
        let rule = SupplyRule::parse("CONSTANT_GROWTH 2/100").unwrap();
        let path = project(&rule, 1_000_000, 10, 1, u64::MAX).unwrap();
        let exact = 1_000_000u128 * 102u128.pow(10) / 100u128.pow(10);
        let last = u128::from(path.last().unwrap().supply);
        assert!(exact.abs_diff(last) <= 10, "{last} vs {exact}");
        assert!(matches!(
            project(&rule, 1_000_000, 10, 1, 50_000),
            Err(SupplyError::AllowanceExceeded { .. })
        ));
    }
}

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

/// Exact signed rational, used for interest and growth rates.
#[derive(Debug, Clone, Copy, Eq)]
pub struct Rate {
    num: i64,
    den: u64,
}

impl Rate {
    pub const ZERO: Rate = Rate { num: 0, den: 1 };

    pub fn new(num: i64, den: u64) -> Option<Self> {
        (den > 0).then_some(Self { num, den })
    }

    pub fn num(self) -> i64 {
        self.num
    }

    pub fn den(self) -> u64 {
        self.den
    }

    pub fn is_negative(self) -> bool {
        self.num < 0
    }

    /// `self >= -1`
    pub fn at_least_minus_one(self) -> bool {
        i128::from(self.num) >= -i128::from(self.den)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Rate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl PartialOrd for Rate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rate {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = i128::from(self.num) * i128::from(other.den);
        let rhs = i128::from(other.num) * i128::from(self.den);
        lhs.cmp(&rhs)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Rate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad rate `{s}` (expected num/den)");
        let (n, d) = s.split_once('/').ok_or_else(bad)?;
        let num = n.trim().parse::<i64>().map_err(|_| bad())?;
        let den = d.trim().parse::<u64>().map_err(|_| bad())?;
        Rate::new(num, den).ok_or_else(bad)
    }
}

//! Fixed-precision number rendering shared by all reports.
//!
//! Ties round half up. Floating inputs get a 1e-9 relative nudge so that
//! values such as 0.685 (stored as 0.68499999...) render the way a reader expects.

/// Exact non-negative rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    /// `None` when the denominator is zero.
    pub fn new(num: u64, den: u64) -> Option<Self> {
        (den > 0).then_some(Self { num, den })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Percentage with one decimal, rounded half up in exact integer arithmetic.
    pub fn percent_1dp(self) -> String {
        let num = u128::from(self.num) * 1000;
        let den = u128::from(self.den);
        let tenths = (2 * num + den) / (2 * den);
        format!("{}.{}", tenths / 10, tenths % 10)
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Round half up to `decimals` places and format.
pub fn fixed(x: f64, decimals: usize) -> String {
    let scale = 10f64.powi(decimals as i32);
    let scaled = x * scale;
    let nudged = scaled + scaled.abs() * 1e-9 + 1e-12;
    let rounded = (nudged + 0.5).floor() / scale;
    let s = format!("{rounded:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_owned()
    } else {
        s
    }
}

/// A probability rendered as a one-decimal percentage.
pub fn percent(x: f64) -> String {
    fixed(x * 100.0, 1)
}

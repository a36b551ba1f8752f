//! Diagnostic accuracy statistics for the binary malignant/benign task.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::labels::Diagnosis;
use crate::render::Ratio;

/// Bisection stops once the bracket is narrower than this.
pub const CI_BRACKET_WIDTH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Reference-positive count.
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn predicted_positive(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn predicted_negative(&self) -> u64 {
        self.fn_ + self.tn
    }
}

/// Tally `(predicted, reference)` pairs with malignant as the positive class.
pub fn confusion<I>(cases: I) -> ConfusionMatrix
where
    I: IntoIterator<Item = (Diagnosis, Diagnosis)>,
{
    cases
        .into_iter()
        .fold(ConfusionMatrix::default(), |mut cm, (pred, reference)| {
            match (pred.is_malignant(), reference.is_malignant()) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, true) => cm.fn_ += 1,
                (false, false) => cm.tn += 1,
            }
            cm
        })
}

/// Each metric is an exact ratio, absent when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiagnosticMetrics {
    pub sensitivity: Option<Ratio>,
    pub specificity: Option<Ratio>,
    pub ppv: Option<Ratio>,
    pub npv: Option<Ratio>,
    pub accuracy: Option<Ratio>,
}

pub fn metrics(cm: &ConfusionMatrix) -> DiagnosticMetrics {
    DiagnosticMetrics {
        sensitivity: Ratio::new(cm.tp, cm.positives()),
        specificity: Ratio::new(cm.tn, cm.negatives()),
        ppv: Ratio::new(cm.tp, cm.predicted_positive()),
        npv: Ratio::new(cm.tn, cm.predicted_negative()),
        accuracy: Ratio::new(cm.tp + cm.tn, cm.total()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialCI {
    pub successes: u64,
    pub trials: u64,
    pub confidence: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BinomialCI {
    pub fn estimate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// `ln C(n, k)` for k = 0..=n.
fn ln_choose_row(n: u64) -> Vec<f64> {
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0f64;
    row.push(0.0);
    for k in 1..=n {
        acc += ((n - k + 1) as f64).ln() - (k as f64).ln();
        row.push(acc);
    }
    row
}

fn binomial_pmf(ln_choose: &[f64], n: u64, k: u64, p: f64) -> f64 {
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_choose[k as usize] + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

/// `P(X >= x)` for `X ~ Bin(n, p)`.
fn upper_tail(ln_choose: &[f64], n: u64, x: u64, p: f64) -> f64 {
    (x..=n)
        .rev()
        .map(|k| binomial_pmf(ln_choose, n, k, p))
        .sum::<f64>()
        .min(1.0)
}

/// `P(X <= x)` for `X ~ Bin(n, p)`.
fn lower_tail(ln_choose: &[f64], n: u64, x: u64, p: f64) -> f64 {
    (0..=x)
        .map(|k| binomial_pmf(ln_choose, n, k, p))
        .sum::<f64>()
        .min(1.0)
}

/// Root of a monotone function on [0, 1] by bisection; `increasing` gives its direction.
fn bisect(f: impl Fn(f64) -> f64, increasing: bool) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        if hi - lo < CI_BRACKET_WIDTH {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact binomial confidence interval by inverting the two binomial tails.
pub fn clopper_pearson(x: u64, n: u64, confidence: f64) -> Result<BinomialCI> {
    if n == 0 || x > n {
        return Err(Error::InvalidCounts { x, n });
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidConfidence(confidence));
    }
    let half_alpha = (1.0 - confidence) / 2.0;
    let ln_choose = ln_choose_row(n);
    let lower = if x == 0 {
        0.0
    } else {
        bisect(|p| upper_tail(&ln_choose, n, x, p) - half_alpha, true)
    };
    let upper = if x == n {
        1.0
    } else {
        bisect(|p| lower_tail(&ln_choose, n, x, p) - half_alpha, false)
    };
    Ok(BinomialCI {
        successes: x,
        trials: n,
        confidence,
        lower,
        upper,
    })
}

/// Discordant and concordant pair counts for two paired assessments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedAgreement {
    /// Correct only with the system.
    pub b: u64,
    /// Correct only without the system.
    pub c: u64,
    pub n_concordant: u64,
}

impl PairedAgreement {
    /// Build from `(correct_without, correct_with)` pairs.
    pub fn from_pairs<I: IntoIterator<Item = (bool, bool)>>(pairs: I) -> Self {
        pairs.into_iter().fold(Self::default(), |mut pa, pair| {
            match pair {
                (false, true) => pa.b += 1,
                (true, false) => pa.c += 1,
                _ => pa.n_concordant += 1,
            }
            pa
        })
    }
}

/// Exact two-sided McNemar test: `2 * P(Bin(b + c, 1/2) >= max(b, c))`, capped at 1.
pub fn mcnemar_exact(pa: &PairedAgreement) -> Result<f64> {
    let m = pa.b + pa.c;
    if m == 0 {
        return Err(Error::NoDiscordantPairs);
    }
    let k = pa.b.max(pa.c);
    let ln_choose = ln_choose_row(m);
    Ok((2.0 * upper_tail(&ln_choose, m, k, 0.5)).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McNemarChiSquare {
    pub statistic: f64,
    pub p_value: f64,
}

/// Continuity-corrected chi-square McNemar test, one degree of freedom.
pub fn mcnemar_chi_square(pa: &PairedAgreement) -> Result<McNemarChiSquare> {
    let m = pa.b + pa.c;
    if m == 0 {
        return Err(Error::NoDiscordantPairs);
    }
    let diff = (pa.b.abs_diff(pa.c) as f64 - 1.0).max(0.0);
    let statistic = diff * diff / m as f64;
    // Survival function of chi-square(1) is erfc(sqrt(x / 2)).
    let p_value = erfc((statistic / 2.0).sqrt());
    Ok(McNemarChiSquare { statistic, p_value })
}

/// Positive predictive value at a given prevalence, by Bayes' theorem.
pub fn ppv_at_prevalence(sensitivity: f64, specificity: f64, prevalence: f64) -> Result<f64> {
    for v in [sensitivity, specificity, prevalence] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::ProbabilityOutOfRange(v));
        }
    }
    let true_pos = sensitivity * prevalence;
    let denom = true_pos + (1.0 - specificity) * (1.0 - prevalence);
    if denom <= 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    Ok(true_pos / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Diagnosis::{Benign, Malignant};

    #[test]
    fn confusion_tally() {
        assert_eq!(confusion([]), ConfusionMatrix::default());
        assert_eq!(
            confusion([(Malignant, Benign)]),
            ConfusionMatrix {
                tp: 0,
                fp: 1,
                fn_: 0,
                tn: 0
            }
        );
    }

    #[test]
    fn validation_metrics() {
        let m = metrics(&ConfusionMatrix {
            tp: 5,
            fp: 20,
            fn_: 0,
            tn: 151,
        });
        assert_eq!(m.sensitivity.unwrap().value(), 1.0);
        assert!((m.specificity.unwrap().value() - 0.8830).abs() < 5e-5);
        assert_eq!(m.ppv.unwrap().value(), 0.2);
        assert_eq!(m.npv.unwrap().value(), 1.0);
        assert!((m.accuracy.unwrap().value() - 0.8864).abs() < 5e-5);
    }

    #[test]
    fn zero_denominators_are_absent() {
        let m = metrics(&ConfusionMatrix {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 10,
        });
        assert_eq!(m.sensitivity, None);
        assert_eq!(m.ppv, None);
        assert_eq!(m.specificity.unwrap().value(), 1.0);
        let all = metrics(&ConfusionMatrix {
            tp: 1,
            fp: 1,
            fn_: 1,
            tn: 1,
        });
        for r in [
            all.sensitivity,
            all.specificity,
            all.ppv,
            all.npv,
            all.accuracy,
        ] {
            assert_eq!(r.unwrap().value(), 0.5);
        }
    }

    #[test]
    fn cp_all_successes_closed_form() {
        for (n, lower) in [(3u64, 0.2924), (5, 0.4782), (2, 0.1581)] {
            let ci = clopper_pearson(n, n, 0.95).unwrap();
            assert_eq!(ci.upper, 1.0);
            assert!((ci.lower - 0.025f64.powf(1.0 / n as f64)).abs() < 1e-9);
            assert!((ci.lower - lower).abs() < 5e-5);
        }
    }

    #[test]
    fn cp_rejects_bad_input() {
        assert!(matches!(
            clopper_pearson(3, 2, 0.95),
            Err(Error::InvalidCounts { .. })
        ));
        assert!(matches!(
            clopper_pearson(0, 0, 0.95),
            Err(Error::InvalidCounts { .. })
        ));
        assert!(matches!(
            clopper_pearson(1, 2, 1.0),
            Err(Error::InvalidConfidence(_))
        ));
    }

    #[test]
    fn cp_zero_successes() {
        let ci = clopper_pearson(0, 4, 0.95).unwrap();
        assert_eq!(ci.lower, 0.0);
        assert!((ci.upper - (1.0 - 0.025f64.powf(0.25))).abs() < 1e-9);
    }

    #[test]
    fn mcnemar_examples() {
        let p = mcnemar_exact(&PairedAgreement {
            b: 20,
            c: 0,
            n_concordant: 156,
        })
        .unwrap();
        assert!((p - 2.0 * 0.5f64.powi(20)).abs() < 1e-12);
        assert_eq!(
            mcnemar_exact(&PairedAgreement {
                b: 1,
                c: 1,
                n_concordant: 0
            })
            .unwrap(),
            1.0
        );
        let p = mcnemar_exact(&PairedAgreement {
            b: 14,
            c: 2,
            n_concordant: 0,
        })
        .unwrap();
        // 2 * (C(16,14) + C(16,15) + C(16,16)) / 2^16 = 274 / 65536
        assert!((p - 274.0 / 65536.0).abs() < 1e-15);
        assert!(matches!(
            mcnemar_exact(&PairedAgreement::default()),
            Err(Error::NoDiscordantPairs)
        ));
    }

    #[test]
    fn mcnemar_chi_square_known_value() {
        let r = mcnemar_chi_square(&PairedAgreement {
            b: 20,
            c: 0,
            n_concordant: 0,
        })
        .unwrap();
        assert!((r.statistic - 18.05).abs() < 1e-12);
        // chi-square(1) survival at 18.05
        assert!((r.p_value - 2.151_786_437_8e-5).abs() < 1e-12);
    }

    #[test]
    fn paired_from_pairs() {
        let pa = PairedAgreement::from_pairs([
            (false, true),
            (true, false),
            (true, true),
            (false, false),
        ]);
        assert_eq!(
            pa,
            PairedAgreement {
                b: 1,
                c: 1,
                n_concordant: 2
            }
        );
    }

    #[test]
    fn ppv_bayes() {
        let v = ppv_at_prevalence(1.0, 0.883, 0.0284).unwrap();
        // 0.0284 / (0.0284 + 0.117 * 0.9716); rounds to the observed 20.0%
        assert!((v - 0.199_891_326_687).abs() < 1e-10);
        assert_eq!(crate::render::percent(v), "20.0");
        assert_eq!(ppv_at_prevalence(0.9, 0.8, 0.0).unwrap(), 0.0);
        assert_eq!(ppv_at_prevalence(0.9, 1.0, 0.01).unwrap(), 1.0);
        assert!(matches!(
            ppv_at_prevalence(0.9, 1.0, 0.0),
            Err(Error::DegenerateDenominator)
        ));
        assert!(ppv_at_prevalence(1.1, 0.5, 0.5).is_err());
    }
}

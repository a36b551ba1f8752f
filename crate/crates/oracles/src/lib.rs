//! Deliberately naive reference implementations for differential tests.
//!
//! Nothing here is fast or clever. Each function follows the textbook
//! definition with plain loops so it can be checked by reading it.

/// Dense square matrix as rows.
pub type Matrix = Vec<Vec<f64>>;

pub fn identity(t: usize) -> Matrix {
    (0..t)
        .map(|i| (0..t).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let m = b[0].len();
    let inner = b.len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..inner {
                s += a[i][k] * b[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

/// Entry-wise mean over heads.
pub fn head_mean(heads: &[Matrix]) -> Matrix {
    let t = heads[0].len();
    let mut out = vec![vec![0.0; t]; t];
    for h in heads {
        for i in 0..t {
            for j in 0..t {
                out[i][j] += h[i][j];
            }
        }
    }
    for row in &mut out {
        for v in row {
            *v /= heads.len() as f64;
        }
    }
    out
}

/// `w I + (1 - w) A`.
pub fn residual_mix(a: &Matrix, w: f64) -> Matrix {
    let mut out = a.clone();
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (1.0 - w) * *v + if i == j { w } else { 0.0 };
        }
    }
    out
}

/// Rollout over head-averaged layers, first layer first: `M_L ... M_1`.
pub fn rollout(layers: &[Matrix], w: f64) -> Matrix {
    let mut acc = identity(layers[0].len());
    for layer in layers {
        acc = matmul(&residual_mix(layer, w), &acc);
    }
    acc
}

/// Grad-CAM on `(K, H, W)` row-major buffers.
pub fn gradcam(act: &[f64], grad: &[f64], k: usize, h: usize, w: usize) -> Vec<f64> {
    let mut alpha = vec![0.0; k];
    for c in 0..k {
        let mut s = 0.0;
        for y in 0..h {
            for x in 0..w {
                s += grad[(c * h + y) * w + x];
            }
        }
        alpha[c] = s / (h * w) as f64;
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for c in 0..k {
                s += alpha[c] * act[(c * h + y) * w + x];
            }
            out[y * w + x] = if s > 0.0 { s } else { 0.0 };
        }
    }
    out
}

/// Half-open rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Pixel is set iff any rectangle covers it.
pub fn rect_mask(width: usize, height: usize, rects: &[Rect]) -> Vec<bool> {
    let mut m = vec![false; width * height];
    for y in 0..height {
        for x in 0..width {
            m[y * width + x] = rects.iter().any(|r| r.contains(x, y));
        }
    }
    m
}

/// `(intersection, union)` pixel counts.
pub fn overlap_counts(a: &[bool], b: &[bool]) -> (u64, u64) {
    let mut inter = 0;
    let mut union = 0;
    for i in 0..a.len() {
        if a[i] && b[i] {
            inter += 1;
        }
        if a[i] || b[i] {
            union += 1;
        }
    }
    (inter, union)
}

/// Row `n` of Pascal's triangle.
pub fn pascal_row(n: usize) -> Vec<u128> {
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = vec![1u128; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row
}

/// Two-sided exact McNemar p-value from integer binomial coefficients. `b + c <= 120`.
pub fn mcnemar_p(b: usize, c: usize) -> f64 {
    let m = b + c;
    let k = b.max(c);
    let row = pascal_row(m);
    let tail: u128 = row[k..].iter().sum();
    (2.0 * tail as f64 / 2f64.powi(m as i32)).min(1.0)
}

/// Binomial probability mass for small `n`, from Pascal's triangle.
pub fn binomial_pmf(n: usize, x: usize, p: f64) -> f64 {
    pascal_row(n)[x] as f64 * p.powi(x as i32) * (1.0 - p).powi((n - x) as i32)
}

/// Registry event with dates as day numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Register { case: String, green: bool, day: i64 },
    Confirm { case: String, day: i64 },
}

/// Brute-force follow-up list: replay events, then keep unconfirmed cases
/// whose last registration day plus `interval` is on or before `today`.
/// Returns case ids sorted by (control day, id).
pub fn followup_due(events: &[Event], interval: i64, today: i64) -> Vec<String> {
    // (case, decision day, confirmed)
    let mut live: Vec<(String, i64, bool)> = Vec::new();
    for e in events {
        match e {
            Event::Register { green: true, .. } => {}
            Event::Register { case, day, .. } => {
                live.retain(|(c, _, _)| c != case);
                live.push((case.clone(), *day, false));
            }
            Event::Confirm { case, .. } => {
                for entry in live.iter_mut() {
                    if &entry.0 == case {
                        entry.2 = true;
                    }
                }
            }
        }
    }
    let mut due: Vec<(i64, String)> = live
        .into_iter()
        .filter(|(_, day, confirmed)| !confirmed && day + interval <= today)
        .map(|(c, day, _)| (day + interval, c))
        .collect();
    due.sort();
    due.into_iter().map(|(_, c)| c).collect()
}

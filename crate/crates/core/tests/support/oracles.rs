//! Definitional reference implementations, written independently of the
//! library: exact rational arithmetic and O(n²) pair enumeration.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

pub fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite input")
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("representable")
}

/// Pearson r with exact sums; only the final square root is rounded.
/// `None` when either input has zero variance.
pub fn pearson_exact(x: &[BigRational], y: &[BigRational]) -> Option<f64> {
    let n = BigRational::from_integer(BigInt::from(x.len()));
    let sx: BigRational = x.iter().sum();
    let sy: BigRational = y.iter().sum();
    let sxy: BigRational = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: BigRational = x.iter().map(|a| a * a).sum();
    let syy: BigRational = y.iter().map(|b| b * b).sum();
    let num = &n * &sxy - &sx * &sy;
    let dx = &n * &sxx - &sx * &sx;
    let dy = &n * &syy - &sy * &sy;
    if dx.is_zero() || dy.is_zero() {
        return None;
    }
    let r2 = &num * &num / (&dx * &dy);
    let r = to_f64(&r2).sqrt();
    Some(if num.is_negative() { -r } else { r })
}

pub fn pearson_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let ex: Vec<_> = x.iter().map(|&v| exact(v)).collect();
    let ey: Vec<_> = y.iter().map(|&v| exact(v)).collect();
    pearson_exact(&ex, &ey)
}

/// Average 1-based ranks: `1 + #{less} + (#{equal} - 1) / 2`.
pub fn average_ranks(v: &[f64]) -> Vec<BigRational> {
    v.iter()
        .map(|&a| {
            let less = v.iter().filter(|&&b| b < a).count();
            let equal = v.iter().filter(|&&b| b == a).count();
            BigRational::new(BigInt::from(2 + 2 * less + equal - 1), BigInt::from(2))
        })
        .collect()
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson_exact(&average_ranks(x), &average_ranks(y))
}

/// `1 - 6 Σd² / (n(n² - 1))`, valid without ties.
pub fn spearman_closed_form(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let d2: BigRational = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    let n = BigInt::from(x.len());
    let denom = BigRational::from_integer(&n * (&n * &n - BigInt::from(1)));
    to_f64(&(BigRational::from_integer(BigInt::from(1)) - BigRational::from_integer(BigInt::from(6)) * d2 / denom))
}

/// (concordant, discordant) by enumerating every pair.
pub fn pair_counts_brute(x: &[f64], y: &[f64]) -> (u64, u64) {
    let (mut c, mut d) = (0, 0);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let s = (x[i] - x[j]).signum() * (y[i] - y[j]).signum();
            if x[i] == x[j] || y[i] == y[j] {
                continue;
            }
            if s > 0.0 {
                c += 1;
            } else {
                d += 1;
            }
        }
    }
    (c, d)
}

/// Tau-a; `None` when no pair is untied in both coordinates.
pub fn kendall_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let (c, d) = pair_counts_brute(x, y);
    if c + d == 0 {
        return None;
    }
    let n = x.len() as f64;
    Some((c as f64 - d as f64) / (n * (n - 1.0) / 2.0))
}

/// Concatenates distractor entries of every question, then correlates.
pub fn pooled_oracle(questions: &[(Vec<f64>, Vec<f64>, usize)]) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (p, s, c) in questions {
        for j in 0..p.len() {
            if j != *c {
                xs.push(p[j]);
                ys.push(s[j]);
            }
        }
    }
    pearson_oracle(&xs, &ys)
}

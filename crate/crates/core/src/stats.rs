//! Pearson, Spearman and Kendall correlation over short vectors.
//!
//! All three return [`Coefficient::Degenerate`] instead of a number when the
//! coefficient is undefined (a constant input, or every pair tied), so callers
//! can count and exclude those cases rather than silently imputing zero.
//!
//! Ties follow the usual conventions: Spearman uses average ranks, and
//! Kendall is tau-a with tied pairs counted as neither concordant nor
//! discordant.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

/// A correlation value, or the marker that it is undefined for the input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient<T> {
    Value(T),
    Degenerate,
}

impl<T: Copy> Coefficient<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            Coefficient::Value(v) => Some(*v),
            Coefficient::Degenerate => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Coefficient::Degenerate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 points, got {0}")]
    TooShort(usize),
    #[error("non-finite input value")]
    NonFinite,
}

fn check_inputs<T: Real>(x: &[T], y: &[T]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(StatsError::TooShort(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

fn is_constant<T: Real>(v: &[T]) -> bool {
    v.iter().all(|&a| a == v[0])
}

fn cmp<T: Real>(a: T, b: T) -> Ordering {
    // inputs are checked finite before any comparison
    a.partial_cmp(&b).expect("finite values are ordered")
}

fn clamp_unit<T: Real>(r: T) -> T {
    r.max(-T::one()).min(T::one())
}

/// Pearson product-moment correlation, two-pass mean-centered.
pub fn pearson<T: Real>(x: &[T], y: &[T]) -> Result<Coefficient<T>, StatsError> {
    check_inputs(x, y)?;
    if is_constant(x) || is_constant(y) {
        return Ok(Coefficient::Degenerate);
    }
    let n = T::of_count(x.len());
    let mean_x = x.iter().copied().sum::<T>() / n;
    let mean_y = y.iter().copied().sum::<T>() / n;

    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Ok(Coefficient::Degenerate);
    }
    // sqrt of the product keeps rank inputs exact; fall back when it under/overflows
    let prod = sxx * syy;
    let denom = if prod > T::zero() && prod.is_finite() {
        prod.sqrt()
    } else {
        sxx.sqrt() * syy.sqrt()
    };
    Ok(Coefficient::Value(clamp_unit(sxy / denom)))
}

/// 1-based ranks with ties assigned the average of the positions they span.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector<T> {
    ranks: Vec<T>,
    has_ties: bool,
    groups: usize,
}

impl<T: Real> RankVector<T> {
    /// Ranks finite values. Panics on NaN.
    pub fn from_values(values: &[T]) -> Self {
        let n = values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| cmp(values[a], values[b]));

        let mut ranks = vec![T::zero(); n];
        let mut has_ties = false;
        let mut groups = 0;
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && values[order[j]] == values[order[i]] {
                j += 1;
            }
            if j - i > 1 {
                has_ties = true;
            }
            // positions i+1..=j share their mean rank
            let avg = T::of_count(i + 1 + j) / T::of_count(2);
            for &k in &order[i..j] {
                ranks[k] = avg;
            }
            groups += 1;
            i = j;
        }
        RankVector {
            ranks,
            has_ties,
            groups,
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.ranks
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn has_ties(&self) -> bool {
        self.has_ties
    }

    /// Every entry shares one rank.
    pub fn all_tied(&self) -> bool {
        self.groups <= 1
    }
}

/// Spearman rank correlation.
///
/// Without ties this is `1 - 6 Σd² / (n(n²-1))`, evaluated as a single
/// division of exact integers. With ties it is Pearson on average ranks.
pub fn spearman<T: Real>(x: &[T], y: &[T]) -> Result<Coefficient<T>, StatsError> {
    check_inputs(x, y)?;
    let rx = RankVector::from_values(x);
    let ry = RankVector::from_values(y);
    if rx.all_tied() || ry.all_tied() {
        return Ok(Coefficient::Degenerate);
    }
    if rx.has_ties() || ry.has_ties() {
        return pearson(rx.as_slice(), ry.as_slice());
    }
    let d2: T = rx
        .as_slice()
        .iter()
        .zip(ry.as_slice())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let n = T::of_count(x.len());
    let denom = n * (n * n - T::one());
    let six = T::of(6.0);
    Ok(Coefficient::Value(clamp_unit((denom - six * d2) / denom)))
}

/// Concordance tallies over all `n(n-1)/2` unordered pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub n: usize,
    pub concordant: u64,
    pub discordant: u64,
}

impl PairCounts {
    pub fn total_pairs(&self) -> u64 {
        (self.n as u64) * (self.n as u64).saturating_sub(1) / 2
    }

    /// `2(n_c - n_d) / (n(n-1))`, or degenerate when no pair is untied.
    pub fn tau_a<T: Real>(&self) -> Coefficient<T> {
        if self.concordant + self.discordant == 0 {
            return Coefficient::Degenerate;
        }
        let num = 2 * (self.concordant as i64 - self.discordant as i64);
        let den = (self.n as i64) * (self.n as i64 - 1);
        let num = T::from_i64(num).expect("pair count fits");
        let den = T::from_i64(den).expect("pair count fits");
        Coefficient::Value(num / den)
    }
}

fn tied_pairs<I, V>(sorted: I) -> u64
where
    I: IntoIterator<Item = V>,
    V: PartialEq,
{
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<V> = None;
    for v in sorted {
        match &prev {
            Some(p) if *p == v => run += 1,
            _ => {
                total += run * (run + 1) / 2;
                run = 0;
            }
        }
        prev = Some(v);
    }
    total + run * (run + 1) / 2
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn sort_counting_inversions<T: Real>(v: &mut [T]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inversions =
        sort_counting_inversions(&mut v[..mid]) + sort_counting_inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            inversions += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    inversions
}

/// Counts concordant and discordant pairs in O(n log n) (Knight's method).
pub fn pair_counts<T: Real>(x: &[T], y: &[T]) -> Result<PairCounts, StatsError> {
    check_inputs(x, y)?;
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp(x[a], x[b]).then(cmp(y[a], y[b])));

    let tied_x = tied_pairs(order.iter().map(|&i| x[i]));
    let tied_xy = tied_pairs(order.iter().map(|&i| (x[i], y[i])));
    let mut ys: Vec<T> = order.iter().map(|&i| y[i]).collect();
    let discordant = sort_counting_inversions(&mut ys);
    let tied_y = tied_pairs(ys.iter().copied());

    let total = (n as u64) * (n as u64 - 1) / 2;
    let concordant = total + tied_xy - tied_x - tied_y - discordant;
    Ok(PairCounts {
        n,
        concordant,
        discordant,
    })
}

/// Kendall tau-a.
pub fn kendall<T: Real>(x: &[T], y: &[T]) -> Result<Coefficient<T>, StatsError> {
    Ok(pair_counts(x, y)?.tau_a())
}

use crate::error::{Error, Result};
use crate::special::normal_cdf;

/// Pseudo-observations `average rank / (n + 1)`, strictly inside (0, 1).
pub fn pseudo_observations(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        // Ranks i+1..=j share their average.
        let r = 0.5 * ((i + 1) + j) as f64;
        for &k in &idx[i..j] {
            out[k] = r / (n + 1) as f64;
        }
        i = j;
    }
    out
}

/// Pseudo-observations `rank / (n + 1)` with ties broken in random order.
/// For integer-valued data generated as `floor`-like maps of a latent
/// uniform this spreads each tie block back over its latent interval, so
/// tail-dependent families are not fitted to the tie clusters.
pub fn pseudo_observations_random_ties<R: rand::Rng + ?Sized>(x: &[f64], rng: &mut R) -> Vec<f64> {
    let n = x.len();
    let keys: Vec<u64> = (0..n).map(|_| rng.random()).collect();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(keys[a].cmp(&keys[b])));
    let mut out = vec![0.0; n];
    for (r, &k) in idx.iter().enumerate() {
        out[k] = (r + 1) as f64 / (n + 1) as f64;
    }
    out
}

/// Number of tied pairs within runs of equal values of a sorted slice.
fn tied_pairs<T: PartialEq>(sorted: impl Iterator<Item = T>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for v in sorted {
        if prev.as_ref() == Some(&v) {
            run += 1;
        } else {
            total += run * (run + 1) / 2;
            run = 0;
        }
        prev = Some(v);
    }
    total + run * (run + 1) / 2
}

/// Merge sort counting inversions (Knight's algorithm).
fn sort_count_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        sort_count_swaps(l, bl) + sort_count_swaps(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b in O(n log n).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::domain("kendall_tau: samples differ in length"));
    }
    if n < 2 {
        return Err(Error::size("kendall_tau needs at least 2 pairs"));
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let n1 = tied_pairs(pairs.iter().map(|p| p.0.to_bits()));
    let n3 = tied_pairs(pairs.iter().map(|p| (p.0.to_bits(), p.1.to_bits())));
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = sort_count_swaps(&mut ys, &mut buf);
    let n2 = tied_pairs(ys.iter().map(|v| v.to_bits()));
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::domain(
            "kendall_tau undefined: a margin is entirely tied",
        ));
    }
    let num = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    Ok(num / denom)
}

/// Quadratic-time tau-b by pair enumeration.
pub fn kendall_tau_naive(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return Err(Error::size("kendall_tau needs at least 2 pairs"));
    }
    let (mut s, mut tx, mut ty) = (0i64, 0i64, 0i64);
    let mut n0 = 0i64;
    for i in 0..n {
        for j in 0..i {
            n0 += 1;
            let dx = (x[i] - x[j]).partial_cmp(&0.0).unwrap() as i64;
            let dy = (y[i] - y[j]).partial_cmp(&0.0).unwrap() as i64;
            s += dx * dy;
            tx += i64::from(dx == 0);
            ty += i64::from(dy == 0);
        }
    }
    let denom = (((n0 - tx) * (n0 - ty)) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::domain(
            "kendall_tau undefined: a margin is entirely tied",
        ));
    }
    Ok(s as f64 / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauTest {
    pub tau: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub independent: bool,
}

/// Asymptotic two-sided test of independence based on Kendall's tau.
pub fn tau_independence_test(x: &[f64], y: &[f64], alpha: f64) -> Result<TauTest> {
    let n = x.len();
    if n < 10 {
        return Err(Error::size(format!(
            "independence test needs n >= 10, got {n}"
        )));
    }
    let tau = kendall_tau(x, y)?;
    let nf = n as f64;
    let statistic = tau * (9.0 * nf * (nf - 1.0) / (2.0 * (2.0 * nf + 5.0))).sqrt();
    let p_value = (2.0 * (1.0 - normal_cdf(statistic.abs()))).min(1.0);
    Ok(TauTest {
        tau,
        statistic,
        p_value,
        independent: p_value >= alpha,
    })
}

use crate::{Error, Result};

/// Largest pooled sample size for which the null distribution is enumerated.
pub const EXACT_LIMIT: usize = 20;

/// Proportion with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    pub k: usize,
    pub n: usize,
    pub p: f64,
    pub se: f64,
}

/// `p̂ = k/n`, `SE = sqrt(p̂(1-p̂)/n)`.
pub fn stat_summary(k: usize, n: usize) -> Result<Proportion> {
    if n == 0 {
        return Err(Error::Analysis("proportion of an empty sample".into()));
    }
    if k > n {
        return Err(Error::Analysis(format!(
            "count {k} exceeds sample size {n}"
        )));
    }
    let p = k as f64 / n as f64;
    Ok(Proportion {
        k,
        n,
        p,
        se: (p * (1.0 - p) / n as f64).sqrt(),
    })
}

/// Mid-ranks (1-based) of the pooled sample.
fn ranks(pooled: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut r = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && pooled[idx[j + 1]] == pooled[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = mid;
        }
        i = j + 1;
    }
    r
}

/// Two-sided Mann-Whitney U test p-value. Exact (enumerating every split of
/// the pooled mid-ranks) when `n_a + n_b <= 20`, otherwise the tie-corrected
/// normal approximation with continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Analysis(
            "Mann-Whitney test needs two non-empty samples".into(),
        ));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Analysis("Mann-Whitney test got NaN".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let r = ranks(&pooled);
    let ra: f64 = r[..na].iter().sum();
    let u = ra - (na * (na + 1)) as f64 / 2.0;
    let mean = (na * nb) as f64 / 2.0;
    let dev = (u - mean).abs();

    if na + nb <= EXACT_LIMIT {
        // rank sums of every size-na subset of the pooled ranks
        let n = na + nb;
        let (mut extreme, mut total) = (0u64, 0u64);
        let mut pick: Vec<usize> = (0..na).collect();
        let tol = 1e-9;
        loop {
            let s: f64 = pick.iter().map(|&i| r[i]).sum();
            let us = s - (na * (na + 1)) as f64 / 2.0;
            if (us - mean).abs() >= dev - tol {
                extreme += 1;
            }
            total += 1;
            // next combination in lexicographic order
            let mut i = na;
            loop {
                if i == 0 {
                    return Ok((extreme as f64 / total as f64).min(1.0));
                }
                i -= 1;
                if pick[i] < n - na + i {
                    break;
                }
            }
            pick[i] += 1;
            for j in i + 1..na {
                pick[j] = pick[j - 1] + 1;
            }
        }
    }

    let n = (na + nb) as f64;
    let mut tie = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie += t * t * t - t;
        i = j + 1;
    }
    let var = (na * nb) as f64 / 12.0 * ((n + 1.0) - tie / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = ((dev - 0.5).max(0.0)) / var.sqrt();
    Ok(libm::erfc(z / std::f64::consts::SQRT_2).min(1.0))
}

/// Median of the finite entries.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_three_by_three_is_one_tenth() {
        let p = mann_whitney_u(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]).unwrap();
        assert_eq!(p, 0.1);
        assert_eq!(
            mann_whitney_u(&[10.0, 11.0, 12.0], &[1.0, 2.0, 3.0]).unwrap(),
            0.1
        );
    }

    #[test]
    fn identical_samples_give_one() {
        let a = [3.0, 1.0, 2.0, 5.0];
        assert_eq!(mann_whitney_u(&a, &a).unwrap(), 1.0);
        let big: Vec<f64> = (0..40).map(|i| i as f64).collect();
        assert_eq!(mann_whitney_u(&big, &big).unwrap(), 1.0);
    }

    #[test]
    fn exact_matches_small_table() {
        // 4 vs 4, one overlap: U = 1, P(U <= 1) = 2/70 per tail
        let p = mann_whitney_u(&[1.0, 2.0, 3.0, 5.0], &[4.0, 6.0, 7.0, 8.0]).unwrap();
        assert!((p - 4.0 / 70.0).abs() < 1e-12, "{p}");
    }

    #[test]
    fn normal_approximation_is_close_to_exact_near_limit() {
        let a: Vec<f64> = (0..10).map(|i| i as f64 * 1.3).collect();
        let b: Vec<f64> = (0..10).map(|i| i as f64 * 1.1 + 3.0).collect();
        let exact = mann_whitney_u(&a, &b).unwrap();
        let mut a2 = a.clone();
        a2.push(100.0);
        let mut b2 = b.clone();
        b2.push(100.5);
        let approx = mann_whitney_u(&a2, &b2).unwrap();
        assert!((exact - approx).abs() < 0.1, "{exact} {approx}");
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn proportions() {
        let s = stat_summary(0, 10).unwrap();
        assert_eq!((s.p, s.se), (0.0, 0.0));
        let s = stat_summary(25, 50).unwrap();
        assert!((s.se - 0.0707).abs() < 1e-4);
        assert_eq!(stat_summary(7, 7).unwrap().p, 1.0);
        assert!(stat_summary(1, 0).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[f64::INFINITY]), None);
    }
}

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Kendall's τ-a, `(concordant − discordant) / (n(n−1)/2)`, in O(n log n)
/// (sort by `a`, count inversions of `b` with a merge sort). Tied pairs count
/// as neither concordant nor discordant.
pub fn kendall_tau<T: PartialOrd + Copy>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("kendall_tau: lengths {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument("kendall_tau needs at least two elements".into()));
    }
    let cmp = |x: &T, y: &T| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| cmp(&a[i], &a[j]).then_with(|| cmp(&b[i], &b[j])));
    let pairs = (n * (n - 1) / 2) as i64;

    // Pairs tied in a, and tied in both.
    let (mut tied_a, mut tied_ab) = (0i64, 0i64);
    let mut run_a = 1i64;
    let mut run_ab = 1i64;
    for k in 1..n {
        let (p, q) = (idx[k - 1], idx[k]);
        if a[p] == a[q] {
            run_a += 1;
            if b[p] == b[q] {
                run_ab += 1;
            } else {
                tied_ab += run_ab * (run_ab - 1) / 2;
                run_ab = 1;
            }
        } else {
            tied_a += run_a * (run_a - 1) / 2;
            tied_ab += run_ab * (run_ab - 1) / 2;
            run_a = 1;
            run_ab = 1;
        }
    }
    tied_a += run_a * (run_a - 1) / 2;
    tied_ab += run_ab * (run_ab - 1) / 2;

    let mut seq: Vec<T> = idx.iter().map(|&i| b[i]).collect();
    let mut buf = seq.clone();
    let swaps = merge_count(&mut seq, &mut buf, &cmp) as i64;

    let mut tied_b = 0i64;
    let mut run = 1i64;
    for k in 1..n {
        if seq[k - 1] == seq[k] {
            run += 1;
        } else {
            tied_b += run * (run - 1) / 2;
            run = 1;
        }
    }
    tied_b += run * (run - 1) / 2;

    let concordant_minus_discordant = pairs - tied_a - tied_b + tied_ab - 2 * swaps;
    Ok(concordant_minus_discordant as f64 / pairs as f64)
}

/// Sorts `v` and returns the number of strict inversions.
fn merge_count<T: Copy>(v: &mut [T], buf: &mut [T], cmp: &impl Fn(&T, &T) -> std::cmp::Ordering) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (lo, hi) = v.split_at_mut(mid);
        let (blo, bhi) = buf.split_at_mut(mid);
        merge_count(lo, blo, cmp) + merge_count(hi, bhi, cmp)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if cmp(&v[j], &v[i]).is_lt() {
            buf[k] = v[j];
            count += (mid - i) as u64;
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
    count
}

/// Direct O(n²) Kendall τ-a.
pub fn kendall_tau_quadratic<T: PartialOrd + Copy>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("kendall_tau: lengths {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument("kendall_tau needs at least two elements".into()));
    }
    let sign = |x: &T, y: &T| match x.partial_cmp(y) {
        Some(std::cmp::Ordering::Less) => -1i64,
        Some(std::cmp::Ordering::Greater) => 1,
        _ => 0,
    };
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            s += sign(&a[i], &a[j]) * sign(&b[i], &b[j]);
        }
    }
    Ok(s as f64 / (n * (n - 1) / 2) as f64)
}

/// Sample Pearson correlation with a two-sided p-value from Student's t with `n − 2` dof.
pub fn pearson_rho(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("pearson: lengths {} and {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidArgument("pearson needs at least three points".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("y"));
    }
    let rho = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let dof = (n - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (dof / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok((rho, p))
}

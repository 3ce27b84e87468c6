//! Dense row-major helpers for symmetric positive-definite systems.

/// In-place lower Cholesky factor of the `n`×`n` row-major matrix `a`. The
/// strict upper triangle is zeroed. On failure returns the 1-based order of
/// the first leading minor that is not positive definite.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<(), usize> {
    debug_assert_eq!(a.len(), n * n);
    for i in 0..n {
        for j in 0..=i {
            let (ri, rj) = (i * n, j * n);
            let dot: f64 = a[ri..ri + j].iter().zip(&a[rj..rj + j]).map(|(x, y)| x * y).sum();
            let v = a[ri + j] - dot;
            if i == j {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(i + 1);
                }
                a[ri + i] = v.sqrt();
            } else {
                a[ri + j] = v / a[rj + j];
            }
        }
        for j in i + 1..n {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L x = b` in place.
pub(crate) fn solve_lower(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let dot: f64 = row.iter().zip(&b[..i]).map(|(x, y)| x * y).sum();
        b[i] = (b[i] - dot) / l[i * n + i];
    }
}

/// Solves `Lᵀ x = b` in place.
pub(crate) fn solve_lower_transpose(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        b[i] /= l[i * n + i];
        let bi = b[i];
        for k in 0..i {
            b[k] -= l[i * n + k] * bi;
        }
    }
}

/// `(L Lᵀ)⁻¹ b`.
pub(crate) fn cho_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    solve_lower(l, n, &mut x);
    solve_lower_transpose(l, n, &mut x);
    x
}

/// Full `(L Lᵀ)⁻¹`, row-major.
pub(crate) fn cho_inverse(l: &[f64], n: usize) -> Vec<f64> {
    // rows of `inv_t` are the columns of L⁻¹ (upper-triangular storage)
    let mut inv_t = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|c| *c = 0.0);
        col[j] = 1.0 / l[j * n + j];
        for i in j + 1..n {
            let row = &l[i * n + j..i * n + i];
            let dot: f64 = row.iter().zip(&col[j..i]).map(|(x, y)| x * y).sum();
            col[i] = -dot / l[i * n + i];
        }
        inv_t[j * n + j..(j + 1) * n].copy_from_slice(&col[j..]);
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            // entries of column i of L⁻¹ live at k >= i
            let start = i.max(j);
            let dot: f64 = inv_t[i * n + start..(i + 1) * n]
                .iter()
                .zip(&inv_t[j * n + start..(j + 1) * n])
                .map(|(x, y)| x * y)
                .sum();
            out[i * n + j] = dot;
            out[j * n + i] = dot;
        }
    }
    out
}

pub(crate) fn log_det_from_cholesky(l: &[f64], n: usize) -> f64 {
    2.0 * (0..n).map(|i| l[i * n + i].ln()).sum::<f64>()
}

//! Thin strided wrappers over `matrixmultiply::dgemm`. All matrices are
//! row-major slices.

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows as isize - 1) * rs + (cols as isize - 1) * cs + 1
        }
    };
    assert!(a.len() as isize >= span(m, k, rsa, csa));
    assert!(b.len() as isize >= span(k, n, rsb, csb));
    // SAFETY: extents checked above; c does not alias a or b (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c (rows×r) = a (rows×k) · wᵀ + beta·c`, with `w` shaped `r×k`.
pub(crate) fn mul_abt(rows: usize, k: usize, r: usize, a: &[f64], w: &[f64], beta: f64, c: &mut [f64]) {
    gemm(rows, k, r, a, k as isize, 1, w, 1, k as isize, beta, c);
}

/// `c (rows×k) = a (rows×r) · w + beta·c`, with `w` shaped `r×k`.
pub(crate) fn mul_ab(rows: usize, r: usize, k: usize, a: &[f64], w: &[f64], beta: f64, c: &mut [f64]) {
    gemm(rows, r, k, a, r as isize, 1, w, k as isize, 1, beta, c);
}

/// `c (r×k) += aᵀ · u`, with `a` shaped `rows×r` and `u` shaped `rows×k`.
pub(crate) fn acc_atb(rows: usize, r: usize, k: usize, a: &[f64], u: &[f64], c: &mut [f64]) {
    gemm(r, rows, k, a, 1, r as isize, u, k as isize, 1, 1.0, c);
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(
        m: usize,
        k: usize,
        n: usize,
        a: impl Fn(usize, usize) -> f64,
        b: impl Fn(usize, usize) -> f64,
    ) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a(i, p) * b(p, j)).sum();
            }
        }
        c
    }

    #[test]
    fn products_match_naive() {
        let (rows, k, r) = (3, 4, 5);
        let a: Vec<f64> = (0..rows * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let w: Vec<f64> = (0..r * k).map(|i| (i as f64 * 0.11).cos()).collect();
        let g: Vec<f64> = (0..rows * r).map(|i| (i as f64 * 0.23).sin()).collect();

        let mut c = vec![0.0; rows * r];
        mul_abt(rows, k, r, &a, &w, 0.0, &mut c);
        let want = naive(rows, k, r, |i, p| a[i * k + p], |p, j| w[j * k + p]);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        let mut d = vec![0.0; rows * k];
        mul_ab(rows, r, k, &g, &w, 0.0, &mut d);
        let want = naive(rows, r, k, |i, p| g[i * r + p], |p, j| w[p * k + j]);
        for (x, y) in d.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        let mut e = vec![1.0; r * k];
        acc_atb(rows, r, k, &g, &a, &mut e);
        let want = naive(r, rows, k, |i, p| g[p * r + i], |p, j| a[p * k + j]);
        for (x, y) in e.iter().zip(&want) {
            assert!((x - 1.0 - y).abs() < 1e-12);
        }
    }
}

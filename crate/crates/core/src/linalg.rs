use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;

/// Relative pivot tolerance below which a column counts as aliased.
pub const ALIAS_TOL: f64 = 1e-10;

/// Outcome of a Cholesky factorisation of a symmetric positive
/// semi-definite matrix.
pub enum Cholesky {
    Factor(Vec<f64>),
    /// Indices of columns that are linear combinations of earlier ones.
    Aliased(Vec<usize>),
}

/// Factorises the row-major `p x p` matrix `a` as `L L^T`.
pub fn cholesky(a: &[f64], p: usize) -> Cholesky {
    let mut l = vec![0.0; p * p];
    let mut aliased = Vec::new();
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        let scale = a[j * p + j].abs();
        if scale == 0.0 || d <= ALIAS_TOL * scale {
            aliased.push(j);
            // Keep going so every aliased column is reported.
            l[j * p + j] = 1.0;
            continue;
        }
        let djj = sqrt(d);
        l[j * p + j] = djj;
        for i in (j + 1)..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / djj;
        }
    }
    if aliased.is_empty() {
        Cholesky::Factor(l)
    } else {
        Cholesky::Aliased(aliased)
    }
}

/// Solves `L L^T x = b` given the lower factor.
pub fn cholesky_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in (i + 1)..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    x
}

/// Forms `X^T W X` and `X^T W z` for a row-major `n x p` design.
pub fn weighted_normal_equations(x: &[f64], p: usize, w: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut xtwx = vec![0.0; p * p];
    let mut xtwz = vec![0.0; p];
    for (i, (&wi, &zi)) in w.iter().zip(z).enumerate() {
        let row = &x[i * p..(i + 1) * p];
        for a in 0..p {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            let wa = wi * ra;
            xtwz[a] += wa * zi;
            for b in 0..=a {
                xtwx[a * p + b] += wa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtwx[b * p + a] = xtwx[a * p + b];
        }
    }
    (xtwx, xtwz)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // [[4, 2], [2, 3]] x = [2, 1] -> x = [0.5, 0]
        let a = [4.0, 2.0, 2.0, 3.0];
        let Cholesky::Factor(l) = cholesky(&a, 2) else {
            panic!("unexpected aliasing")
        };
        let x = cholesky_solve(&l, 2, &[2.0, 1.0]);
        assert!((x[0] - 0.5).abs() < 1e-14 && x[1].abs() < 1e-14);
    }

    #[test]
    fn reports_aliased_column() {
        // third column = first + second
        let x = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0, 3.0];
        let (xtx, _) = weighted_normal_equations(&x, 3, &[1.0; 4], &[0.0; 4]);
        match cholesky(&xtx, 3) {
            Cholesky::Aliased(cols) => assert_eq!(cols, vec![2]),
            Cholesky::Factor(_) => panic!("aliasing not detected"),
        }
    }
}

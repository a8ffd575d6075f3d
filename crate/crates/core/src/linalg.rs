//! Dense symmetric kernels: Gram accumulation, blocked Cholesky and
//! multi right-hand-side triangular solves.
//!
//! Block sizes are constants, so every output entry is produced by the same
//! sequence of floating-point operations no matter how many worker threads
//! rayon schedules. Only the lower triangle of symmetric inputs is read.

use ndarray::linalg::general_mat_mul;
use ndarray::parallel::prelude::*;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::error::{KldaError, Result};

const BLOCK: usize = 128;

/// `c <- beta * c + alpha * x^T x`, computed on the lower block triangle and
/// mirrored, so the result is exactly symmetric.
pub fn gram_update(c: &mut Array2<f64>, x: ArrayView2<'_, f64>, alpha: f64, beta: f64) {
    let k = x.ncols();
    assert_eq!(c.dim(), (k, k), "gram target must be k x k");
    let xt = x.t();
    c.axis_chunks_iter_mut(Axis(0), BLOCK)
        .into_par_iter()
        .enumerate()
        .for_each(|(bi, mut rows)| {
            let r0 = bi * BLOCK;
            let r1 = r0 + rows.nrows();
            let lhs = xt.slice(s![r0..r1, ..]);
            let rhs = x.slice(s![.., ..r1]);
            let mut target = rows.slice_mut(s![.., ..r1]);
            general_mat_mul(alpha, &lhs, &rhs, beta, &mut target);
        });
    mirror_lower(c);
}

/// Copies the strict lower triangle onto the upper triangle.
pub fn mirror_lower(c: &mut Array2<f64>) {
    let n = c.nrows();
    for i in 0..n {
        for j in 0..i {
            c[[j, i]] = c[[i, j]];
        }
    }
}

pub fn max_asymmetry(c: &Array2<f64>) -> f64 {
    let n = c.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((c[[i, j]] - c[[j, i]]).abs());
        }
    }
    worst
}

/// Lower Cholesky factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    /// Factors the symmetric positive-definite matrix whose lower triangle is
    /// stored in `a`. The strict upper triangle is ignored and overwritten.
    pub fn factor(mut a: Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(KldaError::Dimension {
                expected: n,
                found: a.ncols(),
            });
        }
        let mut k0 = 0;
        while k0 < n {
            let k1 = (k0 + BLOCK).min(n);
            factor_diagonal_block(&mut a, k0, k1)?;
            if k1 < n {
                let (top, bottom) = a.view_mut().split_at(Axis(0), k1);
                let l11 = top.slice(s![k0..k1, k0..k1]);
                let (mut left, right) = bottom.split_at(Axis(1), k1);
                solve_panel(l11, left.slice_mut(s![.., k0..k1]));
                let l21 = left.slice(s![.., k0..k1]);
                update_trailing(l21, right);
            }
            k0 = k1;
        }
        for i in 0..n {
            for j in i + 1..n {
                a[[i, j]] = 0.0;
            }
        }
        Ok(Self { l: a })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.l
    }

    /// Solves `A X = B` for all columns of `b` using the single factorization.
    pub fn solve(&self, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let n = self.dim();
        if b.nrows() != n {
            return Err(KldaError::Dimension {
                expected: n,
                found: b.nrows(),
            });
        }
        let mut x = b.to_owned();
        self.forward(&mut x);
        self.backward(&mut x);
        Ok(x)
    }

    /// In place `L Y = B`.
    fn forward(&self, x: &mut Array2<f64>) {
        let n = self.dim();
        let l = &self.l;
        let mut k0 = 0;
        while k0 < n {
            let k1 = (k0 + BLOCK).min(n);
            if k0 > 0 {
                let (solved, mut rest) = x.view_mut().split_at(Axis(0), k0);
                let mut blk = rest.slice_mut(s![..k1 - k0, ..]);
                general_mat_mul(-1.0, &l.slice(s![k0..k1, ..k0]), &solved, 1.0, &mut blk);
            }
            for i in k0..k1 {
                for j in k0..i {
                    let lij = l[[i, j]];
                    let (head, mut tail) = x.view_mut().split_at(Axis(0), i);
                    tail.row_mut(0).scaled_add(-lij, &head.row(j));
                }
                let inv = 1.0 / l[[i, i]];
                x.row_mut(i).mapv_inplace(|v| v * inv);
            }
            k0 = k1;
        }
    }

    /// In place `L^T X = Y`.
    fn backward(&self, x: &mut Array2<f64>) {
        let n = self.dim();
        let l = &self.l;
        let mut k1 = n;
        while k1 > 0 {
            let k0 = k1.saturating_sub(BLOCK);
            if k1 < n {
                let (mut head, solved) = x.view_mut().split_at(Axis(0), k1);
                let mut blk = head.slice_mut(s![k0.., ..]);
                general_mat_mul(-1.0, &l.slice(s![k1.., k0..k1]).t(), &solved, 1.0, &mut blk);
            }
            for i in (k0..k1).rev() {
                for j in i + 1..k1 {
                    let lji = l[[j, i]];
                    let (mut head, tail) = x.view_mut().split_at(Axis(0), j);
                    head.row_mut(i).scaled_add(-lji, &tail.row(0));
                }
                let inv = 1.0 / l[[i, i]];
                x.row_mut(i).mapv_inplace(|v| v * inv);
            }
            k1 = k0;
        }
    }
}

fn factor_diagonal_block(a: &mut Array2<f64>, k0: usize, k1: usize) -> Result<()> {
    for j in k0..k1 {
        let mut d = a[[j, j]];
        for p in k0..j {
            d -= a[[j, p]] * a[[j, p]];
        }
        if !d.is_finite() || d <= 0.0 {
            return Err(KldaError::Singular { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        a[[j, j]] = ljj;
        for i in j + 1..k1 {
            let mut v = a[[i, j]];
            for p in k0..j {
                v -= a[[i, p]] * a[[j, p]];
            }
            a[[i, j]] = v / ljj;
        }
    }
    Ok(())
}

/// Solves `X L11^T = A21` row by row, overwriting `panel`.
fn solve_panel(l11: ArrayView2<'_, f64>, mut panel: ArrayViewMut2<'_, f64>) {
    let b = l11.nrows();
    panel
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .for_each(|mut row| {
            for j in 0..b {
                let mut v = row[j];
                for p in 0..j {
                    v -= row[p] * l11[[j, p]];
                }
                row[j] = v / l11[[j, j]];
            }
        });
}

/// `A22 <- A22 - L21 L21^T` on the lower block triangle.
fn update_trailing(l21: ArrayView2<'_, f64>, mut a22: ArrayViewMut2<'_, f64>) {
    a22.axis_chunks_iter_mut(Axis(0), BLOCK)
        .into_par_iter()
        .enumerate()
        .for_each(|(bi, mut rows)| {
            let r0 = bi * BLOCK;
            let r1 = r0 + rows.nrows();
            let lhs = l21.slice(s![r0..r1, ..]);
            let rhs = l21.slice(s![..r1, ..]);
            let mut target = rows.slice_mut(s![.., ..r1]);
            general_mat_mul(-1.0, &lhs, &rhs.t(), 1.0, &mut target);
        });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededStream;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut s = SeededStream::new(seed);
        Array2::from_shape_simple_fn((rows, cols), || s.standard_normal())
    }

    fn spd(n: usize, seed: u64) -> Array2<f64> {
        let x = random(n + 5, n, seed);
        let mut a = x.t().dot(&x);
        for i in 0..n {
            a[[i, i]] += 1.0;
        }
        a
    }

    #[test]
    fn gram_matches_naive() {
        let x = random(37, 300, 1);
        let mut c = Array2::zeros((300, 300));
        gram_update(&mut c, x.view(), 0.5, 0.0);
        for i in 0..300 {
            for j in 0..300 {
                let naive: f64 = (0..37).map(|r| x[[r, i]] * x[[r, j]]).sum::<f64>() * 0.5;
                assert!((c[[i, j]] - naive).abs() <= 1e-12 * (1.0 + naive.abs()));
            }
        }
        assert_eq!(max_asymmetry(&c), 0.0);
    }

    #[test]
    fn cholesky_reconstructs_across_block_boundaries() {
        for &n in &[1usize, 7, 128, 129, 300] {
            let a = spd(n, n as u64);
            let ch = Cholesky::factor(a.clone()).unwrap();
            let l = ch.lower();
            let back = l.dot(&l.t());
            let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in back.iter().zip(a.iter()) {
                assert!((x - y).abs() <= 1e-12 * scale, "n={n}");
            }
        }
    }

    #[test]
    fn solve_residual_small() {
        let n = 260;
        let a = spd(n, 9);
        let b = random(n, 5, 10);
        let x = Cholesky::factor(a.clone())
            .unwrap()
            .solve(b.view())
            .unwrap();
        let r = a.dot(&x) - &b;
        for m in 0..5 {
            let rn = r.column(m).dot(&r.column(m)).sqrt();
            let bn = b.column(m).dot(&b.column(m)).sqrt();
            assert!(rn <= 1e-10 * bn, "residual {rn}");
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut a = Array2::<f64>::eye(3);
        a[[2, 2]] = -1.0;
        assert!(matches!(
            Cholesky::factor(a),
            Err(KldaError::Singular { pivot: 2, .. })
        ));
    }

    #[test]
    fn upper_triangle_is_ignored() {
        let a = spd(20, 4);
        let mut garbage = a.clone();
        for i in 0..20 {
            for j in i + 1..20 {
                garbage[[i, j]] = 1e9;
            }
        }
        let l1 = Cholesky::factor(a).unwrap();
        let l2 = Cholesky::factor(garbage).unwrap();
        assert_eq!(l1.lower(), l2.lower());
    }
}

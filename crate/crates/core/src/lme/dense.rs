//! Row-major dense helpers for the small q×q and p×p systems of the
//! profiled fit.

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            a: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }
}

/// In-place lower Cholesky factor; the strict upper triangle is zeroed.
///
/// Fails at the first pivot `d_jj <= rel_tol * a_jj` (with the original
/// diagonal), returning that column.
pub fn cholesky_in_place(m: &mut Mat, rel_tol: f64) -> Result<(), usize> {
    let n = m.n;
    for j in 0..n {
        let orig = m.at(j, j);
        let mut d = orig;
        for k in 0..j {
            let l = m.at(j, k);
            d -= l * l;
        }
        if !(d > rel_tol * orig.abs()) || !(d > 0.0) {
            return Err(j);
        }
        let d = d.sqrt();
        *m.at_mut(j, j) = d;
        for i in (j + 1)..n {
            let mut s = m.at(i, j);
            for k in 0..j {
                s -= m.at(i, k) * m.at(j, k);
            }
            *m.at_mut(i, j) = s / d;
        }
        for k in (j + 1)..n {
            *m.at_mut(j, k) = 0.0;
        }
    }
    Ok(())
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub fn forward_solve(l: &Mat, b: &mut [f64]) {
    for i in 0..l.n {
        let row = &l.a[i * l.n..i * l.n + i];
        let s: f64 = row.iter().zip(&b[..i]).map(|(x, y)| x * y).sum();
        b[i] = (b[i] - s) / l.at(i, i);
    }
}

/// Solves `L^T x = b` in place for lower-triangular `L`.
pub fn backward_solve_transposed(l: &Mat, b: &mut [f64]) {
    for i in (0..l.n).rev() {
        let mut s = b[i];
        for k in (i + 1)..l.n {
            s -= l.at(k, i) * b[k];
        }
        b[i] = s / l.at(i, i);
    }
}

/// `(L L^T)^{-1}` from its lower Cholesky factor.
pub fn inverse_from_cholesky(l: &Mat) -> Mat {
    let n = l.n;
    let mut inv = Mat::zeros(n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        forward_solve(l, &mut e);
        backward_solve_transposed(l, &mut e);
        for i in 0..n {
            *inv.at_mut(i, j) = e[i];
        }
    }
    inv
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

//! Dense LU factorization with partial pivoting.

/// Row-major square matrix.
#[derive(Debug, Clone)]
pub(crate) struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.n + col] += v;
    }
}

/// Solve `a·x = b` in place; `b` receives the solution. On a zero pivot the
/// offending column is returned.
pub(crate) fn solve(a: &mut Matrix, b: &mut [f64]) -> Result<(), usize> {
    let n = a.n;
    let m = &mut a.data;
    for k in 0..n {
        let mut pivot = k;
        let mut best = m[k * n + k].abs();
        for r in k + 1..n {
            let v = m[r * n + k].abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if !(best > 1e-300) || !best.is_finite() {
            return Err(k);
        }
        if pivot != k {
            for c in 0..n {
                m.swap(k * n + c, pivot * n + c);
            }
            b.swap(k, pivot);
        }
        let diag = m[k * n + k];
        for r in k + 1..n {
            let factor = m[r * n + k] / diag;
            if factor == 0.0 {
                continue;
            }
            m[r * n + k] = 0.0;
            for c in k + 1..n {
                m[r * n + c] -= factor * m[k * n + c];
            }
            b[r] -= factor * b[k];
        }
    }
    for k in (0..n).rev() {
        let mut acc = b[k];
        for c in k + 1..n {
            acc -= m[k * n + c] * b[c];
        }
        b[k] = acc / m[k * n + k];
    }
    Ok(())
}

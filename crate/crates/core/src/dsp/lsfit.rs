use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 5;

/// Third-order fit x̂(t) = a·t³ + b·t² + c·t + d in the caller's time variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub residual_sum: f64,
    pub t_window: (f64, f64),
}

/// Polynomial fit of arbitrary order, coefficients in ascending powers of t.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit {
    pub coeffs: Vec<f64>,
    pub residual_sum: f64,
    pub t_window: (f64, f64),
}

impl PolyFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
}

/// Factorized normal equations for a fixed set of abscissae, so several
/// ordinate vectors (X and P) can be fitted against the same times.
#[derive(Debug, Clone)]
pub struct NormalSolver {
    order: usize,
    /// Abscissae as given (already centred and scaled by the caller).
    u: Vec<f64>,
    lu: [[f64; MAX_ORDER + 1]; MAX_ORDER + 1],
    piv: [usize; MAX_ORDER + 1],
}

impl NormalSolver {
    pub fn new(u: &[f64], order: usize) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::InvalidInput(format!("fit order {order} outside 1..={MAX_ORDER}")));
        }
        if u.len() < 5 || u.len() <= order {
            return Err(Error::InvalidInput(format!("need at least 5 and more than {order} samples")));
        }
        let dim = order + 1;
        let mut sums = [0.0; 2 * MAX_ORDER + 1];
        for &t in u {
            let mut pw = 1.0;
            for s in sums.iter_mut().take(2 * order + 1) {
                *s += pw;
                pw *= t;
            }
        }
        let mut lu = [[0.0; MAX_ORDER + 1]; MAX_ORDER + 1];
        for (j, row) in lu.iter_mut().enumerate().take(dim) {
            for (k, v) in row.iter_mut().enumerate().take(dim) {
                *v = sums[j + k];
            }
        }
        let scale = (0..dim).map(|j| lu[j][j].abs()).fold(0.0, f64::max);
        let mut piv = [0usize; MAX_ORDER + 1];
        for col in 0..dim {
            let mut best = col;
            for r in col + 1..dim {
                if lu[r][col].abs() > lu[best][col].abs() {
                    best = r;
                }
            }
            if lu[best][col].abs() <= 1e-13 * scale {
                return Err(Error::SingularFit);
            }
            lu.swap(col, best);
            piv[col] = best;
            for r in col + 1..dim {
                let f = lu[r][col] / lu[col][col];
                lu[r][col] = f;
                for k in col + 1..dim {
                    lu[r][k] -= f * lu[col][k];
                }
            }
        }
        Ok(NormalSolver { order, u: u.to_vec(), lu, piv })
    }

    /// Coefficients (ascending powers of u) minimising Σ(x_i − x̂(u_i))².
    pub fn solve(&self, x: &[f64]) -> [f64; MAX_ORDER + 1] {
        let dim = self.order + 1;
        let mut rhs = [0.0; MAX_ORDER + 1];
        for (&t, &v) in self.u.iter().zip(x) {
            let mut pw = v;
            for r in rhs.iter_mut().take(dim) {
                *r += pw;
                pw *= t;
            }
        }
        for col in 0..dim {
            rhs.swap(col, self.piv[col]);
        }
        for col in 0..dim {
            for r in col + 1..dim {
                rhs[r] -= self.lu[r][col] * rhs[col];
            }
        }
        for col in (0..dim).rev() {
            let mut v = rhs[col];
            for k in col + 1..dim {
                v -= self.lu[col][k] * rhs[k];
            }
            rhs[col] = v / self.lu[col][col];
        }
        rhs
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Least-squares polynomial of the given order through (times, samples).
pub fn ls_fit_order(samples: &[f64], times: &[f64], order: usize) -> Result<PolyFit> {
    if samples.len() != times.len() {
        return Err(Error::InvalidInput("samples and times differ in length".into()));
    }
    if times.is_empty() {
        return Err(Error::InvalidInput("empty fit window".into()));
    }
    let lo = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    if !(half > 0.0) {
        return Err(Error::SingularFit);
    }
    let u: Vec<f64> = times.iter().map(|t| (t - centre) / half).collect();
    let solver = NormalSolver::new(&u, order)?;
    let cu = solver.solve(samples);
    let residual_sum = u
        .iter()
        .zip(samples)
        .map(|(&t, &x)| {
            let fit = cu[..=order].iter().rev().fold(0.0, |acc, c| acc * t + c);
            (x - fit).powi(2)
        })
        .sum();
    // Expand Σ c_j ((t − centre)/half)^j into powers of t.
    let mut coeffs = vec![0.0; order + 1];
    for (j, &c) in cu.iter().enumerate().take(order + 1) {
        let scaled = c / half.powi(j as i32);
        for (m, slot) in coeffs.iter_mut().enumerate().take(j + 1) {
            *slot += scaled * binomial(j, m) * (-centre).powi((j - m) as i32);
        }
    }
    Ok(PolyFit { coeffs, residual_sum, t_window: (lo, hi) })
}

/// Cubic least-squares fit of one pulse.
pub fn ls_fit_pulse(samples: &[f64], times: &[f64]) -> Result<CubicFit> {
    let f = ls_fit_order(samples, times, 3)?;
    Ok(CubicFit {
        a: f.coeffs[3],
        b: f.coeffs[2],
        c: f.coeffs[1],
        d: f.coeffs[0],
        residual_sum: f.residual_sum,
        t_window: f.t_window,
    })
}

/// Evaluate the fitted cubic, typically at the nominal pulse centre.
pub fn resample_pulse(fit: &CubicFit, t_eval: f64) -> f64 {
    ((fit.a * t_eval + fit.b) * t_eval + fit.c) * t_eval + fit.d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn exact_cubic_recovered() {
        let t: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let x: Vec<f64> = t.iter().map(|t| 2.0 * t * t * t - t + 5.0).collect();
        let f = ls_fit_pulse(&x, &t).unwrap();
        for (got, want) in [(f.a, 2.0), (f.b, 0.0), (f.c, -1.0), (f.d, 5.0)] {
            assert!((got - want).abs() < 1e-9, "{f:?}");
        }
        assert!(f.residual_sum < 1e-18);
        assert!((resample_pulse(&f, 5.5) - (2.0 * 5.5f64.powi(3) - 5.5 + 5.0)).abs() < 1e-9);
    }

    #[test]
    fn constant_samples() {
        let t: Vec<f64> = (0..10).map(|v| v as f64 * 1e-9).collect();
        let f = ls_fit_pulse(&[0.7; 10], &t).unwrap();
        assert!((f.d - 0.7).abs() < 1e-12);
        assert!(f.a.abs() * 1e-27 < 1e-12 && f.b.abs() * 1e-18 < 1e-12 && f.c.abs() * 1e-9 < 1e-12);
    }

    #[test]
    fn degenerate_times_are_singular() {
        assert!(matches!(ls_fit_pulse(&[1.0; 10], &[3.0; 10]), Err(Error::SingularFit)));
        let t = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        assert!(matches!(ls_fit_pulse(&[1.0; 10], &t), Err(Error::SingularFit)));
        assert!(ls_fit_pulse(&[1.0; 4], &[0.0, 1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn higher_order_never_fits_worse() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let t: Vec<f64> = (0..10).map(|i| i as f64 + rng.gen_range(-0.3..0.3)).collect();
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let q: Vec<f64> = (1..=5).map(|o| ls_fit_order(&x, &t, o).unwrap().residual_sum).collect();
            for w in q.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-10) + 1e-14);
            }
        }
    }
}

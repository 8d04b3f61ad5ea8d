//! Derivative-free minimization: Nelder–Mead on an unconstrained
//! coordinate, with a sine transform to honour box bounds.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("empty parameter vector")]
    Empty,
    #[error("bounds for coordinate {index} are invalid: [{lo}, {hi}]")]
    InvalidBounds { index: usize, lo: f64, hi: f64 },
    #[error("start value {value} of coordinate {index} is outside [{lo}, {hi}]")]
    StartOutOfBounds {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Initial simplex edge along each coordinate.
    pub step: f64,
    /// Stop once every vertex lies within `x_tol` of the best one (max norm).
    pub x_tol: f64,
    /// ... and the objective spread is below `f_tol_rel * |f_best| + f_tol_abs`.
    pub f_tol_rel: f64,
    pub f_tol_abs: f64,
    pub max_iter: usize,
}

impl NelderMeadOptions {
    pub fn for_dimension(n: usize) -> Self {
        Self {
            step: 0.05,
            x_tol: 1e-7,
            f_tol_rel: 1e-10,
            f_tol_abs: 1e-300,
            max_iter: 5000 * n.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Unbounded Nelder–Mead with the standard coefficients (reflection 1,
/// expansion 2, contraction 1/2, shrink 1/2). The start point is a vertex
/// of the initial simplex, so the result is never worse than `x0`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Result<Minimum, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return Err(OptimError::Empty);
    }
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();
    loop {
        // stable sort keeps ties deterministic
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let f_spread = values[worst] - values[best];
        let x_spread = simplex
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if x_spread <= opts.x_tol
            && (f_spread <= opts.f_tol_rel * values[best].abs() + opts.f_tol_abs
                || !f_spread.is_finite())
        {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                *c += x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= n as f64);
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < values[best] {
            let xe = along(2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second_worst] {
            simplex[worst] = xr;
            values[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[worst] {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < values[worst].min(fr) {
            simplex[worst] = xc;
            values[worst] = fc;
            continue;
        }
        // shrink towards the best vertex
        let anchor = simplex[best].clone();
        for &i in &order[1..] {
            for (x, a) in simplex[i].iter_mut().zip(&anchor) {
                *x = a + 0.5 * (*x - a);
            }
            values[i] = eval(&simplex[i]);
        }
    }
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let best = order[0];
    Ok(Minimum {
        x: simplex[best].clone(),
        f: values[best],
        iterations,
        evaluations,
        converged,
    })
}

/// Maps an unconstrained `z` onto `[lo, hi]` by
/// `x = lo + (hi - lo) (sin z + 1) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxTransform {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxTransform {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, OptimError> {
        assert_eq!(lo.len(), hi.len(), "bound vectors differ in length");
        for (index, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(OptimError::InvalidBounds { index, lo: l, hi: h });
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn to_bounded(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(z, (l, h))| (l + (h - l) * (z.sin() + 1.0) / 2.0).clamp(*l, *h))
            .collect()
    }

    pub fn to_free(&self, x: &[f64]) -> Result<Vec<f64>, OptimError> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .enumerate()
            .map(|(index, (&value, (&lo, &hi)))| {
                if !(lo..=hi).contains(&value) {
                    return Err(OptimError::StartOutOfBounds { index, value, lo, hi });
                }
                let u = (2.0 * (value - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0);
                Ok(u.asin())
            })
            .collect()
    }
}

/// Nelder–Mead restricted to the box `[lo, hi]`. Returns the minimizer in
/// the original coordinates.
pub fn minimize_bounded<F>(
    mut f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOptions,
) -> Result<Minimum, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    let tr = BoxTransform::new(lo.to_vec(), hi.to_vec())?;
    let z0 = tr.to_free(x0)?;
    // the transform does not round-trip exactly; keep the start point exact
    let map = |z: &[f64]| if z == z0.as_slice() { x0.to_vec() } else { tr.to_bounded(z) };
    let mut m = nelder_mead(|z| f(&map(z)), &z0, opts)?;
    m.x = map(&m.x);
    Ok(m)
}

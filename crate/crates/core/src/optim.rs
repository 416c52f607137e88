//! Box-constrained quasi-Newton minimizer.
//!
//! BFGS on the free variables with a projected backtracking line search,
//! switching to damped Newton steps on a finite-difference Hessian once the
//! iterate is close to a stationary point or BFGS stalls.

use nalgebra::{DMatrix, DVector};

/// Objective in the unconstrained optimizer coordinates.
pub(crate) trait Problem {
    fn dim(&self) -> usize;
    /// Objective value and gradient, or `None` where undefined.
    fn eval(&self, u: &[f64]) -> Option<(f64, Vec<f64>)>;
    /// Per-coordinate factors turning `∂f/∂u` into the gradient in the
    /// caller's natural parameterization (used for the stopping rule).
    fn grad_scale(&self, u: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Options {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub param_tol: f64,
    /// Natural-gradient size below which Newton steps take over.
    pub newton_switch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub u: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Largest free natural-scale gradient component at `u`.
    pub grad_norm: f64,
}

impl Outcome {
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::GradientTolerance | Termination::StepTolerance
        )
    }
}

pub(crate) struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    fn project(&self, u: &mut [f64]) {
        for ((v, lo), hi) in u.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Variables not held at a bound by the sign of the gradient.
    fn free(&self, u: &[f64], g: &[f64]) -> Vec<bool> {
        u.iter()
            .zip(g)
            .enumerate()
            .map(|(i, (&x, &gi))| !((x <= self.lower[i] && gi > 0.0) || (x >= self.upper[i] && gi < 0.0)))
            .collect()
    }
}

fn natural_norm<P: Problem>(p: &P, u: &[f64], g: &[f64], free: &[bool]) -> f64 {
    let scale = p.grad_scale(u);
    g.iter()
        .zip(&scale)
        .zip(free)
        .filter(|(_, &f)| f)
        .map(|((gi, s), _)| (gi * s).abs())
        .fold(0.0, f64::max)
}

/// Central-difference Hessian of the analytic gradient, symmetrized.
pub(crate) fn fd_hessian<P: Problem>(p: &P, u: &[f64], rel_step: f64) -> Option<DMatrix<f64>> {
    let n = u.len();
    let mut h = DMatrix::zeros(n, n);
    let mut x = u.to_vec();
    for j in 0..n {
        let step = rel_step * (1.0 + u[j].abs());
        x[j] = u[j] + step;
        let (_, gp) = p.eval(&x)?;
        x[j] = u[j] - step;
        let (_, gm) = p.eval(&x)?;
        x[j] = u[j];
        for i in 0..n {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    Some((&h + h.transpose()) * 0.5)
}

struct State {
    u: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Backtracking Armijo search along the projected path `P(u + α·dir)`.
fn line_search<P: Problem>(p: &P, bounds: &Bounds, s: &State, dir: &[f64]) -> Option<State> {
    let mut alpha = 1.0;
    for _ in 0..60 {
        let mut trial: Vec<f64> = s.u.iter().zip(dir).map(|(u, d)| u + alpha * d).collect();
        bounds.project(&mut trial);
        let decrease: f64 =
            s.g.iter()
                .zip(trial.iter().zip(&s.u))
                .map(|(g, (t, u))| g * (t - u))
                .sum();
        if decrease < 0.0 {
            if let Some((f, g)) = p.eval(&trial) {
                if f.is_finite() && f <= s.f + 1e-4 * decrease {
                    return Some(State { u: trial, f, g });
                }
            }
        } else if decrease == 0.0 {
            return None;
        }
        alpha *= 0.5;
    }
    None
}

fn newton_direction(h: &DMatrix<f64>, g: &[f64], free: &[bool]) -> Option<Vec<f64>> {
    let idx: Vec<usize> = (0..g.len()).filter(|&i| free[i]).collect();
    if idx.is_empty() {
        return None;
    }
    let m = idx.len();
    let sub = DMatrix::from_fn(m, m, |a, b| h[(idx[a], idx[b])]);
    let rhs = DVector::from_iterator(m, idx.iter().map(|&i| -g[i]));
    let scale = sub.diagonal().iter().map(|d| d.abs()).fold(0.0, f64::max).max(1e-300);
    let mut damping = 0.0;
    for _ in 0..30 {
        let mut a = sub.clone();
        for k in 0..m {
            a[(k, k)] += damping;
        }
        if let Some(ch) = a.cholesky() {
            let step = ch.solve(&rhs);
            let mut dir = vec![0.0; g.len()];
            for (k, &i) in idx.iter().enumerate() {
                dir[i] = step[k];
            }
            return Some(dir);
        }
        damping = if damping == 0.0 { 1e-10 * scale } else { damping * 10.0 };
    }
    None
}

pub(crate) fn minimize<P: Problem>(p: &P, u0: &[f64], bounds: &Bounds, opts: &Options) -> Option<Outcome> {
    let n = p.dim();
    let mut u = u0.to_vec();
    bounds.project(&mut u);
    let (f, g) = p.eval(&u)?;
    let mut s = State { u, f, g };
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut newton = false;
    let mut stalls = 0;

    let finish = |s: State, it: usize, term: Termination| {
        let free = bounds.free(&s.u, &s.g);
        let grad_norm = natural_norm(p, &s.u, &s.g, &free);
        Some(Outcome {
            u: s.u,
            f: s.f,
            iterations: it,
            termination: term,
            grad_norm,
        })
    };

    for it in 0..opts.max_iter {
        let free = bounds.free(&s.u, &s.g);
        let gnorm = natural_norm(p, &s.u, &s.g, &free);
        if gnorm <= opts.grad_tol {
            return finish(s, it, Termination::GradientTolerance);
        }
        if gnorm <= opts.newton_switch {
            newton = true;
        }

        let mut next = None;
        if newton {
            if let Some(h) = fd_hessian(p, &s.u, 1e-5) {
                if let Some(dir) = newton_direction(&h, &s.g, &free) {
                    next = line_search(p, bounds, &s, &dir);
                }
            }
        }
        if next.is_none() {
            let mut dir = vec![0.0; n];
            for i in 0..n {
                if free[i] {
                    dir[i] = -(0..n).filter(|&j| free[j]).map(|j| hinv[(i, j)] * s.g[j]).sum::<f64>();
                }
            }
            let slope: f64 = dir.iter().zip(&s.g).map(|(d, g)| d * g).sum();
            if !(slope < 0.0) {
                hinv = DMatrix::identity(n, n);
                fresh = true;
                for i in 0..n {
                    dir[i] = if free[i] { -s.g[i] } else { 0.0 };
                }
            }
            // keep the first steps of a fresh metric modest
            if fresh {
                let big = dir.iter().map(|d| d.abs()).fold(0.0, f64::max);
                if big > 1.0 {
                    dir.iter_mut().for_each(|d| *d /= big);
                }
            }
            next = line_search(p, bounds, &s, &dir);
            if next.is_none() && !fresh {
                hinv = DMatrix::identity(n, n);
                fresh = true;
                continue;
            }
        }
        let Some(new) = next else {
            if !newton {
                newton = true;
                continue;
            }
            return finish(s, it, Termination::LineSearchFailed);
        };

        let step: Vec<f64> = new.u.iter().zip(&s.u).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new.g.iter().zip(&s.g).map(|(a, b)| a - b).collect();
        let sy: f64 = step.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > 1e-12 * yy.sqrt() * step.iter().map(|v| v * v).sum::<f64>().sqrt() {
            if fresh {
                hinv *= sy / yy;
                fresh = false;
            }
            let sv = DVector::from_vec(step.clone());
            let yv = DVector::from_vec(y);
            let rho = 1.0 / sy;
            let hy = &hinv * &yv;
            let yhy = yv.dot(&hy);
            hinv +=
                (&sv * sv.transpose()) * (rho * rho * yhy + rho) - (&hy * sv.transpose() + &sv * hy.transpose()) * rho;
        }

        let small_step = step
            .iter()
            .zip(&new.u)
            .all(|(d, u)| d.abs() <= opts.param_tol * (1.0 + u.abs()));
        let small_f = (s.f - new.f).abs() <= opts.param_tol * (1.0 + new.f.abs());
        s = new;
        if small_step && small_f {
            stalls += 1;
            newton = true;
            if stalls >= 3 {
                return finish(s, it + 1, Termination::StepTolerance);
            }
        } else {
            stalls = 0;
        }
    }
    finish(s, opts.max_iter, Termination::MaxIterations)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Problem for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, u: &[f64]) -> Option<(f64, Vec<f64>)> {
            let (x, y) = (u[0], u[1]);
            let f = (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2);
            let g = vec![-2.0 * (1.0 - x) - 400.0 * x * (y - x * x), 200.0 * (y - x * x)];
            Some((f, g))
        }
        fn grad_scale(&self, _u: &[f64]) -> Vec<f64> {
            vec![1.0, 1.0]
        }
    }

    fn opts() -> Options {
        Options {
            max_iter: 500,
            grad_tol: 1e-9,
            param_tol: 1e-14,
            newton_switch: 1e-3,
        }
    }

    #[test]
    fn rosenbrock_unbounded() {
        let b = Bounds {
            lower: vec![f64::NEG_INFINITY; 2],
            upper: vec![f64::INFINITY; 2],
        };
        let out = minimize(&Rosenbrock, &[-1.2, 1.0], &b, &opts()).unwrap();
        assert_eq!(out.termination, Termination::GradientTolerance);
        assert!((out.u[0] - 1.0).abs() < 1e-8 && (out.u[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rosenbrock_with_active_bound() {
        // minimum over x <= 0.5 lies on the bound at (0.5, 0.25)
        let b = Bounds {
            lower: vec![f64::NEG_INFINITY; 2],
            upper: vec![0.5, f64::INFINITY],
        };
        let out = minimize(&Rosenbrock, &[-1.2, 1.0], &b, &opts()).unwrap();
        assert!(out.converged());
        assert_eq!(out.u[0], 0.5);
        assert!((out.u[1] - 0.25).abs() < 1e-8);
    }
}

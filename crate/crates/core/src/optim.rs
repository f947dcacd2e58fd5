//! Derivative-free Nelder–Mead minimization with a hard evaluation budget.

/// Outcome of [`minimize`].
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Best objective value seen after each evaluation.
    pub trace: Vec<f64>,
}

struct Counted<F> {
    f: F,
    budget: usize,
    evaluations: usize,
    best: f64,
    best_x: Vec<f64>,
    trace: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn exhausted(&self) -> bool {
        self.evaluations >= self.budget
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let mut v = (self.f)(x);
        if v.is_nan() {
            v = f64::INFINITY;
        }
        if v < self.best {
            self.best = v;
            self.best_x = x.to_vec();
        }
        self.trace.push(self.best);
        v
    }
}

/// Minimizes `f` starting from `x0` with an initial simplex of edge `step`.
///
/// Stops after `budget` evaluations or when the simplex has collapsed.
/// Non-finite objective values are treated as `+∞`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], step: f64, budget: usize) -> Minimum {
    let n = x0.len();
    let mut c = Counted { f, budget, evaluations: 0, best: f64::INFINITY, best_x: x0.to_vec(), trace: Vec::new() };
    if budget == 0 || n == 0 {
        let value = if budget == 0 { f64::INFINITY } else { c.eval(x0) };
        return Minimum { x: x0.to_vec(), value, evaluations: c.evaluations, trace: c.trace };
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = c.eval(x0);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        if c.exhausted() {
            break;
        }
        let mut x = x0.to_vec();
        x[i] += step;
        let v = c.eval(&x);
        simplex.push((x, v));
    }

    while !c.exhausted() && simplex.len() == n + 1 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.is_finite() && spread.abs() <= 1e-10 * (1.0 + simplex[0].1.abs()) && size < 1e-8 {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64, from: &[f64]| -> Vec<f64> {
            centroid.iter().zip(from).map(|(c, w)| c + t * (c - w)).collect()
        };

        let worst = simplex[n].0.clone();
        let reflected = along(1.0, &worst);
        let fr = c.eval(&reflected);
        if fr < simplex[0].1 {
            if c.exhausted() {
                simplex[n] = (reflected, fr);
                break;
            }
            let expanded = along(2.0, &worst);
            let fe = c.eval(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            if c.exhausted() {
                break;
            }
            let (contracted, fc) = if fr < simplex[n].1 {
                let x = along(0.5, &worst);
                let v = c.eval(&x);
                (x, v)
            } else {
                let x = along(-0.5, &worst);
                let v = c.eval(&x);
                (x, v)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    if c.exhausted() {
                        break;
                    }
                    let x: Vec<f64> = best.iter().zip(&entry.0).map(|(b, w)| b + 0.5 * (w - b)).collect();
                    let v = c.eval(&x);
                    *entry = (x, v);
                }
            }
        }
    }

    Minimum { x: c.best_x, value: c.best, evaluations: c.evaluations, trace: c.trace }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = minimize(f, &[-1.2, 1.0], 0.5, 2000);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
        assert!(m.evaluations <= 2000);
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn budget_is_respected() {
        let mut calls = 0;
        let m = minimize(
            |x: &[f64]| {
                calls += 1;
                x.iter().map(|v| v * v).sum()
            },
            &[3.0, 1.0, -2.0],
            1.0,
            7,
        );
        assert_eq!(m.evaluations, 7);
        assert_eq!(calls, 7);
        assert_eq!(m.trace.len(), 7);
    }

    #[test]
    fn zero_budget() {
        let m = minimize(|_: &[f64]| panic!("must not evaluate"), &[1.0], 1.0, 0);
        assert_eq!(m.x, vec![1.0]);
        assert_eq!(m.evaluations, 0);
    }

    #[test]
    fn nan_is_worse_than_anything() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 2.0).powi(2) };
        let m = minimize(f, &[0.5], 1.0, 200);
        assert!((m.x[0] - 2.0).abs() < 1e-4);
    }
}

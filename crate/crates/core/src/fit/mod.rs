//! Bounded nonlinear least squares.
//!
//! Damped Gauss-Newton with Marquardt scaling and a forward-difference
//! Jacobian. Starts are taken from a 3-point grid per free parameter; all
//! grid points are ranked by χ² and the best few are refined.

mod models;

pub use models::{
    fit_gsd_profile, fit_gsd_profile_shots, fit_lorentzian, gsd_profile_model, lorentzian, thermometry, GsdProfileModel, LorentzianFit, ProfileAxis,
    Thermometry,
};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GsdError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, initial: f64, lower: f64, upper: f64) -> Result<Self> {
        let name = name.into();
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(GsdError::domain(format!("bounds of `{name}` must be finite and ordered, got [{lower}, {upper}]")));
        }
        if !(initial >= lower && initial <= upper) {
            return Err(GsdError::domain(format!("initial `{name}` = {initial} lies outside [{lower}, {upper}]")));
        }
        Ok(Self { name, initial, lower, upper })
    }

    fn span(&self) -> f64 {
        self.upper - self.lower
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Largest allowed cosine between the residual and any Jacobian column.
    pub gtol: f64,
    pub multistart: bool,
    /// Number of best grid starts refined to convergence.
    pub refine: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gtol: 1e-5,
            multistart: true,
            refine: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub estimates: BTreeMap<String, f64>,
    pub uncertainties: BTreeMap<String, f64>,
    /// Root mean square of the unweighted residuals.
    pub residual_rms: f64,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub names: Vec<String>,
    /// Scaled covariance of the free parameters, ordered as `names`.
    #[serde(skip)]
    pub covariance: DMatrix<f64>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.estimates.get(name).copied()
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.uncertainties.get(name).copied()
    }

    pub fn covariance_of(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.covariance[(i, j)])
    }
}

/// Per-point binomial standard error, floored at `0.5/shots`.
pub fn binomial_sigma(p: f64, shots: u32) -> f64 {
    let n = shots.max(1) as f64;
    (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / n).sqrt().max(0.5 / n)
}

struct Problem<'a> {
    model: &'a dyn Fn(&[f64]) -> Result<Vec<f64>>,
    y: &'a [f64],
    sigma: &'a [f64],
    params: &'a [ParamSpec],
}

impl Problem<'_> {
    fn residuals(&self, p: &[f64]) -> Result<DVector<f64>> {
        let m = (self.model)(p)?;
        if m.len() != self.y.len() {
            return Err(GsdError::domain(format!("model returned {} values for {} points", m.len(), self.y.len())));
        }
        let r = DVector::from_iterator(m.len(), m.iter().zip(self.y).zip(self.sigma).map(|((m, y), s)| (m - y) / s));
        if r.iter().any(|v| !v.is_finite()) {
            return Err(GsdError::domain("model produced non-finite values"));
        }
        Ok(r)
    }

    fn jacobian(&self, p: &[f64], r0: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(r0.len(), p.len());
        let mut q = p.to_vec();
        for (k, spec) in self.params.iter().enumerate() {
            let mut h = 1e-6 * p[k].abs().max(1e-2 * spec.span());
            if p[k] + h > spec.upper {
                h = -h;
            }
            q[k] = p[k] + h;
            let r = self.residuals(&q)?;
            q[k] = p[k];
            j.set_column(k, &((r - r0) / h));
        }
        Ok(j)
    }

    /// Cosine criterion on the gradient projected onto the feasible box.
    fn gradient_cosine(&self, p: &[f64], j: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
        let rn = r.norm();
        if rn == 0.0 {
            return 0.0;
        }
        let g = j.transpose() * r;
        let mut worst: f64 = 0.0;
        for (k, spec) in self.params.iter().enumerate() {
            // descent along -g is blocked by an active bound
            let blocked = (p[k] <= spec.lower && g[k] > 0.0) || (p[k] >= spec.upper && g[k] < 0.0);
            let cn = j.column(k).norm();
            if blocked || cn == 0.0 {
                continue;
            }
            worst = worst.max(g[k].abs() / (cn * rn));
        }
        worst
    }
}

/// Rank check on the column-normalised Jacobian.
fn check_rank(j: &DMatrix<f64>, params: &[ParamSpec]) -> Result<()> {
    let norms: Vec<f64> = j.column_iter().map(|c| c.norm()).collect();
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    for (k, &n) in norms.iter().enumerate() {
        if n <= 1e-12 * max_norm || n == 0.0 {
            let other = (0..params.len()).find(|&i| i != k).map(|i| params[i].name.clone()).unwrap_or_default();
            return Err(GsdError::RankDeficient {
                first: params[k].name.clone(),
                second: other,
            });
        }
    }
    if params.len() < 2 {
        return Ok(());
    }
    let mut scaled = j.clone();
    for (k, n) in norms.iter().enumerate() {
        scaled.column_mut(k).scale_mut(1.0 / n);
    }
    let svd = scaled.svd(false, true);
    let s = &svd.singular_values;
    let (imin, smin) = s.iter().enumerate().fold((0, f64::INFINITY), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
    let smax = s.max();
    if smin <= 1e-8 * smax {
        let v_t = svd.v_t.expect("requested");
        let mut idx: Vec<usize> = (0..params.len()).collect();
        idx.sort_by(|&a, &b| v_t[(imin, b)].abs().total_cmp(&v_t[(imin, a)].abs()));
        return Err(GsdError::RankDeficient {
            first: params[idx[0]].name.clone(),
            second: params[idx[1]].name.clone(),
        });
    }
    Ok(())
}

struct Run {
    p: Vec<f64>,
    chi2: f64,
    iterations: usize,
    converged: bool,
}

fn refine(problem: &Problem, start: Vec<f64>, opts: &FitOptions) -> Result<Run> {
    let mut p = start;
    let mut r = problem.residuals(&p)?;
    let mut chi2 = r.norm_squared();
    let mut lambda = 1e-3;
    let mut j = problem.jacobian(&p, &r)?;
    check_rank(&j, problem.params)?;
    for it in 0..opts.max_iterations {
        if chi2 <= 1e-28 * r.len() as f64 || problem.gradient_cosine(&p, &j, &r) <= opts.gtol {
            return Ok(Run { p, chi2, iterations: it, converged: true });
        }
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        // parameters pinned at a bound the descent direction points out of
        // are held fixed for this step
        let active: Vec<bool> = problem
            .params
            .iter()
            .enumerate()
            .map(|(k, s)| (p[k] <= s.lower && g[k] > 0.0) || (p[k] >= s.upper && g[k] < 0.0))
            .collect();
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            let mut rhs = -&g;
            for k in 0..p.len() {
                if active[k] {
                    a.row_mut(k).fill(0.0);
                    a.column_mut(k).fill(0.0);
                    a[(k, k)] = 1.0;
                    rhs[k] = 0.0;
                } else {
                    a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
                }
            }
            let step = match a.cholesky() {
                Some(c) => c.solve(&rhs),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = problem.params.iter().enumerate().map(|(k, s)| s.clamp(p[k] + step[k])).collect();
            if trial == p {
                break;
            }
            let rt = problem.residuals(&trial)?;
            let chi2_t = rt.norm_squared();
            if chi2_t < chi2 {
                p = trial;
                r = rt;
                chi2 = chi2_t;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            let converged = problem.gradient_cosine(&p, &j, &r) <= opts.gtol;
            return Ok(Run { p, chi2, iterations: it + 1, converged });
        }
        j = problem.jacobian(&p, &r)?;
    }
    let converged = problem.gradient_cosine(&p, &j, &r) <= opts.gtol;
    Ok(Run {
        p,
        chi2,
        iterations: opts.max_iterations,
        converged,
    })
}

/// Starting points: the initial guess first, then the 3^k grid at a quarter,
/// the initial value and three quarters of each range.
fn starts(params: &[ParamSpec]) -> Vec<Vec<f64>> {
    let mut out = vec![params.iter().map(|s| s.initial).collect::<Vec<_>>()];
    let k = params.len();
    for idx in 0..3usize.pow(k as u32) {
        let mut rem = idx;
        let point: Vec<f64> = params
            .iter()
            .map(|s| {
                let v = match rem % 3 {
                    0 => s.lower + 0.25 * s.span(),
                    1 => s.initial,
                    _ => s.lower + 0.75 * s.span(),
                };
                rem /= 3;
                v
            })
            .collect();
        if point != out[0] {
            out.push(point);
        }
    }
    out
}

/// Minimises `Σ((model(p) - y)/σ)²` over the box given by `params`.
///
/// The model receives free parameter values in the order of `params`.
pub fn least_squares(
    model: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    y: &[f64],
    sigma: &[f64],
    params: &[ParamSpec],
    opts: &FitOptions,
) -> Result<FitResult> {
    if params.is_empty() {
        return Err(GsdError::domain("no free parameters"));
    }
    for (i, a) in params.iter().enumerate() {
        if params[..i].iter().any(|b| b.name == a.name) {
            return Err(GsdError::domain(format!("parameter `{}` listed twice", a.name)));
        }
    }
    if y.len() < params.len() + 1 {
        return Err(GsdError::InsufficientData {
            points: y.len(),
            free: params.len(),
        });
    }
    if sigma.len() != y.len() || sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(GsdError::domain("per-point sigma must be positive, one per data point"));
    }
    let problem = Problem { model, y, sigma, params };

    let candidates = if opts.multistart {
        let mut scored = Vec::new();
        for s in starts(params) {
            if let Ok(r) = problem.residuals(&s) {
                scored.push((r.norm_squared(), s));
            }
        }
        // stable: ties keep the initial guess first
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        scored.into_iter().take(opts.refine.max(1)).map(|(_, s)| s).collect()
    } else {
        vec![params.iter().map(|s| s.initial).collect()]
    };

    let mut best: Option<Run> = None;
    let mut first_err = None;
    let mut total_iterations = 0;
    for start in candidates {
        match refine(&problem, start, opts) {
            Ok(run) => {
                total_iterations += run.iterations;
                let better = match &best {
                    None => true,
                    Some(b) => (run.converged && !b.converged) || (run.converged == b.converged && run.chi2 < b.chi2),
                };
                if better {
                    best = Some(run);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let run = match best {
        Some(run) => run,
        None => return Err(first_err.unwrap_or_else(|| GsdError::domain("model could not be evaluated at any start"))),
    };

    let r = problem.residuals(&run.p)?;
    let j = problem.jacobian(&run.p, &r)?;
    check_rank(&j, params)?;
    let dof = (y.len() - params.len()) as f64;
    let reduced = run.chi2 / dof;
    let jtj = j.transpose() * &j;
    let cov = jtj
        .clone()
        .try_inverse()
        .ok_or_else(|| GsdError::RankDeficient {
            first: params[0].name.clone(),
            second: params.get(1).map(|p| p.name.clone()).unwrap_or_default(),
        })?
        * reduced;

    let model_values = model(&run.p)?;
    let residual_rms = (model_values.iter().zip(y).map(|(m, y)| (m - y).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    Ok(FitResult {
        estimates: names.iter().cloned().zip(run.p.iter().copied()).collect(),
        uncertainties: names.iter().cloned().enumerate().map(|(k, n)| (n, cov[(k, k)].max(0.0).sqrt())).collect(),
        residual_rms,
        chi2: run.chi2,
        reduced_chi2: reduced,
        iterations: total_iterations,
        converged: run.converged,
        names,
        covariance: cov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn exp_model(x: &[f64]) -> impl Fn(&[f64]) -> Result<Vec<f64>> + '_ {
        move |p: &[f64]| Ok(x.iter().map(|&t| p[0] * (-p[1] * t).exp() + p[2]).collect())
    }

    fn params(a: f64, k: f64, c: f64) -> Vec<ParamSpec> {
        vec![
            ParamSpec::new("a", a, 0.0, 10.0).unwrap(),
            ParamSpec::new("k", k, 0.01, 5.0).unwrap(),
            ParamSpec::new("c", c, -1.0, 1.0).unwrap(),
        ]
    }

    #[test]
    fn exact_data_at_truth() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.2).collect();
        let y = exp_model(&x)(&[2.0, 0.7, 0.1]).unwrap();
        let s = vec![0.01; x.len()];
        let r = least_squares(&exp_model(&x), &y, &s, &params(2.0, 0.7, 0.1), &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.residual_rms < 1e-10);
        assert!((r.get("a").unwrap() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn recovers_from_offset_start() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.15).collect();
        let y = exp_model(&x)(&[3.0, 1.3, -0.2]).unwrap();
        let s = vec![0.01; x.len()];
        let r = least_squares(&exp_model(&x), &y, &s, &params(1.0, 0.3, 0.5), &FitOptions::default()).unwrap();
        assert!(r.converged, "{r:?}");
        for (n, v) in [("a", 3.0), ("k", 1.3), ("c", -0.2)] {
            assert!((r.get(n).unwrap() - v).abs() < 1e-7, "{n}: {r:?}");
        }
    }

    #[test]
    fn noisy_fit_uncertainty_is_sensible() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 * 0.02).collect();
        let truth = exp_model(&x)(&[2.0, 0.9, 0.1]).unwrap();
        let noise = Normal::new(0.0, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut hits = 0;
        for _ in 0..40 {
            let y: Vec<f64> = truth.iter().map(|t| t + noise.sample(&mut rng)).collect();
            let r = least_squares(&exp_model(&x), &y, &vec![0.02; y.len()], &params(1.5, 0.5, 0.0), &FitOptions::default()).unwrap();
            assert!(r.converged);
            assert!((r.reduced_chi2 - 1.0).abs() < 0.3);
            if (r.get("k").unwrap() - 0.9).abs() <= r.sigma("k").unwrap() {
                hits += 1;
            }
        }
        assert!((20..=36).contains(&hits), "{hits}");
    }

    #[test]
    fn validation() {
        let x = vec![0.0, 1.0, 2.0];
        let y = vec![1.0, 0.5, 0.2];
        let s = vec![0.1; 3];
        assert!(matches!(
            least_squares(&exp_model(&x), &y, &s, &params(1.0, 1.0, 0.0), &FitOptions::default()),
            Err(GsdError::InsufficientData { points: 3, free: 3 })
        ));
        assert!(ParamSpec::new("a", 0.0, 1.0, 0.0).is_err());
        assert!(ParamSpec::new("a", 5.0, 0.0, 1.0).is_err());
        assert!(ParamSpec::new("a", 0.0, f64::NEG_INFINITY, 1.0).is_err());
    }

    #[test]
    fn degenerate_pair_is_named() {
        // only the product a·b is identifiable
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let model = |p: &[f64]| Ok(x.iter().map(|t| p[0] * p[1] * t + p[2]).collect());
        let y: Vec<f64> = x.iter().map(|t| 2.0 * t + 1.0).collect();
        let ps = vec![
            ParamSpec::new("a", 1.0, 0.1, 10.0).unwrap(),
            ParamSpec::new("b", 1.5, 0.1, 10.0).unwrap(),
            ParamSpec::new("c", 0.0, -5.0, 5.0).unwrap(),
        ];
        match least_squares(&model, &y, &vec![0.1; 10], &ps, &FitOptions::default()) {
            Err(GsdError::RankDeficient { first, second }) => {
                let mut pair = [first, second];
                pair.sort();
                assert_eq!(pair, ["a".to_string(), "b".to_string()]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bounds_are_respected() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.2).collect();
        let y = exp_model(&x)(&[2.0, 0.7, 1.5]).unwrap();
        let r = least_squares(&exp_model(&x), &y, &vec![0.01; 20], &params(2.0, 0.7, 0.0), &FitOptions::default()).unwrap();
        assert_eq!(r.get("c").unwrap(), 1.0);
        assert!(r.converged, "an active bound blocks the gradient");
    }

    #[test]
    fn binomial_sigma_floor() {
        assert_eq!(binomial_sigma(0.0, 10), 0.05);
        assert!((binomial_sigma(0.5, 10) - 0.158113883).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn objective_never_increases(a in 0.5f64..5.0, k in 0.1f64..3.0, seed in 0u64..1000) {
            let x: Vec<f64> = (0..25).map(|i| i as f64 * 0.2).collect();
            let truth = exp_model(&x)(&[a, k, 0.0]).unwrap();
            let noise = Normal::new(0.0, 0.05).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = truth.iter().map(|t| t + noise.sample(&mut rng)).collect();
            let s = vec![0.05; y.len()];
            let ps = params(2.0, 1.0, 0.0);
            let model = exp_model(&x);
            let problem = Problem { model: &model, y: &y, sigma: &s, params: &ps };
            let start: Vec<f64> = ps.iter().map(|p| p.initial).collect();
            let chi0 = problem.residuals(&start).unwrap().norm_squared();
            for iters in [1, 2, 4, 8, 16] {
                let opts = FitOptions { max_iterations: iters, ..FitOptions::default() };
                let run = refine(&problem, start.clone(), &opts).unwrap();
                prop_assert!(run.chi2 <= chi0);
                let longer = refine(&problem, start.clone(), &FitOptions { max_iterations: iters + 1, ..opts }).unwrap();
                prop_assert!(longer.chi2 <= run.chi2);
            }
        }
    }
}

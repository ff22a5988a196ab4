//! Logistic regression with a per-template random intercept,
//! `logit P(c = 1) = b0 + b1 z + u_j`, `u_j ~ N(0, s^2)`, fitted by maximizing
//! the Laplace approximation of the marginal likelihood.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_std, AnalyticsError, TemplateGroup};

/// How the metric is standardized before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// One mean and SD over all included records.
    #[default]
    Global,
    /// Each template standardized on its own.
    PerTemplate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OddsRatioOptions {
    pub scaling: Scaling,
    /// A template is excluded when strictly more than this share of its
    /// records has the same outcome.
    pub imbalance: f64,
    pub max_iter: usize,
}

impl Default for OddsRatioOptions {
    fn default() -> Self {
        Self {
            scaling: Scaling::Global,
            imbalance: 0.99,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub template_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatioFit {
    pub beta0: f64,
    pub beta1: f64,
    pub se_beta1: f64,
    /// `exp(beta1)`: odds multiplier per standard deviation of the metric.
    pub or_point: f64,
    pub ci95: (f64, f64),
    pub random_intercept_variance: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// True when a single template was included and no random effect was fitted.
    pub fixed_effects_only: bool,
    pub scaling: Scaling,
    pub included_templates: Vec<String>,
    pub excluded_templates: Vec<Exclusion>,
}

/// Plain logistic regression of `c` on `(1, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticFit {
    pub beta0: f64,
    pub beta1: f64,
    pub se_beta1: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
}

const Z95: f64 = 1.959963984540054;
const LOG_SIGMA_MIN: f64 = -12.0;
const LOG_SIGMA_MAX: f64 = 4.0;
/// Coefficients this large mean the likelihood has no finite maximum.
const DIVERGENCE: f64 = 30.0;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn bernoulli_loglik(eta: f64, c: bool) -> f64 {
    if c {
        eta - softplus(eta)
    } else {
        -softplus(eta)
    }
}

/// Newton-Raphson (IRLS) logistic regression.
pub fn fit_logistic(z: &[f64], c: &[bool]) -> Result<LogisticFit, AnalyticsError> {
    if z.is_empty() || z.len() != c.len() {
        return Err(AnalyticsError::Empty);
    }
    let mut beta = Vector2::zeros();
    let loglik = |b: &Vector2<f64>| -> f64 { z.iter().zip(c).map(|(&zi, &ci)| bernoulli_loglik(b[0] + b[1] * zi, ci)).sum() };
    let mut ll = loglik(&beta);
    for it in 1..=100 {
        let mut g = Vector2::zeros();
        let mut h = Matrix2::zeros();
        for (&zi, &ci) in z.iter().zip(c) {
            let p = sigmoid(beta[0] + beta[1] * zi);
            let w = p * (1.0 - p);
            let r = f64::from(u8::from(ci)) - p;
            g += Vector2::new(r, r * zi);
            h += Matrix2::new(w, w * zi, w * zi, w * zi * zi);
        }
        let inv = h.try_inverse().ok_or(AnalyticsError::ConstantMetric)?;
        let mut step = inv * g;
        let mut next = beta + step;
        let mut next_ll = loglik(&next);
        while next_ll < ll - 1e-12 && step.norm() > 1e-14 {
            step *= 0.5;
            next = beta + step;
            next_ll = loglik(&next);
        }
        beta = next;
        let delta = (next_ll - ll).abs();
        ll = next_ll;
        if beta[1].abs() > DIVERGENCE {
            return Err(AnalyticsError::Separation("logistic slope diverges".into()));
        }
        if step.amax() < 1e-10 || delta < 1e-13 * (1.0 + ll.abs()) {
            let info = fisher(z, &beta);
            let cov = info.try_inverse().ok_or(AnalyticsError::ConstantMetric)?;
            return Ok(LogisticFit {
                beta0: beta[0],
                beta1: beta[1],
                se_beta1: cov[(1, 1)].sqrt(),
                log_likelihood: ll,
                iterations: it,
            });
        }
    }
    Err(AnalyticsError::NonConvergence {
        iterations: 100,
        gradient: f64::NAN,
    })
}

fn fisher(z: &[f64], beta: &Vector2<f64>) -> Matrix2<f64> {
    let mut h = Matrix2::zeros();
    for &zi in z {
        let p = sigmoid(beta[0] + beta[1] * zi);
        let w = p * (1.0 - p);
        h += Matrix2::new(w, w * zi, w * zi, w * zi * zi);
    }
    h
}

/// One template's data after standardization.
struct Cluster {
    z: Vec<f64>,
    c: Vec<f64>,
}

/// Laplace log-likelihood contribution of one cluster and its gradient in
/// `(b0, b1, s)` where `s` is the random-intercept variance.
fn cluster_term(cl: &Cluster, b0: f64, b1: f64, s: f64) -> (f64, Vector3<f64>) {
    // Mode of h(u) = sum loglik(b0 + b1 z + u) - u^2 / (2 s); strictly concave.
    let h_at = |u: f64| -> f64 {
        cl.z.iter()
            .zip(&cl.c)
            .map(|(&z, &c)| {
                let eta = b0 + b1 * z + u;
                c * eta - softplus(eta)
            })
            .sum::<f64>()
            - u * u / (2.0 * s)
    };
    let mut u = 0.0;
    let mut hu = h_at(u);
    for _ in 0..100 {
        let (mut g, mut hess) = (-u / s, 1.0 / s);
        for (&z, &c) in cl.z.iter().zip(&cl.c) {
            let p = sigmoid(b0 + b1 * z + u);
            g += c - p;
            hess += p * (1.0 - p);
        }
        let mut step = g / hess;
        let mut next = u + step;
        let mut hn = h_at(next);
        while hn < hu && step.abs() > 1e-15 {
            step *= 0.5;
            next = u + step;
            hn = h_at(next);
        }
        u = next;
        hu = hn;
        if step.abs() < 1e-12 * (1.0 + u.abs()) {
            break;
        }
    }

    let (mut big_h, mut sw, mut swz, mut dw0, mut dwz) = (1.0 / s, 0.0, 0.0, 0.0, 0.0);
    let (mut g0, mut g1) = (0.0, 0.0);
    for (&z, &c) in cl.z.iter().zip(&cl.c) {
        let p = sigmoid(b0 + b1 * z + u);
        let w = p * (1.0 - p);
        let dw = w * (1.0 - 2.0 * p);
        big_h += w;
        sw += w;
        swz += w * z;
        dw0 += dw;
        dwz += dw * z;
        g0 += c - p;
        g1 += (c - p) * z;
    }
    let ll = hu - 0.5 * (s * big_h).ln();
    // Implicit derivatives of the mode.
    let du_b0 = -sw / big_h;
    let du_b1 = -swz / big_h;
    let du_s = u / (s * s * big_h);
    let dh_b0 = dw0 * (1.0 + du_b0);
    let dh_b1 = dwz + dw0 * du_b1;
    let dh_s = dw0 * du_s - 1.0 / (s * s);
    let grad = Vector3::new(
        g0 - 0.5 * dh_b0 / big_h,
        g1 - 0.5 * dh_b1 / big_h,
        u * u / (2.0 * s * s) - 0.5 / s - 0.5 * dh_s / big_h,
    );
    (ll, grad)
}

/// Log-likelihood and gradient in `(b0, b1, log sigma)`.
fn objective(clusters: &[Cluster], x: &Vector3<f64>) -> (f64, Vector3<f64>) {
    let s = (2.0 * x[2]).exp();
    let terms: Vec<(f64, Vector3<f64>)> = clusters.par_iter().map(|cl| cluster_term(cl, x[0], x[1], s)).collect();
    let mut ll = 0.0;
    let mut g = Vector3::zeros();
    for (l, gi) in terms {
        ll += l;
        g += gi;
    }
    g[2] *= 2.0 * s;
    (ll, g)
}

/// Central-difference Hessian of the analytic gradient.
fn hessian(clusters: &[Cluster], x: &Vector3<f64>) -> Matrix3<f64> {
    let mut h = Matrix3::zeros();
    for j in 0..3 {
        let eps = 1e-5 * (1.0 + x[j].abs());
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += eps;
        xm[j] -= eps;
        let col = (objective(clusters, &xp).1 - objective(clusters, &xm).1) / (2.0 * eps);
        h.set_column(j, &col);
    }
    (h + h.transpose()) * 0.5
}

fn excluded_reason(g: &TemplateGroup, imbalance: f64) -> Option<String> {
    let n = g.records.len();
    if n == 0 {
        return Some("no records".into());
    }
    let major = g.n0().max(g.n1());
    // Integer comparison in millionths so that 990/1000 sits exactly on the boundary.
    let limit = (imbalance * 1e6).round() as u128;
    (major as u128 * 1_000_000 > limit * n as u128).then(|| {
        format!(
            "{major}/{n} records answered {}",
            if g.n1() >= g.n0() { "correctly" } else { "incorrectly" }
        )
    })
}

fn standardize(xs: &mut [f64]) -> Result<(), AnalyticsError> {
    let (mean, _, sd) = mean_std(xs);
    if !(sd > 0.0) {
        return Err(AnalyticsError::ConstantMetric);
    }
    xs.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    Ok(())
}

fn check_separation(z: &[f64], c: &[bool]) -> Result<(), AnalyticsError> {
    let range = |want: bool| {
        z.iter()
            .zip(c)
            .filter(|(_, &ci)| ci == want)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&zi, _)| (lo.min(zi), hi.max(zi)))
    };
    let (lo1, hi1) = range(true);
    let (lo0, hi0) = range(false);
    if !lo1.is_finite() || !lo0.is_finite() {
        return Err(AnalyticsError::Separation("only one outcome among included records".into()));
    }
    if hi1 < lo0 || hi0 < lo1 {
        return Err(AnalyticsError::Separation("the metric perfectly separates correct from incorrect records".into()));
    }
    Ok(())
}

/// Fits the random-intercept logistic model on the standardized metric and
/// reports the per-SD odds ratio `exp(b1)` with a Wald interval.
///
/// Templates where strictly more than `imbalance` of records share one
/// outcome are excluded. With a single included template the random effect
/// is dropped and the fit is ordinary logistic regression.
pub fn fit_odds_ratio(groups: &[TemplateGroup], opts: &OddsRatioOptions) -> Result<OddsRatioFit, AnalyticsError> {
    let mut included = Vec::new();
    let mut excluded = Vec::new();
    for g in groups {
        g.check_finite()?;
        match excluded_reason(g, opts.imbalance) {
            Some(reason) => excluded.push(Exclusion {
                template_id: g.template_id.clone(),
                reason,
            }),
            None => included.push(g),
        }
    }
    if included.is_empty() {
        let why = excluded.iter().map(|e| format!("{}: {}", e.template_id, e.reason)).collect::<Vec<_>>().join("; ");
        return Err(AnalyticsError::NoIncludedTemplates(if why.is_empty() { "no templates".into() } else { why }));
    }

    let mut clusters: Vec<(Vec<f64>, Vec<bool>)> = included
        .iter()
        .map(|g| (g.records.iter().map(|r| r.0).collect(), g.records.iter().map(|r| r.1).collect()))
        .collect();
    match opts.scaling {
        Scaling::Global => {
            let mut all: Vec<f64> = clusters.iter().flat_map(|c| c.0.iter().copied()).collect();
            let (mean, _, sd) = mean_std(&all);
            if !(sd > 0.0) {
                return Err(AnalyticsError::ConstantMetric);
            }
            all.clear();
            for (z, _) in &mut clusters {
                z.iter_mut().for_each(|x| *x = (*x - mean) / sd);
            }
        }
        Scaling::PerTemplate => {
            for (z, _) in &mut clusters {
                standardize(z)?;
            }
        }
    }
    let z_all: Vec<f64> = clusters.iter().flat_map(|c| c.0.iter().copied()).collect();
    let c_all: Vec<bool> = clusters.iter().flat_map(|c| c.1.iter().copied()).collect();
    check_separation(&z_all, &c_all)?;
    let start = fit_logistic(&z_all, &c_all)?;
    let included_templates: Vec<String> = included.iter().map(|g| g.template_id.clone()).collect();

    if included.len() == 1 {
        return Ok(finish(start.beta0, start.beta1, start.se_beta1, 0.0, start.log_likelihood, start.iterations, true, opts, included_templates, excluded));
    }

    let clusters: Vec<Cluster> = clusters
        .into_iter()
        .map(|(z, c)| Cluster {
            z,
            c: c.into_iter().map(|b| f64::from(u8::from(b))).collect(),
        })
        .collect();
    let n_total = z_all.len() as f64;
    let tol = 1e-8 * n_total.max(1.0);
    let mut x = Vector3::new(start.beta0, start.beta1, 0.5f64.ln());
    let (mut ll, mut g) = objective(&clusters, &x);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let at_floor = x[2] <= LOG_SIGMA_MIN && g[2] <= 0.0;
        let grad_norm = if at_floor { g.fixed_rows::<2>(0).amax() } else { g.amax() };
        if grad_norm < tol {
            converged = true;
            break;
        }
        let h = hessian(&clusters, &x);
        // Levenberg damping until the Newton direction is an ascent direction.
        let mut lambda = 0.0;
        let mut dir = Vector3::zeros();
        for _ in 0..60 {
            let m = -(h - Matrix3::identity() * lambda);
            if let Some(chol) = m.cholesky() {
                dir = chol.solve(&g);
                break;
            }
            lambda = if lambda == 0.0 { 1e-6 * (1.0 + h.amax()) } else { lambda * 10.0 };
        }
        if at_floor {
            dir[2] = 0.0;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand = x + dir * t;
            cand[2] = cand[2].clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX);
            let (cl, cg) = objective(&clusters, &cand);
            if cl.is_finite() && cl >= ll - 1e-12 * ll.abs() {
                let stalled = (cand - x).amax() < 1e-12;
                x = cand;
                ll = cl;
                g = cg;
                accepted = !stalled;
                break;
            }
            t *= 0.5;
        }
        if x[1].abs() > DIVERGENCE {
            return Err(AnalyticsError::Separation("slope diverges".into()));
        }
        if !accepted {
            // No ascent possible along the damped Newton direction.
            converged = g.fixed_rows::<2>(0).amax() < tol.sqrt();
            break;
        }
    }
    if !converged {
        return Err(AnalyticsError::NonConvergence {
            iterations,
            gradient: g.amax(),
        });
    }

    let s = (2.0 * x[2]).exp();
    let info = -hessian(&clusters, &x);
    // At the variance floor only the fixed effects are identified.
    let se_beta1 = if x[2] <= LOG_SIGMA_MIN + 1e-9 {
        let block = info.fixed_view::<2, 2>(0, 0).into_owned();
        block.try_inverse().map(|c| c[(1, 1)])
    } else {
        info.try_inverse().map(|c| c[(1, 1)])
    }
    .filter(|v| *v > 0.0 && v.is_finite())
    .map(f64::sqrt)
    .ok_or(AnalyticsError::NonConvergence {
        iterations,
        gradient: g.amax(),
    })?;
    Ok(finish(x[0], x[1], se_beta1, s, ll, iterations, false, opts, included_templates, excluded))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    beta0: f64,
    beta1: f64,
    se_beta1: f64,
    variance: f64,
    log_likelihood: f64,
    iterations: usize,
    fixed_effects_only: bool,
    opts: &OddsRatioOptions,
    included_templates: Vec<String>,
    excluded_templates: Vec<Exclusion>,
) -> OddsRatioFit {
    OddsRatioFit {
        beta0,
        beta1,
        se_beta1,
        or_point: beta1.exp(),
        ci95: ((beta1 - Z95 * se_beta1).exp(), (beta1 + Z95 * se_beta1).exp()),
        random_intercept_variance: variance,
        log_likelihood,
        iterations,
        fixed_effects_only,
        scaling: opts.scaling,
        included_templates,
        excluded_templates,
    }
}

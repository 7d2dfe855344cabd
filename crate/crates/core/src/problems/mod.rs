//! Synthetic objectives with certified constants.
//!
//! Every problem is a loss `f(w; z)` over samples `z = (x, y)` drawn from a
//! finite-support distribution, so the population risk `F(w) = E f(w; z)`
//! has an exact value. The certificate attached to each problem lists the
//! constants (Lipschitz, smoothness, curvature, noise moments) that hold on
//! the domain ball `B(w*, R)`.

mod dataset;
mod design;

use serde::{Deserialize, Serialize};

pub use dataset::{read_dataset_csv, write_dataset_csv, Dataset, Sample};
pub use design::{Design, DesignSpec};

use crate::error::{Error, Result};
use crate::linalg::{dist, dot, norm, norm_sq, sub, SquareMatrix};
use crate::optim::descent;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// `½(⟨w,x⟩ − y)²` with `y = ⟨w*,x⟩ + ν ξ`, `ξ` Rademacher.
    LeastSquares,
    /// `log(1 + exp(−y⟨w,x⟩))` with labels `sign⟨u,x⟩` flipped with probability ν.
    Logistic,
    /// `max(0, 1 − y⟨w,x⟩)^q`, `q ∈ [1, 2]`, labels as for `Logistic`.
    QnormHinge { q: f64 },
    /// `w² + (sin w + ν y / 2)²`; population risk `w² + sin² w + ν²/4`.
    Pl1dSine,
    /// `(w² − 4 + ν y / 2)²`; population risk `(w−2)²(w+2)² + ν²/4`.
    Qg1dQuartic,
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::LeastSquares => "least_squares",
            ProblemKind::Logistic => "logistic",
            ProblemKind::QnormHinge { .. } => "qnorm_hinge",
            ProblemKind::Pl1dSine => "pl_1d_sine",
            ProblemKind::Qg1dQuartic => "qg_1d_quartic",
        }
    }

    pub fn is_one_dimensional(&self) -> bool {
        matches!(self, ProblemKind::Pl1dSine | ProblemKind::Qg1dQuartic)
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, ProblemKind::Logistic | ProblemKind::QnormHinge { .. })
    }

    /// Per-sample losses are convex in `w`.
    pub fn is_convex(&self) -> bool {
        !self.is_one_dimensional()
    }

    /// Losses invariant under `w ↦ −w`; their minimizer sets are symmetric.
    pub fn is_even(&self) -> bool {
        matches!(self, ProblemKind::Qg1dQuartic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PopRiskMode {
    #[default]
    ClosedForm,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Kind-independent construction parameters, as they appear in config files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSpec>,
    /// Population minimizer of least squares.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_star: Option<Vec<f64>>,
    /// Direction `u` generating clean classification labels `sign⟨u,x⟩`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_direction: Option<Vec<f64>>,
    /// Noise magnitude for regression and 1-D kinds, flip probability for classification.
    pub noise_level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_radius: Option<f64>,
    #[serde(default)]
    pub pop_risk_mode: PopRiskMode,
}

/// A named problem declaration as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub id: String,
    pub kind: ProblemKind,
    pub dimension: usize,
    pub params: ProblemParams,
}

impl ProblemSpec {
    pub fn build<T: Scalar>(&self) -> Result<Problem<T>> {
        Ok(Problem::new(self.kind, self.dimension, &self.params)?.with_id(self.id.clone()))
    }

    /// The same declaration with another noise level.
    pub fn with_noise(&self, noise_level: f64) -> Self {
        let mut out = self.clone();
        out.params.noise_level = noise_level;
        out
    }
}

/// Constants certified on the ball `B(minimizer_wstar, domain_radius_r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate<T> {
    pub lipschitz_l: Option<T>,
    pub smooth_beta: Option<T>,
    pub holder_p: T,
    pub holder_alpha: T,
    pub mu_qg: Option<T>,
    pub mu_pl: Option<T>,
    /// `E‖∇f(w*, z)‖²`, the gradient noise at the optimum.
    pub sigma_sq: T,
    pub bernstein_bstar: T,
    /// Bound on `√η ‖∇f(w, z)‖` for steps `η ≤ 1/(2β)` (or `η ≤ 1` without β).
    pub relaxed_grad_g: T,
    pub min_pop_risk_fstar: T,
    pub domain_radius_r: T,
    pub minimizer_wstar: Vec<T>,
}

impl<T: Scalar> Certificate<T> {
    pub fn validate(&self) -> Result<()> {
        if let (Some(pl), Some(beta)) = (self.mu_pl, self.smooth_beta) {
            if pl > T::of(2.0) * beta {
                return Err(Error::config(format!(
                    "PL constant {pl} exceeds twice the smoothness {beta}"
                )));
            }
        }
        if let Some(pl) = self.mu_pl {
            if pl > T::zero() && !self.mu_qg.is_some_and(|q| q > T::zero()) {
                return Err(Error::config("a positive PL constant requires a positive QG constant"));
            }
        }
        if self.domain_radius_r <= T::zero() {
            return Err(Error::config("domain radius must be positive"));
        }
        if self.holder_alpha < T::zero() || self.holder_alpha > T::one() {
            return Err(Error::config("Hölder exponent must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// A risk value together with its Monte-Carlo error bar, when estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskValue<T> {
    pub value: T,
    pub stderr: Option<T>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Problem<T> {
    id: String,
    kind: ProblemKind,
    design: Design<T>,
    noise_level: T,
    /// `w*` for least squares, the clean-label direction for classification.
    target: Vec<T>,
    pop_risk_mode: PopRiskMode,
    certificate: Certificate<T>,
    minimizers: Vec<Vec<T>>,
    second_moment: SquareMatrix<T>,
    /// Enumerated `(sample, probability)` pairs for kinds without an analytic risk.
    support: Vec<(Sample<T>, T)>,
}

/// Builds a problem of the given kind; see [`ProblemParams`] for the knobs.
pub fn make_problem<T: Scalar>(kind: ProblemKind, dimension: usize, params: &ProblemParams) -> Result<Problem<T>> {
    Problem::new(kind, dimension, params)
}

impl<T: Scalar> Problem<T> {
    pub fn new(kind: ProblemKind, dimension: usize, params: &ProblemParams) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::config("dimension must be at least 1"));
        }
        let nu = params.noise_level;
        if !nu.is_finite() || nu < 0.0 {
            return Err(Error::config("noise_level must be finite and nonnegative"));
        }
        if let ProblemKind::QnormHinge { q } = kind {
            if !(1.0..=2.0).contains(&q) {
                return Err(Error::config(format!("qnorm_hinge needs q in [1, 2], got {q}")));
            }
        }
        if kind.is_classification() && nu >= 0.5 {
            return Err(Error::config("label flip probability must be below 0.5"));
        }
        if let PopRiskMode::MonteCarlo { samples, .. } = params.pop_risk_mode {
            if samples < 2 {
                return Err(Error::config("Monte-Carlo mode needs at least two samples"));
            }
        }

        let design = if kind.is_one_dimensional() {
            if dimension != 1 {
                return Err(Error::config(format!("{} is one-dimensional", kind.name())));
            }
            Design::unit_1d()
        } else {
            let spec = params
                .design
                .as_ref()
                .ok_or_else(|| Error::config(format!("{} needs a design", kind.name())))?;
            Design::from_spec(spec, dimension)?
        };

        let vector_param = |v: &Option<Vec<f64>>, name: &str| -> Result<Vec<T>> {
            let v = v
                .as_ref()
                .ok_or_else(|| Error::config(format!("{} needs {name}", kind.name())))?;
            if v.len() != dimension || v.iter().any(|a| !a.is_finite()) {
                return Err(Error::config(format!("{name} must be a finite vector of length {dimension}")));
            }
            Ok(v.iter().map(|&a| T::of(a)).collect())
        };
        let target = match kind {
            ProblemKind::LeastSquares => vector_param(&params.w_star, "w_star")?,
            ProblemKind::Logistic | ProblemKind::QnormHinge { .. } => {
                let u = vector_param(&params.label_direction, "label_direction")?;
                if norm(&u) == T::zero() {
                    return Err(Error::config("label_direction must be nonzero"));
                }
                u
            }
            ProblemKind::Pl1dSine | ProblemKind::Qg1dQuartic => Vec::new(),
        };

        let second_moment = design.second_moment();
        let mut problem = Problem {
            id: kind.name().to_string(),
            kind,
            design,
            noise_level: T::of(nu),
            target,
            pop_risk_mode: params.pop_risk_mode,
            certificate: placeholder_certificate(dimension),
            minimizers: Vec::new(),
            second_moment,
            support: Vec::new(),
        };
        if kind.is_classification() {
            problem.support = problem.enumerate_support();
        }
        problem.minimizers = problem.compute_minimizers()?;
        let radius = match params.domain_radius {
            Some(r) if r.is_finite() && r > 0.0 => T::of(r),
            Some(_) => return Err(Error::config("domain_radius must be positive")),
            None => T::of(5.0) * norm(&problem.minimizers[0]) + T::of(5.0),
        };
        problem.certificate = problem.compute_certificate(radius);
        problem.certificate.validate()?;
        Ok(problem)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.design.dim()
    }

    pub fn design(&self) -> &Design<T> {
        &self.design
    }

    pub fn noise_level(&self) -> T {
        self.noise_level
    }

    pub fn pop_risk_mode(&self) -> PopRiskMode {
        self.pop_risk_mode
    }

    pub fn certificate(&self) -> &Certificate<T> {
        &self.certificate
    }

    /// Certificate with externally estimated curvature constants filled in.
    pub fn set_curvature(&mut self, mu_qg: Option<T>, mu_pl: Option<T>) -> Result<()> {
        let mut c = self.certificate.clone();
        if mu_qg.is_some() {
            c.mu_qg = mu_qg;
        }
        if mu_pl.is_some() {
            c.mu_pl = mu_pl;
        }
        c.validate()?;
        self.certificate = c;
        Ok(())
    }

    pub fn w_star(&self) -> &[T] {
        &self.certificate.minimizer_wstar
    }

    /// All population minimizers (more than one only for even losses).
    pub fn minimizers(&self) -> &[Vec<T>] {
        &self.minimizers
    }

    pub fn radius(&self) -> T {
        self.certificate.domain_radius_r
    }

    pub fn f_star(&self) -> T {
        self.certificate.min_pop_risk_fstar
    }

    /// `E[x x^T]` of the feature design.
    pub fn second_moment(&self) -> &SquareMatrix<T> {
        &self.second_moment
    }

    pub fn in_domain(&self, w: &[T]) -> bool {
        dist(w, self.w_star()) <= self.radius() * (T::one() + T::of(1e-12))
    }

    pub fn check_domain(&self, w: &[T]) -> Result<()> {
        if self.in_domain(w) {
            Ok(())
        } else {
            Err(Error::Domain {
                distance: dist(w, self.w_star()).as_f64(),
                radius: self.radius().as_f64(),
            })
        }
    }

    /// Draws sample `index` of the stream identified by `seed`.
    pub fn sample(&self, seed: u64, index: u64) -> Sample<T> {
        let mut rng = rng::stream(seed, index);
        let x = self.design.sample(&mut rng);
        let y = match self.kind {
            ProblemKind::LeastSquares => {
                let xi: T = rng::rademacher(&mut rng);
                dot(&self.target, &x) + self.noise_level * xi
            }
            ProblemKind::Logistic | ProblemKind::QnormHinge { .. } => {
                let flip = rand::Rng::gen::<f64>(&mut rng) < self.noise_level.as_f64();
                let clean = self.clean_label(&x);
                if flip {
                    -clean
                } else {
                    clean
                }
            }
            ProblemKind::Pl1dSine | ProblemKind::Qg1dQuartic => rng::rademacher(&mut rng),
        };
        Sample { x, y }
    }

    fn clean_label(&self, x: &[T]) -> T {
        if dot(&self.target, x) >= T::zero() {
            T::one()
        } else {
            -T::one()
        }
    }

    pub fn loss(&self, w: &[T], z: &Sample<T>) -> T {
        let one = T::one();
        match self.kind {
            ProblemKind::LeastSquares => {
                let r = dot(w, &z.x) - z.y;
                T::of(0.5) * r * r
            }
            ProblemKind::Logistic => {
                let m = z.y * dot(w, &z.x);
                (-m).max(T::zero()) + (-(m.abs())).exp().ln_1p()
            }
            ProblemKind::QnormHinge { q } => {
                let u = one - z.y * dot(w, &z.x);
                if u > T::zero() {
                    u.powf(T::of(q))
                } else {
                    T::zero()
                }
            }
            ProblemKind::Pl1dSine => {
                let a = w[0].sin() + self.noise_level * z.y * T::of(0.5);
                w[0] * w[0] + a * a
            }
            ProblemKind::Qg1dQuartic => {
                let u = w[0] * w[0] - T::of(4.0) + self.noise_level * z.y * T::of(0.5);
                u * u
            }
        }
    }

    /// Writes `∇f(w; z)` into `out`.
    pub fn grad_into(&self, w: &[T], z: &Sample<T>, out: &mut [T]) {
        let one = T::one();
        let coeff = match self.kind {
            ProblemKind::LeastSquares => dot(w, &z.x) - z.y,
            ProblemKind::Logistic => {
                let m = z.y * dot(w, &z.x);
                // σ(−m), computed without overflow
                let s = if m >= T::zero() {
                    let e = (-m).exp();
                    e / (one + e)
                } else {
                    one / (one + m.exp())
                };
                -z.y * s
            }
            ProblemKind::QnormHinge { q } => {
                let u = one - z.y * dot(w, &z.x);
                if u > T::zero() {
                    -z.y * T::of(q) * u.powf(T::of(q - 1.0))
                } else {
                    // zero-side limit at the kink
                    T::zero()
                }
            }
            ProblemKind::Pl1dSine => {
                let a = w[0].sin() + self.noise_level * z.y * T::of(0.5);
                out[0] = T::of(2.0) * w[0] + T::of(2.0) * a * w[0].cos();
                return;
            }
            ProblemKind::Qg1dQuartic => {
                let u = w[0] * w[0] - T::of(4.0) + self.noise_level * z.y * T::of(0.5);
                out[0] = T::of(4.0) * w[0] * u;
                return;
            }
        };
        for (o, &xi) in out.iter_mut().zip(&z.x) {
            *o = coeff * xi;
        }
    }

    pub fn grad(&self, w: &[T], z: &Sample<T>) -> Vec<T> {
        let mut g = vec![T::zero(); w.len()];
        self.grad_into(w, z, &mut g);
        g
    }

    /// Exact `(sample, probability)` enumeration of the data distribution.
    pub fn support(&self) -> Vec<(Sample<T>, T)> {
        if !self.support.is_empty() {
            return self.support.clone();
        }
        self.enumerate_support()
    }

    fn enumerate_support(&self) -> Vec<(Sample<T>, T)> {
        let half = T::of(0.5);
        match self.kind {
            ProblemKind::LeastSquares => {
                let w = half / T::of_usize(self.design.support_size());
                self.design
                    .points()
                    .flat_map(|x| {
                        let m = dot(&self.target, &x);
                        [
                            (Sample { x: x.clone(), y: m + self.noise_level }, w),
                            (Sample { x, y: m - self.noise_level }, w),
                        ]
                    })
                    .collect()
            }
            ProblemKind::Logistic | ProblemKind::QnormHinge { .. } => {
                let base = T::one() / T::of_usize(self.design.support_size());
                let flip = self.noise_level;
                self.design
                    .points()
                    .flat_map(|x| {
                        let y = self.clean_label(&x);
                        [
                            (Sample { x: x.clone(), y }, base * (T::one() - flip)),
                            (Sample { x, y: -y }, base * flip),
                        ]
                    })
                    .filter(|(_, p)| *p > T::zero())
                    .collect()
            }
            ProblemKind::Pl1dSine | ProblemKind::Qg1dQuartic => vec![
                (Sample { x: vec![T::one()], y: T::one() }, half),
                (Sample { x: vec![T::one()], y: -T::one() }, half),
            ],
        }
    }

    /// The support as a dataset when every support point is equally likely.
    pub fn support_dataset(&self) -> Option<Dataset<T>> {
        let support = self.support();
        let p0 = support.first()?.1;
        if support.iter().any(|(_, p)| *p != p0) {
            return None;
        }
        Some(Dataset::new(support.into_iter().map(|(z, _)| z).collect(), 0, self.id.clone()))
    }

    /// Exact population risk, ignoring the Monte-Carlo mode and the domain.
    pub fn exact_risk(&self, w: &[T]) -> T {
        let quarter = T::of(0.25);
        let nu2 = self.noise_level * self.noise_level;
        match self.kind {
            ProblemKind::LeastSquares => {
                let e = sub(w, &self.target);
                T::of(0.5) * (self.second_moment.quad_form(&e) + nu2)
            }
            ProblemKind::Pl1dSine => {
                let s = w[0].sin();
                w[0] * w[0] + s * s + quarter * nu2
            }
            ProblemKind::Qg1dQuartic => {
                let u = w[0] * w[0] - T::of(4.0);
                u * u + quarter * nu2
            }
            ProblemKind::Logistic | ProblemKind::QnormHinge { .. } => {
                self.support.iter().map(|(z, p)| *p * self.loss(w, z)).sum()
            }
        }
    }

    /// Exact population gradient, ignoring the Monte-Carlo mode and the domain.
    pub fn exact_gradient(&self, w: &[T]) -> Vec<T> {
        match self.kind {
            ProblemKind::LeastSquares => self.second_moment.mul_vec(&sub(w, &self.target)),
            ProblemKind::Pl1dSine => vec![T::of(2.0) * w[0] + (T::of(2.0) * w[0]).sin()],
            ProblemKind::Qg1dQuartic => vec![T::of(4.0) * w[0] * (w[0] * w[0] - T::of(4.0))],
            ProblemKind::Logistic | ProblemKind::QnormHinge { .. } => {
                let mut g = vec![T::zero(); w.len()];
                let mut buf = vec![T::zero(); w.len()];
                for (z, p) in &self.support {
                    self.grad_into(w, z, &mut buf);
                    for (gi, &bi) in g.iter_mut().zip(&buf) {
                        *gi = *gi + *p * bi;
                    }
                }
                g
            }
        }
    }

    /// `F(w) − F*` without cancellation for the analytic kinds.
    pub fn exact_excess_risk(&self, w: &[T]) -> T {
        match self.kind {
            ProblemKind::LeastSquares => {
                let e = sub(w, &self.target);
                T::of(0.5) * self.second_moment.quad_form(&e)
            }
            ProblemKind::Pl1dSine => {
                let s = w[0].sin();
                w[0] * w[0] + s * s
            }
            ProblemKind::Qg1dQuartic => {
                let u = w[0] * w[0] - T::of(4.0);
                u * u
            }
            _ => (self.exact_risk(w) - self.f_star()).max(T::zero()),
        }
    }

    /// Population risk `F(w)`; Monte-Carlo problems report the sample mean and its error bar.
    pub fn population_risk(&self, w: &[T]) -> Result<RiskValue<T>> {
        self.check_domain(w)?;
        Ok(match self.pop_risk_mode {
            PopRiskMode::ClosedForm => RiskValue {
                value: self.exact_risk(w),
                stderr: None,
                samples: None,
            },
            PopRiskMode::MonteCarlo { samples, seed } => {
                let (mean, se) = self.monte_carlo(samples, seed, |z| self.loss(w, z));
                RiskValue {
                    value: mean,
                    stderr: Some(se),
                    samples: Some(samples),
                }
            }
        })
    }

    pub fn population_gradient(&self, w: &[T]) -> Result<Vec<T>> {
        self.check_domain(w)?;
        Ok(match self.pop_risk_mode {
            PopRiskMode::ClosedForm => self.exact_gradient(w),
            PopRiskMode::MonteCarlo { samples, seed } => {
                let mut g = vec![T::zero(); w.len()];
                let mut buf = vec![T::zero(); w.len()];
                for k in 0..samples {
                    let z = self.sample(seed, k as u64);
                    self.grad_into(w, &z, &mut buf);
                    for (gi, &bi) in g.iter_mut().zip(&buf) {
                        *gi = *gi + bi;
                    }
                }
                let m = T::of_usize(samples);
                g.iter_mut().for_each(|gi| *gi = *gi / m);
                g
            }
        })
    }

    /// Mean and standard error of `h(z)` over `samples` fresh draws.
    pub fn monte_carlo(&self, samples: usize, seed: u64, h: impl Fn(&Sample<T>) -> T) -> (T, T) {
        let mut mean = 0.0f64;
        let mut m2 = 0.0f64;
        for k in 0..samples {
            let v = h(&self.sample(seed, k as u64)).as_f64();
            let delta = v - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (v - mean);
        }
        let var = m2 / (samples.max(2) - 1) as f64;
        (T::of(mean), T::of((var / samples as f64).sqrt()))
    }

    pub fn empirical_risk(&self, data: &Dataset<T>, w: &[T]) -> T {
        let n = T::of_usize(data.len());
        data.samples().iter().map(|z| self.loss(w, z)).sum::<T>() / n
    }

    pub fn empirical_gradient(&self, data: &Dataset<T>, w: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); w.len()];
        let mut buf = vec![T::zero(); w.len()];
        for z in data.samples() {
            self.grad_into(w, z, &mut buf);
            for (gi, &bi) in g.iter_mut().zip(&buf) {
                *gi = *gi + bi;
            }
        }
        let n = T::of_usize(data.len());
        g.iter_mut().for_each(|gi| *gi = *gi / n);
        g
    }

    fn compute_minimizers(&self) -> Result<Vec<Vec<T>>> {
        Ok(match self.kind {
            ProblemKind::LeastSquares => vec![self.target.clone()],
            ProblemKind::Pl1dSine => vec![vec![T::zero()]],
            // +2 first: the deterministic tie-break selects this basin
            ProblemKind::Qg1dQuartic => vec![vec![T::of(2.0)], vec![T::of(-2.0)]],
            ProblemKind::Logistic | ProblemKind::QnormHinge { .. } => {
                let d = self.dimension();
                let sol = descent::armijo_run(
                    |w| (self.exact_risk(w), self.exact_gradient(w)),
                    vec![T::zero(); d],
                    T::erm_tolerance() * T::of(0.01),
                    200_000,
                )?;
                // q < 2 hinge risks have unbounded curvature at kinks, where
                // descent crawls; a slightly looser stationarity is accepted
                let accept = T::erm_tolerance().sqrt() * T::of(0.1);
                if !(sol.grad_norm <= accept) {
                    return Err(Error::config(format!(
                        "no finite population minimizer found (gradient norm {})",
                        sol.grad_norm
                    )));
                }
                vec![sol.w]
            }
        })
    }

    fn compute_certificate(&self, radius: T) -> Certificate<T> {
        let w_star = self.minimizers[0].clone();
        let nu = self.noise_level;
        let r = self.design.max_norm();
        let two = T::of(2.0);
        let lambda_min = self.second_moment.symmetric_eigen().min_value().max(T::zero());
        let f_star = match self.kind {
            ProblemKind::LeastSquares => T::of(0.5) * nu * nu,
            ProblemKind::Pl1dSine | ProblemKind::Qg1dQuartic => T::of(0.25) * nu * nu,
            _ => self.exact_risk(&w_star),
        };
        let (grad_sq_at_opt, grad_max_at_opt) = {
            let mut mean = T::zero();
            let mut max = T::zero();
            for (z, p) in self.support() {
                let g = norm_sq(&self.grad(&w_star, &z));
                mean = mean + p * g;
                max = max.max(g.sqrt());
            }
            (mean, max)
        };

        let (lipschitz, beta, holder_p, alpha, mu_qg, mu_pl) = match self.kind {
            ProblemKind::LeastSquares => {
                let beta = r * r;
                let lip = r * (r * radius + nu);
                (Some(lip), Some(beta), beta, T::one(), Some(lambda_min), Some(lambda_min))
            }
            ProblemKind::Logistic => {
                let beta = r * r * T::of(0.25);
                let margin = r * (norm(&w_star) + radius);
                let e = (-margin).exp();
                let curvature = e / ((T::one() + e) * (T::one() + e));
                let mu = curvature * lambda_min;
                (Some(r), Some(beta), beta, T::one(), Some(mu), Some(mu))
            }
            ProblemKind::QnormHinge { q } => {
                let qt = T::of(q);
                let max_slack = T::one() + r * (norm(&w_star) + radius);
                let lip = qt * r * max_slack.powf(qt - T::one());
                let p = qt * r.powf(qt);
                let beta = (q == 2.0).then(|| two * r * r);
                (Some(lip), beta, p, qt - T::one(), None, None)
            }
            ProblemKind::Pl1dSine => {
                let beta = T::of(4.0) + nu;
                let lip = two * radius + T::one() + nu;
                // w² + sin² w ≥ w² = (2/2)·w²
                (Some(lip), Some(beta), beta, T::one(), Some(two), None)
            }
            ProblemKind::Qg1dQuartic => {
                let w_max = norm(&w_star) + radius;
                let beta = T::of(12.0) * w_max * w_max - T::of(16.0) + two * nu;
                let lip = T::of(4.0) * w_max * (w_max * w_max - T::of(4.0) + nu * T::of(0.5));
                // 2(F − F*)/dist² = 2(|w| + 2)² ≥ 8, tight at w = 0
                (Some(lip), Some(beta), beta, T::one(), Some(T::of(8.0)), None)
            }
        };
        let eta_cap = beta.map_or(T::one(), |b| T::one() / (two * b));
        let relaxed_g = lipschitz.unwrap_or(T::zero()) * eta_cap.sqrt();

        Certificate {
            lipschitz_l: lipschitz,
            smooth_beta: beta,
            holder_p,
            holder_alpha: alpha,
            mu_qg,
            mu_pl,
            sigma_sq: grad_sq_at_opt,
            bernstein_bstar: grad_max_at_opt,
            relaxed_grad_g: relaxed_g,
            min_pop_risk_fstar: f_star,
            domain_radius_r: radius,
            minimizer_wstar: w_star,
        }
    }
}

fn placeholder_certificate<T: Scalar>(dim: usize) -> Certificate<T> {
    Certificate {
        lipschitz_l: None,
        smooth_beta: None,
        holder_p: T::one(),
        holder_alpha: T::one(),
        mu_qg: None,
        mu_pl: None,
        sigma_sq: T::zero(),
        bernstein_bstar: T::zero(),
        relaxed_grad_g: T::zero(),
        min_pop_risk_fstar: T::zero(),
        domain_radius_r: T::one(),
        minimizer_wstar: vec![T::zero(); dim],
    }
}

/// Draws `n` i.i.d. samples; sample `i` depends only on `(seed, i)`.
pub fn sample_dataset<T: Scalar>(problem: &Problem<T>, n: usize, seed: u64) -> Dataset<T> {
    let samples = (0..n as u64).map(|i| problem.sample(seed, i)).collect();
    Dataset::new(samples, seed, problem.id().to_string())
}

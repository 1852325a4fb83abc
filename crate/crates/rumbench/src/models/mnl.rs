//! Multinomial logit estimated by maximum likelihood.
//!
//! The negative log-likelihood of a softmax model with linear-in-parameters
//! utilities is convex, so a quasi-Newton minimiser with a backtracking line
//! search converges to the global optimum from any start. Two utility
//! layouts are supported: the conditional-logit layout used for the
//! synthetic benchmarks, where each alternative scores only its own block of
//! attribute columns, and a plain softmax-regression layout for ingested
//! datasets, where every class scores all columns.

use serde::{Deserialize, Serialize};

use super::{ensure_finite, softmax_in_place, ChoiceModel};
use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};

/// How feature columns enter the systematic utilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum MnlDesign {
    /// Alternative `i` has utility `asc_i + sum_j coef(i,j) * row[i*a + j]`
    /// over its own block of `a` consecutive attribute columns, with its own
    /// coefficients. The first alternative's intercept is anchored at zero
    /// for identification.
    PerAlternative {
        n_alternatives: usize,
        attrs_per_alt: usize,
    },
    /// Class `c >= 1` has utility `asc_c + w_c . row` over all feature
    /// columns; class 0 is the reference with utility zero.
    Multinomial {
        n_alternatives: usize,
        n_features: usize,
    },
}

impl MnlDesign {
    pub fn n_alternatives(&self) -> usize {
        match *self {
            MnlDesign::PerAlternative { n_alternatives, .. } => n_alternatives,
            MnlDesign::Multinomial { n_alternatives, .. } => n_alternatives,
        }
    }

    pub fn n_features(&self) -> usize {
        match *self {
            MnlDesign::PerAlternative {
                n_alternatives,
                attrs_per_alt,
            } => n_alternatives * attrs_per_alt,
            MnlDesign::Multinomial { n_features, .. } => n_features,
        }
    }

    /// Number of free parameters after anchoring the reference intercepts.
    pub fn n_params(&self) -> usize {
        match *self {
            MnlDesign::PerAlternative {
                n_alternatives,
                attrs_per_alt,
            } => (n_alternatives - 1) + n_alternatives * attrs_per_alt,
            MnlDesign::Multinomial {
                n_alternatives,
                n_features,
            } => (n_alternatives - 1) * (1 + n_features),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MnlDesign::PerAlternative {
                n_alternatives,
                attrs_per_alt,
            } => {
                if n_alternatives < 2 || attrs_per_alt == 0 {
                    return Err(Error::config(
                        "per-alternative design needs >= 2 alternatives and >= 1 attribute each",
                    ));
                }
            }
            MnlDesign::Multinomial {
                n_alternatives,
                n_features,
            } => {
                if n_alternatives < 2 || n_features == 0 {
                    return Err(Error::config(
                        "multinomial design needs >= 2 alternatives and >= 1 feature",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Whether a parameter index is an intercept (exempt from penalties).
    fn is_intercept(&self, index: usize) -> bool {
        match *self {
            MnlDesign::PerAlternative { n_alternatives, .. } => index < n_alternatives - 1,
            MnlDesign::Multinomial { n_features, .. } => index % (1 + n_features) == 0,
        }
    }

    /// Fill `out` with the systematic utilities of one feature row.
    fn utilities(&self, row: &[f64], params: &[f64], out: &mut [f64]) {
        match *self {
            MnlDesign::PerAlternative {
                n_alternatives,
                attrs_per_alt,
            } => {
                let coef0 = n_alternatives - 1;
                for (i, slot) in out.iter_mut().enumerate() {
                    let mut v = if i == 0 { 0.0 } else { params[i - 1] };
                    let block = i * attrs_per_alt;
                    for j in 0..attrs_per_alt {
                        v += params[coef0 + block + j] * row[block + j];
                    }
                    *slot = v;
                }
            }
            MnlDesign::Multinomial { n_features, .. } => {
                out[0] = 0.0;
                for (c, slot) in out.iter_mut().enumerate().skip(1) {
                    let base = (c - 1) * (1 + n_features);
                    let mut v = params[base];
                    for j in 0..n_features {
                        v += params[base + 1 + j] * row[j];
                    }
                    *slot = v;
                }
            }
        }
    }

    /// Add the utility-space residuals `d_i = P_i - y_i` of one row into the
    /// parameter gradient.
    fn accumulate_grad(&self, row: &[f64], residual: &[f64], grad: &mut [f64]) {
        match *self {
            MnlDesign::PerAlternative {
                n_alternatives,
                attrs_per_alt,
            } => {
                let coef0 = n_alternatives - 1;
                for (i, &d) in residual.iter().enumerate() {
                    if i > 0 {
                        grad[i - 1] += d;
                    }
                    let block = i * attrs_per_alt;
                    for j in 0..attrs_per_alt {
                        grad[coef0 + block + j] += d * row[block + j];
                    }
                }
            }
            MnlDesign::Multinomial { n_features, .. } => {
                for (c, &d) in residual.iter().enumerate().skip(1) {
                    let base = (c - 1) * (1 + n_features);
                    grad[base] += d;
                    for j in 0..n_features {
                        grad[base + 1 + j] += d * row[j];
                    }
                }
            }
        }
    }

    fn check_dataset(&self, dataset: &ChoiceDataset) -> Result<()> {
        if dataset.n_attributes() != self.n_features() {
            return Err(Error::dimension(format!(
                "design expects {} features, dataset has {}",
                self.n_features(),
                dataset.n_attributes()
            )));
        }
        if dataset.n_alternatives() != self.n_alternatives() {
            return Err(Error::dimension(format!(
                "design expects {} alternatives, dataset has {}",
                self.n_alternatives(),
                dataset.n_alternatives()
            )));
        }
        Ok(())
    }

    /// Mean negative log-likelihood at `params`, without any penalty.
    pub fn nll(&self, dataset: &ChoiceDataset, params: &[f64]) -> Result<f64> {
        Ok(self.objective(dataset, params, Penalty::None)?.0)
    }

    /// Gradient of the mean negative log-likelihood at `params`.
    pub fn nll_grad(&self, dataset: &ChoiceDataset, params: &[f64]) -> Result<Vec<f64>> {
        Ok(self.objective(dataset, params, Penalty::None)?.1)
    }

    /// Penalised objective value and gradient in one pass.
    fn objective(
        &self,
        dataset: &ChoiceDataset,
        params: &[f64],
        penalty: Penalty,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_dataset(dataset)?;
        if params.len() != self.n_params() {
            return Err(Error::dimension(format!(
                "design has {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let n = dataset.n_rows();
        if n == 0 {
            return Err(Error::config("cannot evaluate likelihood on an empty dataset"));
        }
        let k = self.n_alternatives();
        let mut grad = vec![0.0; params.len()];
        let mut nll = 0.0;
        let mut u = vec![0.0; k];
        let mut residual = vec![0.0; k];
        for r in 0..n {
            let row = dataset.row(r);
            self.utilities(row, params, &mut u);
            let max = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for &v in u.iter() {
                sum += (v - max).exp();
            }
            let log_z = max + sum.ln();
            let chosen = dataset.chosen(r);
            nll += log_z - u[chosen];
            for i in 0..k {
                residual[i] = (u[i] - log_z).exp() - if i == chosen { 1.0 } else { 0.0 };
            }
            self.accumulate_grad(row, &residual, &mut grad);
        }
        nll /= n as f64;
        for g in grad.iter_mut() {
            *g /= n as f64;
        }
        penalty.add_to(self, params, &mut nll, &mut grad)?;
        Ok((nll, grad))
    }
}

/// Regularisation term added to the mean negative log-likelihood.
///
/// The penalty is `lambda/2 * F(w)` over the slope coefficients only;
/// intercepts are never penalised. The L1 term uses a subgradient at zero,
/// which is adequate for the smooth quasi-Newton path used here but does not
/// produce exact zeros the way a proximal method would.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    None,
    L1 { lambda: f64 },
    L2 { lambda: f64 },
}

impl Penalty {
    pub fn validate(&self) -> Result<()> {
        let lambda = match *self {
            Penalty::None => return Ok(()),
            Penalty::L1 { lambda } | Penalty::L2 { lambda } => lambda,
        };
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::config("penalty strength must be finite and >= 0"));
        }
        Ok(())
    }

    fn add_to(
        &self,
        design: &MnlDesign,
        params: &[f64],
        value: &mut f64,
        grad: &mut [f64],
    ) -> Result<()> {
        self.validate()?;
        match *self {
            Penalty::None => {}
            Penalty::L2 { lambda } => {
                for (i, &w) in params.iter().enumerate() {
                    if !design.is_intercept(i) {
                        *value += 0.5 * lambda * w * w;
                        grad[i] += lambda * w;
                    }
                }
            }
            Penalty::L1 { lambda } => {
                for (i, &w) in params.iter().enumerate() {
                    if !design.is_intercept(i) && w != 0.0 {
                        *value += 0.5 * lambda * w.abs();
                        grad[i] += 0.5 * lambda * w.signum();
                    }
                }
            }
        }
        Ok(())
    }
}

/// Estimation settings for [`Mnl::fit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MnlConfig {
    pub design: MnlDesign,
    pub penalty: Penalty,
    /// L2 norm of the gradient below which the fit is declared converged.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Starting parameters; zeros when absent.
    pub initial: Option<Vec<f64>>,
}

impl MnlConfig {
    pub fn new(design: MnlDesign) -> Self {
        MnlConfig {
            design,
            penalty: Penalty::None,
            grad_tol: 1e-6,
            max_iter: 500,
            initial: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        self.penalty.validate()?;
        if !self.grad_tol.is_finite() || self.grad_tol <= 0.0 {
            return Err(Error::config("grad_tol must be finite and positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be positive"));
        }
        if let Some(init) = &self.initial {
            if init.len() != self.design.n_params() {
                return Err(Error::dimension(format!(
                    "initial vector has {} entries, design has {} parameters",
                    init.len(),
                    self.design.n_params()
                )));
            }
            ensure_finite(init, "initial parameters")?;
        }
        Ok(())
    }
}

/// A fitted multinomial logit model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mnl {
    design: MnlDesign,
    params: Vec<f64>,
    /// Quasi-Newton iterations the fit used.
    pub iterations: usize,
    /// Penalised objective value at the solution.
    pub objective: f64,
}

impl Mnl {
    /// Build a model directly from parameters, without fitting.
    pub fn from_params(design: MnlDesign, params: Vec<f64>) -> Result<Self> {
        let model = Mnl {
            design,
            params,
            iterations: 0,
            objective: f64::NAN,
        };
        model.validate()?;
        Ok(model)
    }

    /// Maximum-likelihood estimation by BFGS with backtracking line search.
    ///
    /// Converges when the objective gradient's L2 norm drops below
    /// `config.grad_tol`; exceeding `config.max_iter` reports
    /// [`Error::NonConvergence`] rather than returning a half-fitted model.
    pub fn fit(dataset: &ChoiceDataset, config: &MnlConfig) -> Result<Self> {
        config.validate()?;
        let design = config.design;
        let p = design.n_params();
        let mut x = config
            .initial
            .clone()
            .unwrap_or_else(|| vec![0.0; p]);
        let (mut fx, mut g) = design.objective(dataset, &x, config.penalty)?;

        // Inverse Hessian approximation, dense row-major p x p.
        let mut h = identity(p);
        let mut hy = vec![0.0; p];
        let mut direction = vec![0.0; p];

        for iter in 0..config.max_iter {
            let grad_norm = norm(&g);
            if grad_norm < config.grad_tol {
                return Ok(Mnl {
                    design,
                    params: x,
                    iterations: iter,
                    objective: fx,
                });
            }

            mat_vec(&h, &g, &mut direction);
            for d in direction.iter_mut() {
                *d = -*d;
            }
            let mut slope = dot(&g, &direction);
            if slope >= 0.0 {
                // Lost positive-definiteness; restart from steepest descent.
                h = identity(p);
                for (d, &gi) in direction.iter_mut().zip(&g) {
                    *d = -gi;
                }
                slope = -dot(&g, &g);
            }

            // Armijo backtracking.
            let mut step = 1.0;
            let (x_new, f_new, g_new) = loop {
                let candidate: Vec<f64> = x
                    .iter()
                    .zip(&direction)
                    .map(|(xi, di)| xi + step * di)
                    .collect();
                let (f_cand, g_cand) = design.objective(dataset, &candidate, config.penalty)?;
                if f_cand.is_finite() && f_cand <= fx + 1e-4 * step * slope {
                    break (candidate, f_cand, g_cand);
                }
                step *= 0.5;
                if step < 1e-20 {
                    return Err(Error::NonConvergence {
                        iterations: iter,
                        grad_norm,
                    });
                }
            };

            // BFGS inverse update with curvature guard.
            let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 {
                let rho = 1.0 / sy;
                mat_vec(&h, &y, &mut hy);
                let yhy = dot(&y, &hy);
                let coeff = rho * rho * yhy + rho;
                for i in 0..p {
                    for j in 0..p {
                        h[i * p + j] +=
                            coeff * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                    }
                }
            } else {
                h = identity(p);
            }

            x = x_new;
            fx = f_new;
            g = g_new;
        }

        Err(Error::NonConvergence {
            iterations: config.max_iter,
            grad_norm: norm(&g),
        })
    }

    pub fn design(&self) -> MnlDesign {
        self.design
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Optimizer iterations spent fitting; zero for directly built models.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Final objective value (mean penalised negative log-likelihood).
    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// Intercept of an alternative; the reference alternative's is zero.
    pub fn asc(&self, alternative: usize) -> Result<f64> {
        let k = self.design.n_alternatives();
        if alternative >= k {
            return Err(Error::dimension(format!(
                "alternative {alternative} out of range for {k} alternatives"
            )));
        }
        if alternative == 0 {
            return Ok(0.0);
        }
        match self.design {
            MnlDesign::PerAlternative { .. } => Ok(self.params[alternative - 1]),
            MnlDesign::Multinomial { n_features, .. } => {
                Ok(self.params[(alternative - 1) * (1 + n_features)])
            }
        }
    }

    /// Slope coefficient of `alternative` on one attribute.
    ///
    /// For the per-alternative layout, `attr` indexes within the
    /// alternative's own block (0 = first own attribute). For the
    /// multinomial layout it indexes the global feature columns, and the
    /// reference class 0 has all-zero coefficients.
    pub fn coefficient(&self, alternative: usize, attr: usize) -> Result<f64> {
        let k = self.design.n_alternatives();
        if alternative >= k {
            return Err(Error::dimension(format!(
                "alternative {alternative} out of range for {k} alternatives"
            )));
        }
        match self.design {
            MnlDesign::PerAlternative {
                n_alternatives,
                attrs_per_alt,
            } => {
                if attr >= attrs_per_alt {
                    return Err(Error::dimension(format!(
                        "attribute {attr} out of range for {attrs_per_alt} per alternative"
                    )));
                }
                Ok(self.params[(n_alternatives - 1) + alternative * attrs_per_alt + attr])
            }
            MnlDesign::Multinomial { n_features, .. } => {
                if attr >= n_features {
                    return Err(Error::dimension(format!(
                        "attribute {attr} out of range for {n_features} features"
                    )));
                }
                if alternative == 0 {
                    return Ok(0.0);
                }
                Ok(self.params[(alternative - 1) * (1 + n_features) + 1 + attr])
            }
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.params.len() != self.design.n_params() {
            return Err(Error::InvalidModel(format!(
                "design has {} parameters, document carries {}",
                self.design.n_params(),
                self.params.len()
            )));
        }
        ensure_finite(&self.params, "mnl parameters")
    }
}

impl ChoiceModel for Mnl {
    fn n_features(&self) -> usize {
        self.design.n_features()
    }

    fn n_alternatives(&self) -> usize {
        self.design.n_alternatives()
    }

    fn predict_proba_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features() {
            return Err(Error::dimension(format!(
                "model expects {} features, row has {}",
                self.n_features(),
                row.len()
            )));
        }
        let mut u = vec![0.0; self.n_alternatives()];
        self.design.utilities(row, &self.params, &mut u);
        softmax_in_place(&mut u);
        Ok(u)
    }

    fn as_mnl(&self) -> Option<&Mnl> {
        Some(self)
    }
}

fn identity(p: usize) -> Vec<f64> {
    let mut m = vec![0.0; p * p];
    for i in 0..p {
        m[i * p + i] = 1.0;
    }
    m
}

fn mat_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let p = v.len();
    for (i, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..p {
            acc += m[i * p + j] * v[j];
        }
        *slot = acc;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

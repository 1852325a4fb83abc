//! Ground-truth quantities implied by a synthetic configuration.
//!
//! For Gumbel errors the choice probabilities have the closed multinomial
//! logit form; for Normal errors they are estimated by Monte Carlo with
//! common random numbers (the same error draws are reused across evaluation
//! points, which keeps estimated probability curves smooth).

use rand::Rng;

use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};
use crate::metrics::Scenario;
use crate::rng;
use crate::synth::{ErrorFamily, ErrorSpec, UtilityForm, UtilitySpec, N_ALTERNATIVES};

/// Known data-generating process of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    utility: UtilitySpec,
    error: ErrorSpec,
}

impl GroundTruth {
    pub fn new(utility: UtilitySpec, error: ErrorSpec) -> Self {
        GroundTruth { utility, error }
    }

    pub fn utility(&self) -> &UtilitySpec {
        &self.utility
    }

    pub fn error(&self) -> &ErrorSpec {
        &self.error
    }

    fn check_row(row: &[f64]) -> Result<()> {
        if row.len() != 2 * N_ALTERNATIVES {
            return Err(Error::dimension(format!(
                "expected {} attributes (x_i, I_i per alternative), got {}",
                2 * N_ALTERNATIVES,
                row.len()
            )));
        }
        Ok(())
    }

    /// Systematic utilities of the three alternatives for one attribute row.
    pub fn systematic_utilities(&self, row: &[f64]) -> Result<[f64; N_ALTERNATIVES]> {
        Self::check_row(row)?;
        let mut v = [0.0; N_ALTERNATIVES];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = self.utility.value(row[2 * i], row[2 * i + 1]);
        }
        Ok(v)
    }

    /// Closed-form logit probabilities; only defined for Gumbel errors.
    pub fn logit_probabilities(&self, row: &[f64]) -> Result<[f64; N_ALTERNATIVES]> {
        if self.error.family != ErrorFamily::Gumbel {
            return Err(Error::Family(
                "closed-form choice probabilities require Gumbel errors".into(),
            ));
        }
        let v = self.systematic_utilities(row)?;
        if self.error.dispersion == 0.0 {
            let best = argmax(&v);
            let mut p = [0.0; N_ALTERNATIVES];
            p[best] = 1.0;
            return Ok(p);
        }
        Ok(softmax_scaled(&v, self.error.dispersion))
    }

    /// Monte Carlo probit probabilities; only defined for Normal errors.
    ///
    /// Estimates are shares of simulated utility maximisers, so they are
    /// non-negative and sum to one exactly. Calls with the same `seed` share
    /// error draws (common random numbers).
    pub fn probit_probabilities(
        &self,
        row: &[f64],
        n_draws: usize,
        seed: u64,
    ) -> Result<[f64; N_ALTERNATIVES]> {
        if self.error.family != ErrorFamily::Normal {
            return Err(Error::Family(
                "simulated probit probabilities require Normal errors".into(),
            ));
        }
        if n_draws == 0 {
            return Err(Error::config("n_draws must be positive"));
        }
        let v = self.systematic_utilities(row)?;
        let mut rng = rng::stream(seed, "truth/probit");
        let mut counts = [0usize; N_ALTERNATIVES];
        let mut total = [0.0; N_ALTERNATIVES];
        for _ in 0..n_draws {
            for i in 0..N_ALTERNATIVES {
                total[i] = v[i] + self.error.draw(&mut rng);
            }
            counts[argmax(&total)] += 1;
        }
        let mut p = [0.0; N_ALTERNATIVES];
        for i in 0..N_ALTERNATIVES {
            p[i] = counts[i] as f64 / n_draws as f64;
        }
        Ok(p)
    }

    /// Choice probabilities for either family.
    ///
    /// Logit uses the closed form (`n_draws` and `seed` are ignored); probit
    /// falls back to Monte Carlo.
    pub fn probabilities(
        &self,
        row: &[f64],
        n_draws: usize,
        seed: u64,
    ) -> Result<[f64; N_ALTERNATIVES]> {
        match self.error.family {
            ErrorFamily::Gumbel => self.logit_probabilities(row),
            ErrorFamily::Normal => self.probit_probabilities(row, n_draws, seed),
        }
    }

    /// True market shares (percent) under a demand scenario, by simulating
    /// `n_draws` fresh observations whose attributes are uniform on the unit
    /// cube before the scenario transform is applied.
    pub fn market_shares(
        &self,
        scenario: Scenario,
        n_draws: usize,
        seed: u64,
    ) -> Result<[f64; N_ALTERNATIVES]> {
        if n_draws == 0 {
            return Err(Error::config("n_draws must be positive"));
        }
        let mut attr_rng = rng::stream(seed, "truth/shares/attrs");
        let mut err_rng = rng::stream(seed, "truth/shares/errors");
        let mut counts = [0usize; N_ALTERNATIVES];
        let mut row = [0.0f64; 2 * N_ALTERNATIVES];
        let mut total = [0.0f64; N_ALTERNATIVES];
        for _ in 0..n_draws {
            for slot in row.iter_mut() {
                *slot = attr_rng.random();
            }
            scenario.transform_row(&mut row)?;
            for i in 0..N_ALTERNATIVES {
                let v = self.utility.value(row[2 * i], row[2 * i + 1]);
                total[i] = v + self.error.draw(&mut err_rng);
            }
            counts[argmax(&total)] += 1;
        }
        let mut shares = [0.0; N_ALTERNATIVES];
        for i in 0..N_ALTERNATIVES {
            shares[i] = 100.0 * counts[i] as f64 / n_draws as f64;
        }
        Ok(shares)
    }

    /// True willingness-to-pay of one alternative at one attribute row: the
    /// ratio of the marginal utility of `x` to the marginal utility of `I`.
    ///
    /// Linear utilities give the constant `beta_x / beta_i`; Cobb-Douglas
    /// utilities give `beta_x * I / (beta_i * x)`.
    pub fn wtp(&self, row: &[f64], alternative: usize) -> Result<f64> {
        Self::check_row(row)?;
        if alternative >= N_ALTERNATIVES {
            return Err(Error::dimension(format!(
                "alternative {alternative} out of range"
            )));
        }
        if self.utility.beta_i == 0.0 {
            return Err(Error::domain(
                "willingness-to-pay undefined when beta_i is zero",
            ));
        }
        match self.utility.form {
            UtilityForm::Linear => Ok(self.utility.beta_x / self.utility.beta_i),
            UtilityForm::CobbDouglas => {
                let x = row[2 * alternative];
                let income = row[2 * alternative + 1];
                if x <= 0.0 {
                    return Err(Error::domain(
                        "Cobb-Douglas willingness-to-pay needs x > 0",
                    ));
                }
                Ok(self.utility.beta_x * income / (self.utility.beta_i * x))
            }
        }
    }
}

/// Index of the maximum, ties resolved towards the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax of `values / scale`.
fn softmax_scaled(values: &[f64; N_ALTERNATIVES], scale: f64) -> [f64; N_ALTERNATIVES] {
    let mut scaled = [0.0; N_ALTERNATIVES];
    for i in 0..N_ALTERNATIVES {
        scaled[i] = values[i] / scale;
    }
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; N_ALTERNATIVES];
    let mut sum = 0.0;
    for i in 0..N_ALTERNATIVES {
        out[i] = (scaled[i] - max).exp();
        sum += out[i];
    }
    for slot in out.iter_mut() {
        *slot /= sum;
    }
    out
}

/// Share of rows (percent) whose observed choice equals the noise-free
/// utility maximiser: the best accuracy any model can reach on this data.
pub fn max_accuracy(dataset: &ChoiceDataset) -> Result<f64> {
    let flags = dataset.systematic().ok_or_else(|| {
        Error::config("dataset carries no systematic flags; was it generated synthetically?")
    })?;
    if flags.is_empty() {
        return Err(Error::config("empty dataset"));
    }
    let hits = flags.iter().filter(|&&f| f).count();
    Ok(100.0 * hits as f64 / flags.len() as f64)
}

/// CDF of the Cobb-Douglas willingness-to-pay distribution when attributes
/// are uniform on the unit square and `beta = beta_x / beta_i > 0`.
pub fn cd_wtp_cdf(beta: f64, z: f64) -> Result<f64> {
    check_beta(beta)?;
    if !z.is_finite() {
        return Err(Error::domain("z must be finite"));
    }
    if z <= 0.0 {
        return Ok(0.0);
    }
    if z <= beta {
        Ok(z / (2.0 * beta))
    } else {
        Ok(1.0 - beta / (2.0 * z))
    }
}

/// Density of the Cobb-Douglas willingness-to-pay distribution.
pub fn cd_wtp_pdf(beta: f64, z: f64) -> Result<f64> {
    check_beta(beta)?;
    if !z.is_finite() {
        return Err(Error::domain("z must be finite"));
    }
    if z < 0.0 {
        return Ok(0.0);
    }
    if z <= beta {
        Ok(1.0 / (2.0 * beta))
    } else {
        Ok(beta / (2.0 * z * z))
    }
}

/// Median of the Cobb-Douglas willingness-to-pay distribution; the mean does
/// not exist (the upper tail decays like `1/z^2`).
pub fn cd_wtp_median(beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(beta)
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::domain("beta must be finite and positive"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::default_dispersion;

    fn logit_truth() -> GroundTruth {
        GroundTruth::new(
            UtilitySpec::new(UtilityForm::Linear, 1.0, 1.0),
            ErrorSpec::new(ErrorFamily::Gumbel, default_dispersion()),
        )
    }

    fn probit_truth() -> GroundTruth {
        GroundTruth::new(
            UtilitySpec::new(UtilityForm::Linear, 1.0, 1.0),
            ErrorSpec::new(ErrorFamily::Normal, default_dispersion()),
        )
    }

    #[test]
    fn logit_probabilities_form_a_simplex() {
        let t = logit_truth();
        let p = t.logit_probabilities(&[0.1, 0.9, 0.5, 0.5, 0.8, 0.2]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn symmetric_rows_have_equal_probabilities() {
        let t = logit_truth();
        let p = t.logit_probabilities(&[0.4, 0.6, 0.4, 0.6, 0.4, 0.6]).unwrap();
        for &x in &p {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn logit_closed_form_matches_brute_force_simulation() {
        // Independent oracle: simulate the choice rule directly with fresh
        // Gumbel draws and compare empirical frequencies.
        let t = logit_truth();
        let row = [0.2, 0.7, 0.9, 0.1, 0.5, 0.5];
        let p = t.logit_probabilities(&row).unwrap();
        let v = t.systematic_utilities(&row).unwrap();
        let mut rng = crate::rng::stream(99, "oracle/logit");
        let n = 2_000_000usize;
        let mut counts = [0usize; 3];
        let scale = default_dispersion();
        for _ in 0..n {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for i in 0..3 {
                let u: f64 = loop {
                    let u: f64 = rng.random();
                    if u > 0.0 {
                        break u;
                    }
                };
                let eps = -scale * (-u.ln()).ln();
                if v[i] + eps > best_v {
                    best_v = v[i] + eps;
                    best = i;
                }
            }
            counts[best] += 1;
        }
        for i in 0..3 {
            let emp = counts[i] as f64 / n as f64;
            // MC std is at most 0.5/sqrt(n) ~ 3.5e-4; allow 5 sigma.
            assert!(
                (emp - p[i]).abs() < 1.8e-3,
                "alt {i}: empirical {emp} vs closed form {}",
                p[i]
            );
        }
    }

    #[test]
    fn probit_estimates_form_a_simplex_and_reuse_draws() {
        let t = probit_truth();
        let row = [0.2, 0.7, 0.9, 0.1, 0.5, 0.5];
        let a = t.probit_probabilities(&row, 50_000, 5).unwrap();
        let b = t.probit_probabilities(&row, 50_000, 5).unwrap();
        assert_eq!(a, b);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn probit_matches_an_independent_simulator() {
        // Second simulator written against rand_distr's Normal type rather
        // than the ErrorSpec draw path.
        let t = probit_truth();
        let row = [0.3, 0.3, 0.6, 0.2, 0.1, 0.9];
        let p = t.probit_probabilities(&row, 400_000, 17).unwrap();
        let v = t.systematic_utilities(&row).unwrap();
        let normal = rand_distr::Normal::new(0.0, default_dispersion()).unwrap();
        let mut rng = crate::rng::stream(4242, "oracle/probit");
        let n = 400_000usize;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let total: Vec<f64> = (0..3).map(|i| v[i] + rng.sample(normal)).collect();
            counts[argmax(&total)] += 1;
        }
        for i in 0..3 {
            let emp = counts[i] as f64 / n as f64;
            assert!(
                (emp - p[i]).abs() < 4e-3,
                "alt {i}: {emp} vs {}",
                p[i]
            );
        }
    }

    #[test]
    fn family_checks_are_enforced() {
        let row = [0.5; 6];
        assert!(matches!(
            probit_truth().logit_probabilities(&row),
            Err(Error::Family(_))
        ));
        assert!(matches!(
            logit_truth().probit_probabilities(&row, 10, 1),
            Err(Error::Family(_))
        ));
    }

    #[test]
    fn degenerate_dispersion_gives_the_systematic_argmax() {
        let t = GroundTruth::new(
            UtilitySpec::new(UtilityForm::Linear, 1.0, 1.0),
            ErrorSpec::new(ErrorFamily::Normal, 0.0),
        );
        let row = [0.9, 0.9, 0.1, 0.1, 0.5, 0.5];
        let p = t.probit_probabilities(&row, 1000, 3).unwrap();
        assert_eq!(p, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_wtp_is_constant() {
        let t = GroundTruth::new(
            UtilitySpec::new(UtilityForm::Linear, 1.0, 2.0),
            ErrorSpec::new(ErrorFamily::Gumbel, default_dispersion()),
        );
        let w = t.wtp(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 0).unwrap();
        assert!((w - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cd_wtp_varies_with_the_row() {
        let t = GroundTruth::new(
            UtilitySpec::new(UtilityForm::CobbDouglas, 1.0, 0.5),
            ErrorSpec::new(ErrorFamily::Gumbel, default_dispersion()),
        );
        let w = t.wtp(&[0.5, 0.25, 0.3, 0.4, 0.5, 0.6], 0).unwrap();
        // beta_x * I / (beta_i * x) = 1 * 0.25 / (0.5 * 0.5)
        assert!((w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cd_wtp_distribution_basics() {
        for beta in [0.5, 1.0, 2.0] {
            assert_eq!(cd_wtp_cdf(beta, beta).unwrap(), 0.5);
            assert_eq!(cd_wtp_median(beta).unwrap(), beta);
            assert_eq!(cd_wtp_cdf(beta, 0.0).unwrap(), 0.0);
            assert!(cd_wtp_cdf(beta, 1e9).unwrap() >= 0.999_999_999);
            // CDF is non-decreasing on a coarse grid.
            let mut last = 0.0;
            for k in 0..200 {
                let z = 0.05 * k as f64;
                let c = cd_wtp_cdf(beta, z).unwrap();
                assert!(c >= last);
                last = c;
            }
        }
        assert!(cd_wtp_cdf(-1.0, 0.5).is_err());
        assert!(cd_wtp_pdf(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn cd_wtp_pdf_matches_numeric_cdf_derivative() {
        let beta = 1.3;
        for &z in &[0.2, 0.9, 1.2999, 1.31, 2.5, 7.0] {
            let h = 1e-6;
            let num = (cd_wtp_cdf(beta, z + h).unwrap() - cd_wtp_cdf(beta, z - h).unwrap())
                / (2.0 * h);
            let pdf = cd_wtp_pdf(beta, z).unwrap();
            assert!(
                (num - pdf).abs() < 1e-4,
                "z={z}: numeric {num} vs pdf {pdf}"
            );
        }
    }

    #[test]
    fn max_accuracy_counts_flags() {
        let ds = ChoiceDataset::new(
            vec!["x1".into(), "I1".into(), "x2".into(), "I2".into(), "x3".into(), "I3".into()],
            vec!["1".into(), "2".into(), "3".into()],
            vec![0.5; 24],
            vec![0, 1, 2, 0],
            None,
            Some(vec![true, true, false, true]),
        )
        .unwrap();
        assert_eq!(max_accuracy(&ds).unwrap(), 75.0);

        let plain = ChoiceDataset::new(
            ds.attribute_names().to_vec(),
            ds.alternative_names().to_vec(),
            vec![0.5; 24],
            vec![0, 1, 2, 0],
            None,
            None,
        )
        .unwrap();
        assert!(max_accuracy(&plain).is_err());
    }
}

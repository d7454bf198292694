//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::process::ExitCode;

use aif_core::design::KKT_TOLERANCE;
use aif_core::{
    aif_convergence_study, aif_empirical, aif_finite_eta, aif_population, brute_force_attack,
    builtin_psi, exponential_tradeoff, l_aif, min_aif_location, min_aif_scale, optimal_attack,
    solve, tradeoff_curve, tradeoff_location, BuiltinPsi, DesignKind, DesignedPsi,
    DistributionModel, LWeights, NormOrder, PopulationContext, PsiSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn psi(b: BuiltinPsi) -> PsiSpec {
    builtin_psi(b).expect("builtin psi")
}

fn orders() -> [NormOrder; 4] {
    [
        NormOrder::One,
        NormOrder::new(1.5).unwrap(),
        NormOrder::new(2.0).unwrap(),
        NormOrder::Infinity,
    ]
}

fn random_data(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()
}

fn c1_mean_aif() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mean = psi(BuiltinPsi::Mean);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let data = random_data(&mut rng, [3, 10, 100][k % 3]);
        for p in orders() {
            let v = aif_empirical(&mean, &data, p)
                .map_err(|e| e.to_string())?
                .value;
            worst = worst.max((v - 1.0).abs());
        }
    }
    check(worst <= 1e-12, format!("max |AIF - 1| = {worst:.2e}"))
}

fn c2_huber_fixed_sample() -> Outcome {
    // 8 of 10 points strictly inside the corners of huber(1) around T = 0.
    let data = [-0.7, -0.45, -0.3, -0.1, 0.05, 0.2, 0.35, 0.65, -6.0, 6.2];
    let h = psi(BuiltinPsi::Huber { b: 1.0 });
    let beta: f64 = 0.8;
    let mut worst = 0.0f64;
    for (p, want) in [
        (2.0, 1.25f64.sqrt()),
        (1.5, beta.powf(-1.0 / 1.5)),
        (3.0, beta.powf(-1.0 / 3.0)),
    ] {
        let v = aif_empirical(&h, &data, NormOrder::new(p).unwrap())
            .map_err(|e| e.to_string())?
            .value;
        worst = worst.max((v - want).abs());
    }
    check(
        worst <= 1e-12,
        format!("max deviation from beta^(-1/p) = {worst:.2e}"),
    )
}

fn c3_gaussian_scale_mle() -> Outcome {
    let g = psi(BuiltinPsi::GaussianScaleMle);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut d1, mut d2) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let data = random_data(&mut rng, 12);
        let t = solve(&g, &data).map_err(|e| e.to_string())?.value;
        let max_abs = data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let a1 = aif_empirical(&g, &data, NormOrder::One)
            .map_err(|e| e.to_string())?
            .value;
        let a2 = aif_empirical(&g, &data, NormOrder::new(2.0).unwrap())
            .map_err(|e| e.to_string())?
            .value;
        d1 = d1.max((a1 - max_abs).abs());
        d2 = d2.max((a2 - t.sqrt()).abs());
    }
    check(
        d1 <= 1e-12 && d2 <= 1e-12,
        format!("max |AIF(1) - max|x|| = {d1:.3e}, max |AIF(2) - sqrt(T_N)| = {d2:.3e}"),
    )
}

fn c4_attack_vs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::NEG_INFINITY;
    let mut cases = 0;
    for b in [
        BuiltinPsi::Mean,
        BuiltinPsi::Huber { b: 1.5 },
        BuiltinPsi::GaussianScaleMle,
    ] {
        let spec = psi(b);
        for _ in 0..4 {
            let data = random_data(&mut rng, 3);
            let spread = data.iter().cloned().fold(f64::MIN, f64::max)
                - data.iter().cloned().fold(f64::MAX, f64::min);
            let eta = 0.01 * spread;
            for p in [
                NormOrder::One,
                NormOrder::new(2.0).unwrap(),
                NormOrder::Infinity,
            ] {
                let opt = optimal_attack(&spec, &data, eta, p).map_err(|e| e.to_string())?;
                let brute =
                    brute_force_attack(&spec, &data, eta, p, 21).map_err(|e| e.to_string())?;
                let excess = (brute.realized_shift - opt.realized_shift) / opt.realized_shift.abs();
                worst = worst.max(excess);
                cases += 1;
            }
        }
    }
    check(
        worst <= 0.02,
        format!("{cases} cases, max (brute - optimal)/optimal = {worst:.3e}"),
    )
}

fn c5_finite_eta() -> Outcome {
    let data = DistributionModel::StandardNormal
        .sample(20, 5)
        .map_err(|e| e.to_string())?;
    let grid = [1e-3, 5e-4, 2.5e-4, 1.25e-4];
    let mut worst = 0.0f64;
    for b in [BuiltinPsi::Huber { b: 1.5 }, BuiltinPsi::GaussianScaleMle] {
        let spec = psi(b);
        for p in [
            NormOrder::One,
            NormOrder::new(2.0).unwrap(),
            NormOrder::Infinity,
        ] {
            let exact = aif_empirical(&spec, &data, p)
                .map_err(|e| e.to_string())?
                .value;
            let fin = aif_finite_eta(&spec, &data, p, &grid)
                .map_err(|e| e.to_string())?
                .value;
            worst = worst.max((fin - exact).abs() / exact);
        }
    }
    check(worst <= 1e-3, format!("max relative gap = {worst:.3e}"))
}

fn c6_population_convergence() -> Outcome {
    let ctx = PopulationContext::new(
        DistributionModel::StandardNormal,
        psi(BuiltinPsi::Huber { b: 1.5 }),
    )
    .map_err(|e| e.to_string())?;
    let p = NormOrder::new(2.0).unwrap();
    let rows = aif_convergence_study(&ctx, p, &[100_000], 6).map_err(|e| e.to_string())?;
    let phi = |x: f64| 0.5 * statrs::function::erf::erfc(-x / 2f64.sqrt());
    let want = (1.0 / (2.0 * phi(1.5) - 1.0)).sqrt();
    let pop = aif_population(&ctx, p).map_err(|e| e.to_string())?.value;
    let rel = (rows[0].empirical_aif - want).abs() / want;
    check(
        rel <= 0.02 && (pop - want).abs() < 1e-8,
        format!(
            "N=1e5 empirical {:.5}, quadrature {pop:.5}, target {want:.5}, rel {rel:.2e}",
            rows[0].empirical_aif
        ),
    )
}

fn c7_exponential_design(designs: &mut Vec<DesignedPsi>) -> Outcome {
    let d = exponential_tradeoff(3.0).map_err(|e| e.to_string())?;
    let a = d.active_region[0].hi;
    let (nu, t1) = (d.multipliers.nu, d.multipliers.theta1);
    let ok =
        (4.75..=4.85).contains(&a) && (nu - 1.0417).abs() <= 1e-3 && (t1 - 0.0087).abs() <= 2e-4;
    designs.push(d);
    check(ok, format!("a = {a:.5}, nu = {nu:.5}, theta1 = {t1:.5}"))
}

fn c8_tradeoff_curve(designs: &mut Vec<DesignedPsi>) -> Outcome {
    let model = DistributionModel::ExponentialRate1;
    let grid = [1.5, 2.0, 3.0, 5.0, 10.0, 50.0];
    let rows = tradeoff_curve(&model, &grid, DesignKind::Location).map_err(|e| e.to_string())?;
    let aifs: Vec<f64> = rows
        .iter()
        .map(|r| {
            r.aif
                .ok_or_else(|| format!("xi = {} skipped: {:?}", r.xi, r.skipped))
        })
        .collect::<Result<_, _>>()?;
    for xi in grid {
        designs.push(tradeoff_location(&model, xi).map_err(|e| e.to_string())?);
    }
    let ok =
        aifs.iter().all(|&v| v >= 1.0) && aifs.windows(2).all(|w| w[1] <= w[0]) && aifs[5] <= 1.01;
    check(ok, format!("AIF column {aifs:.5?}"))
}

fn c9_generic_vs_closed(designs: &mut Vec<DesignedPsi>) -> Outcome {
    let mut worst = 0.0f64;
    for xi in [2.0, 3.0, 5.0] {
        let closed = exponential_tradeoff(xi).map_err(|e| e.to_string())?;
        let generic = tradeoff_location(&DistributionModel::ExponentialRate1, xi)
            .map_err(|e| e.to_string())?;
        let da = (closed.active_region[0].hi - generic.active_region.last().unwrap().hi).abs();
        let dn = (closed.multipliers.nu - generic.multipliers.nu).abs();
        let dt = (closed.multipliers.theta1 - generic.multipliers.theta1).abs();
        worst = worst.max(da).max(dn).max(dt);
        designs.push(closed);
        designs.push(generic);
    }
    check(
        worst <= 1e-4,
        format!("max |difference| in (a, nu, theta1) = {worst:.2e}"),
    )
}

fn c10_scale_designer(designs: &mut Vec<DesignedPsi>) -> Outcome {
    let mut worst = 0.0f64;
    for (model, want) in [
        (DistributionModel::StandardNormal, 1.0),
        (DistributionModel::uniform(0.0, 1.0).unwrap(), 3f64.sqrt()),
        (DistributionModel::ExponentialRate1, 1.0 / 2f64.sqrt()),
    ] {
        let d = min_aif_scale(&model).map_err(|e| e.to_string())?;
        let ctx = PopulationContext::new(model, d.to_psi_spec()).map_err(|e| e.to_string())?;
        let pop = aif_population(&ctx, NormOrder::new(2.0).unwrap())
            .map_err(|e| e.to_string())?
            .value;
        worst = worst
            .max((d.summary.aif - want).abs())
            .max((pop - want).abs());
        designs.push(d);
    }
    designs.push(min_aif_location());
    let mut fisher = 0.0f64;
    for d in designs.iter() {
        let r = d.kkt_report().map_err(|e| e.to_string())?;
        fisher = fisher
            .max(r.fisher_direct.abs())
            .max(r.fisher_identity.abs());
    }
    check(
        worst <= 1e-8 && fisher <= 1e-6,
        format!(
            "max |min AIF - 1/sqrt(E[X^2])| = {worst:.2e}, max |E psi| over {} designs = {fisher:.2e}",
            designs.len()
        ),
    )
}

fn c11_l_estimators() -> Outcome {
    let aif = |w: &LWeights, p: f64| l_aif(w, NormOrder::new(p).unwrap()).map(|r| r.value);
    let t1 = aif(&LWeights::alpha_trimmed(0.25, 8).unwrap(), 2.0).map_err(|e| e.to_string())?;
    let t2 = aif(&LWeights::alpha_trimmed(0.2, 10).unwrap(), 1.0).map_err(|e| e.to_string())?;
    let want1 = 8f64.powf(1.0 / 2.0) / 4f64.powf(1.0 / 2.0);
    let want2 = 10f64.powf(1.0) / 6f64.powf(1.0);
    let mut mean_dev = 0.0f64;
    for n in [3, 10, 100] {
        let w = LWeights::mean(n).map_err(|e| e.to_string())?;
        for p in orders() {
            let v = l_aif(&w, p).map_err(|e| e.to_string())?.value;
            mean_dev = mean_dev.max((v - 1.0).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut p2_dev = 0.0f64;
    for _ in 0..10 {
        let n = rng.random_range(2..40);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let want = (n as f64 * a.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let w = LWeights::explicit(a).map_err(|e| e.to_string())?;
        p2_dev = p2_dev.max((aif(&w, 2.0).map_err(|e| e.to_string())? - want).abs());
    }
    let exact = t1 == want1 && t2 == want2;
    check(
        exact && mean_dev <= 1e-12 && p2_dev <= 1e-12,
        format!(
            "trimmed {t1} (want {want1}), {t2} (want {want2}); mean-weight dev {mean_dev:.1e}; p=2 dev {p2_dev:.1e}"
        ),
    )
}

fn c12_kkt_suite(designs: &mut Vec<DesignedPsi>) -> Outcome {
    for xi in [1.5, 2.0, 50.0] {
        designs.push(
            tradeoff_location(&DistributionModel::StandardNormal, xi).map_err(|e| e.to_string())?,
        );
    }
    for (model, xi) in [
        (DistributionModel::StandardNormal, 4.0),
        (DistributionModel::ExponentialRate1, 3.0),
        (DistributionModel::uniform(0.5, 2.0).unwrap(), 3.0),
    ] {
        designs.push(aif_core::tradeoff_scale(&model, xi).map_err(|e| e.to_string())?);
    }
    let mut failed = Vec::new();
    for d in designs.iter() {
        let r = d.kkt_report().map_err(|e| e.to_string())?;
        let f = r.failures(KKT_TOLERANCE);
        if !f.is_empty() {
            failed.push(format!("{}: {f:?}", d.label()));
        }
    }
    check(
        failed.is_empty(),
        format!("{} designs checked, failures: {failed:?}", designs.len()),
    )
}

fn main() -> ExitCode {
    let mut designs = Vec::new();
    let results: Vec<(&str, Outcome)> = vec![
        ("1 mean-estimator AIF", c1_mean_aif()),
        ("2 huber fixed-sample AIF", c2_huber_fixed_sample()),
        ("3 gaussian-scale MLE AIF", c3_gaussian_scale_mle()),
        ("4 attack optimality vs oracle", c4_attack_vs_oracle()),
        ("5 finite-eta convergence", c5_finite_eta()),
        ("6 population convergence", c6_population_convergence()),
        (
            "7 exponential design xi=3",
            c7_exponential_design(&mut designs),
        ),
        ("8 tradeoff curve shape", c8_tradeoff_curve(&mut designs)),
        (
            "9 generic vs closed-form designer",
            c9_generic_vs_closed(&mut designs),
        ),
        (
            "10 scale designer and Fisher consistency",
            c10_scale_designer(&mut designs),
        ),
        ("11 L-estimator suite", c11_l_estimators()),
        ("12 KKT residual suite", c12_kkt_suite(&mut designs)),
    ];
    let mut failures = 0;
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        results.len() - failures
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Scratch calibration runs for the acceptance thresholds.

use flap::citest::{power_study, CiTestMethod, PowerCell, PowerStudyGrid};
use flap::learners::{fit_method, Method, Predictor, Scorer};
use flap::metrics::{accuracy, cf_bound, cf_metric, MetricConfig};
use flap::numerics::mix_seed;
use flap::preprocess::{fit_marginal_mapping, PrepKind};
use flap::scm::{Scm, Scm1Params, Scm2Params, Scm3Params};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "fig2a".into());
    match which.as_str() {
        "fig2a" => fig2a(),
        "fig2b" => curves_ex3(),
        "fig3b" => curves_ex2_edu(),
        "power" => power(),
        "nest" => nest(),
        "thm1" => thm1(),
        "aa" => aa_fair(),
        _ => eprintln!("unknown calibration '{which}'"),
    }
}

fn fig2a() {
    let seed = 20220924u64;
    let n = 2000;
    let reps = 20;
    let grid = [1.0, 1.3, 1.6, 1.9, 2.2, 2.5, 2.8];
    let methods = Method::table_methods();
    println!("sigma_a | method | cf_metric(mean) | cf_bound(mean) | acc(mean)");
    let mut means = vec![vec![[0.0f64; 3]; methods.len()]; grid.len()];
    for (xi, &sigma) in grid.iter().enumerate() {
        for rep in 0..reps {
            let scm = Scm::Ex1(Scm1Params { sigma_a: sigma, ..Default::default() });
            let (train, _) = scm.simulate(n, mix_seed(seed, &[xi as u64, rep, 0])).unwrap();
            let (test, _) = scm.simulate(n, mix_seed(seed, &[xi as u64, rep, 1])).unwrap();
            let prep = fit_marginal_mapping(&train).unwrap();
            for (mi, &m) in methods.iter().enumerate() {
                let pred = fit_method(m, &train).unwrap();
                means[xi][mi][0] += cf_metric(&pred, &test, &prep).unwrap() / reps as f64;
                means[xi][mi][1] += cf_bound(&pred, &test, &MetricConfig { delta: 0.05, neighborhood_cap: 50, seed: mix_seed(seed, &[xi as u64, rep, 2 + mi as u64]) }).unwrap() / reps as f64;
                means[xi][mi][2] += accuracy(&pred, &test) / reps as f64;
            }
        }
        for (mi, &m) in methods.iter().enumerate() {
            println!(
                "{sigma:.1} | {:>10} | {:.5} | {:.4} | {:.4}",
                m.label(),
                means[xi][mi][0],
                means[xi][mi][1],
                means[xi][mi][2]
            );
        }
    }
    println!("tau(n) = 5/min_ns approx {:.5}", 5.0 / 600.0);
}

fn curve(scms: Vec<(f64, Scm)>, n: usize, reps: u64, seed: u64) {
    let methods = Method::table_methods();
    for (xi, (x, scm)) in scms.iter().enumerate() {
        let mut means = vec![[0.0f64; 3]; methods.len()];
        for rep in 0..reps {
            let (train, _) = scm.simulate(n, mix_seed(seed, &[xi as u64, rep, 0])).unwrap();
            let (test, _) = scm.simulate(n, mix_seed(seed, &[xi as u64, rep, 1])).unwrap();
            let prep = fit_marginal_mapping(&train).unwrap();
            for (mi, &m) in methods.iter().enumerate() {
                let pred = fit_method(m, &train).unwrap();
                means[mi][0] += cf_metric(&pred, &test, &prep).unwrap() / reps as f64;
                means[mi][1] += cf_bound(&pred, &test, &MetricConfig { delta: 0.05, neighborhood_cap: 50, seed: mix_seed(seed, &[xi as u64, rep, 2 + mi as u64]) }).unwrap() / reps as f64;
                means[mi][2] += accuracy(&pred, &test) / reps as f64;
            }
        }
        for (mi, &m) in methods.iter().enumerate() {
            println!(
                "{x:.2} | {:>10} | {:.5} | {:.4} | {:.4}",
                m.label(),
                means[mi][0],
                means[mi][1],
                means[mi][2]
            );
        }
    }
}

fn curves_ex3() {
    println!("lambda | method | cf_metric | cf_bound | acc");
    let grid: Vec<(f64, Scm)> = [0.0, 0.2, 0.4, 0.6, 0.8]
        .iter()
        .map(|&l| (l, Scm::Ex3(Scm3Params { lambda: l, ..Default::default() })))
        .collect();
    curve(grid, 2000, 20, 20220924);
}

fn curves_ex2_edu() {
    println!("shift | method | cf_metric | cf_bound | acc");
    let grid: Vec<(f64, Scm)> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&t| {
            (
                t,
                Scm::Ex2(Scm2Params {
                    lambda_e: [1.07, -0.25 * t, -0.4 * t],
                    ..Default::default()
                }),
            )
        })
        .collect();
    curve(grid, 2000, 20, 20220924);
}

fn power() {
    let grid = PowerStudyGrid {
        cells: [0.0, 0.25, 0.5, 1.0]
            .iter()
            .map(|&beta_s| PowerCell {
                label: format!("beta_s={beta_s}"),
                scm: Scm::Ex1(Scm1Params {
                    sigma_a: 1.0,
                    lambda_a: 0.0,
                    beta_s,
                    ..Default::default()
                }),
            })
            .collect(),
        sample_sizes: vec![200, 500],
        replications: 200,
        alpha: 0.05,
        bootstrap: 199,
        seed: 20220924,
    };
    for row in power_study(&grid, CiTestMethod::LikelihoodRatio, PrepKind::MarginalMapping).unwrap() {
        println!(
            "{} n={} cf={:.4} power={:.3}",
            row.params, row.n, row.cf_metric, row.power
        );
    }
    // same for ex2 / ex3 fair cells
    for (name, cells) in [
        (
            "ex2",
            [0.0, 0.25, 0.5, 1.0]
                .iter()
                .map(|&b| PowerCell {
                    label: format!("b={b}"),
                    scm: Scm::Ex2(Scm2Params {
                        beta1: b,
                        beta2: b,
                        ..Default::default()
                    }),
                })
                .collect::<Vec<_>>(),
        ),
        (
            "ex3",
            [0.0, 0.25, 0.5, 1.0]
                .iter()
                .map(|&b| PowerCell {
                    label: format!("beta_s={b}"),
                    scm: Scm::Ex3(Scm3Params {
                        lambda: 0.0,
                        beta_s: b,
                        ..Default::default()
                    }),
                })
                .collect::<Vec<_>>(),
        ),
    ] {
        let grid = PowerStudyGrid {
            cells,
            sample_sizes: vec![200, 500],
            replications: 200,
            alpha: 0.05,
            bootstrap: 199,
            seed: 20220924,
        };
        for row in
            power_study(&grid, CiTestMethod::LikelihoodRatio, PrepKind::MarginalMapping).unwrap()
        {
            println!(
                "{name} {} n={} cf={:.4} power={:.3}",
                row.params, row.n, row.cf_metric, row.power
            );
        }
    }
}

fn nest() {
    // monotonicity of cf_bound in delta on simulated data, all methods
    let scm = Scm::Ex1(Scm1Params { sigma_a: 2.0, ..Default::default() });
    let (train, _) = scm.simulate(2000, 1).unwrap();
    let (test, _) = scm.simulate(2000, 2).unwrap();
    for m in Method::table_methods() {
        let pred = fit_method(m, &train).unwrap();
        let bounds: Vec<f64> = [0.0, 0.025, 0.05, 0.1, 1.0]
            .iter()
            .map(|&delta| {
                cf_bound(
                    &pred,
                    &test,
                    &MetricConfig { delta, neighborhood_cap: 50, seed: 5 },
                )
                .unwrap()
            })
            .collect();
        println!("{:>10} {:?}", m.label(), bounds);
    }
}

fn thm1() {
    // magnitude of the counterfactual-oracle score gap for the pipeline
    for n in [1000usize, 2000, 4000] {
        let scm = Scm::Ex1(Scm1Params { sigma_a: 2.0, ..Default::default() });
        let (train, records) = scm.simulate(n, 11).unwrap();
        let m = flap::pipeline::flap_fit(&train, PrepKind::MarginalMapping, flap::pipeline::FlapLearner::Ftu).unwrap();
        let mut worst = 0.0f64;
        for u in &records {
            let a0 = scm.counterfactual_attrs(u, 0).unwrap();
            let a1 = scm.counterfactual_attrs(u, 1).unwrap();
            let gap = (m.score(0, &a0) - m.score(1, &a1)).abs();
            worst = worst.max(gap);
        }
        let min_ns = *train.group_counts().iter().min().unwrap() as f64;
        println!(
            "n={n} worst={worst:.5} sqrt-normalized C'={:.3} 1/n-normalized C={:.1}",
            worst * min_ns.sqrt(),
            worst * min_ns
        );
    }
}

fn aa_fair() {
    // AA CF-metric when the strong condition holds vs when it fails
    for (sigma, lambda) in [(1.0, 0.0), (1.5, 0.0), (2.0, 0.0), (1.0, 0.5), (2.0, 0.5)] {
        let scm = Scm::Ex1(Scm1Params {
            sigma_a: sigma,
            lambda_a: lambda,
            ..Default::default()
        });
        let (train, _) = scm.simulate(5000, 3).unwrap();
        let (test, _) = scm.simulate(2000, 4).unwrap();
        let prep = fit_marginal_mapping(&train).unwrap();
        let aa = fit_method(Method::Aa, &train).unwrap();
        let flap_o = fit_method(Method::FlapO2, &train).unwrap();
        let tau = 5.0 / *train.group_counts().iter().min().unwrap() as f64;
        println!(
            "sigma={sigma} lambda={lambda}: AA={:.5} FLAP-O2={:.5} tau={tau:.5}",
            cf_metric(&aa, &test, &prep).unwrap(),
            cf_metric(&flap_o, &test, &prep).unwrap()
        );
    }
    // oracle consistency: AA == FLAP-O scores?
    let scm = Scm::Ex1(Scm1Params::default());
    let (train, _) = scm.simulate(1000, 5).unwrap();
    let aa = fit_method(Method::Aa, &train).unwrap();
    let flap_o2 = fit_method(Method::FlapO2, &train).unwrap();
    let mut max_diff = 0.0f64;
    for r in train.rows().iter().take(200) {
        let d = (aa.score(r.group, &r.attrs) - flap_o2.score(r.group, &r.attrs)).abs();
        max_diff = max_diff.max(d);
    }
    println!("max |AA - FLAP-O2| score diff: {max_diff:.2e}");
    let _ = Predictor::ScmOracle(scm);
}

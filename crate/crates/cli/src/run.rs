//! Mode runners. Each returns the artifacts to write, in order.

use rayon::prelude::*;
use sieve_lab::audit::{fmt_f, run_audit, AuditReport};
use sieve_lab::certificate::{bound_a4_with, bound_a5, certificate_at, measure, BiasCertificate};
use sieve_lab::contrast::{maximize_sieve, ContrastModel, OptimumPair};
use sieve_lab::oracle::{exact_sieve_optimum, random_quadratic, random_quartic};
use sieve_lab::single_index::{
    grid_initializer, population_operator_with, profile_fit, rate_sweep_with, sample_dataset, BasisSpec,
    RateReport,
};

use crate::config::{ConfigError, ExperimentConfig, InitKind, Mode, ModelKind};
use crate::plot;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] sieve_lab::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub struct Artifact {
    pub name: String,
    pub contents: String,
}

fn artifact(name: &str, contents: String) -> Artifact {
    Artifact {
        name: name.to_string(),
        contents,
    }
}

struct Instance {
    index: usize,
    seed: u64,
    model: Box<dyn ContrastModel>,
    opt: OptimumPair,
}

/// Builds the models of an audit, certify or verify-bounds run.
fn instances(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Instance>, RunError> {
    let frame = cfg.frame()?;
    let model = cfg.model()?;
    match model.kind {
        ModelKind::SingleIndex => {
            let truth = cfg.truth()?;
            let spec = BasisSpec::new(truth.basis, frame.p1, truth.s_x)?;
            let pop = population_operator_with(&truth, &spec, frame.p_max, &cfg.population_config())?;
            let opt = maximize_sieve(&pop)?;
            Ok(vec![Instance {
                index: 0,
                seed,
                model: Box::new(pop),
                opt,
            }])
        }
        kind => (0..model.instances)
            .into_par_iter()
            .map(|index| {
                let s = seed.wrapping_add(index as u64);
                let (m, opt): (Box<dyn ContrastModel>, OptimumPair) = if kind == ModelKind::Quadratic {
                    let q = random_quadratic(frame, s);
                    let opt = exact_sieve_optimum(&q, &frame)?;
                    (Box::new(q), opt)
                } else {
                    let q = random_quartic(frame, model.eps, s);
                    let opt = maximize_sieve(&q)?;
                    (Box::new(q), opt)
                };
                Ok(Instance {
                    index,
                    seed: s,
                    model: m,
                    opt,
                })
            })
            .collect(),
    }
}

pub fn run(mode: Mode, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Artifact>, RunError> {
    cfg.validate(mode)?;
    match mode {
        Mode::Audit => audit(cfg, seed),
        Mode::Certify => certify(cfg, seed),
        Mode::VerifyBounds => verify_bounds(cfg, seed),
        Mode::Simulate => simulate(cfg, seed),
        Mode::Rates => rates(cfg),
    }
}

fn audit(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Artifact>, RunError> {
    let items = instances(cfg, seed)?;
    let reports: Vec<AuditReport> = items
        .par_iter()
        .map(|it| run_audit(it.model.as_ref(), &it.opt, &cfg.audit_config(it.seed)))
        .collect::<Result<_, _>>()?;
    let mut table = format!("instance,{}\n", AuditReport::CSV_HEADER);
    let mut curve = String::from("instance,r,delta\n");
    for (it, rep) in items.iter().zip(&reports) {
        table.push_str(&format!("{},{}\n", it.index, rep.csv_row()));
        for (r, d) in &rep.delta_of_r {
            curve.push_str(&format!("{},{},{}\n", it.index, fmt_f(*r), fmt_f(*d)));
        }
    }
    Ok(vec![artifact("audit.csv", table), artifact("delta_curve.csv", curve)])
}

fn certify(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Artifact>, RunError> {
    let items = instances(cfg, seed)?;
    let certs: Vec<BiasCertificate> = items
        .par_iter()
        .map(|it| certificate_at(it.model.as_ref(), &it.opt, &cfg.certificate_config(it.seed)))
        .collect::<Result<_, _>>()?;
    let mut table = format!("instance,seed,{}\n", BiasCertificate::CSV_HEADER);
    let mut text = String::new();
    for (it, c) in items.iter().zip(&certs) {
        table.push_str(&format!("{},{},{}\n", it.index, it.seed, c.csv_row()));
        text.push_str(&format!("instance {} (seed {})\n{}\n", it.index, it.seed, c.report()));
    }
    let mut out = vec![artifact("certificate.csv", table), artifact("certificate.txt", text)];
    if cfg.output.plots {
        let pts: Vec<(f64, f64)> = certs.iter().map(|c| (c.measured.bias, c.hat_alpha)).collect();
        out.push(artifact("certificate.svg", plot::bound_scatter("bias bound vs measured bias", &pts)));
    }
    Ok(out)
}

struct Check {
    name: &'static str,
    measured: f64,
    bound: f64,
}

fn verify_bounds(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Artifact>, RunError> {
    let items = instances(cfg, seed)?;
    let checks: Vec<Vec<Check>> = items
        .par_iter()
        .map(|it| -> Result<Vec<Check>, RunError> {
            let cert = certificate_at(it.model.as_ref(), &it.opt, &cfg.certificate_config(it.seed))?;
            let m = measure(it.model.as_ref(), &it.opt)?;
            let a = &cert.inputs;
            let a4 = |k| bound_a4_with(a.nu_rho, k, a.beta_m).unwrap_or(f64::INFINITY);
            Ok(vec![
                Check { name: "bias", measured: m.bias, bound: cert.hat_alpha },
                Check { name: "localization", measured: m.localization, bound: cert.r_star },
                Check { name: "profile_closeness_nu2", measured: m.closeness_a4, bound: a4(2) },
                Check { name: "profile_closeness_nu1", measured: m.closeness_a4, bound: a4(1) },
                Check {
                    name: "local_closeness",
                    measured: m.closeness_a5,
                    bound: bound_a5(a.delta_r_star).unwrap_or(f64::INFINITY),
                },
            ])
        })
        .collect::<Result<_, _>>()?;
    let header = "instance,seed,check,measured,bound,holds\n";
    let mut table = String::from(header);
    let mut failures = String::from(header);
    let mut any_failure = false;
    let mut scatter = Vec::new();
    for (it, list) in items.iter().zip(&checks) {
        for c in list {
            let holds = c.measured <= c.bound;
            let row = format!(
                "{},{},{},{},{},{}\n",
                it.index,
                it.seed,
                c.name,
                fmt_f(c.measured),
                fmt_f(c.bound),
                holds
            );
            if !holds {
                any_failure = true;
                failures.push_str(&row);
            }
            table.push_str(&row);
            if c.name == "bias" {
                scatter.push((c.measured, c.bound));
            }
        }
    }
    let mut out = vec![artifact("verify_bounds.csv", table)];
    if any_failure {
        out.push(artifact("counterexamples.csv", failures));
    }
    if cfg.output.plots {
        out.push(artifact("verify_bounds.svg", plot::bound_scatter("bias bound vs measured bias", &scatter)));
    }
    Ok(out)
}

fn simulate(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Artifact>, RunError> {
    let truth = cfg.truth()?;
    let sim = cfg.simulate.as_ref().expect("validated");
    let spec = BasisSpec::new(truth.basis, sim.m, truth.s_x)?;
    let theta_star = truth.theta();
    let rows: Vec<(u64, sieve_lab::single_index::ProfileFit)> = (0..sim.replicates)
        .into_par_iter()
        .map(|r| {
            let s = seed.wrapping_add(r as u64);
            let data = sample_dataset(&truth, sim.n, s)?;
            let init = match sim.init {
                InitKind::Grid => grid_initializer(&data, &spec, sim.grid_points)?,
                InitKind::Truth => theta_star.clone(),
            };
            Ok((s, profile_fit(&data, &spec, &init)?))
        })
        .collect::<Result<_, sieve_lab::Error>>()?;

    let p = truth.p();
    let thetas: Vec<String> = (1..=p).map(|j| format!("theta_{j}")).collect();
    let mut table = format!(
        "replicate,seed,{},error,contrast,iterations,converged,monotone,success\n",
        thetas.join(",")
    );
    let (mut successes, mut monotone_runs, mut err_sum) = (0usize, 0usize, 0.0);
    for (r, (s, fit)) in rows.iter().enumerate() {
        let err = (&fit.theta - &theta_star).norm();
        let monotone = fit.trace.contrast.windows(2).all(|w| w[1] >= w[0]);
        let success = err <= sim.success_radius;
        successes += success as usize;
        monotone_runs += monotone as usize;
        err_sum += err;
        let coords: Vec<String> = fit.theta.iter().map(|v| fmt_f(*v)).collect();
        table.push_str(&format!(
            "{r},{s},{},{},{},{},{},{monotone},{success}\n",
            coords.join(","),
            fmt_f(err),
            fmt_f(*fit.trace.contrast.last().unwrap_or(&f64::NAN)),
            fit.trace.iterations,
            fit.trace.converged
        ));
    }
    let reps = sim.replicates as f64;
    let summary = format!(
        "replicates,successes,success_rate,success_radius,monotone_runs,mean_error\n{},{},{},{},{},{}\n",
        sim.replicates,
        successes,
        fmt_f(successes as f64 / reps),
        fmt_f(sim.success_radius),
        monotone_runs,
        fmt_f(err_sum / reps)
    );
    Ok(vec![artifact("simulate.csv", table), artifact("simulate_summary.csv", summary)])
}

fn rates(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let truth = cfg.truth()?;
    let r = cfg.rates.as_ref().expect("validated");
    let report = rate_sweep_with(&truth, &r.m_list, r.p_max, &cfg.rate_config())?;
    let mut out = vec![
        artifact("rates.csv", report.to_csv()),
        artifact("rate_slopes.csv", report.slopes_csv()),
    ];
    if cfg.output.plots {
        out.push(artifact("rates.svg", rate_plot(&report)));
    }
    Ok(out)
}

fn rate_plot(report: &RateReport) -> String {
    let series = |label: &str, f: fn(&sieve_lab::single_index::RateRow) -> f64| plot::Series {
        label: label.to_string(),
        points: report.rows.iter().map(|row| (row.m as f64, f(row))).collect(),
    };
    plot::log_log(
        "bias quantities against sieve dimension",
        "m",
        "value",
        &[
            series("alpha", |r| r.alpha_m),
            series("beta", |r| r.beta_m),
            series("tau", |r| r.tau_m),
            series("|H kappa|^2", |r| r.hkappa_sq),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse;

    #[test]
    fn certify_quadratic_bounds_hold() {
        let cfg = parse(
            "seed = 1\n[frame]\np = 1\np1 = 2\np_max = 5\n[model]\nkind = \"quadratic\"\ninstances = 3\n[sampling]\ndelta_samples = 16\nb_samples = 16\n",
        )
        .unwrap();
        let out = run(Mode::Certify, &cfg, 1).unwrap();
        let csv = &out[0].contents;
        let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
        let hat = header.iter().position(|h| *h == "hat_alpha").unwrap();
        let bias = header.iter().position(|h| *h == "measured_bias").unwrap();
        for line in csv.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            assert!(f[hat].parse::<f64>().unwrap() >= f[bias].parse::<f64>().unwrap());
        }
    }

    #[test]
    fn verify_bounds_rejects_single_index() {
        let cfg = parse(
            "seed = 1\n[frame]\np = 1\np1 = 2\np_max = 5\n[model]\nkind = \"single_index\"\n",
        )
        .unwrap();
        assert!(matches!(run(Mode::VerifyBounds, &cfg, 1), Err(RunError::Config(_))));
    }
}

//! Subcommand bodies. Each returns its outputs in memory so runs can be
//! compared byte for byte.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use qimeasure::config::{Mu0, Override, RunConfig, Table};
use qimeasure::extremality::{decompose, relative_ergodicity_dimension};
use qimeasure::measure::{check_fixed_point, masses_along_orbit, solve_fixed_density_with};
use qimeasure::path::build_path_measure;
use qimeasure::reference::{strongly_invariant_measure, verify_strong_invariance};
use qimeasure::transfer::{self, check_weight_pushforward, iterate_to_h, HStatus};
use qimeasure::{io, CylinderFunction, DensityMeasure, Error, MarkovMeasure, Measure, Result};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_IDENTITY: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NON_UNIQUE: u8 = 3;
pub const EXIT_DEGENERATE: u8 = 4;
pub const EXIT_SAMPLING: u8 = 5;
pub const EXIT_NON_EXTREMAL: u8 = 6;

#[derive(Clone, Copy, Debug)]
pub enum Command {
    Invariant,
    Fixpoint,
    Verify,
    Sample,
    Ergodicity,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Invariant => "invariant",
            Command::Fixpoint => "fixpoint",
            Command::Verify => "verify",
            Command::Sample => "sample",
            Command::Ergodicity => "ergodicity",
        }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
    /// `(file name, contents)` for the output directory.
    pub files: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

impl Outcome {
    pub fn error(code: u8, message: String) -> Self {
        Outcome {
            code,
            error: Some(message),
            ..Default::default()
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DegenerateH => EXIT_DEGENERATE,
        Error::ZeroMassConditioning { .. } => EXIT_SAMPLING,
        _ => EXIT_CONFIG,
    }
}

pub fn run(command: Command, config: &RunConfig, hash: &str) -> Outcome {
    let report = Report::new(command, config, hash);
    let result = match command {
        Command::Invariant => invariant(config, report),
        Command::Fixpoint => fixpoint(config, report),
        Command::Verify => verify(config, report),
        Command::Sample => sample(config, report),
        Command::Ergodicity => ergodicity(config, report),
    };
    result.unwrap_or_else(|e| Outcome::error(exit_code(&e), e.to_string()))
}

/// JSON report with the common header.
struct Report {
    name: &'static str,
    fields: Map<String, Value>,
}

impl Report {
    fn new(command: Command, config: &RunConfig, hash: &str) -> Self {
        let p = &config.params;
        // workers is left out: it must not change any output
        let fields = json!({
            "tool": "qimeasure",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command.name(),
            "config_sha256": hash,
            "params": {
                "depth": p.depth,
                "tol": p.tol,
                "n_max": p.n_max,
                "samples": p.samples,
                "seed": p.seed,
                "steps": p.steps,
            },
        });
        Report {
            name: command.name(),
            fields: match fields {
                Value::Object(m) => m,
                _ => unreachable!(),
            },
        }
    }

    fn set(&mut self, key: &str, value: impl serde::Serialize) {
        self.fields
            .insert(key.to_string(), serde_json::to_value(value).expect("serializable"));
    }

    fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.fields).expect("serializable");
        s.push('\n');
        s
    }

    fn file_name(&self) -> String {
        format!("{}.json", self.name)
    }
}

fn reference(config: &RunConfig) -> MarkovMeasure {
    strongly_invariant_measure(config.shift.clone())
}

fn h_tol(config: &RunConfig) -> f64 {
    transfer::DEFAULT_TOL.min(config.params.tol)
}

fn resolve_mu0(config: &RunConfig, rho: &MarkovMeasure) -> Result<DensityMeasure> {
    match &config.mu0 {
        Mu0::Auto => Ok(solve_fixed_density_with(&config.weight, rho, h_tol(config), config.params.n_max)?.mu0),
        Mu0::Density(f) => DensityMeasure::new(f.clone(), rho.clone()),
    }
}

fn table(f: &CylinderFunction) -> Table {
    Table::from_function(f)
}

fn invariant(config: &RunConfig, mut report: Report) -> Result<Outcome> {
    let depth = config.params.depth;
    let rho = reference(config);
    let csv = io::function_csv(&rho.masses(depth));
    let residual = verify_strong_invariance(&rho, depth);
    let pass = residual <= config.params.tol;
    report.set("symbol_masses", rho.symbol_masses());
    report.set("non_unique", rho.is_non_unique());
    report.set("strong_invariance_residual", residual);
    report.set("pass", pass);
    let mut warnings = Vec::new();
    let code = if rho.is_non_unique() {
        warnings.push("ρ_A is not unique; reporting the mixture over closed classes".to_string());
        EXIT_NON_UNIQUE
    } else if pass {
        EXIT_PASS
    } else {
        EXIT_IDENTITY
    };
    Ok(Outcome {
        code,
        files: vec![("invariant.csv".into(), csv.clone()), (report.file_name(), report.render())],
        stdout: csv,
        warnings,
        error: None,
    })
}

fn fixpoint(config: &RunConfig, mut report: Report) -> Result<Outcome> {
    let p = &config.params;
    let rho = reference(config);
    let iteration = iterate_to_h(&config.weight, h_tol(config), p.n_max)?;
    report.set("h_V", table(&iteration.h));
    report.set("h_status", iteration.status);
    report.set("iterations", iteration.n_used);
    if iteration.status == HStatus::Degenerate {
        report.set("pass", false);
        let json = report.render();
        return Ok(Outcome {
            code: EXIT_DEGENERATE,
            files: vec![(report.file_name(), json.clone())],
            stdout: json,
            error: Some(Error::DegenerateH.to_string()),
            ..Default::default()
        });
    }
    let solution = solve_fixed_density_with(&config.weight, &rho, h_tol(config), p.n_max)?;
    let mu0 = Measure::Density(solution.mu0.clone());
    let fixed = check_fixed_point(&config.weight, &mu0, p.depth)?;
    let residuals = BTreeMap::from([("h_fixed", solution.iteration.residual), ("fixed_point", fixed)]);
    let pass = residuals.values().all(|&r| r <= p.tol);
    report.set("nu_V", solution.nu.as_ref().map(|f| table(&f.nu)));
    report.set("nu_non_unique", solution.nu.as_ref().map(|f| f.non_unique));
    report.set("nu_of_h", solution.nu_of_h);
    report.set("mu0_density", table(solution.mu0.density()));
    report.set("mu0_total_mass", solution.mu0.total_mass());
    report.set("residuals", &residuals);
    report.set("pass", pass);
    let json = report.render();
    let mut files = vec![
        ("h.csv".to_string(), io::function_csv(&iteration.h)),
        ("mu0_density.csv".to_string(), io::function_csv(solution.mu0.density())),
        ("mu0_masses.csv".to_string(), io::function_csv(&solution.mu0.masses_at(p.depth))),
    ];
    if let Some(nu) = &solution.nu {
        files.push(("nu.csv".into(), io::function_csv(&nu.nu)));
    }
    files.push((report.file_name(), json.clone()));
    Ok(Outcome {
        code: if pass { EXIT_PASS } else { EXIT_IDENTITY },
        files,
        stdout: json,
        ..Default::default()
    })
}

/// `max |∫ V^(n) f dρ - ∫ R_Vⁿ f dρ|` over indicators of depth `1..=depth`
/// and `n = 1..=steps`.
fn pushforward_residual(weight: &CylinderFunction, rho: &MarkovMeasure, depth: usize, steps: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for d in 1..=depth {
        for w in rho.shift().admissible_words(d) {
            let f = CylinderFunction::indicator(rho.shift().clone(), &w);
            for n in 1..=steps {
                worst = worst.max(check_weight_pushforward(weight, &f, rho, n)?);
            }
        }
    }
    Ok(worst)
}

fn verify(config: &RunConfig, mut report: Report) -> Result<Outcome> {
    let p = &config.params;
    let v = &config.weight;
    let rho = reference(config);
    let mu0 = resolve_mu0(config, &rho)?;
    let mu0_measure = Measure::Density(mu0.clone());
    let mut residuals: BTreeMap<&str, Option<f64>> = BTreeMap::new();
    residuals.insert("strong_invariance", Some(verify_strong_invariance(&rho, p.depth)));
    residuals.insert("weight_pushforward", Some(pushforward_residual(v, &rho, p.depth, p.steps)?));
    let fixed = check_fixed_point(v, &mu0_measure, p.depth)?;
    residuals.insert("fixed_point", Some(fixed));
    let total = mu0.total_mass();
    let drift = masses_along_orbit(v, &mu0_measure, p.steps)?
        .into_iter()
        .map(|m| (m - total).abs())
        .fold(0.0, f64::max);
    residuals.insert("mass_conservation", Some(drift));

    let mut levels = None;
    match build_path_measure(v, mu0, p.tol) {
        Ok(mut pm) => {
            for (&n, o) in &config.overrides {
                let marginal = match o {
                    Override::Reference => DensityMeasure::reference_itself(rho.clone()),
                    Override::Density(f) => DensityMeasure::new(f.clone(), rho.clone())?,
                };
                pm = pm.with_corrupted_marginal(n, marginal)?;
            }
            let mut consistency: f64 = 0.0;
            for n in 0..p.steps {
                consistency = consistency.max(pm.check_consistency(n, p.depth)?);
            }
            residuals.insert("marginal_consistency", Some(consistency));
            let qi = pm.check_quasi_invariance(p.depth, p.steps)?;
            residuals.insert("quasi_invariance", Some(qi.residual));
            levels = Some(qi);
            if let Some(m) = &config.filter {
                residuals.insert("isometry", Some(pm.check_isometry(m, p.depth, p.tol)?));
            }
        }
        Err(Error::NotFixedPoint { .. }) => {
            residuals.insert("marginal_consistency", None);
            residuals.insert("quasi_invariance", None);
            if config.filter.is_some() {
                residuals.insert("isometry", None);
            }
        }
        Err(e) => return Err(e),
    }
    let pass = residuals.values().all(|r| matches!(r, Some(x) if *x <= p.tol));
    report.set("residuals", &residuals);
    report.set("quasi_invariance_detail", &levels);
    report.set("pass", pass);
    let json = report.render();
    Ok(Outcome {
        code: if pass { EXIT_PASS } else { EXIT_IDENTITY },
        files: vec![(report.file_name(), json.clone())],
        stdout: json,
        ..Default::default()
    })
}

fn sample(config: &RunConfig, mut report: Report) -> Result<Outcome> {
    let p = &config.params;
    let rho = reference(config);
    let mu0 = resolve_mu0(config, &rho)?;
    let pm = build_path_measure(&config.weight, mu0, p.tol)?;
    let sampler = pm.sampler(p.steps, p.depth)?;
    let samples = sampler.sample_many(p.samples, p.seed, p.workers)?;
    let empirical = pm.empirical_report(&samples, p.steps, p.depth)?;
    let mut csv = Vec::new();
    io::write_samples_csv(&mut csv, &samples).expect("writing to memory");
    report.set("work_depth", sampler.work_depth());
    report.set("empirical", &empirical);
    report.set("pass", empirical.pass);
    let json = report.render();
    Ok(Outcome {
        code: if empirical.pass { EXIT_PASS } else { EXIT_IDENTITY },
        files: vec![
            ("samples.csv".into(), String::from_utf8(csv).expect("ascii")),
            (report.file_name(), json.clone()),
        ],
        stdout: json,
        ..Default::default()
    })
}

fn basis_csv(basis: &[CylinderFunction]) -> String {
    let mut out = String::from("word");
    for i in 1..=basis.len() {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    if let Some(first) = basis.first() {
        for (i, (w, _)) in first.entries().into_iter().enumerate() {
            out.push_str(&w.to_string());
            for f in basis {
                out.push(',');
                out.push_str(&io::format_number(f.values()[i]));
            }
            out.push('\n');
        }
    }
    out
}

fn ergodicity(config: &RunConfig, mut report: Report) -> Result<Outcome> {
    let p = &config.params;
    let rho = reference(config);
    let mu0 = Measure::Density(resolve_mu0(config, &rho)?);
    let ergodic = relative_ergodicity_dimension(&mu0, &config.weight, p.depth, p.tol)?;
    report.set("ergodicity", &ergodic);
    let mut files = vec![("basis.csv".to_string(), basis_csv(&ergodic.basis))];
    let code = if ergodic.extremal_certificate {
        EXIT_PASS
    } else {
        let dec = decompose(&mu0, &config.weight, p.depth, p.tol)?
            .ok_or_else(|| Error::Invalid("no decomposition for a non-extremal report".into()))?;
        let (r1, r2) = dec.component_residuals(&config.weight)?;
        report.set(
            "decomposition",
            json!({
                "lambda": dec.lambda,
                "recombination_residual": dec.recombination_residual(&mu0, p.depth)?,
                "component_fixed_point_residuals": [r1, r2],
            }),
        );
        files.push(("f1.csv".into(), io::function_csv(&dec.f1)));
        files.push(("f2.csv".into(), io::function_csv(&dec.f2)));
        files.push(("mu1.csv".into(), io::function_csv(&dec.mu1.masses_at(p.depth)?)));
        files.push(("mu2.csv".into(), io::function_csv(&dec.mu2.masses_at(p.depth)?)));
        EXIT_NON_EXTREMAL
    };
    let json = report.render();
    files.push((report.file_name(), json.clone()));
    Ok(Outcome {
        code,
        files,
        stdout: json,
        ..Default::default()
    })
}

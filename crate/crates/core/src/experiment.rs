//! The benchmark experiment: Legendre-coefficient training data from the
//! actuator, fits under several kernels, and evaluation on random inputs.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::legendre::LegendreBasis;
use crate::representer::{self, RepresenterModel};
use crate::rtac::{self, Simulation};
use crate::sdp::{SolveStatus, SolverOptions};
use crate::sos_model::{self, SosModel};
use crate::CoefficientVector;

/// Name of the generator used for random test inputs, recorded in outputs.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.3), seed_from_u64, f64 draws via rand 0.8 Standard";

/// Number of leading basis functions carrying random test coefficients.
pub const TEST_ACTIVE_BASIS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub m: usize,
    pub n: usize,
    pub gamma: f64,
    pub kernels: Vec<KernelSpec>,
    /// Integration step; `T / 20000` when absent.
    pub dt: Option<f64>,
    pub test_count: usize,
    pub rng_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub solver: SolverOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            horizon: 20.0,
            m: 10,
            n: 9,
            gamma: 1e-3,
            kernels: vec![
                KernelSpec::Gaussian { bandwidth: 100.0 },
                KernelSpec::Laplacian { bandwidth: 100.0 },
                KernelSpec::Bilinear,
            ],
            dt: None,
            test_count: 1000,
            rng_seed: 20240607,
            output_dir: None,
            solver: SolverOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(self.horizon / 20000.0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |what: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} must be positive, got {x}")))
            }
        };
        positive("T", self.horizon)?;
        positive("gamma", self.gamma)?;
        positive("dt", self.dt())?;
        if self.m == 0 || self.n == 0 || self.test_count == 0 {
            return Err(Error::InvalidArgument("m, n and test_count must be positive".into()));
        }
        // Inputs 6.. use basis functions up to n − 4.
        if self.m < self.n.min(5).max(self.n.saturating_sub(4)) {
            return Err(Error::InvalidArgument(format!(
                "m = {} is too small for n = {} training inputs",
                self.m, self.n
            )));
        }
        if self.kernels.is_empty() {
            return Err(Error::InvalidArgument("at least one kernel is required".into()));
        }
        for k in &self.kernels {
            k.validate()?;
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<LegendreBasis> {
        LegendreBasis::new(self.horizon, self.m)
    }
}

/// Training inputs: `e₁, …, e₅` then `eᵢ₋₅ + eᵢ₋₄` for `i = 6, …, n`.
pub fn training_inputs(n: usize, m: usize) -> Vec<CoefficientVector> {
    (1..=n)
        .map(|i| {
            let mut c = DVector::zeros(m);
            if i <= 5 {
                c[i - 1] = 1.0;
            } else {
                c[i - 6] = 1.0;
                c[i - 5] = 1.0;
            }
            c
        })
        .collect()
}

/// Simulates the plant for an input given by Legendre coefficients,
/// evaluating the input exactly at every RK4 stage.
pub fn simulate_coefficients(basis: &LegendreBasis, c: &CoefficientVector, dt: f64) -> Result<Simulation> {
    let horizon = basis.horizon();
    rtac::simulate(
        |t| basis.reconstruct(c, t.clamp(0.0, horizon)).expect("dimension checked"),
        horizon,
        dt,
    )
}

/// Output coefficients and the relative projection error of the output.
pub fn output_coefficients(basis: &LegendreBasis, sim: &Simulation) -> Result<(CoefficientVector, f64)> {
    let y = sim.output();
    let c = basis.project_signal(&y)?;
    let err = basis.relative_l2_error_signal(&y, &c)?;
    Ok((c, err))
}

pub struct GeneratedData {
    pub dataset: Dataset,
    pub projection_errors: Vec<f64>,
    pub simulations: Vec<Simulation>,
}

pub fn generate_data(config: &ExperimentConfig) -> Result<GeneratedData> {
    config.validate()?;
    let basis = config.basis()?;
    let inputs = training_inputs(config.n, config.m);
    let results: Vec<Result<(Simulation, CoefficientVector, f64)>> = inputs
        .par_iter()
        .map(|u| {
            let sim = simulate_coefficients(&basis, u, config.dt())?;
            let (y, err) = output_coefficients(&basis, &sim)?;
            Ok((sim, y, err))
        })
        .collect();
    let mut outputs = Vec::new();
    let mut projection_errors = Vec::new();
    let mut simulations = Vec::new();
    for r in results {
        let (sim, y, err) = r?;
        outputs.push(y);
        projection_errors.push(err);
        simulations.push(sim);
    }
    Ok(GeneratedData {
        dataset: Dataset::new(inputs, outputs)?,
        projection_errors,
        simulations,
    })
}

/// `count` test inputs with `U[0, 1)` coefficients on the first five
/// basis functions, drawn sequentially from a seeded ChaCha8 stream.
pub fn test_inputs(m: usize, count: usize, seed: u64) -> Vec<CoefficientVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let active = TEST_ACTIVE_BASIS.min(m);
    (0..count)
        .map(|_| {
            let mut c = DVector::zeros(m);
            for k in 0..active {
                c[k] = rng.gen::<f64>();
            }
            c
        })
        .collect()
}

/// True output coefficients for each test input.
pub fn true_outputs(config: &ExperimentConfig, inputs: &[CoefficientVector]) -> Result<Vec<CoefficientVector>> {
    let basis = config.basis()?;
    inputs
        .par_iter()
        .map(|u| {
            let sim = simulate_coefficients(&basis, u, config.dt())?;
            Ok(output_coefficients(&basis, &sim)?.0)
        })
        .collect()
}

/// `‖ŷ − y‖₂ / ‖y‖₂` in coefficient space.
pub fn relative_error(predicted: &CoefficientVector, truth: &CoefficientVector) -> Result<f64> {
    let den = truth.norm();
    if den == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((predicted - truth).norm() / den)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub relative_errors: Vec<f64>,
    pub avg_relative_error: f64,
    pub min_quadratic_form: f64,
}

pub fn evaluate_model(
    model: &SosModel,
    inputs: &[CoefficientVector],
    truths: &[CoefficientVector],
) -> Result<Evaluation> {
    let per: Vec<Result<(f64, f64)>> = inputs
        .par_iter()
        .zip(truths)
        .map(|(u, y)| Ok((relative_error(&model.predict(u)?, y)?, model.quadratic_form(u)?)))
        .collect();
    let mut relative_errors = Vec::with_capacity(per.len());
    let mut min_quadratic_form = f64::INFINITY;
    for r in per {
        let (e, q) = r?;
        relative_errors.push(e);
        min_quadratic_form = min_quadratic_form.min(q);
    }
    let avg_relative_error = relative_errors.iter().sum::<f64>() / relative_errors.len() as f64;
    Ok(Evaluation {
        relative_errors,
        avg_relative_error,
        min_quadratic_form,
    })
}

/// Fits of both model classes under one kernel.
pub struct KernelFit {
    pub kernel: KernelSpec,
    pub sos: SosModel,
    pub representer: RepresenterModel,
}

pub fn fit_kernel(config: &ExperimentConfig, dataset: &Dataset, kernel: &KernelSpec) -> Result<KernelFit> {
    let sos = sos_model::fit_nonnegative(kernel, dataset, config.gamma, &config.solver)?;
    let representer = representer::fit_unconstrained(kernel, dataset, config.gamma)?;
    Ok(KernelFit {
        kernel: *kernel,
        sos,
        representer,
    })
}

pub fn status_is_optimal(model: &SosModel) -> bool {
    model.diagnostics().solver_status == SolveStatus::Optimal
}

/// Generator description embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngInfo {
    pub algorithm: String,
    pub seed: u64,
}

impl RngInfo {
    pub fn for_config(config: &ExperimentConfig) -> Self {
        Self {
            algorithm: RNG_ALGORITHM.to_string(),
            seed: config.rng_seed,
        }
    }
}

/// Which pipeline stage an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Fit,
    Evaluate,
    Report,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Generate => "generate",
            Stage::Fit => "fit",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait InStage<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> InStage<T> for Result<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// File-name stem for a kernel, e.g. `gaussian_100`.
pub fn kernel_slug(kernel: &KernelSpec) -> String {
    match kernel {
        KernelSpec::Gaussian { bandwidth } => format!("gaussian_{bandwidth}"),
        KernelSpec::Laplacian { bandwidth } => format!("laplacian_{bandwidth}"),
        KernelSpec::Bilinear => "bilinear".to_string(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    pub m: usize,
    pub n: usize,
    #[serde(with = "crate::serde_util::vectors")]
    pub inputs: Vec<CoefficientVector>,
    #[serde(with = "crate::serde_util::vectors")]
    pub outputs: Vec<CoefficientVector>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub projection_errors: Vec<f64>,
    pub config: ExperimentConfig,
    pub rng: RngInfo,
}

impl DatasetFile {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::new(self.inputs.clone(), self.outputs.clone())
    }
}

pub fn dataset_path(out: &Path) -> PathBuf {
    out.join("dataset.json")
}

pub fn model_path(out: &Path, kernel: &KernelSpec) -> PathBuf {
    out.join("models").join(format!("{}.sos.json", kernel_slug(kernel)))
}

pub fn representer_path(out: &Path, kernel: &KernelSpec) -> PathBuf {
    out.join("models").join(format!("{}.representer.json", kernel_slug(kernel)))
}

/// Writes `dataset.json` and one trajectory CSV per training input.
pub fn cmd_generate(config: &ExperimentConfig, out: &Path) -> Result<DatasetFile> {
    let data = generate_data(config)?;
    let file = DatasetFile {
        m: config.m,
        n: config.n,
        inputs: data.dataset.inputs().to_vec(),
        outputs: data.dataset.outputs().to_vec(),
        horizon: config.horizon,
        projection_errors: data.projection_errors,
        config: config.clone(),
        rng: RngInfo::for_config(config),
    };
    write_json(&dataset_path(out), &file)?;
    let dir = out.join("trajectories");
    std::fs::create_dir_all(&dir)?;
    for (i, sim) in data.simulations.iter().enumerate() {
        sim.write_csv(&dir.join(format!("train_{}.csv", i + 1)))?;
    }
    Ok(file)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelFitReport {
    pub kernel: KernelSpec,
    pub misfit: f64,
    pub norm_term: f64,
    pub objective: f64,
    pub solver_status: SolveStatus,
    pub iterations: usize,
    pub kkt: crate::sdp::KktResiduals,
    pub min_sym_eigenvalue: f64,
    pub m_spectral_norm: f64,
    pub nonnegativity_certified: bool,
    pub representer_misfit: f64,
    pub representer_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub fits: Vec<KernelFitReport>,
    pub config: ExperimentConfig,
    pub rng: RngInfo,
}

impl FitReport {
    pub fn all_optimal(&self) -> bool {
        self.fits.iter().all(|f| f.solver_status == SolveStatus::Optimal)
    }
}

fn fit_report(fit: &KernelFit, dataset: &Dataset) -> Result<KernelFitReport> {
    let d = fit.sos.diagnostics();
    let (min_eig, norm) = sos_model::nonnegativity_certificate(fit.sos.m_matrix())?;
    Ok(KernelFitReport {
        kernel: fit.kernel,
        misfit: d.misfit,
        norm_term: d.norm_term,
        objective: d.objective,
        solver_status: d.solver_status,
        iterations: d.iterations,
        kkt: d.kkt,
        min_sym_eigenvalue: min_eig,
        m_spectral_norm: norm,
        nonnegativity_certified: min_eig >= -sos_model::NONNEGATIVITY_TOL * (1.0 + norm),
        representer_misfit: fit.representer.misfit(dataset)?,
        representer_residual: fit.representer.residual(dataset)?,
    })
}

/// Fits every configured kernel to `dataset.json` and writes the models
/// and `fit_report.json`.
pub fn cmd_fit(config: &ExperimentConfig, out: &Path) -> Result<(FitReport, Vec<KernelFit>)> {
    config.validate()?;
    let file: DatasetFile = read_json(&dataset_path(out))?;
    let dataset = file.dataset()?;
    std::fs::create_dir_all(out.join("models"))?;
    let mut fits = Vec::new();
    let mut reports = Vec::new();
    for kernel in &config.kernels {
        let fit = fit_kernel(config, &dataset, kernel)?;
        fit.sos.save(&model_path(out, kernel))?;
        write_json(&representer_path(out, kernel), &fit.representer)?;
        reports.push(fit_report(&fit, &dataset)?);
        fits.push(fit);
    }
    let report = FitReport {
        fits: reports,
        config: config.clone(),
        rng: RngInfo::for_config(config),
    };
    write_json(&out.join("fit_report.json"), &report)?;
    Ok((report, fits))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub kernel: KernelSpec,
    pub misfit: f64,
    pub avg_relative_error: f64,
    pub min_quadratic_form: f64,
    pub solver_status: SolveStatus,
    pub representer_avg_relative_error: Option<f64>,
    pub relative_errors: Vec<f64>,
    pub test_count: usize,
    pub config: ExperimentConfig,
    pub rng: RngInfo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsFile {
    pub metrics: Vec<Metrics>,
    pub config: ExperimentConfig,
    pub rng: RngInfo,
}

/// The seeded test set and its true output coefficients.
pub struct TestSet {
    pub inputs: Vec<CoefficientVector>,
    pub truths: Vec<CoefficientVector>,
}

pub fn test_set(config: &ExperimentConfig) -> Result<TestSet> {
    let inputs = test_inputs(config.m, config.test_count, config.rng_seed);
    let truths = true_outputs(config, &inputs)?;
    Ok(TestSet { inputs, truths })
}

fn representer_avg_error(model: &RepresenterModel, tests: &TestSet) -> Result<f64> {
    let errs: Vec<Result<f64>> = tests
        .inputs
        .par_iter()
        .zip(&tests.truths)
        .map(|(u, y)| relative_error(&model.predict(u)?, y))
        .collect();
    let mut total = 0.0;
    for e in &errs {
        total += *e.as_ref().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(total / errs.len() as f64)
}

fn metrics_for(
    config: &ExperimentConfig,
    model: &SosModel,
    representer: Option<&RepresenterModel>,
    dataset: &Dataset,
    tests: &TestSet,
) -> Result<Metrics> {
    let eval = evaluate_model(model, &tests.inputs, &tests.truths)?;
    Ok(Metrics {
        kernel: *model.kernel(),
        misfit: model.misfit(dataset)?,
        avg_relative_error: eval.avg_relative_error,
        min_quadratic_form: eval.min_quadratic_form,
        solver_status: model.diagnostics().solver_status,
        representer_avg_relative_error: representer.map(|r| representer_avg_error(r, tests)).transpose()?,
        relative_errors: eval.relative_errors,
        test_count: tests.inputs.len(),
        config: config.clone(),
        rng: RngInfo::for_config(config),
    })
}

/// Loads the fitted models (re-verifying nonnegativity), simulates the
/// seeded test set and writes `metrics.json` plus one file per kernel.
pub fn cmd_evaluate(config: &ExperimentConfig, out: &Path) -> Result<MetricsFile> {
    config.validate()?;
    let dataset = read_json::<DatasetFile>(&dataset_path(out))?.dataset()?;
    let tests = test_set(config)?;
    let mut metrics = Vec::new();
    for kernel in &config.kernels {
        let model = SosModel::load(&model_path(out, kernel))?;
        let representer: Option<RepresenterModel> = match read_json(&representer_path(out, kernel)) {
            Ok(r) => Some(r),
            Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(e),
        };
        let m = metrics_for(config, &model, representer.as_ref(), &dataset, &tests)?;
        write_json(&out.join("metrics").join(format!("{}.json", kernel_slug(kernel))), &m)?;
        metrics.push(m);
    }
    let file = MetricsFile {
        metrics,
        config: config.clone(),
        rng: RngInfo::for_config(config),
    };
    write_json(&out.join("metrics.json"), &file)?;
    Ok(file)
}

/// Thresholds the reproduction run is judged against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Thresholds {
    pub gaussian_misfit_max: f64,
    pub gaussian_avg_error_max: f64,
    pub bilinear_avg_error_min: f64,
    pub projection_error_max: f64,
    pub nonnegativity_rel_tol: f64,
    pub quadratic_form_min: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            gaussian_misfit_max: 1e-3,
            gaussian_avg_error_max: 0.10,
            bilinear_avg_error_min: 0.5,
            projection_error_max: 1e-4,
            nonnegativity_rel_tol: sos_model::NONNEGATIVITY_TOL,
            quadratic_form_min: -1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub checks: Vec<Check>,
    pub ordering: Vec<String>,
    pub ordering_pass: bool,
    pub pass: bool,
    pub thresholds: Thresholds,
    pub config: ExperimentConfig,
    pub rng: RngInfo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kernel: KernelSpec,
    pub misfit: f64,
    pub avg_relative_error: f64,
    pub representer_avg_relative_error: Option<f64>,
    pub min_quadratic_form: f64,
    pub min_sym_eigenvalue: f64,
    pub solver_status: SolveStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub max_projection_error: f64,
    pub config: ExperimentConfig,
    pub rng: RngInfo,
}

pub struct Reproduction {
    pub summary: Summary,
    pub verdict: Verdict,
}

fn find<'a>(rows: &'a [SummaryRow], name: &str) -> Option<&'a SummaryRow> {
    rows.iter().find(|r| r.kernel.name() == name)
}

pub fn judge(summary: &Summary, fits: &FitReport, thresholds: &Thresholds) -> Verdict {
    let mut checks = Vec::new();
    let mut push = |name: &str, value: f64, threshold: f64, pass: bool| {
        checks.push(Check {
            name: name.to_string(),
            value,
            threshold,
            pass,
        })
    };
    if let Some(g) = find(&summary.rows, "gaussian") {
        push("gaussian_misfit", g.misfit, thresholds.gaussian_misfit_max, g.misfit <= thresholds.gaussian_misfit_max);
        push(
            "gaussian_avg_relative_error",
            g.avg_relative_error,
            thresholds.gaussian_avg_error_max,
            g.avg_relative_error <= thresholds.gaussian_avg_error_max,
        );
    }
    if let Some(b) = find(&summary.rows, "bilinear") {
        push(
            "bilinear_avg_relative_error",
            b.avg_relative_error,
            thresholds.bilinear_avg_error_min,
            b.avg_relative_error >= thresholds.bilinear_avg_error_min,
        );
    }
    push(
        "max_projection_error",
        summary.max_projection_error,
        thresholds.projection_error_max,
        summary.max_projection_error < thresholds.projection_error_max,
    );
    for (row, fit) in summary.rows.iter().zip(&fits.fits) {
        let bound = -thresholds.nonnegativity_rel_tol * (1.0 + fit.m_spectral_norm);
        push(
            &format!("{}_min_sym_eigenvalue", kernel_slug(&row.kernel)),
            row.min_sym_eigenvalue,
            bound,
            row.min_sym_eigenvalue >= bound,
        );
        push(
            &format!("{}_min_quadratic_form", kernel_slug(&row.kernel)),
            row.min_quadratic_form,
            thresholds.quadratic_form_min,
            row.min_quadratic_form >= thresholds.quadratic_form_min,
        );
    }

    let mut sorted: Vec<&SummaryRow> = summary.rows.iter().collect();
    sorted.sort_by(|a, b| a.avg_relative_error.total_cmp(&b.avg_relative_error));
    let ordering: Vec<String> = sorted.iter().map(|r| r.kernel.name().to_string()).collect();
    let expected = ["gaussian", "laplacian", "bilinear"];
    let filtered: Vec<&str> = ordering
        .iter()
        .map(String::as_str)
        .filter(|n| expected.contains(n))
        .collect();
    let ordering_pass = filtered.len() == 3 && filtered == expected;
    let pass = ordering_pass && checks.iter().all(|c| c.pass);
    Verdict {
        checks,
        ordering,
        ordering_pass,
        pass,
        thresholds: thresholds.clone(),
        config: summary.config.clone(),
        rng: summary.rng.clone(),
    }
}

/// Per-sample plot data: time, input, true output, its projection and
/// every model's reconstructed prediction.
fn write_plot_csv(
    path: &Path,
    basis: &LegendreBasis,
    sim: &Simulation,
    input: &CoefficientVector,
    truth: &CoefficientVector,
    predictions: &[(String, CoefficientVector)],
    samples: usize,
) -> Result<()> {
    let y = sim.output();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string(), "u".into(), "y_true".into(), "y_true_projected".into()];
    header.extend(predictions.iter().map(|(name, _)| format!("y_{name}")));
    w.write_record(&header)?;
    for k in 0..=samples {
        let t = basis.horizon() * k as f64 / samples as f64;
        let mut row = vec![
            t,
            basis.reconstruct(input, t)?,
            y.interpolate(t),
            basis.reconstruct(truth, t)?,
        ];
        for (_, c) in predictions {
            row.push(basis.reconstruct(c, t)?);
        }
        w.write_record(row.iter().map(|x| format!("{x:e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Number of test inputs exported as comparison plot data.
const PLOTTED_TESTS: usize = 3;
const PLOT_SAMPLES: usize = 400;

/// generate → fit → evaluate for every kernel, then the summary table,
/// plot data and verdict.
pub fn cmd_reproduce_paper(config: &ExperimentConfig, out: &Path) -> std::result::Result<Reproduction, StageError> {
    config.validate().stage(Stage::Generate)?;
    let data = cmd_generate(config, out).stage(Stage::Generate)?;
    let (fit_report, fits) = cmd_fit(config, out).stage(Stage::Fit)?;
    let metrics = cmd_evaluate(config, out).stage(Stage::Evaluate)?;

    let rows: Vec<SummaryRow> = metrics
        .metrics
        .iter()
        .zip(&fit_report.fits)
        .map(|(m, f)| SummaryRow {
            kernel: m.kernel,
            misfit: m.misfit,
            avg_relative_error: m.avg_relative_error,
            representer_avg_relative_error: m.representer_avg_relative_error,
            min_quadratic_form: m.min_quadratic_form,
            min_sym_eigenvalue: f.min_sym_eigenvalue,
            solver_status: m.solver_status,
            iterations: f.iterations,
        })
        .collect();
    let summary = Summary {
        rows,
        max_projection_error: data.projection_errors.iter().copied().fold(0.0, f64::max),
        config: config.clone(),
        rng: RngInfo::for_config(config),
    };
    let verdict = judge(&summary, &fit_report, &Thresholds::default());

    let report = || -> Result<()> {
        write_json(&out.join("summary.json"), &summary)?;
        write_json(&out.join("verdict.json"), &verdict)?;
        let mut table = csv::Writer::from_path(out.join("summary.csv"))?;
        table.write_record(["kernel", "misfit", "avg_relative_error", "min_quadratic_form", "solver_status"])?;
        for r in &summary.rows {
            table.write_record([
                kernel_slug(&r.kernel),
                format!("{:e}", r.misfit),
                format!("{:e}", r.avg_relative_error),
                format!("{:e}", r.min_quadratic_form),
                r.solver_status.as_str().to_string(),
            ])?;
        }
        table.flush()?;

        let basis = config.basis()?;
        let plots = out.join("plots");
        std::fs::create_dir_all(&plots)?;
        let dataset = data.dataset()?;
        let sims = generate_data(config)?.simulations;
        for (i, (u, y)) in dataset.inputs().iter().zip(dataset.outputs()).enumerate() {
            let preds = fits
                .iter()
                .map(|f| Ok((kernel_slug(&f.kernel), f.sos.predict(u)?)))
                .collect::<Result<Vec<_>>>()?;
            write_plot_csv(&plots.join(format!("train_{}.csv", i + 1)), &basis, &sims[i], u, y, &preds, PLOT_SAMPLES)?;
        }
        let inputs = test_inputs(config.m, config.test_count.min(PLOTTED_TESTS), config.rng_seed);
        for (k, u) in inputs.iter().enumerate() {
            let sim = simulate_coefficients(&basis, u, config.dt())?;
            let (truth, _) = output_coefficients(&basis, &sim)?;
            let preds = fits
                .iter()
                .map(|f| Ok((kernel_slug(&f.kernel), f.sos.predict(u)?)))
                .collect::<Result<Vec<_>>>()?;
            write_plot_csv(&plots.join(format!("test_{}.csv", k + 1)), &basis, &sim, u, &truth, &preds, PLOT_SAMPLES)?;
        }
        write_json(
            &plots.join("manifest.json"),
            &serde_json::json!({
                "columns": "t, u, y_true, y_true_projected, then y_<kernel> per fitted kernel",
                "train": "train_<i>.csv for each training input",
                "test": "test_<k>.csv for the first seeded test inputs",
                "config": config,
                "rng": RngInfo::for_config(config),
            }),
        )?;
        Ok(())
    };
    report().stage(Stage::Report)?;
    Ok(Reproduction { summary, verdict })
}

//! JSON report types. Every report carries `schema: 1` and contains no
//! timestamps, so runs with the same inputs produce identical bytes.

use laplace_core::calibration::StudyRow;
use laplace_core::derivcheck::DerivativeReport;
use laplace_core::hellinger::HellingerEstimate;
use laplace_core::laplace::{MultistartSummary, NormalizationCheck};
use laplace_core::{BoundCertificate, GaussianMeasure, IntegrationEngine, MapResult};
use nalgebra::DMatrix;
use serde::Serialize;

pub const SCHEMA: u32 = 1;

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Serialize)]
pub struct ProblemReport {
    pub source: String,
    pub dim: usize,
    pub y: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct MapReport {
    pub u_map: Vec<f64>,
    pub i_at_map: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// A quadratic objective is minimised by a single Newton step.
    pub one_step: bool,
    pub hess_i: Vec<Vec<f64>>,
    pub multistart: Option<MultistartSummary>,
}

impl From<&MapResult> for MapReport {
    fn from(m: &MapResult) -> Self {
        Self {
            u_map: m.u_map.iter().copied().collect(),
            i_at_map: m.i_at_map,
            grad_norm: m.grad_norm,
            iterations: m.iterations,
            converged: m.converged,
            one_step: m.converged && m.iterations == 1,
            hess_i: rows(m.hess_i_at_map.matrix()),
            multistart: m.multistart.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SolveReport {
    pub schema: u32,
    pub command: &'static str,
    pub problem: ProblemReport,
    pub map: MapReport,
}

impl SolveReport {
    pub fn new(command: &'static str, problem: ProblemReport, map: MapReport) -> Self {
        Self {
            schema: SCHEMA,
            command,
            problem,
            map,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct NormalizationReport {
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Serialize)]
pub struct LaplaceReport {
    pub schema: u32,
    pub command: &'static str,
    pub problem: ProblemReport,
    pub engine: IntegrationEngine,
    pub map: MapReport,
    pub laplace_mean: Vec<f64>,
    pub laplace_covariance: Vec<Vec<f64>>,
    /// `∫ exp(−TΦ) dμ₀`.
    pub normalization: NormalizationReport,
}

impl LaplaceReport {
    pub fn new(
        problem: ProblemReport,
        map: &MapResult,
        nu: &GaussianMeasure,
        norm: NormalizationCheck,
        engine: IntegrationEngine,
    ) -> Self {
        Self {
            schema: SCHEMA,
            command: "laplace",
            problem,
            engine,
            map: MapReport::from(map),
            laplace_mean: nu.mean().iter().copied().collect(),
            laplace_covariance: rows(nu.covariance()),
            normalization: NormalizationReport {
                analytic: norm.analytic,
                numeric: norm.numeric,
                relative_error: norm.relative_error(),
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CertificateReport {
    #[serde(flatten)]
    pub certificate: BoundCertificate,
    /// `hellinger_bound / d_H`; absent when `d_H` is zero.
    pub tightness: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct CertifyReport {
    pub schema: u32,
    pub command: &'static str,
    pub problem: ProblemReport,
    pub engine: IntegrationEngine,
    pub map: MapReport,
    pub hellinger: HellingerEstimate,
    pub prop61: CertificateReport,
    pub cor63: CertificateReport,
}

impl CertifyReport {
    pub fn new(
        problem: ProblemReport,
        map: &MapResult,
        engine: IntegrationEngine,
        d: HellingerEstimate,
        prop61: BoundCertificate,
        cor63: BoundCertificate,
    ) -> Self {
        let wrap = |c: BoundCertificate| CertificateReport {
            certificate: c,
            tightness: (d.distance > 0.0).then(|| c.hellinger_bound / d.distance),
        };
        Self {
            schema: SCHEMA,
            command: "certify",
            problem,
            engine,
            map: MapReport::from(map),
            hellinger: d,
            prop61: wrap(prop61),
            cor63: wrap(cor63),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub schema: u32,
    pub command: &'static str,
    pub problem: ProblemReport,
    pub seed: u64,
    pub passes: bool,
    pub errors: DerivativeReport,
}

impl CheckReport {
    pub fn new(problem: ProblemReport, seed: u64, errors: DerivativeReport) -> Self {
        Self {
            schema: SCHEMA,
            command: "check-derivatives",
            problem,
            seed,
            passes: errors.passes(),
            errors,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct StudyEntry {
    pub scales: &'static str,
    #[serde(flatten)]
    pub row: StudyRow,
    pub max_relative_miss: f64,
}

#[derive(Debug, Serialize)]
pub struct ReproduceReport {
    pub schema: u32,
    pub command: &'static str,
    pub engine: IntegrationEngine,
    pub rows: Vec<StudyEntry>,
    pub csv_files: Vec<String>,
}

impl ReproduceReport {
    pub fn new(engine: IntegrationEngine, rows: Vec<StudyEntry>, csv_files: Vec<String>) -> Self {
        Self {
            schema: SCHEMA,
            command: "reproduce-paper",
            engine,
            rows,
            csv_files,
        }
    }
}

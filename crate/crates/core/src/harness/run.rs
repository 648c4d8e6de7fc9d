//! Monte Carlo and analytical curve points.
//!
//! Trial `i` draws its snapshots and its power-method start vectors from
//! streams keyed by `(base_seed, i)`, so trials run concurrently and every
//! operating point of a sweep sees the same noise realizations. Per-trial
//! squared errors are collected in trial order and summed pairwise.

use rayon::prelude::*;
use serde::Serialize;

use crate::array_model::{eig_hermitian, generate_snapshots_with_rng, sample_covariance, true_covariance, SnapshotSet};
use crate::dpm::{dpm_centralized_emulation, dpm_eigendecomposition, nominal_ac_cost, DpmConfig, SelectionMatrixT};
use crate::error::{Error, ErrorClass, Result};
use crate::esprit::{centralized_esprit, desprit_from_basis, paired_squared_errors, DespritMode, DoaEstimate};
use crate::esprit_mse::{armse_desprit_all, EspritAnalysisContext};
use crate::linalg::CMatrix;
use crate::network::AcStats;
use crate::perf::{armse_dpm, AcDepth, AnalysisInputs};
use crate::rng::{trial_rng, trial_seed, Purpose};

use super::align::{root_mean, subspace_squared_error};
use super::config::{Experiment, ExperimentKind, OperatingPoint, Scene, SimulationMode, SweepAxis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    McDpm,
    AnalyticalDpm,
    McDesprit,
    AnalyticalDesprit,
    McCentralizedEsprit,
    AnalyticalCentralizedEsprit,
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::McDpm => "mc_dpm",
            CurveKind::AnalyticalDpm => "analytical_dpm",
            CurveKind::McDesprit => "mc_desprit",
            CurveKind::AnalyticalDesprit => "analytical_desprit",
            CurveKind::McCentralizedEsprit => "mc_centralized_esprit",
            CurveKind::AnalyticalCentralizedEsprit => "analytical_centralized_esprit",
        }
    }
}

/// One row of the result table. `value` is an eigenvector RMSE for the d-PM
/// curves and a DOA RMSE in degrees for the ESPRIT curves. The consensus
/// counters are per trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub sweep_axis: SweepAxis,
    pub sweep_value: f64,
    pub p: Option<usize>,
    pub curve_kind: CurveKind,
    pub value: f64,
    pub trials_used: usize,
    pub ac_instances: u64,
    pub ac_iterations_total: u64,
}

/// A point that produced no value, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedPoint {
    pub sweep_value: f64,
    pub p: Option<usize>,
    pub curve_kind: CurveKind,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RunReport {
    pub points: Vec<CurvePoint>,
    pub skipped: Vec<SkippedPoint>,
}

/// How Monte Carlo trials are seeded and simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialPlan {
    pub trials: usize,
    pub base_seed: u64,
    pub mode: SimulationMode,
    pub esprit_mode: DespritMode,
}

impl TrialPlan {
    pub fn new(trials: usize, base_seed: u64) -> Self {
        Self {
            trials,
            base_seed,
            mode: SimulationMode::Emulated,
            esprit_mode: DespritMode::A3Shortcut,
        }
    }

    pub fn with_mode(self, mode: SimulationMode) -> Self {
        Self { mode, ..self }
    }

    pub fn with_esprit_mode(self, esprit_mode: DespritMode) -> Self {
        Self { esprit_mode, ..self }
    }
}

/// Aggregate of a Monte Carlo point. Trials that hit a numerical failure
/// (for instance an ill-conditioned shift-invariance solve or a DOA with no
/// real angle) are left out and counted in `failures`.
#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub rmse: Option<f64>,
    pub trials_used: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
    /// Consensus cost of one trial.
    pub stats: AcStats,
}

fn snapshots(scene: &Scene, op: OperatingPoint, base_seed: u64, trial: usize) -> Result<SnapshotSet> {
    let scen = scene.scenario(op.snr_db)?;
    let mut rng = trial_rng(base_seed, trial as u64, Purpose::Snapshots);
    generate_snapshots_with_rng(&scene.geometry, &scen, op.samples, &mut rng)
}

/// Runs `trial` for every trial index in parallel and aggregates the squared
/// errors it returns. Numerical failures are tolerated, other errors abort.
fn monte_carlo<F>(plan: &TrialPlan, stats: AcStats, trial: F) -> Result<McResult>
where
    F: Fn(usize) -> Result<f64> + Sync,
{
    let outcomes: Vec<Result<f64>> = (0..plan.trials).into_par_iter().map(&trial).collect();
    let mut squared = Vec::with_capacity(outcomes.len());
    let mut failures = 0;
    let mut first_failure = None;
    for o in outcomes {
        match o {
            Ok(v) => squared.push(v),
            Err(e) if e.class() == ErrorClass::Numerical => {
                failures += 1;
                first_failure.get_or_insert_with(|| e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(McResult {
        rmse: root_mean(&squared),
        trials_used: squared.len(),
        failures,
        first_failure,
        stats,
    })
}

fn estimated_basis(
    scene: &Scene,
    snaps: &SnapshotSet,
    cfg: &DpmConfig,
    mode: SimulationMode,
) -> Result<CMatrix> {
    let l = scene.source_count();
    match mode {
        SimulationMode::Emulated => dpm_centralized_emulation(
            &sample_covariance(snaps),
            &SelectionMatrixT::from_geometry(&scene.geometry),
            &scene.weights,
            l,
            cfg.p,
            cfg.q,
            cfg.seed,
        ),
        SimulationMode::Full => {
            Ok(dpm_eigendecomposition(snaps, &scene.topology, &scene.weights, l, cfg)?.assembled())
        }
    }
}

fn split_rows(u: &CMatrix, scene: &Scene) -> Vec<CMatrix> {
    (0..scene.geometry.node_count())
        .map(|k| u.rows(scene.geometry.offset(k), scene.geometry.sensors(k)).into_owned())
        .collect()
}

/// Monte Carlo eigenvector RMSE of the decentralized power method: every
/// estimated vector is phase-aligned to the true eigenvector and the
/// normalized subspace error `tr(dU dU^H) / tr(U U^H)` is averaged over trials.
pub fn rmse_dpm_mc(scene: &Scene, op: OperatingPoint, cfg: &DpmConfig, plan: &TrialPlan) -> Result<McResult> {
    cfg.validate()?;
    let l = scene.source_count();
    let truth = eig_hermitian(&true_covariance(&scene.geometry, &scene.scenario(op.snr_db)?)?)?.leading(l);
    let stats = nominal_ac_cost(&scene.weights, op.samples, l, cfg);
    monte_carlo(plan, stats, |i| {
        let snaps = snapshots(scene, op, plan.base_seed, i)?;
        let cfg = cfg.with_seed(trial_seed(plan.base_seed, i as u64));
        let est = estimated_basis(scene, &snaps, &cfg, plan.mode)?;
        subspace_squared_error(&est, &truth)
    })
}

fn mean_squared_doa_error(est: &DoaEstimate, truth: &[f64]) -> Result<f64> {
    let errs = paired_squared_errors(est, truth).ok_or_else(|| {
        Error::AngleOutOfRange {
            theta_deg: est.doas_deg.iter().copied().find(|d| d.is_nan()).unwrap_or(f64::NAN),
        }
    })?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Monte Carlo DOA RMSE (degrees) of decentralized ESPRIT. Estimates and true
/// directions are paired by rank. With every node forming its own `Psi` the
/// squared error is also averaged over the nodes.
pub fn rmse_desprit_mc(scene: &Scene, op: OperatingPoint, cfg: &DpmConfig, plan: &TrialPlan) -> Result<McResult> {
    cfg.validate()?;
    let l = scene.source_count();
    let mut stats = nominal_ac_cost(&scene.weights, op.samples, l, cfg);
    let pairs = (2 * l * l) as u64;
    stats.merge(&AcStats {
        ac_instances: pairs,
        ac_iterations_total: pairs * cfg.p3 as u64,
        messages: pairs * cfg.p3 as u64 * scene.weights.messages_per_iteration(),
    });
    monte_carlo(plan, stats, |i| {
        let snaps = snapshots(scene, op, plan.base_seed, i)?;
        let cfg = cfg.with_seed(trial_seed(plan.base_seed, i as u64));
        let u = estimated_basis(scene, &snaps, &cfg, plan.mode)?;
        let outcome = desprit_from_basis(&split_rows(&u, scene), &scene.geometry, &scene.weights, cfg.p3, plan.esprit_mode)?;
        let mut per_node = Vec::with_capacity(outcome.per_node.len());
        for est in outcome.per_node {
            per_node.push(mean_squared_doa_error(&est?, &scene.doas_deg)?);
        }
        Ok(per_node.iter().sum::<f64>() / per_node.len() as f64)
    })
}

/// Monte Carlo DOA RMSE (degrees) of ESPRIT on the full sample covariance.
pub fn rmse_centralized_esprit_mc(scene: &Scene, op: OperatingPoint, plan: &TrialPlan) -> Result<McResult> {
    let l = scene.source_count();
    monte_carlo(plan, AcStats::default(), |i| {
        let snaps = snapshots(scene, op, plan.base_seed, i)?;
        let est = centralized_esprit(&sample_covariance(&snaps), &scene.geometry, l)?;
        mean_squared_doa_error(&est, &scene.doas_deg)
    })
}

pub fn analytical_dpm(scene: &Scene, op: OperatingPoint, depth: AcDepth) -> Result<f64> {
    let inputs = AnalysisInputs::from_scenario(&scene.geometry, &scene.scenario(op.snr_db)?, &scene.weights, op.samples, depth)?;
    armse_dpm(&inputs, scene.source_count())
}

/// Predicted DOA RMSE in degrees; `AcDepth::Exact` gives the centralized
/// ESPRIT prediction.
pub fn analytical_desprit(scene: &Scene, op: OperatingPoint, depth: AcDepth) -> Result<f64> {
    let ctx = EspritAnalysisContext::from_scenario(&scene.geometry, &scene.scenario(op.snr_db)?, &scene.weights, op.samples, depth)?;
    armse_desprit_all(&ctx)
}

struct Rows<'a> {
    exp: &'a Experiment,
    report: RunReport,
}

impl Rows<'_> {
    fn push_mc(&mut self, op: OperatingPoint, p: Option<usize>, kind: CurveKind, r: McResult) {
        let sweep_value = op.sweep_value(self.exp.axis);
        match r.rmse {
            Some(value) => {
                if r.failures > 0 {
                    log::warn!(
                        "{} at {sweep_value}: {} of {} trials failed ({})",
                        kind.name(),
                        r.failures,
                        r.failures + r.trials_used,
                        r.first_failure.as_deref().unwrap_or("")
                    );
                }
                self.report.points.push(CurvePoint {
                    sweep_axis: self.exp.axis,
                    sweep_value,
                    p,
                    curve_kind: kind,
                    value,
                    trials_used: r.trials_used,
                    ac_instances: r.stats.ac_instances,
                    ac_iterations_total: r.stats.ac_iterations_total,
                });
            }
            None => self.report.skipped.push(SkippedPoint {
                sweep_value,
                p,
                curve_kind: kind,
                reason: format!("all trials failed: {}", r.first_failure.unwrap_or_default()),
            }),
        }
    }

    fn push_analytical(&mut self, op: OperatingPoint, p: Option<usize>, kind: CurveKind, stats: AcStats, r: Result<f64>) -> Result<()> {
        let sweep_value = op.sweep_value(self.exp.axis);
        match r {
            Ok(value) => self.report.points.push(CurvePoint {
                sweep_axis: self.exp.axis,
                sweep_value,
                p,
                curve_kind: kind,
                value,
                trials_used: 0,
                ac_instances: stats.ac_instances,
                ac_iterations_total: stats.ac_iterations_total,
            }),
            Err(e) if e.class() == ErrorClass::Numerical => {
                log::warn!("{} at {sweep_value}: {e}", kind.name());
                self.report.skipped.push(SkippedPoint {
                    sweep_value,
                    p,
                    curve_kind: kind,
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }
}

/// Every requested curve at every operating point of a validated experiment.
/// Rows are ordered by operating point, then curve kind, then depth.
pub fn run_experiment(exp: &Experiment) -> Result<RunReport> {
    let cfg = &exp.config;
    let plan = TrialPlan::new(cfg.trials, cfg.base_seed)
        .with_mode(cfg.output.mode)
        .with_esprit_mode(cfg.output.esprit_mode);
    let scene = &exp.scene;
    let curves = cfg.curves;
    let mut rows = Rows {
        exp,
        report: RunReport::default(),
    };
    for &op in &exp.points {
        log::info!("{} at snr {} dB, {} samples", cfg.name, op.snr_db, op.samples);
        match cfg.kind {
            ExperimentKind::Dpm => {
                if curves.monte_carlo {
                    for &p in &cfg.p_values {
                        let r = rmse_dpm_mc(scene, op, &cfg.dpm.at_depth(p), &plan)?;
                        rows.push_mc(op, Some(p), CurveKind::McDpm, r);
                    }
                }
                if curves.analytical {
                    for &p in &cfg.p_values {
                        let stats = nominal_ac_cost(&scene.weights, op.samples, scene.source_count(), &cfg.dpm.at_depth(p));
                        let r = analytical_dpm(scene, op, AcDepth::Finite(p));
                        rows.push_analytical(op, Some(p), CurveKind::AnalyticalDpm, stats, r)?;
                    }
                }
            }
            ExperimentKind::Desprit => {
                let mut costs = Vec::with_capacity(cfg.p_values.len());
                if curves.monte_carlo {
                    for &p in &cfg.p_values {
                        let r = rmse_desprit_mc(scene, op, &cfg.dpm.at_depth(p), &plan)?;
                        costs.push(r.stats);
                        rows.push_mc(op, Some(p), CurveKind::McDesprit, r);
                    }
                }
                if curves.analytical {
                    for (i, &p) in cfg.p_values.iter().enumerate() {
                        let stats = costs.get(i).copied().unwrap_or_default();
                        let r = analytical_desprit(scene, op, AcDepth::Finite(p));
                        rows.push_analytical(op, Some(p), CurveKind::AnalyticalDesprit, stats, r)?;
                    }
                }
                if curves.centralized {
                    if curves.monte_carlo {
                        let r = rmse_centralized_esprit_mc(scene, op, &plan)?;
                        rows.push_mc(op, None, CurveKind::McCentralizedEsprit, r);
                    }
                    if curves.analytical {
                        let r = analytical_desprit(scene, op, AcDepth::Exact);
                        rows.push_analytical(op, None, CurveKind::AnalyticalCentralizedEsprit, AcStats::default(), r)?;
                    }
                }
            }
        }
    }
    Ok(rows.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::preset;

    fn small(name: &str, trials: usize) -> Experiment {
        let mut c = preset(name).unwrap().with_trials(trials);
        match name {
            "fig2" | "fig4" => c.sweep.snr_db = Some(super::super::config::Values::List(vec![0.0, 10.0])),
            _ => c.sweep.samples = Some(super::super::config::Values::List(vec![100, 400])),
        }
        c.validate().unwrap()
    }

    #[test]
    fn dpm_preset_emits_six_curves() {
        let r = run_experiment(&small("fig2", 4)).unwrap();
        assert!(r.skipped.is_empty());
        let mut curves: Vec<_> = r.points.iter().map(|p| (p.curve_kind, p.p)).collect();
        curves.sort_by_key(|c| (c.0 as u8, c.1));
        curves.dedup();
        assert_eq!(curves.len(), 6);
        assert_eq!(r.points.len(), 12);
        assert!(r.points.iter().all(|p| p.value >= 0.0 && p.value.is_finite()));
    }

    #[test]
    fn desprit_preset_includes_centralized_references() {
        let r = run_experiment(&small("fig4", 3)).unwrap();
        let kinds: std::collections::BTreeSet<_> = r.points.iter().map(|p| p.curve_kind.name()).collect();
        assert_eq!(
            kinds.into_iter().collect::<Vec<_>>(),
            vec![
                "analytical_centralized_esprit",
                "analytical_desprit",
                "mc_centralized_esprit",
                "mc_desprit"
            ]
        );
        let central = r.points.iter().find(|p| p.curve_kind == CurveKind::McCentralizedEsprit).unwrap();
        assert_eq!(central.p, None);
        assert_eq!(central.ac_instances, 0);
    }

    #[test]
    fn identical_seeds_give_identical_reports() {
        let e = small("fig3", 5);
        assert_eq!(run_experiment(&e).unwrap(), run_experiment(&e).unwrap());
    }

    #[test]
    fn analytical_rows_ignore_trial_count() {
        let a = run_experiment(&small("fig2", 2)).unwrap();
        let b = run_experiment(&small("fig2", 7)).unwrap();
        let pick = |r: &RunReport| -> Vec<f64> {
            r.points
                .iter()
                .filter(|p| p.curve_kind == CurveKind::AnalyticalDpm)
                .map(|p| p.value)
                .collect()
        };
        assert_eq!(pick(&a), pick(&b));
    }

    #[test]
    fn full_and_emulated_modes_agree_with_long_aux_runs() {
        let scene = Scene::reference();
        let op = OperatingPoint { snr_db: 10.0, samples: 60 };
        let cfg = DpmConfig::for_subspace(10);
        let plan = TrialPlan::new(3, 11);
        let a = rmse_dpm_mc(&scene, op, &cfg, &plan).unwrap();
        let b = rmse_dpm_mc(&scene, op, &cfg, &plan.with_mode(SimulationMode::Full)).unwrap();
        assert_eq!(a.trials_used, 3);
        assert!((a.rmse.unwrap() - b.rmse.unwrap()).abs() < 1e-6 * a.rmse.unwrap());
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn desprit_trial_cost_adds_pair_products() {
        let scene = Scene::reference();
        let op = OperatingPoint { snr_db: 10.0, samples: 50 };
        let cfg = DpmConfig::for_esprit(10);
        let r = rmse_desprit_mc(&scene, op, &cfg, &TrialPlan::new(1, 0)).unwrap();
        let base = nominal_ac_cost(&scene.weights, 50, 3, &cfg);
        assert_eq!(r.stats.ac_instances, base.ac_instances + 18);
        assert_eq!(r.stats.ac_iterations_total, base.ac_iterations_total + 18 * 500);
    }

    #[test]
    fn full_esprit_mode_runs_every_node() {
        let scene = Scene::reference();
        let op = OperatingPoint { snr_db: 20.0, samples: 100 };
        let cfg = DpmConfig::for_esprit(30);
        let plan = TrialPlan::new(4, 5);
        let a3 = rmse_desprit_mc(&scene, op, &cfg, &plan).unwrap();
        let full = rmse_desprit_mc(&scene, op, &cfg, &plan.with_esprit_mode(DespritMode::Full)).unwrap();
        assert_eq!(full.trials_used, 4);
        assert!((a3.rmse.unwrap() - full.rmse.unwrap()).abs() < 1e-3 * a3.rmse.unwrap());
    }
}

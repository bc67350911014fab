//! End-to-end convergence experiments over generated network families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::eval::{affine_piece, forward};
use crate::linalg::{least_squares, Matrix};
use crate::network::Layer;
use crate::norm::{induced_matrix_norm, vector_norm, NormKind};
use crate::products::{
    check_product_conditions, log_checkpoints, tail_bound, ConditionReport, Status, DIVERGENCE_THRESHOLD, RATE_SLACK,
};
use crate::regions::BOUNDARY_EPS;
use crate::sequence::{generate_sequence, SequenceSpec};

pub const DEFAULT_SCHEDULE: [usize; 9] = [1, 2, 5, 10, 20, 50, 100, 200, 500];
/// Consecutive depths inspected by the convergence verdict.
pub const VERDICT_WINDOW: usize = 10;
/// Increments below `NOISE_FLOOR · tol` are exempt from the 10× growth rule.
pub const NOISE_FLOOR: f64 = 1e-3;
/// Tolerance of the least-squares coefficient check.
pub const LSQ_TOL: f64 = 1e-8;
const LSQ_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Lattice,
    Halton,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub kind: GridKind,
    pub dim: usize,
    pub size: usize,
    /// Points per axis for lattices.
    pub resolution: Option<usize>,
}

/// A finite sample set standing in for `[0,1]^d` in sup-norm tests.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    info: GridInfo,
    points: Vec<Vec<f64>>,
}

impl Grid {
    /// `{0, 1/(r−1), …, 1}^d`.
    pub fn lattice(dim: usize, resolution: usize) -> Result<Self> {
        if dim == 0 || resolution < 2 {
            return invalid("lattice needs dim ≥ 1 and resolution ≥ 2");
        }
        let total = resolution
            .checked_pow(dim as u32)
            .filter(|&t| t <= 1 << 22)
            .ok_or_else(|| Error::ResourceLimit(format!("lattice {resolution}^{dim} too large")))?;
        let step = 1.0 / (resolution - 1) as f64;
        let points = (0..total)
            .map(|mut k| {
                (0..dim)
                    .map(|_| {
                        let i = k % resolution;
                        k /= resolution;
                        i as f64 * step
                    })
                    .collect()
            })
            .collect();
        Ok(Grid {
            info: GridInfo {
                kind: GridKind::Lattice,
                dim,
                size: total,
                resolution: Some(resolution),
            },
            points,
        })
    }

    /// First `count` points of the Halton sequence in prime bases.
    pub fn halton(dim: usize, count: usize) -> Result<Self> {
        const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
        if dim == 0 || dim > PRIMES.len() || count == 0 {
            return invalid("halton grid needs 1 ≤ dim ≤ 8 and count ≥ 1");
        }
        let points = (1..=count as u64)
            .map(|i| PRIMES[..dim].iter().map(|&b| radical_inverse(i, b)).collect())
            .collect();
        Ok(Grid {
            info: GridInfo {
                kind: GridKind::Halton,
                dim,
                size: count,
                resolution: None,
            },
            points,
        })
    }

    /// 33-point lattice per axis for `d ≤ 2`, 1000 Halton points beyond.
    pub fn default_for(dim: usize) -> Result<Self> {
        if dim <= 2 {
            Self::lattice(dim, 33)
        } else {
            Self::halton(dim, 1000)
        }
    }

    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(dim) = points.first().map(Vec::len) else {
            return invalid("grid must be nonempty");
        };
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return invalid("grid points must share a positive dimension");
        }
        if points.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return invalid("grid points must lie in the unit cube");
        }
        Ok(Grid {
            info: GridInfo {
                kind: GridKind::Custom,
                dim,
                size: points.len(),
                resolution: None,
            },
            points,
        })
    }

    pub fn info(&self) -> &GridInfo {
        &self.info
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub tol: f64,
    /// Norm for `‖W_n − I‖`, `‖b_n‖` and the condition sub-report.
    pub norm: NormKind,
    /// Exponent of the Monte-Carlo `L^p` distance estimates.
    pub lp_norm: NormKind,
    pub mc_samples: usize,
    pub mc_seed: u64,
    /// Optional point whose values are traced at every scheduled depth.
    pub probe: Option<Vec<f64>>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            tol: 1e-6,
            norm: NormKind::L1,
            lp_norm: NormKind::L2,
            mc_samples: 1000,
            mc_seed: 0,
            probe: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRecord {
    pub n: usize,
    /// `max_x ‖N_n(x) − N_{n−1}(x)‖_∞` over the grid; absent at `n = 1`.
    pub delta_sup: Option<f64>,
    /// Monte-Carlo `‖N_n − N_{n_prev}‖_{L^p}` against the previous scheduled depth.
    pub lp_estimate: Option<f64>,
    /// `‖W_n − I‖` (the `m × d` identity at `n = 1`).
    pub w_dist_identity: f64,
    pub b_norm: f64,
    /// Analytic tail bound at cut `max(n, 2)`, when the family has a decay model.
    pub tail_bound: Option<f64>,
    pub probe_value: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub grid: GridInfo,
    pub schedule: Vec<usize>,
    pub options: ExperimentOptions,
    pub verdict: Status,
    /// First depth at which some tracked value exceeded the divergence threshold.
    pub blow_up_depth: Option<usize>,
    pub records: Vec<DepthRecord>,
    /// `Δ_n` over the final consecutive depths examined by the verdict.
    pub final_window: Vec<f64>,
    pub conditions: ConditionReport,
    /// `N_n` on the grid at the deepest scheduled depth, for converged runs.
    pub limit_snapshot: Option<Vec<Vec<f64>>>,
}

struct PointRun {
    /// Values at the scheduled depths reached.
    snapshots: Vec<Vec<f64>>,
    blow_up: Option<usize>,
}

fn run_point(
    layers: &[Layer],
    x: &[f64],
    schedule: &[usize],
    norm: NormKind,
    mut diffs: Option<&mut [f64]>,
) -> PointRun {
    let mut h = x.to_vec();
    let mut snapshots = Vec::with_capacity(schedule.len());
    let mut next = 0;
    for (k, layer) in layers.iter().enumerate() {
        let n = k + 1;
        let mut z = layer.apply(&h);
        for v in &mut z {
            if !(*v > 0.0) {
                *v = 0.0;
            }
        }
        if n >= 2 {
            if let Some(d) = diffs.as_deref_mut() {
                let step = z.iter().zip(&h).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                d[n] = d[n].max(step);
            }
        }
        if !(vector_norm(&z, norm) <= DIVERGENCE_THRESHOLD) {
            return PointRun {
                snapshots,
                blow_up: Some(n),
            };
        }
        if schedule.get(next) == Some(&n) {
            snapshots.push(z.clone());
            next += 1;
        }
        h = z;
    }
    PointRun {
        snapshots,
        blow_up: None,
    }
}

/// Runs every point through all layers; returns per-depth sup differences
/// (indexed by depth) and the per-point runs in input order.
fn run_points(layers: &[Layer], points: &[Vec<f64>], schedule: &[usize], norm: NormKind) -> (Vec<f64>, Vec<PointRun>) {
    let depth = layers.len();
    let (diffs, mut runs) = points
        .par_iter()
        .enumerate()
        .fold(
            || (vec![0.0; depth + 1], Vec::new()),
            |(mut d, mut runs), (i, x)| {
                runs.push((i, run_point(layers, x, schedule, norm, Some(&mut d))));
                (d, runs)
            },
        )
        .reduce(
            || (vec![0.0; depth + 1], Vec::new()),
            |(mut a, mut ra), (b, rb)| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x = x.max(y);
                }
                ra.extend(rb);
                (a, ra)
            },
        );
    runs.sort_by_key(|(i, _)| *i);
    (diffs, runs.into_iter().map(|(_, r)| r).collect())
}

fn uniform_samples(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
        .collect()
}

/// `(mean ‖u_s − v_s‖_p^p)^{1/p}`, or the max of `‖u_s − v_s‖_∞` for `p = ∞`.
fn lp_distance(u: &[&Vec<f64>], v: &[&Vec<f64>], p: NormKind) -> f64 {
    let count = u.len() as f64;
    let dists = u.iter().zip(v).map(|(a, b)| {
        let diff: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
        vector_norm(&diff, p)
    });
    match p {
        NormKind::Inf => dists.fold(0.0, f64::max),
        NormKind::L1 => dists.sum::<f64>() / count,
        NormKind::L2 => (dists.map(|d| d * d).sum::<f64>() / count).sqrt(),
    }
}

fn check_schedule(schedule: &[usize]) -> Result<()> {
    if schedule.is_empty() || schedule[0] == 0 || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("depth schedule must be a nonempty increasing list of positive depths");
    }
    Ok(())
}

fn generate_layers(spec: &SequenceSpec, depth: usize) -> Result<Vec<Layer>> {
    if spec.max_depth().is_some_and(|d| d < depth) {
        return invalid(format!("explicit sequence has fewer than {depth} layers"));
    }
    (1..=depth).into_par_iter().map(|n| spec.layer(n)).collect()
}

fn identity_distance(layer: &Layer, norm: NormKind) -> f64 {
    let w = &layer.weight;
    induced_matrix_norm(&w.sub(&Matrix::eye(w.rows(), w.cols())), norm)
}

/// Fitted exponent `r` of `Δ_n ~ n^{−r}` between two depths.
fn decay_rate((n0, d0): (usize, f64), (n1, d1): (usize, f64)) -> f64 {
    (d0 / d1).ln() / (n1 as f64 / n0 as f64).ln()
}

/// Evaluates `N_n` on `grid` at every depth up to the deepest scheduled one
/// and classifies the sup-grid Cauchy differences.
///
/// Converged: `Δ_n ≤ tol` over the final `VERDICT_WINDOW` depths with no
/// step growing by more than 10× (above the noise floor). Diverged: blow-up past the divergence
/// threshold, or `Δ_n ≥ tol` at the last three scheduled depths while
/// decaying no faster than `1/n` across them (faster decay is summable and
/// reads as slow convergence).
pub fn pointwise_experiment(
    spec: &SequenceSpec,
    grid: &Grid,
    schedule: &[usize],
    options: &ExperimentOptions,
) -> Result<ConvergenceReport> {
    check_schedule(schedule)?;
    if grid.info.dim != spec.input_dim() {
        return invalid(format!(
            "grid dimension {} ≠ input dimension {}",
            grid.info.dim,
            spec.input_dim()
        ));
    }
    if !(options.tol > 0.0) {
        return invalid("tol must be positive");
    }
    if options.mc_samples == 0 {
        return invalid("mc_samples must be positive");
    }
    if let Some(p) = &options.probe {
        if p.len() != spec.input_dim() || p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return invalid("probe must be a point of the unit cube");
        }
    }
    let top = *schedule.last().unwrap();
    let layers = generate_layers(spec, top)?;
    let norm = options.norm;

    let (deltas, grid_runs) = run_points(&layers, &grid.points, schedule, norm);
    let mc = uniform_samples(spec.input_dim(), options.mc_samples, options.mc_seed);
    let (_, mc_runs) = run_points(&layers, &mc, schedule, norm);
    let probe_run = options
        .probe
        .as_ref()
        .map(|p| run_point(&layers, p, schedule, norm, None));

    let blow_up_depth = grid_runs
        .iter()
        .chain(&mc_runs)
        .chain(probe_run.iter())
        .filter_map(|r| r.blow_up)
        .min();
    let reached = blow_up_depth.map_or(top, |b| b - 1);

    let pnorms: Vec<f64> = layers.iter().skip(1).map(|l| identity_distance(l, norm)).collect();
    let model = spec.perturbation_model(norm).filter(|m| m.summable());

    let mut records = Vec::new();
    for (k, &n) in schedule.iter().enumerate().take_while(|(_, &n)| n <= reached) {
        let layer = &layers[n - 1];
        let lp_estimate = (k > 0).then(|| {
            let now: Vec<&Vec<f64>> = mc_runs.iter().map(|r| &r.snapshots[k]).collect();
            let before: Vec<&Vec<f64>> = mc_runs.iter().map(|r| &r.snapshots[k - 1]).collect();
            lp_distance(&now, &before, options.lp_norm)
        });
        records.push(DepthRecord {
            n,
            delta_sup: (n >= 2).then(|| deltas[n]),
            lp_estimate,
            w_dist_identity: identity_distance(layer, norm),
            b_norm: vector_norm(&layer.b, norm),
            tail_bound: model.map(|m| tail_bound(&pnorms, n.max(2), m).unwrap_or(f64::INFINITY)),
            probe_value: probe_run.as_ref().map(|r| r.snapshots[k].clone()),
        });
    }

    let window_start = reached.saturating_sub(VERDICT_WINDOW - 1).max(2);
    let final_window: Vec<f64> = if reached >= 2 {
        deltas[window_start..=reached].to_vec()
    } else {
        Vec::new()
    };
    let tol = options.tol;
    let verdict = if blow_up_depth.is_some() {
        Status::Diverged
    } else if !final_window.is_empty()
        && final_window.iter().all(|&d| d <= tol)
        && final_window
            .windows(2)
            .all(|w| w[1] <= 10.0 * w[0].max(NOISE_FLOOR * tol))
    {
        Status::Converged
    } else {
        let scheduled: Vec<(usize, f64)> = records.iter().filter_map(|r| r.delta_sup.map(|d| (r.n, d))).collect();
        let tail = &scheduled[scheduled.len().saturating_sub(3)..];
        if tail.len() == 3 && tail.iter().all(|&(_, d)| d >= tol) && decay_rate(tail[0], tail[2]) <= 1.0 + RATE_SLACK {
            Status::Diverged
        } else {
            Status::Undecided
        }
    };

    let limit_snapshot = (verdict == Status::Converged).then(|| {
        grid_runs
            .iter()
            .map(|r| r.snapshots.last().cloned().unwrap_or_default())
            .collect()
    });
    let conditions = check_product_conditions(spec, norm, top.max(10))?;
    Ok(ConvergenceReport {
        grid: grid.info.clone(),
        schedule: schedule.to_vec(),
        options: options.clone(),
        verdict,
        blow_up_depth,
        records,
        final_window,
        conditions,
        limit_snapshot,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub n: usize,
    pub value: f64,
}

/// One conclusion of the necessary-condition theorem, traced over depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCondition {
    pub name: String,
    pub trend: Vec<TrendPoint>,
    pub final_value: f64,
    pub below_tol: bool,
    /// Non-increasing over the final half, allowing a factor-2 rebound.
    pub non_increasing: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub horizon: usize,
    pub tol: f64,
    pub norm: NormKind,
    pub weights: AuditCondition,
    pub bias: AuditCondition,
    pub pass: bool,
}

impl AuditReport {
    /// Names of the failing conditions.
    pub fn violated(&self) -> Vec<&str> {
        [&self.weights, &self.bias]
            .into_iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn audit_condition(name: &str, values: &[(usize, f64)], tol: f64) -> AuditCondition {
    let (last_n, final_value) = *values.last().expect("nonempty trace");
    let half = last_n / 2;
    let mut running_min = f64::INFINITY;
    let mut non_increasing = true;
    for &(n, v) in values.iter().filter(|(n, _)| *n >= half) {
        if v > 2.0 * running_min {
            non_increasing = false;
        }
        running_min = running_min.min(v);
        let _ = n;
    }
    let marks = log_checkpoints(last_n);
    let trend = values
        .iter()
        .filter(|(n, _)| marks.binary_search(n).is_ok())
        .map(|&(n, value)| TrendPoint { n, value })
        .collect();
    let below_tol = final_value <= tol;
    AuditCondition {
        name: name.to_string(),
        trend,
        final_value,
        below_tol,
        non_increasing,
        pass: below_tol && non_increasing,
    }
}

/// Checks the two necessary conclusions `W_n → I` and `b_n → 0` over `n ≤ horizon`.
pub fn necessary_condition_audit(spec: &SequenceSpec, horizon: usize, tol: f64, norm: NormKind) -> Result<AuditReport> {
    if horizon < 10 {
        return invalid("horizon must be at least 10");
    }
    let horizon = spec.max_depth().map_or(horizon, |d| horizon.min(d));
    let layers = generate_layers(spec, horizon)?;
    let weights: Vec<(usize, f64)> = layers
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, l)| (k + 1, identity_distance(l, norm)))
        .collect();
    let bias: Vec<(usize, f64)> = layers
        .iter()
        .enumerate()
        .map(|(k, l)| (k + 1, vector_norm(&l.b, norm)))
        .collect();
    let weights = audit_condition("weights_to_identity", &weights, tol);
    let bias = audit_condition("bias_to_zero", &bias, tol);
    Ok(AuditReport {
        horizon,
        tol,
        norm,
        pass: weights.pass && bias.pass,
        weights,
        bias,
    })
}

/// A converged verdict whose audit fails although the audit's hypotheses
/// hold contradicts the necessary-condition theorem.
pub fn contradiction(report: &ConvergenceReport, audit: &AuditReport) -> bool {
    report.verdict == Status::Converged && !audit.pass && report.conditions.necessary_hypotheses_hold()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsqCheck {
    pub samples: usize,
    pub radius: f64,
    pub max_error: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRecord {
    pub n: usize,
    pub pattern: String,
    #[serde(rename = "A")]
    pub a: Matrix,
    pub c: Vec<f64>,
    /// Max-entry change of `A` from depth `n − 1`; absent at `n = 1`.
    pub a_step: Option<f64>,
    pub c_step: Option<f64>,
    pub lsq: Option<LsqCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTrace {
    pub probe: Vec<f64>,
    pub tol: f64,
    pub records: Vec<CoefficientRecord>,
    /// Both coefficient steps at the deepest scheduled depth are `≤ tol`.
    pub cauchy: bool,
}

fn max_entry_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `(radius, inputs, outputs)` of matching neighbours.
type Neighbours = (f64, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Samples near `probe` sharing the pattern `pattern` of `net`, reflected
/// back into the cube.
fn pattern_neighbours(
    net: &crate::network::Network,
    probe: &[f64],
    pattern: &crate::mask::ActivationPattern,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Neighbours>> {
    let d = probe.len();
    let mut radius = 1e-3;
    for _ in 0..4 {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..LSQ_SAMPLES {
            let x: Vec<f64> = probe
                .iter()
                .map(|&p| {
                    let v = p + radius * rng.gen_range(-1.0..=1.0);
                    if (0.0..=1.0).contains(&v) {
                        v
                    } else {
                        2.0 * p - v
                    }
                })
                .collect();
            let f = forward(net, &x)?;
            if &f.pattern == pattern && f.min_margin >= BOUNDARY_EPS {
                xs.push(x);
                ys.push(f.y);
            }
        }
        if xs.len() >= d + 2 {
            return Ok(Some((radius, xs, ys)));
        }
        radius /= 10.0;
    }
    Ok(None)
}

fn lsq_check(
    net: &crate::network::Network,
    probe: &[f64],
    a: &Matrix,
    c: &[f64],
    pattern: &crate::mask::ActivationPattern,
    rng: &mut ChaCha8Rng,
) -> Result<Option<LsqCheck>> {
    let Some((radius, xs, ys)) = pattern_neighbours(net, probe, pattern, rng)? else {
        return Ok(None);
    };
    let d = probe.len();
    let rows: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().copied().chain([1.0]).collect()).collect();
    let design = Matrix::from_rows(&rows)?;
    let mut max_error = 0.0f64;
    for j in 0..a.rows() {
        let rhs: Vec<f64> = ys.iter().map(|y| y[j]).collect();
        let Some(coef) = least_squares(&design, &rhs) else {
            return Ok(None);
        };
        max_error = max_error
            .max(max_entry_diff(&coef[..d], a.row(j)))
            .max((coef[d] - c[j]).abs());
    }
    let scale = a.max_abs().max(c.iter().fold(0.0, |m, v| m.max(v.abs()))).max(1.0);
    Ok(Some(LsqCheck {
        samples: xs.len(),
        radius,
        max_error,
        agrees: max_error <= LSQ_TOL * scale,
    }))
}

/// Traces the affine piece `(A_n, c_n)` of the probe's region along the
/// schedule and cross-checks it against a least-squares fit of nearby
/// samples sharing the pattern.
pub fn region_coefficient_convergence(
    spec: &SequenceSpec,
    probe: &[f64],
    schedule: &[usize],
    tol: f64,
) -> Result<CoefficientTrace> {
    check_schedule(schedule)?;
    if probe.len() != spec.input_dim() || probe.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return invalid("probe must be a point of the unit cube");
    }
    let top = *schedule.last().unwrap();
    let net = generate_sequence(spec, top)?;
    let full = forward(&net, probe)?;
    if full.min_margin < BOUNDARY_EPS {
        let (layer, neuron) = full.min_margin_at.unwrap_or((0, 0));
        return Err(Error::Boundary {
            layer,
            neuron,
            margin: full.min_margin,
        });
    }
    let records = schedule
        .par_iter()
        .map(|&n| {
            let sub = net.truncated(n)?;
            let pattern = full.pattern.prefix(n)?;
            let piece = affine_piece(&sub, &pattern)?;
            let (a_step, c_step) = if n >= 2 {
                let prev = affine_piece(&net.truncated(n - 1)?, &full.pattern.prefix(n - 1)?)?;
                (
                    Some(max_entry_diff(piece.a.as_slice(), prev.a.as_slice())),
                    Some(max_entry_diff(&piece.c, &prev.c)),
                )
            } else {
                (None, None)
            };
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(n as u64);
            let lsq = lsq_check(&sub, probe, &piece.a, &piece.c, &pattern, &mut rng)?;
            Ok(CoefficientRecord {
                n,
                pattern: pattern.to_string(),
                a: piece.a,
                c: piece.c,
                a_step,
                c_step,
                lsq,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let last = records.last().unwrap();
    let cauchy = last.a_step.unwrap_or(0.0) <= tol && last.c_step.unwrap_or(0.0) <= tol;
    Ok(CoefficientTrace {
        probe: probe.to_vec(),
        tol,
        records,
        cauchy,
    })
}

/// Monte-Carlo estimate of `‖N_{n'} − N_n‖` in `L^p([0,1]^d)`.
pub fn lp_distance_estimate(
    spec: &SequenceSpec,
    n: usize,
    n_prime: usize,
    p: NormKind,
    sample_count: usize,
    seed: u64,
) -> Result<f64> {
    if n == 0 || n_prime < n {
        return invalid("need 1 ≤ n ≤ n'");
    }
    if sample_count < 100 {
        return invalid("sample_count must be at least 100");
    }
    let layers = generate_layers(spec, n_prime)?;
    let samples = uniform_samples(spec.input_dim(), sample_count, seed);
    let schedule: Vec<usize> = if n == n_prime { vec![n] } else { vec![n, n_prime] };
    let runs: Vec<PointRun> = samples
        .par_iter()
        .map(|x| run_point(&layers, x, &schedule, NormKind::Inf, None))
        .collect();
    if let Some(b) = runs.iter().filter_map(|r| r.blow_up).min() {
        return Err(Error::Numerical {
            prefix: format!("depth {b}"),
            reason: "network values blew up".into(),
        });
    }
    let last = schedule.len() - 1;
    let u: Vec<&Vec<f64>> = runs.iter().map(|r| &r.snapshots[last]).collect();
    let v: Vec<&Vec<f64>> = runs.iter().map(|r| &r.snapshots[0]).collect();
    Ok(lp_distance(&u, &v, p))
}

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relu_limit::lab::ExperimentOptions;
use relu_limit::products::{product_norm_bound, series_tail_bound};
use relu_limit::{
    affine_piece, check_nested, check_product_conditions, contradiction, enumerate_regions, forward, generate_sequence,
    grid_census, necessary_condition_audit, output_map, pointwise_experiment, product_limit, representation_check,
    series_limit, tail_bound, zaslavsky_bound, ActivationPattern, DecayModel, Error, Grid, MaskRule, Matrix, Network,
    SequenceSpec, Status, DEFAULT_SCHEDULE,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::output::{cell, write_csv, write_json};
use crate::{exit, ConvergeArgs, EvalArgs, GenArgs, Global, ProductsArgs, RegionsArgs};

/// Maximum forward/affine discrepancy tolerated by `eval`.
const REPRESENTATION_TOL: f64 = 1e-10;

fn bad(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidArgument(msg.into()).into()
}

/// Reads a JSON input; unreadable or malformed files are argument errors.
pub fn read_input<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
}

pub fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("bad coordinate {t:?} in point {s:?}")))
        })
        .collect()
}

fn status_word(s: Status) -> &'static str {
    match s {
        Status::Converged => "converged",
        Status::Diverged => "diverged",
        Status::Undecided => "undecided",
    }
}

pub fn gen(g: &Global, a: &GenArgs) -> Result<u8> {
    let spec: SequenceSpec = read_input(&a.spec)?;
    let net = generate_sequence(&spec, a.depth)?;
    let path = g.out_dir().join(&a.name);
    write_json(&path, &net)?;
    println!(
        "wrote {} ({} layers, d = {}, m = {})",
        path.display(),
        net.depth(),
        net.input_dim(),
        net.width()
    );
    Ok(exit::OK)
}

#[derive(Serialize)]
struct EvalRecord {
    x: Vec<f64>,
    y: Vec<f64>,
    output: Option<Vec<f64>>,
    pattern: ActivationPattern,
    min_margin: f64,
    #[serde(rename = "A")]
    a: Matrix,
    c: Vec<f64>,
    discrepancy: f64,
}

#[derive(Serialize)]
struct EvalReport {
    records: Vec<EvalRecord>,
    max_discrepancy: f64,
    tolerance: f64,
}

pub fn eval(g: &Global, a: &EvalArgs) -> Result<u8> {
    let net: Network = read_input(&a.network)?;
    let mut points = a.points.iter().map(|p| parse_point(p)).collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    points.extend((0..a.samples).map(|_| (0..net.input_dim()).map(|_| rng.gen::<f64>()).collect::<Vec<f64>>()));
    if points.is_empty() {
        return Err(bad("give at least one --point or --samples N"));
    }
    let records = points
        .iter()
        .map(|x| {
            let f = forward(&net, x)?;
            let piece = affine_piece(&net, &f.pattern)?;
            let discrepancy = piece
                .evaluate(x)
                .iter()
                .zip(&f.y)
                .fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
            Ok(EvalRecord {
                output: net.output_layer().map(|_| output_map(&net, &f.y)).transpose()?,
                x: x.clone(),
                y: f.y,
                pattern: f.pattern,
                min_margin: f.min_margin,
                a: piece.a,
                c: piece.c,
                discrepancy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let in_cube: Vec<Vec<f64>> = points
        .iter()
        .filter(|x| x.iter().all(|v| (0.0..=1.0).contains(v)))
        .cloned()
        .collect();
    let mut max_discrepancy = records.iter().fold(0.0f64, |m, r| m.max(r.discrepancy));
    if !in_cube.is_empty() {
        max_discrepancy = max_discrepancy.max(representation_check(&net, &in_cube)?);
    }
    let report = EvalReport {
        records,
        max_discrepancy,
        tolerance: REPRESENTATION_TOL,
    };
    write_json(&g.out_dir().join("eval.json"), &report)?;
    println!(
        "evaluated {} points, max affine-piece discrepancy {max_discrepancy:e}",
        points.len()
    );
    if max_discrepancy > REPRESENTATION_TOL {
        eprintln!("representation check failed: {max_discrepancy:e} > {REPRESENTATION_TOL:e}");
        return Ok(exit::PROPERTY_FAILURE);
    }
    Ok(exit::OK)
}

#[derive(Serialize)]
struct CensusSummary {
    resolution: usize,
    matched: bool,
    missing_from_census: Vec<String>,
    missing_from_enumeration: Vec<String>,
}

#[derive(Serialize)]
struct RegionsReport<'a> {
    depth: usize,
    count: usize,
    /// One-layer bound for the first layer's arrangement.
    zaslavsky_bound: u128,
    nested: Option<bool>,
    census: Option<CensusSummary>,
    cells: &'a [relu_limit::RegionCell],
}

pub fn regions(g: &Global, a: &RegionsArgs) -> Result<u8> {
    let net: Network = read_input(&a.network)?;
    let depth = a.depth.unwrap_or(net.depth());
    let cells = enumerate_regions(&net, depth)?;
    let bound = zaslavsky_bound(net.width() as u32, net.input_dim() as u32);
    let nested = if depth >= 2 {
        Some(check_nested(&net.truncated(depth)?)?)
    } else {
        None
    };
    let census = match a.census {
        Some(r) => {
            let found = grid_census(&net.truncated(depth)?, r)?;
            let enumerated: BTreeSet<ActivationPattern> = cells.iter().map(|c| c.pattern.clone()).collect();
            Some(CensusSummary {
                resolution: r,
                matched: found == enumerated,
                missing_from_census: enumerated.difference(&found).map(|p| p.to_string()).collect(),
                missing_from_enumeration: found.difference(&enumerated).map(|p| p.to_string()).collect(),
            })
        }
        None => None,
    };
    let report = RegionsReport {
        depth,
        count: cells.len(),
        zaslavsky_bound: bound,
        nested,
        census,
        cells: &cells,
    };
    write_json(&g.out_dir().join("regions.json"), &report)?;
    println!("cells: {}, zaslavsky bound: {bound}", cells.len());
    if depth == 1 && cells.len() as u128 > bound {
        eprintln!("theory violation: one-layer cell count exceeds the arrangement bound");
        return Ok(exit::THEORY_VIOLATION);
    }
    if nested == Some(false) {
        eprintln!("theory violation: activation domains are not nested across depths");
        return Ok(exit::THEORY_VIOLATION);
    }
    if let Some(c) = &report.census {
        if !c.matched {
            eprintln!(
                "census mismatch: {} cells unseen by the lattice, {} lattice patterns not enumerated",
                c.missing_from_census.len(),
                c.missing_from_enumeration.len()
            );
            return Ok(exit::PROPERTY_FAILURE);
        }
    }
    Ok(exit::OK)
}

/// `identity`, `zero-after:K`, `random:P` (seeded by `--seed`), or
/// `input:X` for the mask sequence realized by input `X`.
pub fn parse_masks(s: &str, spec: &SequenceSpec, seed: u64, n_max: usize) -> Result<MaskRule> {
    let (head, arg) = s.split_once(':').unwrap_or((s, ""));
    match head {
        "identity" => Ok(MaskRule::Identity),
        "zero-after" => {
            let k = arg
                .parse()
                .map_err(|_| bad(format!("zero-after needs an integer, got {arg:?}")))?;
            Ok(MaskRule::ZeroAfter { k })
        }
        "random" => {
            let p_active = arg
                .parse()
                .map_err(|_| bad(format!("random needs a probability, got {arg:?}")))?;
            Ok(MaskRule::Random { seed, p_active })
        }
        "input" => {
            let x = parse_point(arg)?;
            let depth = spec.max_depth().map_or(n_max, |d| d.min(n_max));
            let pattern = forward(&generate_sequence(spec, depth)?, &x)?.pattern;
            Ok(MaskRule::Explicit {
                masks: pattern.layers().to_vec(),
            })
        }
        _ => Err(bad(format!("unknown mask rule {s:?}"))),
    }
}

const TRACE_HEADER: [&str; 4] = ["n", "diff_norm", "value_norm", "tail_bound"];

fn summable(model: Option<DecayModel>) -> Option<DecayModel> {
    model.filter(|m| m.summable())
}

pub fn products(g: &Global, a: &ProductsArgs) -> Result<u8> {
    let spec: SequenceSpec = read_input(&a.spec)?;
    let masks = parse_masks(&a.masks, &spec, g.seed, a.n_max)?;
    let product = product_limit(&spec, &masks, g.norm, g.tol, a.n_max)?;
    let series = series_limit(&spec, &masks, g.norm, g.tol, a.n_max)?;
    let pmodel = summable(spec.perturbation_model(g.norm));
    let bmodel = summable(spec.bias_model(g.norm));

    let st = &product.state;
    let rows = (0..st.diffs.len()).map(|k| {
        let n = st.start + k;
        let bound = pmodel.and_then(|m| tail_bound(&st.norm_history, n, m).ok());
        vec![
            n.to_string(),
            cell(Some(st.diffs[k])),
            cell(Some(st.value_norms[k])),
            cell(bound),
        ]
    });
    write_csv(&g.out_dir().join("products.csv"), &TRACE_HEADER, rows)?;

    let ss = &series.state;
    let c_bound = pmodel.map(|m| product_norm_bound(&st.norm_history, m));
    let rows = (0..ss.diffs.len()).map(|k| {
        let n = k + 1;
        let bound = match (bmodel, c_bound) {
            (Some(b), Some(c)) => series_tail_bound(&ss.bias_norms, n, b, c).ok(),
            _ => None,
        };
        vec![
            n.to_string(),
            cell(Some(ss.diffs[k])),
            cell(Some(ss.value_norms[k])),
            cell(bound),
        ]
    });
    write_csv(&g.out_dir().join("series.csv"), &TRACE_HEADER, rows)?;

    let conditions = check_product_conditions(&spec, g.norm, a.n_max.max(10))?;
    #[derive(Serialize)]
    struct Report<'a> {
        masks: &'a MaskRule,
        product: &'a relu_limit::ProductLimit,
        series: &'a relu_limit::SeriesLimit,
        conditions: relu_limit::ConditionReport,
    }
    write_json(
        &g.out_dir().join("products.json"),
        &Report {
            masks: &masks,
            product: &product,
            series: &series,
            conditions,
        },
    )?;
    println!(
        "product: {} at depth {}{}",
        status_word(product.status),
        st.depth,
        match product.bound_certified {
            Some(true) => " (tail bound certified)",
            Some(false) => " (tail bound above tol)",
            None => "",
        }
    );
    println!("series: {} at depth {}", status_word(series.status), ss.depth);
    Ok(exit::OK)
}

fn parse_grid(s: &str, dim: usize) -> Result<Grid> {
    let (head, arg) = s.split_once(':').unwrap_or((s, ""));
    let count = || {
        arg.parse::<usize>()
            .map_err(|_| bad(format!("grid {head} needs a count, got {arg:?}")))
    };
    Ok(match head {
        "default" => Grid::default_for(dim)?,
        "lattice" => Grid::lattice(dim, count()?)?,
        "halton" => Grid::halton(dim, count()?)?,
        _ => return Err(bad(format!("unknown grid {s:?}"))),
    })
}

pub fn converge(g: &Global, a: &ConvergeArgs) -> Result<u8> {
    let spec: SequenceSpec = read_input(&a.spec)?;
    let schedule = g.depths.clone().unwrap_or_else(|| DEFAULT_SCHEDULE.to_vec());
    let grid = parse_grid(&a.grid, spec.input_dim())?;
    let options = ExperimentOptions {
        tol: g.tol,
        norm: g.norm,
        lp_norm: a.lp,
        mc_samples: a.mc_samples,
        mc_seed: g.seed,
        probe: a.probe.as_deref().map(parse_point).transpose()?,
    };
    let report = pointwise_experiment(&spec, &grid, &schedule, &options)?;
    let top = *schedule.last().expect("validated schedule");
    let audit = necessary_condition_audit(&spec, a.horizon.unwrap_or(top).max(10), g.tol, g.norm)?;
    let contradicts = contradiction(&report, &audit);

    let probe_width = report
        .records
        .first()
        .and_then(|r| r.probe_value.as_ref())
        .map_or(0, Vec::len);
    let mut header: Vec<String> = [
        "n",
        "delta_sup",
        "lp_estimate",
        "w_dist_identity",
        "b_norm",
        "tail_bound",
    ]
    .map(String::from)
    .to_vec();
    header.extend((0..probe_width).map(|j| format!("probe_y{j}")));
    let rows = report.records.iter().map(|r| {
        let mut row = vec![
            r.n.to_string(),
            cell(r.delta_sup),
            cell(r.lp_estimate),
            cell(Some(r.w_dist_identity)),
            cell(Some(r.b_norm)),
            cell(r.tail_bound),
        ];
        if let Some(p) = &r.probe_value {
            row.extend(p.iter().map(|v| cell(Some(*v))));
        }
        row
    });
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&g.out_dir().join("trace.csv"), &header_refs, rows)?;

    #[derive(Serialize)]
    struct Report<'a> {
        report: &'a relu_limit::ConvergenceReport,
        audit: &'a relu_limit::AuditReport,
        contradiction: bool,
    }
    write_json(
        &g.out_dir().join("report.json"),
        &Report {
            report: &report,
            audit: &audit,
            contradiction: contradicts,
        },
    )?;

    println!("verdict: {}", status_word(report.verdict));
    let violated = audit.violated();
    if violated.is_empty() {
        println!("audit: PASS");
    } else {
        println!("audit: FAIL ({})", violated.join(", "));
    }
    if let Some(v) = report.records.last().and_then(|r| r.probe_value.as_ref()) {
        println!("probe value at depth {}: {:?}", report.records.last().unwrap().n, v);
    }
    if contradicts {
        eprintln!("theory violation: converged verdict with a failed audit under the theorem's hypotheses");
        return Ok(exit::THEORY_VIOLATION);
    }
    Ok(exit::OK)
}

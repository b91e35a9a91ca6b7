//! Experiment drivers: solve a CSV dataset, run benchmark suites, sweep
//! noise levels, and ablate components.

use rayon::prelude::*;
use symreg_core::bench::{
    add_noise, r_squared, registry, sample_dataset, symbolically_equivalent, Benchmark,
};
use symreg_core::expr::{build_tree, Expr, Traversal, Vocabulary};
use symreg_core::rng::{derive_seed, fnv1a, substream};
use symreg_core::selfsearch::{render, run_search, token_arities, SearchResult};

use crate::config::Config;
use crate::error::CliError;
use crate::report::{Manifest, Report, Row};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug)]
pub struct BenchOpts {
    pub suite: String,
    pub runs: usize,
    pub seed: u64,
    pub levels: Vec<f64>,
    pub disabled: Vec<String>,
    pub timing: bool,
}

/// Applies `--disable` flags: `entropy` drops the loss entropy term,
/// `snrmse` sets the missing-variable penalty weight to zero, and
/// `constraints` lets every structural mask pass through (the length
/// feasibility bound stays — it guarantees termination).
pub fn apply_disable(cfg: &Config, disabled: &[String]) -> Result<Config, CliError> {
    let mut out = cfg.clone();
    for d in disabled {
        match d.as_str() {
            "entropy" => out.model.entropy_term_enabled = false,
            "snrmse" => out.search.lambda = 0.0,
            "constraints" => {
                out.search.constraints.forbid_inverse_chain = false;
                out.search.constraints.forbid_nested_trig = false;
                out.search.constraints.forbid_negative_into_log_sqrt = false;
            }
            "feasibility" => {
                return Err(CliError::Usage(
                    "the feasibility mask cannot be disabled (termination guarantee)".into(),
                ))
            }
            other => {
                return Err(CliError::Usage(format!(
                    "unknown --disable flag {other:?}; expected entropy, constraints, snrmse"
                )))
            }
        }
    }
    Ok(out)
}

fn job_seed(root: u64, bench: &str, variant: &str, level: f64, run: usize) -> u64 {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(bench.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(variant.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(&level.to_bits().to_le_bytes());
    bytes.extend_from_slice(&(run as u64).to_le_bytes());
    derive_seed(root, "job", fnv1a(&bytes))
}

fn best_expr(result: &SearchResult, vocab: &Vocabulary) -> Option<Expr> {
    if result.best_ids.is_empty() {
        return None;
    }
    let mut t = Traversal::new(result.best_ids.len());
    for &id in &result.best_ids {
        t.push(vocab.token(id).ok()?).ok()?;
    }
    let tree = build_tree(&t).ok()?;
    Some(tree.bind(&result.best_constants))
}

/// One (benchmark, variant, level, run) cell.
fn run_one_seeded(
    bench: &Benchmark,
    cfg: &Config,
    variant: &str,
    level: f64,
    seed: u64,
    run: usize,
    timing: bool,
) -> Result<Row, CliError> {
    let vocab = bench
        .vocabulary()
        .map_err(|e| CliError::Data(e.to_string()))?;
    let target = bench.target().map_err(|e| CliError::Data(e.to_string()))?;
    let mut data_rng = substream(seed, "dataset", 0);
    let data = sample_dataset(bench, &mut data_rng).map_err(|e| CliError::Data(e.to_string()))?;
    let mut noise_rng = substream(seed, "noise", 0);
    let y = add_noise(&data.y, level, &mut noise_rng);

    let mut run_cfg = cfg.search.clone();
    run_cfg.seed = seed;
    let model_cfg = cfg.model_config(token_arities(&vocab), run_cfg.max_length);

    let start = std::time::Instant::now();
    let result = run_search(&data.x, &y, &vocab, &run_cfg, model_cfg);
    let wall = timing.then(|| start.elapsed().as_secs_f64());

    let best = best_expr(&result, &vocab);
    let (recovered, r2, infix) = match best {
        Some(ref e) => {
            let mut eq_rng = substream(seed, "equiv", 0);
            let recovered = symbolically_equivalent(
                e,
                &target,
                bench.sampling.low,
                bench.sampling.high,
                &mut eq_rng,
            );
            let r2 = symreg_core::expr::evaluate(e, &data.x, &[])
                .ok()
                .flatten()
                .and_then(|y_hat| r_squared(&data.y, &y_hat));
            (recovered, r2, render(&result.best_ids, &result.best_constants, &vocab))
        }
        None => (false, None, None),
    };

    Ok(Row {
        benchmark: bench.name.clone(),
        variant: variant.to_string(),
        noise_level: level,
        run,
        recovered,
        best_infix: infix,
        reward: result.best_metrics.reward,
        r_squared: r2,
        episodes: result.episodes,
        wall_seconds: wall,
    })
}

/// Shared driver behind `bench`, `noise`, and `ablate`: a grid of
/// (variant, level, benchmark, run) searches, parallel across cells, with
/// deterministic per-cell seeds and a stable row order.
pub fn bench_report(cfg: &Config, opts: &BenchOpts, command: &str) -> Result<Report, CliError> {
    for &l in &opts.levels {
        if !(0.0..=0.1).contains(&l) {
            return Err(CliError::Usage(format!("noise level {l} outside [0, 0.1]")));
        }
    }
    let reg = registry();
    let suite = reg
        .suite(&opts.suite)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let unsupported: Vec<&str> =
        suite.iter().filter(|b| !b.supported()).map(|b| b.name.as_str()).collect();
    if !unsupported.is_empty() {
        eprintln!("skipping unsupported benchmarks: {}", unsupported.join(", "));
    }
    let suite: Vec<&Benchmark> = suite.into_iter().filter(|b| b.supported()).collect();

    let variants: Vec<(String, Config)> = if opts.disabled.is_empty() {
        vec![("baseline".into(), cfg.clone())]
    } else {
        vec![
            ("baseline".into(), cfg.clone()),
            ("ablated".into(), apply_disable(cfg, &opts.disabled)?),
        ]
    };

    // (variant index, level, bench index, run)
    let mut jobs = Vec::new();
    for (vi, _) in variants.iter().enumerate() {
        for &level in &opts.levels {
            for (bi, _) in suite.iter().enumerate() {
                for run in 0..opts.runs {
                    jobs.push((vi, level, bi, run));
                }
            }
        }
    }

    let mut rows = jobs
        .par_iter()
        .map(|&(vi, level, bi, run)| {
            let (variant, vcfg) = &variants[vi];
            let bench = suite[bi];
            let seed = job_seed(opts.seed, &bench.name, variant, level, run);
            run_one_seeded(bench, vcfg, variant, level, seed, run, opts.timing)
        })
        .collect::<Result<Vec<Row>, CliError>>()?;

    let order = |r: &Row| {
        (
            r.variant.clone(),
            r.noise_level.to_bits(),
            suite.iter().position(|b| b.name == r.benchmark).unwrap_or(usize::MAX),
            r.run,
        )
    };
    rows.sort_by_key(order);

    let aggregates = Report::aggregate(&rows);
    Ok(Report {
        manifest: Manifest {
            command: command.to_string(),
            version: VERSION.to_string(),
            seed: opts.seed,
            runs: opts.runs,
            suite: Some(opts.suite.clone()),
            levels: opts.levels.clone(),
            disabled: opts.disabled.clone(),
            timing: opts.timing,
            generated_at: opts.timing.then(now_stamp),
            config: cfg.clone(),
        },
        rows,
        aggregates,
    })
}

fn now_stamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

/// Parses `x1,...,xm,y` CSV into columns; diagnostics name the row and
/// column of the first defect.
pub fn read_csv(path: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {path}: {e}")))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{path}: empty file")))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let m = cols.len().saturating_sub(1);
    if m == 0 || cols.last() != Some(&"y") {
        return Err(CliError::Data(format!(
            "{path}: header must be x1,...,xm,y (got {header:?})"
        )));
    }
    for (j, c) in cols[..m].iter().enumerate() {
        let want = format!("x{}", j + 1);
        if *c != want {
            return Err(CliError::Data(format!(
                "{path}: header column {} should be {want}, got {c:?}",
                j + 1
            )));
        }
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (ln, line) in lines {
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != m + 1 {
            return Err(CliError::Data(format!(
                "{path}: row {} has {} fields, expected {}",
                ln + 1,
                parts.len(),
                m + 1
            )));
        }
        let mut row = Vec::with_capacity(m);
        for (j, p) in parts.iter().enumerate() {
            let v: f64 = p.parse().map_err(|_| {
                CliError::Data(format!(
                    "{path}: row {}, column {}: {p:?} is not a number",
                    ln + 1,
                    j + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "{path}: row {}, column {}: non-finite value",
                    ln + 1,
                    j + 1
                )));
            }
            row.push(v);
        }
        y.push(row.pop().expect("m+1 fields"));
        x.push(row);
    }
    if x.len() < 2 {
        return Err(CliError::Data(format!("{path}: need at least 2 data rows, got {}", x.len())));
    }
    Ok((x, y))
}

pub struct SolveOutcome {
    pub report: Report,
    pub trace: Vec<symreg_core::selfsearch::TracePoint>,
    pub solved: bool,
    pub best_reward: f64,
}

/// Runs the search on an ingested CSV dataset.
pub fn solve(data_path: &str, cfg: &Config, seed: u64, timing: bool) -> Result<SolveOutcome, CliError> {
    let (x, y) = read_csv(data_path)?;
    let m = x[0].len();
    let vocab = Vocabulary::standard(m, true);
    let mut run_cfg = cfg.search.clone();
    run_cfg.seed = seed;
    let model_cfg = cfg.model_config(token_arities(&vocab), run_cfg.max_length);

    let start = std::time::Instant::now();
    let result = run_search(&x, &y, &vocab, &run_cfg, model_cfg);
    let wall = timing.then(|| start.elapsed().as_secs_f64());

    let infix = render(&result.best_ids, &result.best_constants, &vocab);
    let best = best_expr(&result, &vocab);
    let r2 = best.as_ref().and_then(|e| {
        symreg_core::expr::evaluate(e, &x, &[])
            .ok()
            .flatten()
            .and_then(|y_hat| r_squared(&y, &y_hat))
    });

    let row = Row {
        benchmark: data_path.to_string(),
        variant: "baseline".into(),
        noise_level: 0.0,
        run: 0,
        recovered: result.solved,
        best_infix: infix,
        reward: result.best_metrics.reward,
        r_squared: r2,
        episodes: result.episodes,
        wall_seconds: wall,
    };
    let aggregates = Report::aggregate(std::slice::from_ref(&row));
    let report = Report {
        manifest: Manifest {
            command: "solve".into(),
            version: VERSION.to_string(),
            seed,
            runs: 1,
            suite: None,
            levels: vec![0.0],
            disabled: vec![],
            timing,
            generated_at: timing.then(now_stamp),
            config: cfg.clone(),
        },
        rows: vec![row],
        aggregates,
    };
    Ok(SolveOutcome {
        report,
        trace: result.trace.clone(),
        solved: result.solved,
        best_reward: result.best_metrics.reward,
    })
}

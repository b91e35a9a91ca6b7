//! Report structures and emission. A report embeds the exact configuration
//! that produced it; wall-clock fields are `null` unless timing was
//! requested, so fixed-seed reports are byte-identical across runs.

use serde::{Deserialize, Serialize};
use symreg_core::selfsearch::TracePoint;

use crate::config::Config;
use crate::error::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub runs: usize,
    pub suite: Option<String>,
    pub levels: Vec<f64>,
    pub disabled: Vec<String>,
    pub timing: bool,
    /// RFC 3339; only recorded when timing is on (it breaks reproducible
    /// bytes otherwise).
    pub generated_at: Option<String>,
    pub config: Config,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Row {
    pub benchmark: String,
    pub variant: String,
    pub noise_level: f64,
    pub run: usize,
    pub recovered: bool,
    pub best_infix: Option<String>,
    pub reward: f64,
    pub r_squared: Option<f64>,
    pub episodes: usize,
    pub wall_seconds: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Aggregate {
    pub variant: String,
    pub noise_level: f64,
    pub runs: usize,
    pub recovery_rate: f64,
    pub mean_r_squared: Option<f64>,
    pub mean_wall_seconds: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub manifest: Manifest,
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
}

impl Report {
    /// Aggregates recomputed from the rows, grouped by (variant, level).
    pub fn aggregate(rows: &[Row]) -> Vec<Aggregate> {
        let mut keys: Vec<(String, f64)> = Vec::new();
        for r in rows {
            let k = (r.variant.clone(), r.noise_level);
            if !keys.iter().any(|(v, l)| *v == k.0 && *l == k.1) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(variant, level)| {
                let group: Vec<&Row> = rows
                    .iter()
                    .filter(|r| r.variant == variant && r.noise_level == level)
                    .collect();
                let n = group.len();
                let recovered = group.iter().filter(|r| r.recovered).count();
                let r2s: Vec<f64> = group.iter().filter_map(|r| r.r_squared).collect();
                let times: Vec<f64> = group.iter().filter_map(|r| r.wall_seconds).collect();
                Aggregate {
                    variant,
                    noise_level: level,
                    runs: n,
                    recovery_rate: recovered as f64 / n as f64,
                    mean_r_squared: mean(&r2s),
                    mean_wall_seconds: mean(&times),
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &str) -> Result<(), CliError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| CliError::Data(format!("cannot write {path}: {e}")))
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Reward-trace CSV: `episode_index,reward,running_best,wall_seconds`.
pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("episode_index,reward,running_best,wall_seconds\n");
    for t in trace {
        out.push_str(&format!(
            "{},{},{},{}\n",
            t.episode_index, t.reward, t.running_best, t.wall_seconds
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(bench: &str, rec: bool, r2: Option<f64>) -> Row {
        Row {
            benchmark: bench.into(),
            variant: "baseline".into(),
            noise_level: 0.0,
            run: 0,
            recovered: rec,
            best_infix: None,
            reward: 0.5,
            r_squared: r2,
            episodes: 1,
            wall_seconds: None,
        }
    }

    #[test]
    fn aggregates_recompute_from_rows() {
        let rows =
            vec![row("a", true, Some(1.0)), row("b", false, Some(0.5)), row("c", true, None)];
        let agg = Report::aggregate(&rows);
        assert_eq!(agg.len(), 1);
        assert!((agg[0].recovery_rate - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(agg[0].mean_r_squared, Some(0.75));
        assert_eq!(agg[0].mean_wall_seconds, None);
        assert_eq!(agg[0].runs, 3);
    }

    #[test]
    fn trace_csv_columns() {
        let t = vec![TracePoint {
            episode_index: 0,
            reward: 0.25,
            running_best: 0.25,
            wall_seconds: 0.5,
        }];
        let s = trace_csv(&t);
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("episode_index,reward,running_best,wall_seconds"));
        assert_eq!(lines.next(), Some("0,0.25,0.25,0.5"));
    }
}

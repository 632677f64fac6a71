//! Mean / standard-error aggregation over raw sweep rows.

/// Mean and standard error (`sigma / sqrt(n)`, population sigma) of a
/// sample. The standard error is absent for fewer than two values.
pub fn mean_and_se(values: &[f64]) -> (f64, Option<f64>) {
    if values.is_empty() {
        return (0.0, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, Some(variance.sqrt() / n.sqrt()))
}

/// One parsed row of a raw MCTS sweep CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct RawMctsRow {
    pub dataset: String,
    pub n_pi: u32,
    pub seed: u32,
    pub ret: f64,
    pub steps: u32,
    pub goal: Option<String>,
}

/// Aggregated cell: mean and standard error over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct AggMctsRow {
    pub dataset: String,
    pub n_pi: u32,
    pub mean_return: f64,
    pub se_return: Option<f64>,
    pub seeds: u32,
}

pub const MCTS_RAW_HEADER: &str = "dataset,n_pi,seed,return,steps,goal";
pub const MCTS_AGG_HEADER: &str = "dataset,n_pi,mean_return,se_return,seeds";

/// Group raw rows by (dataset, n_pi) in first-appearance order and compute
/// per-cell mean and standard error.
pub fn aggregate_mcts(rows: &[RawMctsRow]) -> Vec<AggMctsRow> {
    let mut order: Vec<(String, u32)> = Vec::new();
    for row in rows {
        let key = (row.dataset.clone(), row.n_pi);
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(dataset, n_pi)| {
            let returns: Vec<f64> = rows
                .iter()
                .filter(|r| r.dataset == dataset && r.n_pi == n_pi)
                .map(|r| r.ret)
                .collect();
            let (mean, se) = mean_and_se(&returns);
            AggMctsRow {
                dataset,
                n_pi,
                mean_return: mean,
                se_return: se,
                seeds: returns.len() as u32,
            }
        })
        .collect()
}

pub fn format_mcts_raw_csv(rows: &[RawMctsRow]) -> String {
    let mut out = String::from(MCTS_RAW_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.dataset,
            r.n_pi,
            r.seed,
            r.ret,
            r.steps,
            r.goal.as_deref().unwrap_or("")
        ));
    }
    out
}

pub fn format_mcts_agg_csv(rows: &[AggMctsRow]) -> String {
    let mut out = String::from(MCTS_AGG_HEADER);
    out.push('\n');
    for r in rows {
        let se = r.se_return.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.dataset, r.n_pi, r.mean_return, se, r.seeds
        ));
    }
    out
}

/// Parse a raw MCTS sweep CSV produced by [`format_mcts_raw_csv`].
pub fn parse_mcts_raw_csv(text: &str) -> Result<Vec<RawMctsRow>, String> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            if line != MCTS_RAW_HEADER {
                return Err(format!("unexpected header '{line}'"));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(format!("line {}: expected 6 fields", i + 1));
        }
        let bad = |what: &str| format!("line {}: bad {what}", i + 1);
        rows.push(RawMctsRow {
            dataset: f[0].to_string(),
            n_pi: f[1].parse().map_err(|_| bad("n_pi"))?,
            seed: f[2].parse().map_err(|_| bad("seed"))?,
            ret: f[3].parse().map_err(|_| bad("return"))?,
            steps: f[4].parse().map_err(|_| bad("steps"))?,
            goal: if f[5].is_empty() {
                None
            } else {
                Some(f[5].to_string())
            },
        });
    }
    Ok(rows)
}

/// One parsed row of a PT-DQN trace CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub seed: u32,
    /// Permanent fraction of the run; -1 marks the random-policy baseline.
    pub permanent_fraction: f64,
    pub reward_smoothed: f64,
}

pub const TRACE_HEADER: &str = "step,seed,permanent_fraction,reward_smoothed";

pub fn format_trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.step, r.seed, r.permanent_fraction, r.reward_smoothed
        ));
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>, String> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            if line != TRACE_HEADER {
                return Err(format!("unexpected header '{line}'"));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(format!("line {}: expected 4 fields", i + 1));
        }
        let bad = |what: &str| format!("line {}: bad {what}", i + 1);
        rows.push(TraceRow {
            step: f[0].parse().map_err(|_| bad("step"))?,
            seed: f[1].parse().map_err(|_| bad("seed"))?,
            permanent_fraction: f[2].parse().map_err(|_| bad("fraction"))?,
            reward_smoothed: f[3].parse().map_err(|_| bad("reward"))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_values_have_zero_se() {
        let (mean, se) = mean_and_se(&[0.65, 0.65]);
        assert_eq!(mean, 0.65);
        assert_eq!(se, Some(0.0));
    }

    #[test]
    fn coin_flip_se_matches_hand_formula() {
        let (mean, se) = mean_and_se(&[0.0, 1.0]);
        assert_eq!(mean, 0.5);
        let se = se.unwrap();
        assert!((se - 0.354).abs() < 0.001, "se = {se}");
    }

    #[test]
    fn single_value_reports_no_se() {
        let (mean, se) = mean_and_se(&[0.4]);
        assert_eq!(mean, 0.4);
        assert_eq!(se, None);
    }

    #[test]
    fn aggregation_round_trips_through_csv() {
        let rows = vec![
            RawMctsRow {
                dataset: "oa".into(),
                n_pi: 250,
                seed: 0,
                ret: 0.65,
                steps: 15,
                goal: Some("pink".into()),
            },
            RawMctsRow {
                dataset: "oa".into(),
                n_pi: 250,
                seed: 1,
                ret: 0.49,
                steps: 11,
                goal: Some("blue".into()),
            },
            RawMctsRow {
                dataset: "oa".into(),
                n_pi: 0,
                seed: 0,
                ret: -1.0,
                steps: 100,
                goal: None,
            },
        ];
        let text = format_mcts_raw_csv(&rows);
        let parsed = parse_mcts_raw_csv(&text).unwrap();
        assert_eq!(parsed, rows);

        let agg = aggregate_mcts(&parsed);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].dataset, "oa");
        assert_eq!(agg[0].n_pi, 250);
        assert_eq!(agg[0].mean_return, (0.65 + 0.49) / 2.0);
        assert_eq!(agg[1].seeds, 1);
        assert_eq!(agg[1].se_return, None);
    }

    #[test]
    fn trace_csv_round_trips() {
        let rows = vec![
            TraceRow {
                step: 0,
                seed: 0,
                permanent_fraction: 0.1,
                reward_smoothed: 0.0,
            },
            TraceRow {
                step: 10,
                seed: 0,
                permanent_fraction: -1.0,
                reward_smoothed: 0.025,
            },
        ];
        let text = format_trace_csv(&rows);
        assert_eq!(parse_trace_csv(&text).unwrap(), rows);
    }
}

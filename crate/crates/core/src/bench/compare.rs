//! Side-by-side comparison of optimizers on held-out tasks.
//!
//! Every column sees the same held-out task and the same evaluation streams,
//! so per-task differences come from the optimizers alone.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::bench::config::{Method, RunConfig};
use crate::bench::eval::EvalReport;
use crate::bench::run::{eval_key, held_out_task, load_method_policy, Evaluator};
use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::world::TaskSpec;

/// A compared method. `adapt_steps` is `None` for the method's default
/// (the configured `eval.adapt_steps` for `meta`, 0 for `rl`).
///
/// Written `meta`, `meta:0`, `rl`, `rl:1`, `mppi-baseline` or `random-update`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Column {
    pub method: Method,
    pub adapt_steps: Option<usize>,
}

impl Column {
    pub fn new(method: Method) -> Self {
        Column {
            method,
            adapt_steps: None,
        }
    }

    pub fn resolved_adapt_steps(&self, cfg: &RunConfig) -> usize {
        self.adapt_steps.unwrap_or(match self.method {
            Method::Meta => cfg.eval.adapt_steps,
            _ => 0,
        })
    }

    /// Name used in CSV headers and file names.
    pub fn label(&self) -> String {
        match self.adapt_steps {
            None => self.method.name().to_string(),
            Some(n) => format!("{}-adapt{n}", self.method.name()),
        }
    }

    /// The default comparison: adapted and unadapted meta, transferred RL and
    /// the two non-learned methods.
    pub fn defaults() -> Vec<Column> {
        vec![
            Column::new(Method::Meta),
            Column {
                method: Method::Meta,
                adapt_steps: Some(0),
            },
            Column::new(Method::Rl),
            Column::new(Method::MppiBaseline),
            Column::new(Method::RandomUpdate),
        ]
    }
}

impl FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, steps) = match s.split_once(':') {
            Some((n, k)) => {
                let k = k
                    .parse()
                    .map_err(|_| Error::config(format!("bad adaptation step count in {s:?}")))?;
                (n, Some(k))
            }
            None => (s, None),
        };
        let method: Method = name.parse()?;
        if steps.is_some() && !method.is_learned() {
            return Err(Error::config(format!("{name} does not adapt, drop the `:n` suffix")));
        }
        Ok(Column {
            method,
            adapt_steps: steps,
        })
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.adapt_steps {
            None => f.write_str(self.method.name()),
            Some(n) => write!(f, "{}:{n}", self.method.name()),
        }
    }
}

/// Parses a comma-separated column list.
pub fn parse_columns(s: &str) -> Result<Vec<Column>> {
    let cols = s
        .split(',')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Column>>>()?;
    if cols.is_empty() {
        return Err(Error::config("no methods selected"));
    }
    Ok(cols)
}

/// Trained parameters for the learned methods.
#[derive(Clone, Debug, Default)]
pub struct Checkpoints {
    pub meta: Option<PolicyParams>,
    pub rl: Option<PolicyParams>,
}

impl Checkpoints {
    /// Loads the checkpoints the selected columns need from `cfg.out_dir`.
    pub fn load_for(cfg: &RunConfig, columns: &[Column]) -> Result<Self> {
        let mut ck = Checkpoints::default();
        for c in columns {
            match c.method {
                Method::Meta if ck.meta.is_none() => ck.meta = Some(load_method_policy(cfg, Method::Meta)?),
                Method::Rl if ck.rl.is_none() => ck.rl = Some(load_method_policy(cfg, Method::Rl)?),
                _ => {}
            }
        }
        Ok(ck)
    }

    fn evaluator(&self, column: &Column, cfg: &RunConfig) -> Result<Evaluator<'_>> {
        let policy = match column.method {
            Method::Meta => self.meta.as_ref(),
            Method::Rl => self.rl.as_ref(),
            m => return Ok(Evaluator::fixed(m, cfg).expect("non-learned method")),
        };
        let policy = policy.ok_or_else(|| Error::Input(format!("no parameters supplied for {}", column.method)))?;
        Ok(Evaluator::Learned {
            policy,
            adapt_steps: column.resolved_adapt_steps(cfg),
        })
    }
}

/// Outcome of one task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Winner {
    Single(usize),
    /// Several columns share the lowest mean error exactly.
    Tie(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnSummary {
    pub label: String,
    pub mean_error: f64,
    pub median_error: f64,
    pub wins: usize,
    pub ties: usize,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub columns: Vec<Column>,
    pub tasks: Vec<TaskSpec>,
    /// `reports[task][column]`.
    pub reports: Vec<Vec<EvalReport>>,
}

impl Comparison {
    pub fn labels(&self) -> Vec<String> {
        self.columns.iter().map(Column::label).collect()
    }

    /// Mean tracking errors of column `c`, one per task.
    pub fn errors(&self, c: usize) -> Vec<f64> {
        self.reports.iter().map(|r| r[c].mean_error).collect()
    }

    pub fn winner(&self, task: usize) -> Winner {
        let errs: Vec<f64> = self.reports[task].iter().map(|r| r.mean_error).collect();
        let best = errs.iter().copied().fold(f64::INFINITY, f64::min);
        let at_best: Vec<usize> = (0..errs.len()).filter(|&c| errs[c] == best).collect();
        if at_best.len() == 1 {
            Winner::Single(at_best[0])
        } else {
            Winner::Tie(at_best)
        }
    }

    /// Number of tasks where column `a` has strictly lower mean error than `b`.
    pub fn wins_over(&self, a: usize, b: usize) -> usize {
        self.reports.iter().filter(|r| r[a].mean_error < r[b].mean_error).count()
    }

    pub fn summary(&self) -> Vec<ColumnSummary> {
        let mut wins = vec![0; self.columns.len()];
        let mut ties = vec![0; self.columns.len()];
        for t in 0..self.tasks.len() {
            match self.winner(t) {
                Winner::Single(c) => wins[c] += 1,
                Winner::Tie(cs) => cs.into_iter().for_each(|c| ties[c] += 1),
            }
        }
        self.columns
            .iter()
            .enumerate()
            .map(|(c, col)| {
                let errs = self.errors(c);
                ColumnSummary {
                    label: col.label(),
                    mean_error: mean(&errs),
                    median_error: median(&errs),
                    wins: wins[c],
                    ties: ties[c],
                }
            })
            .collect()
    }

    /// Per-task table: `task,kind,<one column per method>,winner`.
    pub fn table_csv(&self) -> String {
        let labels = self.labels();
        let mut out = format!("task,kind,{},winner\n", labels.join(","));
        for (t, spec) in self.tasks.iter().enumerate() {
            let _ = write!(out, "{t},{}", spec.path.kind().name());
            for r in &self.reports[t] {
                let _ = write!(out, ",{}", r.mean_error);
            }
            let winner = match self.winner(t) {
                Winner::Single(c) => labels[c].clone(),
                Winner::Tie(_) => "tie".to_string(),
            };
            let _ = writeln!(out, ",{winner}");
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,mean_error,median_error,wins,ties\n");
        for s in self.summary() {
            let _ = writeln!(out, "{},{},{},{},{}", s.label, s.mean_error, s.median_error, s.wins, s.ties);
        }
        out
    }
}

/// Arithmetic mean, summed in order.
pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Evaluates every column on held-out tasks `0..n_tasks`.
pub fn compare_methods(cfg: &RunConfig, columns: &[Column], checkpoints: &Checkpoints, n_tasks: usize) -> Result<Comparison> {
    if columns.is_empty() {
        return Err(Error::config("no methods selected"));
    }
    let evaluators = columns
        .iter()
        .map(|c| checkpoints.evaluator(c, cfg))
        .collect::<Result<Vec<_>>>()?;
    let per_task: Vec<Result<(TaskSpec, Vec<EvalReport>)>> = crate::map_indexed(n_tasks, |i| {
        let task = held_out_task(cfg, i)?;
        let key = eval_key(cfg, i);
        let reports = evaluators
            .iter()
            .map(|ev| ev.evaluate(&task, cfg, key))
            .collect::<Result<Vec<_>>>()?;
        Ok((task.spec, reports))
    });
    let mut tasks = Vec::with_capacity(n_tasks);
    let mut reports = Vec::with_capacity(n_tasks);
    for r in per_task {
        let (t, rs) = r?;
        tasks.push(t);
        reports.push(rs);
    }
    Ok(Comparison {
        columns: columns.to_vec(),
        tasks,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_syntax() {
        let cols = parse_columns("meta, meta:0,rl,mppi-baseline,random-update").unwrap();
        assert_eq!(cols, Column::defaults());
        assert_eq!(cols[1].label(), "meta-adapt0");
        assert_eq!(cols[1].to_string(), "meta:0");
        assert!(parse_columns("mppi-baseline:1").is_err());
        assert!(parse_columns("meta:x").is_err());
        assert!(parse_columns("").is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use metaopt::bench::checkpoint::save_checkpoint;
use metaopt::bench::compare::{compare_methods, parse_columns, Checkpoints, Column};
use metaopt::bench::config::{Method, RunConfig, DEFAULT_CONFIG};
use metaopt::bench::export::{
    errors_csv, errors_file_name, learning_curve_csv, meta_curve_csv, trajectory_csv, trajectory_file_name, write_file,
};
use metaopt::bench::eval::EvalReport;
use metaopt::bench::run::{
    checkpoint_path, eval_key, evaluate_held_out, held_out_task, load_method_policy, run_train_meta, run_train_rl,
    Evaluator,
};
use metaopt::meta::{adapt, MetaConfig};
use metaopt::{Error, Result, TaskSpec};

/// Learned optimizers for MPPI path following.
#[derive(Parser, Debug)]
#[command(name = "metaopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (`key = value` lines); defaults apply otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for checkpoints and CSV files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Inner adaptation steps before evaluating a learned optimizer.
    #[arg(long, global = true)]
    adapt_steps: Option<usize>,

    /// meta, rl, mppi-baseline or random-update.
    #[arg(long, global = true)]
    method: Option<Method>,

    /// Sample updates from the learned optimizer during evaluation instead of
    /// using its mean.
    #[arg(long, global = true)]
    stochastic_eval: bool,

    /// Extra `key=value` setting, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the update rule on a single task; writes rl.ckpt and learning_curve.csv.
    TrainRl,
    /// Meta-train the update rule; writes meta.ckpt and meta_curve.csv.
    TrainMeta,
    /// Adapt a trained update rule to one held-out task and save the result.
    Adapt {
        /// Held-out task index.
        #[arg(long, default_value_t = 0)]
        task: usize,
    },
    /// Evaluate one method on the held-out tasks.
    Eval,
    /// Evaluate several methods on the same held-out tasks.
    Compare {
        /// Comma-separated methods; `meta:0` means meta without adaptation.
        #[arg(long, default_value = "meta,meta:0,rl,mppi-baseline,random-update")]
        methods: String,
    },
    /// Evaluate the classic MPPI baseline on the held-out tasks.
    Baseline,
    /// Print every configuration key with its default value.
    Config,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Input(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())
            .map_err(|m| Error::Input(format!("--set {kv}: {m}")))?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(a) = cli.adapt_steps {
        cfg.eval.adapt_steps = a;
    }
    if let Some(m) = cli.method {
        cfg.method = m;
    }
    if cli.stochastic_eval {
        cfg.eval.stochastic = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Config = cli.command {
        print!("{DEFAULT_CONFIG}");
        return Ok(());
    }
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::TrainRl => {
            let (policy, curve) = run_train_rl(&cfg)?;
            let ckpt = checkpoint_path(&cfg, Method::Rl);
            write_file(&cfg.out_dir.join("learning_curve.csv"), &learning_curve_csv(&curve))?;
            save_checkpoint(&policy, &ckpt)?;
            if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
                println!(
                    "train-rl: mean return {:.4} -> {:.4} over {} iterations",
                    first.mean_return,
                    last.mean_return,
                    curve.len()
                );
            }
            println!("wrote {}", ckpt.display());
        }
        Command::TrainMeta => {
            let (policy, curve) = run_train_meta(&cfg)?;
            let ckpt = checkpoint_path(&cfg, Method::Meta);
            write_file(&cfg.out_dir.join("meta_curve.csv"), &meta_curve_csv(&curve))?;
            save_checkpoint(&policy, &ckpt)?;
            if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
                println!(
                    "train-meta: mean post-adaptation return {:.4} -> {:.4} over {} meta-iterations",
                    first.mean_post_return,
                    last.mean_post_return,
                    curve.len()
                );
            }
            println!("wrote {}", ckpt.display());
        }
        Command::Adapt { task } => {
            let method = learned_method(cfg.method)?;
            let policy = load_method_policy(&cfg, method)?;
            let t = held_out_task(&cfg, task)?;
            let meta = MetaConfig {
                inner_steps: cfg.eval.adapt_steps,
                ..cfg.meta.clone()
            };
            let res = adapt(&policy, &t, &meta, eval_key(&cfg, task).named("adapt"))?;
            let path = cfg.out_dir.join(format!("{}_adapted_{task}.ckpt", method.name()));
            save_checkpoint(&res.policy, &path)?;
            println!(
                "adapt: task {task} ({}), {} step(s), mean return {:.4} -> {:.4}",
                t.spec.path.kind().name(),
                meta.inner_steps,
                res.pre_return,
                res.post_return
            );
            println!("wrote {}", path.display());
        }
        Command::Eval => eval_one(&cfg, cfg.method)?,
        Command::Baseline => eval_one(&cfg, Method::MppiBaseline)?,
        Command::Compare { ref methods } => {
            let columns = parse_columns(methods)?;
            let ck = Checkpoints::load_for(&cfg, &columns)?;
            let cmp = compare_methods(&cfg, &columns, &ck, cfg.eval.tasks)?;
            for (c, col) in columns.iter().enumerate() {
                let rows: Vec<(TaskSpec, EvalReport)> = cmp
                    .tasks
                    .iter()
                    .cloned()
                    .zip(cmp.reports.iter().map(|r| r[c].clone()))
                    .collect();
                write_method_outputs(&cfg.out_dir, &col.label(), &rows)?;
            }
            write_file(&cfg.out_dir.join("comparison.csv"), &cmp.table_csv())?;
            write_file(&cfg.out_dir.join("comparison_summary.csv"), &cmp.summary_csv())?;
            println!("{:<20} {:>12} {:>12} {:>6} {:>6}", "method", "mean_error", "median_error", "wins", "ties");
            for s in cmp.summary() {
                println!(
                    "{:<20} {:>12.5} {:>12.5} {:>6} {:>6}",
                    s.label, s.mean_error, s.median_error, s.wins, s.ties
                );
            }
            println!("wrote {}", cfg.out_dir.join("comparison.csv").display());
        }
        Command::Config => unreachable!(),
    }
    Ok(())
}

fn learned_method(m: Method) -> Result<Method> {
    if m.is_learned() {
        Ok(m)
    } else {
        Err(Error::Input(format!("{m} has no parameters to adapt; use --method meta or rl")))
    }
}

fn eval_one(cfg: &RunConfig, method: Method) -> Result<()> {
    let column = Column::new(method);
    let rows = if method.is_learned() {
        let policy = load_method_policy(cfg, method)?;
        let ev = Evaluator::Learned {
            policy: &policy,
            adapt_steps: column.resolved_adapt_steps(cfg),
        };
        evaluate_held_out(cfg, ev, cfg.eval.tasks)?
    } else {
        evaluate_held_out(cfg, Evaluator::fixed(method, cfg).expect("non-learned"), cfg.eval.tasks)?
    };
    write_method_outputs(&cfg.out_dir, &column.label(), &rows)?;
    let errs: Vec<f64> = rows.iter().map(|(_, r)| r.mean_error).collect();
    println!(
        "{}: {} tasks, mean tracking error {:.5}, median {:.5}",
        column.label(),
        rows.len(),
        metaopt::bench::compare::mean(&errs),
        metaopt::bench::compare::median(&errs)
    );
    println!("wrote {}", cfg.out_dir.join(errors_file_name(&column.label())).display());
    Ok(())
}

fn write_method_outputs(dir: &Path, label: &str, rows: &[(TaskSpec, EvalReport)]) -> Result<()> {
    for (i, (_, report)) in rows.iter().enumerate() {
        write_file(&dir.join(trajectory_file_name(label, i)), &trajectory_csv(report))?;
    }
    let refs: Vec<(&TaskSpec, &EvalReport)> = rows.iter().map(|(t, r)| (t, r)).collect();
    write_file(&dir.join(errors_file_name(label)), &errors_csv(&refs))
}

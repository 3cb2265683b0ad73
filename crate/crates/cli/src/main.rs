use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rcfg_core::harness::{
    emit_outputs, offline_pretrain_with, online_run, read_record, run_baseline, write_plot_csv, AgentSet,
    ExperimentConfig, Mode, RunRecord,
};

#[derive(Parser)]
#[command(name = "rcfg", version, about = "Repeated coalition formation among LP, EV and a third-party IRS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint directory (overrides output.checkpoint_dir).
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum Policy {
    Lfi,
    Efi,
}

#[derive(Subcommand)]
enum Command {
    /// Write the default config to a file.
    InitConfig {
        path: PathBuf,
    },
    /// Offline pretraining of all four coalition agents.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Print a progress line every this many episodes.
        #[arg(long, default_value_t = 100)]
        log_every: usize,
    },
    /// Online stage with switch operations.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Online stage with the TIRS fixed to one side.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        policy: Policy,
    },
    /// Re-check stability and aggregates of stored records and compare modes.
    EvalStability {
        #[command(flatten)]
        common: Common,
    },
    /// Regenerate the downsampled plot series from stored records.
    EmitPlots {
        #[command(flatten)]
        common: Common,
    },
}

struct Resolved {
    cfg: ExperimentConfig,
    seeds: Vec<u64>,
    out: PathBuf,
    checkpoints: PathBuf,
}

fn resolve(c: &Common) -> Result<Resolved> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &c.out {
        cfg.output.dir = o.clone();
    }
    if let Some(d) = &c.checkpoint_dir {
        cfg.output.checkpoint_dir = d.clone();
    }
    let seeds = match c.seed {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    Ok(Resolved {
        out: cfg.output.dir.clone(),
        checkpoints: cfg.output.checkpoint_dir.clone(),
        cfg,
        seeds,
    })
}

fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

fn pretrain(r: &Resolved, log_every: usize) -> Result<()> {
    for &seed in &r.seeds {
        let t0 = Instant::now();
        let report = offline_pretrain_with(&r.cfg, seed, |row| {
            if log_every > 0 && (row.episode + 1) % log_every == 0 {
                eprintln!(
                    "seed {seed} episode {:>5}  U^L {:>9.3}  U^E {:>9.3}  U^R {:>8.3}  eval {:>9.3} {:>9.3} {:>8.3}  lp-share {:.2}  {:.0}s",
                    row.episode + 1,
                    row.u_lp,
                    row.u_ev,
                    row.u_tirs,
                    row.eval_lp,
                    row.eval_ev,
                    row.eval_tirs,
                    row.lp_share,
                    t0.elapsed().as_secs_f64()
                );
            }
        })
        .with_context(|| format!("pretraining seed {seed}"))?;
        let dir = seed_dir(&r.checkpoints, seed);
        report.persist(&dir)?;
        let a = report.audit;
        println!(
            "seed {seed}: {} episodes in {:.1}s, {} profiles audited, {} violations, checkpoints in {}",
            report.curve.len(),
            t0.elapsed().as_secs_f64(),
            a.profiles,
            a.violations(),
            dir.display()
        );
    }
    Ok(())
}

fn online(r: &Resolved, mode: Mode) -> Result<()> {
    for &seed in &r.seeds {
        let ck = seed_dir(&r.checkpoints, seed);
        let agents = AgentSet::load(&ck, &r.cfg, &r.cfg.training_hash(seed))
            .with_context(|| format!("loading checkpoints for seed {seed} (run `rcfg pretrain` first)"))?;
        let rec = match mode {
            Mode::Proposed => online_run(&r.cfg, seed, &agents)?,
            m => run_baseline(&r.cfg, seed, &agents, m)?,
        };
        let dir = seed_dir(&r.out, seed).join(mode.label());
        emit_outputs(&rec, &dir)?;
        let s = &rec.summary;
        println!(
            "seed {seed} {mode}: mean U^L {:.4} U^E {:.4} U^R {:.4}, LP side {:.2}, stable {:.2}, outputs in {}",
            s.mean[0],
            s.mean[1],
            s.mean[2],
            s.occupancy_lp,
            s.stable_fraction,
            dir.display()
        );
    }
    Ok(())
}

fn records(r: &Resolved) -> Result<Vec<(u64, Vec<RunRecord>)>> {
    let mut out = Vec::new();
    for &seed in &r.seeds {
        let mut recs = Vec::new();
        for mode in [Mode::Proposed, Mode::Lfi, Mode::Efi] {
            let p = seed_dir(&r.out, seed).join(mode.label()).join("record.json");
            if p.exists() {
                recs.push(read_record(&p)?);
            }
        }
        if !recs.is_empty() {
            out.push((seed, recs));
        }
    }
    if out.is_empty() {
        bail!("no records under {}", r.out.display());
    }
    Ok(out)
}

fn eval_stability(r: &Resolved) -> Result<()> {
    let mut failures = 0;
    println!("seed  mode      stable  ne-gain(L,E,R)               mean U^L   mean U^E   mean U^R  LP side");
    for (seed, recs) in records(r)? {
        for rec in &recs {
            let ok = rec.verify();
            let s = &rec.summary;
            println!(
                "{seed:<5} {:<9} {:>6.3}  {:>8.2e} {:>8.2e} {:>8.2e}  {:>9.4}  {:>9.4}  {:>9.4}  {:>6.2}{}",
                rec.mode.label(),
                s.stable_fraction,
                s.ne_gains[0],
                s.ne_gains[1],
                s.ne_gains[2],
                s.mean[0],
                s.mean[1],
                s.mean[2],
                s.occupancy_lp,
                if ok.is_ok() { "" } else { "  RECORD CHECK FAILED" }
            );
            if let Err(e) = ok {
                eprintln!("  {e}");
                failures += 1;
            } else if rec.mode == Mode::Proposed && s.stable_fraction < 1.0 {
                failures += 1;
            }
        }
    }
    if failures > 0 {
        bail!("{failures} record(s) failed the stability or aggregate checks");
    }
    Ok(())
}

fn emit_plots(r: &Resolved) -> Result<()> {
    for (seed, recs) in records(r)? {
        for rec in &recs {
            let dir = seed_dir(&r.out, seed).join(rec.mode.label());
            let path = dir.join("plot_series.csv");
            write_plot_csv(rec, &path)?;
            println!("{}", path.display());
        }
        let cmp = seed_dir(&r.out, seed).join("comparison.csv");
        let mut text = String::from("mode,mean_u_lp,mean_u_ev,mean_u_tirs,occupancy_lp,switches\n");
        for rec in &recs {
            let s = &rec.summary;
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                rec.mode, s.mean[0], s.mean[1], s.mean[2], s.occupancy_lp, s.switches
            ));
        }
        fs::write(&cmp, text).with_context(|| format!("writing {}", cmp.display()))?;
        println!("{}", cmp.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::InitConfig { path } => {
            ExperimentConfig::default().save(&path)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Pretrain { common, log_every } => pretrain(&resolve(&common)?, log_every),
        Command::Run { common } => online(&resolve(&common)?, Mode::Proposed),
        Command::Baseline { common, policy } => {
            let mode = match policy {
                Policy::Lfi => Mode::Lfi,
                Policy::Efi => Mode::Efi,
            };
            online(&resolve(&common)?, mode)
        }
        Command::EvalStability { common } => eval_stability(&resolve(&common)?),
        Command::EmitPlots { common } => emit_plots(&resolve(&common)?),
    }
}

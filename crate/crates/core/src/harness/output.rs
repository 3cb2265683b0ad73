//! Files written from records and training curves.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::{RunRecord, SlotRow};
use super::train::EpisodeRow;
use crate::env::AGENT_COALITIONS;
use crate::error::{Error, Result};

pub const SLOT_SCHEMA_VERSION: u32 = 1;
pub const CURVE_SCHEMA_VERSION: u32 = 1;

const SLOT_COLUMNS: [&str; 25] = [
    "slot", "channel", "start_c1", "c1", "switches", "passes", "inner_iters", "inner_converged", "stable", "u_lp",
    "u_ev", "u_tirs", "payment", "mu_lp", "mu_ev", "punishment", "secrecy_sum", "reward_lp_side", "reward_ev_side",
    "penalized", "e_lp", "e_ev", "e_tirs", "u_tirs_alone", "u_lp_alone",
];

fn csv_writer(path: &Path, header_comment: &str) -> Result<csv::Writer<fs::File>> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "{header_comment}").map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn slot_fields(r: &SlotRow) -> Vec<String> {
    let mut v = vec![
        r.slot.to_string(),
        r.channel_digest.clone(),
        r.start_c1.to_string(),
        r.c1.to_string(),
        r.switches.to_string(),
        r.passes.to_string(),
        r.inner_iters.to_string(),
        u8::from(r.inner_converged).to_string(),
        u8::from(r.stable).to_string(),
    ];
    v.extend(
        [
            r.u_lp, r.u_ev, r.u_tirs, r.payment, r.mu_lp, r.mu_ev, r.punishment, r.secrecy_sum, r.reward_lp_side,
            r.reward_ev_side,
        ]
        .map(|x| x.to_string()),
    );
    v.push(r.penalized.to_string());
    v.extend([r.e_lp, r.e_ev, r.e_tirs, r.context.tirs_alone, r.context.lp_alone].map(|x| x.to_string()));
    v.extend(r.secrecy.iter().map(|x| x.to_string()));
    v
}

/// Per-slot CSV. The first line is `# rcfg-slots schema=.. config=.. seed=.. mode=..`.
pub fn write_slots_csv(record: &RunRecord, path: &Path) -> Result<()> {
    let comment = format!(
        "# rcfg-slots schema={SLOT_SCHEMA_VERSION} config={} seed={} mode={}",
        record.config_hash, record.seed, record.mode
    );
    let mut w = csv_writer(path, &comment)?;
    let receivers = record.slots.first().map_or(0, |r| r.secrecy.len());
    let mut header: Vec<String> = SLOT_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=receivers).map(|i| format!("secrecy_{i}")));
    let io = |e: csv::Error| Error::ser(path, e);
    w.write_record(&header).map_err(io)?;
    for r in &record.slots {
        w.write_record(slot_fields(r)).map_err(io)?;
    }
    finish(w, path)
}

/// One bucket of the downsampled series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub first_slot: usize,
    pub last_slot: usize,
    pub u_lp: f64,
    pub u_ev: f64,
    pub u_tirs: f64,
    /// Running sums up to `last_slot`.
    pub cum_lp: f64,
    pub cum_ev: f64,
    pub cum_tirs: f64,
    pub lp_share: f64,
}

/// Bucket means of the per-slot utilities, at most `points` rows.
pub fn plot_series(slots: &[SlotRow], points: usize) -> Vec<PlotRow> {
    if slots.is_empty() || points == 0 {
        return Vec::new();
    }
    let width = slots.len().div_ceil(points);
    let mut cum = [0.0; 3];
    slots
        .chunks(width)
        .map(|b| {
            let n = b.len() as f64;
            let s = [
                b.iter().map(|r| r.u_lp).sum::<f64>(),
                b.iter().map(|r| r.u_ev).sum::<f64>(),
                b.iter().map(|r| r.u_tirs).sum::<f64>(),
            ];
            for i in 0..3 {
                cum[i] += s[i];
            }
            PlotRow {
                first_slot: b[0].slot,
                last_slot: b[b.len() - 1].slot,
                u_lp: s[0] / n,
                u_ev: s[1] / n,
                u_tirs: s[2] / n,
                cum_lp: cum[0],
                cum_ev: cum[1],
                cum_tirs: cum[2],
                lp_share: b.iter().map(|r| f64::from(r.c1)).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn write_plot_csv(record: &RunRecord, path: &Path) -> Result<()> {
    let comment = format!(
        "# rcfg-plot schema={SLOT_SCHEMA_VERSION} config={} seed={} mode={}",
        record.config_hash, record.seed, record.mode
    );
    let mut w = csv_writer(path, &comment)?;
    for row in plot_series(&record.slots, record.config.output.plot_points) {
        w.serialize(row).map_err(|e| Error::ser(path, e))?;
    }
    finish(w, path)
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    format: &'static str,
    mode: super::online::Mode,
    seed: u64,
    config_hash: &'a str,
    training_hash: &'a str,
    summary: &'a super::record::Summary,
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::ser(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `slots.csv`, `summary.json`, `plot_series.csv` and `record.json` under
/// `dir`. Returns the paths written.
pub fn emit_outputs(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths: Vec<PathBuf> =
        ["slots.csv", "summary.json", "plot_series.csv", "record.json"].iter().map(|f| dir.join(f)).collect();
    write_slots_csv(record, &paths[0])?;
    write_json(
        &SummaryFile {
            format: "rcfg-summary",
            mode: record.mode,
            seed: record.seed,
            config_hash: &record.config_hash,
            training_hash: &record.training_hash,
            summary: &record.summary,
        },
        &paths[1],
    )?;
    write_plot_csv(record, &paths[2])?;
    write_json(record, &paths[3])?;
    Ok(paths)
}

pub fn read_record(path: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rec: RunRecord = serde_json::from_str(&text).map_err(|e| Error::ser(path, e))?;
    if rec.format != super::record::RECORD_FORMAT || rec.version != super::record::RECORD_VERSION {
        return Err(Error::ser(path, format!("unsupported record {} v{}", rec.format, rec.version)));
    }
    Ok(rec)
}

pub fn emit_training_curve(curve: &[EpisodeRow], training_hash: &str, seed: u64, path: &Path) -> Result<()> {
    let comment = format!("# rcfg-training schema={CURVE_SCHEMA_VERSION} config={training_hash} seed={seed}");
    let mut w = csv_writer(path, &comment)?;
    let mut header: Vec<String> =
        ["episode", "u_lp", "u_ev", "u_tirs", "eval_lp", "eval_ev", "eval_tirs", "lp_share", "switches", "penalized"]
            .map(String::from)
            .to_vec();
    header.extend(AGENT_COALITIONS.iter().map(|c| format!("reward_{}", c.label())));
    header.extend(AGENT_COALITIONS.iter().map(|c| format!("std_{}", c.label())));
    let io = |e: csv::Error| Error::ser(path, e);
    w.write_record(&header).map_err(io)?;
    for r in curve {
        let mut v = vec![r.episode.to_string()];
        v.extend([r.u_lp, r.u_ev, r.u_tirs, r.eval_lp, r.eval_ev, r.eval_tirs, r.lp_share].map(|x| x.to_string()));
        v.push(r.switches.to_string());
        v.push(r.penalized.to_string());
        v.extend(r.rewards.iter().chain(&r.mean_std).map(|x| x.to_string()));
        w.write_record(&v).map_err(io)?;
    }
    finish(w, path)
}

//! CSV trajectories, JSON summaries and a static SVG regret plot.
//!
//! Layout under the output directory:
//!
//! ```text
//! <out>/<policy>/run_<r>.csv   one row per round
//! <out>/summary.json           config echo, checkpoints, diagnostics
//! <out>/regret.svg             mean cumulative regret with a one-std band
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{aggregate, mean_std, Checkpoint, ExperimentConfig, PolicyRuns, RunDiagnostics, TrajectoryRecord};
use crate::auction::Branch;
use crate::error::{BidError, Result};

pub const CSV_HEADER: [&str; 8] = [
    "t",
    "bid",
    "won",
    "payment",
    "outcome",
    "branch",
    "inst_regret",
    "cum_regret",
];

/// Writes one run as CSV. Lost rounds leave `payment` empty.
pub fn write_run_csv(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| BidError::io(dir, e))?;
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.bid.to_string(),
            u8::from(r.won).to_string(),
            r.payment.map(|p| p.to_string()).unwrap_or_default(),
            r.outcome.to_string(),
            r.branch.tag().to_string(),
            r.inst_regret.to_string(),
            r.cum_regret.to_string(),
        ])?;
    }
    w.flush().map_err(|e| BidError::io(path, e))?;
    Ok(())
}

/// Parses a file written by [`write_run_csv`]. Branch tags that do not name a
/// learning step of the elimination policy come back as [`Branch::Plain`].
pub fn read_run_csv(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(BidError::Config(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    let bad = |field: &str, row: usize| {
        BidError::Config(format!("{}: bad {field} on row {row}", path.display()))
    };
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(CSV_HEADER[k], i + 1));
            Ok(TrajectoryRecord {
                t: rec[0].parse().map_err(|_| bad("t", i + 1))?,
                bid: num(1)?,
                won: match &rec[2] {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad("won", i + 1)),
                },
                payment: if rec[3].is_empty() { None } else { Some(num(3)?) },
                outcome: num(4)?,
                branch: match &rec[5] {
                    "explore" => Branch::Explore,
                    "assign" => Branch::Assign,
                    "exploit" => Branch::Exploit,
                    _ => Branch::Plain,
                },
                inst_regret: num(6)?,
                cum_regret: num(7)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub checkpoints: Vec<Checkpoint>,
    pub final_regret: Vec<f64>,
    pub mean_final_regret: f64,
    pub std_final_regret: f64,
    pub diagnostics: Vec<RunDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    /// Seconds since the Unix epoch when the summary was written.
    pub written_at: u64,
    pub crate_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub policies: Vec<PolicySummary>,
    pub metadata: Metadata,
}

pub fn summarize(config: &ExperimentConfig, results: &[PolicyRuns]) -> Result<Summary> {
    let policies = results
        .iter()
        .map(|p| {
            let streams: Vec<Vec<f64>> = p.runs.iter().map(|r| r.cum_regret()).collect();
            let final_regret: Vec<f64> = p.runs.iter().map(|r| r.final_regret()).collect();
            let (mean, std) = mean_std(final_regret.iter().copied());
            Ok(PolicySummary {
                policy: p.policy.label().to_owned(),
                checkpoints: aggregate(&streams)?,
                final_regret,
                mean_final_regret: mean,
                std_final_regret: std,
                diagnostics: p.runs.iter().map(|r| r.diagnostics.clone()).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let written_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    Ok(Summary {
        config: config.clone(),
        policies,
        metadata: Metadata {
            written_at,
            crate_version: env!("CARGO_PKG_VERSION").to_owned(),
        },
    })
}

pub fn run_csv_path(out: &Path, policy: &str, run: usize) -> PathBuf {
    out.join(policy).join(format!("run_{run}.csv"))
}

/// Writes every artifact of an experiment and returns the summary.
pub fn write_outputs(config: &ExperimentConfig, results: &[PolicyRuns]) -> Result<Summary> {
    if results.is_empty() || results.iter().any(|p| p.runs.is_empty()) {
        return Err(BidError::EmptySamples);
    }
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| BidError::io(out, e))?;
    for p in results {
        for run in &p.runs {
            write_run_csv(&run_csv_path(out, p.policy.label(), run.run), &run.records)?;
        }
    }
    let summary = summarize(config, results)?;
    let path = out.join("summary.json");
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(&path, json + "\n").map_err(|e| BidError::io(&path, e))?;
    if config.plot {
        let svg = render_svg(results, config.horizon)?;
        let path = out.join("regret.svg");
        fs::write(&path, svg).map_err(|e| BidError::io(&path, e))?;
    }
    Ok(summary)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Mean cumulative regret per policy with a shaded band of one standard
/// deviation, sampled at up to 200 rounds.
pub fn render_svg(results: &[PolicyRuns], horizon: usize) -> Result<String> {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 160.0, 20.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let step = horizon.div_ceil(200).max(1);
    let mut rounds: Vec<usize> = (step..=horizon).step_by(step).collect();
    if rounds.last() != Some(&horizon) {
        rounds.push(horizon);
    }
    let mut curves = Vec::new();
    for p in results {
        if p.runs.is_empty() {
            return Err(BidError::EmptySamples);
        }
        let pts: Vec<(usize, f64, f64)> = rounds
            .iter()
            .map(|&t| {
                let (m, s) = mean_std(p.runs.iter().map(|r| r.records[t - 1].cum_regret));
                (t, m, s)
            })
            .collect();
        curves.push((p.policy.label(), pts));
    }
    let ymax = curves
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|&(_, m, s)| m + s))
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.05;
    let sx = |t: usize| left + pw * t as f64 / horizon as f64;
    let sy = |y: f64| top + ph * (1.0 - y.max(0.0) / ymax);

    let mut s = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    s += &format!(
        "<rect x=\"{left}\" y=\"{top}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#444\"/>\n"
    );
    for k in 0..=4 {
        let frac = k as f64 / 4.0;
        let (x, y) = (left + pw * frac, top + ph * (1.0 - frac));
        s += &format!(
            "<line x1=\"{x:.1}\" y1=\"{b:.1}\" x2=\"{x:.1}\" y2=\"{b2:.1}\" stroke=\"#444\"/>\
             <text x=\"{x:.1}\" y=\"{ty:.1}\" text-anchor=\"middle\">{tl}</text>\n",
            b = top + ph,
            b2 = top + ph + 5.0,
            ty = top + ph + 18.0,
            tl = (horizon as f64 * frac).round(),
        );
        s += &format!(
            "<line x1=\"{a:.1}\" y1=\"{y:.1}\" x2=\"{left}\" y2=\"{y:.1}\" stroke=\"#444\"/>\
             <text x=\"{tx:.1}\" y=\"{yy:.1}\" text-anchor=\"end\">{yl:.1}</text>\n",
            a = left - 5.0,
            tx = left - 8.0,
            yy = y + 4.0,
            yl = ymax * frac,
        );
    }
    s += &format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">round t</text>\n",
        left + pw / 2.0,
        h - 10.0
    );
    s += &format!(
        "<text transform=\"translate(16 {:.1}) rotate(-90)\" text-anchor=\"middle\">cumulative regret</text>\n",
        top + ph / 2.0
    );
    for (i, (label, pts)) in curves.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let upper = pts.iter().map(|&(t, m, sd)| format!("{:.2},{:.2}", sx(t), sy(m + sd)));
        let lower = pts.iter().rev().map(|&(t, m, sd)| format!("{:.2},{:.2}", sx(t), sy(m - sd)));
        let band: Vec<String> = upper.chain(lower).collect();
        s += &format!(
            "<polygon points=\"{}\" fill=\"{colour}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n",
            band.join(" ")
        );
        let line: Vec<String> = pts
            .iter()
            .map(|&(t, m, _)| format!("{:.2},{:.2}", sx(t), sy(m)))
            .collect();
        s += &format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\"/>\n",
            line.join(" ")
        );
        let ly = top + 16.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        s += &format!(
            "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{colour}\" stroke-width=\"2\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\">{label}</text>\n",
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    s += "</svg>\n";
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{PolicySpec, RunTrace};

    fn record(t: usize, won: bool) -> TrajectoryRecord {
        TrajectoryRecord {
            t,
            bid: 0.1 * t as f64,
            won,
            payment: won.then_some(0.05),
            outcome: 0.3,
            branch: if won { Branch::Explore } else { Branch::Plain },
            inst_regret: 1.0 / 3.0,
            cum_regret: t as f64 / 3.0,
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/run_0.csv");
        let recs: Vec<_> = (1..=5).map(|t| record(t, t % 2 == 0)).collect();
        write_run_csv(&path, &recs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,bid,won,payment,outcome,branch,inst_regret,cum_regret\n"));
        assert!(text.lines().nth(1).unwrap().contains(",0,,"));
        assert!(!text.contains('\r'));
        assert_eq!(read_run_csv(&path).unwrap(), recs);
    }

    #[test]
    fn svg_is_self_contained() {
        let runs = PolicyRuns {
            policy: PolicySpec::Oracle,
            runs: vec![RunTrace {
                run: 0,
                seed: 0,
                records: (1..=10).map(|t| record(t, false)).collect(),
                diagnostics: RunDiagnostics::default(),
            }],
        };
        let svg = render_svg(&[runs], 10).unwrap();
        assert!(svg.contains("<polygon") && svg.contains("<polyline"));
        assert!(svg.contains("cumulative regret") && svg.contains(">oracle<"));
        assert!(!svg.contains("href"));
    }

    #[test]
    fn empty_results_are_rejected() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"policy": {"name": "oracle"}, "environment": {"kind": "lower_bound"}, "T": 10, "d": 1}"#,
        )
        .unwrap();
        assert!(write_outputs(&cfg, &[]).is_err());
    }
}

//! CSV traces, summaries and aggregate tables.
//!
//! Every file starts with `# key = value` lines echoing the resolved config.
//! Floats are written in shortest round-trip form, so identical runs give
//! identical bytes. Files are written to a temporary sibling and renamed.

use std::io::Write;
use std::path::{Path, PathBuf};

use stagelearn_core::dynamics::BestReplySequence;
use stagelearn_core::sim::{RunTrace, StageRecord};

use crate::error::{CliError, Result};

pub type Echo = Vec<(&'static str, String)>;

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn echo_header(echo: &[(&str, String)]) -> Vec<u8> {
    let mut out = Vec::new();
    for (k, v) in echo {
        writeln!(out, "# {k} = {v}").expect("writing to a Vec");
    }
    out
}

fn csv_bytes(
    head: Vec<u8>,
    header: Vec<String>,
    rows: impl Iterator<Item = Vec<String>>,
) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(head);
    w.write_record(&header).expect("writing to a Vec");
    for row in rows {
        w.write_record(&row).expect("writing to a Vec");
    }
    w.into_inner().expect("flushing a Vec")
}

fn rho_columns(k: usize) -> impl Iterator<Item = String> {
    (0..k).map(|a| format!("rho_{a}"))
}

/// Per-round trace: round, stage, distance, br_fraction, rho_0..rho_{k-1}.
/// `stride` keeps every `stride`-th round (rounds 0, stride, 2·stride, ...).
pub fn trace_csv(trace: &RunTrace, echo: &[(&str, String)], stride: usize) -> Vec<u8> {
    let header = ["round", "stage", "distance", "br_fraction"]
        .into_iter()
        .map(String::from)
        .chain(rho_columns(trace.actions))
        .collect();
    let rows = (0..trace.rounds()).step_by(stride.max(1)).map(|r| {
        let mut row = vec![
            r.to_string(),
            (r / trace.stage_len).to_string(),
            trace.round_distance[r].to_string(),
            trace.round_br_fraction[r].to_string(),
        ];
        row.extend(trace.realized_rho(r).weights().iter().map(f64::to_string));
        row
    });
    csv_bytes(echo_header(echo), header, rows)
}

pub fn stages_csv(trace: &RunTrace, echo: &[(&str, String)]) -> Vec<u8> {
    let header = [
        "stage",
        "end_round",
        "distance",
        "base_distance",
        "br_fraction",
        "replaced",
    ]
    .into_iter()
    .map(String::from)
    .chain(rho_columns(trace.actions))
    .collect();
    let rows = trace.stages.iter().map(|s| {
        let mut row = vec![
            s.stage.to_string(),
            s.end_round.to_string(),
            s.distance.to_string(),
            s.base_distance.to_string(),
            s.br_fraction.to_string(),
            s.replaced.to_string(),
        ];
        row.extend(s.rho.weights().iter().map(f64::to_string));
        row
    });
    csv_bytes(echo_header(echo), header, rows)
}

/// Outcome of one run, small enough to keep for every point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub echo: Echo,
    pub stages: Vec<StageRecord>,
    pub rounds: usize,
    pub convergence_round: Option<usize>,
}

impl RunSummary {
    pub fn new(label: String, echo: Echo, trace: &RunTrace, threshold: f64) -> Self {
        Self {
            label,
            echo,
            stages: trace.stages.clone(),
            rounds: trace.rounds(),
            convergence_round: trace.convergence_round(threshold),
        }
    }

    pub fn final_stage(&self) -> &StageRecord {
        self.stages.last().expect("a run has at least one stage")
    }

    /// `[result]` then `[config]` sections of `key = value` lines.
    pub fn to_text(&self) -> Vec<u8> {
        let last = self.final_stage();
        let mut out = Vec::new();
        let w = &mut out;
        writeln!(w, "[result]").unwrap();
        writeln!(w, "final_distance = {}", last.distance).unwrap();
        writeln!(w, "final_base_distance = {}", last.base_distance).unwrap();
        writeln!(w, "final_br_fraction = {}", last.br_fraction).unwrap();
        writeln!(w, "final_mean_action = {}", last.rho.mean_action()).unwrap();
        match self.convergence_round {
            Some(r) => writeln!(w, "rounds_to_threshold = {r}").unwrap(),
            None => writeln!(w, "rounds_to_threshold = none").unwrap(),
        }
        writeln!(w, "rounds = {}", self.rounds).unwrap();
        writeln!(w, "stages = {}", self.stages.len()).unwrap();
        writeln!(w, "\n[config]").unwrap();
        for (k, v) in &self.echo {
            writeln!(w, "{k} = {v}").unwrap();
        }
        out
    }
}

/// One row of the aggregate table: means over seeds at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub learner: String,
    pub population: usize,
    pub stage: usize,
    pub end_round: usize,
    pub seeds: usize,
    pub mean_distance: f64,
    pub mean_base_distance: f64,
    pub mean_br_fraction: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Groups runs by (learner, population) in the given order and averages
/// stage by stage. Seeds are summed in input order.
pub fn aggregate(runs: &[RunSummary]) -> Vec<AggregateRow> {
    let key = |r: &RunSummary| -> (String, usize) {
        let get = |k: &str| {
            r.echo
                .iter()
                .find(|(key, _)| *key == k)
                .map(|(_, v)| v.clone())
                .unwrap_or_default()
        };
        (get("learner.kind"), get("sim.n").parse().unwrap_or(0))
    };
    let mut groups: Vec<((String, usize), Vec<&RunSummary>)> = Vec::new();
    for run in runs {
        let k = key(run);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, members)) => members.push(run),
            None => groups.push((k, vec![run])),
        }
    }
    let mut rows = Vec::new();
    for ((learner, population), members) in groups {
        let stages = members.iter().map(|m| m.stages.len()).min().unwrap_or(0);
        for s in 0..stages {
            rows.push(AggregateRow {
                learner: learner.clone(),
                population,
                stage: s,
                end_round: members[0].stages[s].end_round,
                seeds: members.len(),
                mean_distance: mean(members.iter().map(|m| m.stages[s].distance)),
                mean_base_distance: mean(members.iter().map(|m| m.stages[s].base_distance)),
                mean_br_fraction: mean(members.iter().map(|m| m.stages[s].br_fraction)),
            });
        }
    }
    rows
}

pub const AGGREGATE_HEADER: [&str; 8] = [
    "learner",
    "n",
    "stage",
    "end_round",
    "seeds",
    "mean_distance",
    "mean_base_distance",
    "mean_br_fraction",
];

pub fn aggregate_csv(rows: &[AggregateRow], echo: &[(&str, String)]) -> Vec<u8> {
    let header = AGGREGATE_HEADER.iter().map(|s| s.to_string()).collect();
    let body = rows.iter().map(|r| {
        vec![
            r.learner.clone(),
            r.population.to_string(),
            r.stage.to_string(),
            r.end_round.to_string(),
            r.seeds.to_string(),
            r.mean_distance.to_string(),
            r.mean_base_distance.to_string(),
            r.mean_br_fraction.to_string(),
        ]
    });
    csv_bytes(echo_header(echo), header, body)
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let csv_err = |source| CliError::Csv {
        path: PathBuf::from(path),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err)?;
    let bad = |what: &str| CliError::Syntax {
        path: path.display().to_string(),
        line: 0,
        reason: format!("bad `{what}` column"),
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(csv_err)?;
        let field = |i: usize| r.get(i).ok_or_else(|| bad(AGGREGATE_HEADER[i]));
        let num = |i: usize| {
            field(i)?
                .parse::<f64>()
                .map_err(|_| bad(AGGREGATE_HEADER[i]))
        };
        let int = |i: usize| {
            field(i)?
                .parse::<usize>()
                .map_err(|_| bad(AGGREGATE_HEADER[i]))
        };
        rows.push(AggregateRow {
            learner: field(0)?.to_string(),
            population: int(1)?,
            stage: int(2)?,
            end_round: int(3)?,
            seeds: int(4)?,
            mean_distance: num(5)?,
            mean_base_distance: num(6)?,
            mean_br_fraction: num(7)?,
        });
    }
    Ok(rows)
}

/// Whitespace-separated columns for gnuplot: `end_round` then one
/// mean-distance column per (learner, n) series, in first-seen order.
/// Missing cells are `?`, gnuplot's missing-data marker.
pub fn gnuplot_columns(rows: &[AggregateRow]) -> String {
    let mut series: Vec<(String, usize)> = Vec::new();
    let mut rounds: Vec<usize> = Vec::new();
    for r in rows {
        let key = (r.learner.clone(), r.population);
        if !series.contains(&key) {
            series.push(key);
        }
        if !rounds.contains(&r.end_round) {
            rounds.push(r.end_round);
        }
    }
    rounds.sort_unstable();
    let mut out = String::from("# end_round");
    for (learner, n) in &series {
        out.push_str(&format!(" {learner}_n{n}"));
    }
    out.push('\n');
    for round in rounds {
        out.push_str(&round.to_string());
        for (learner, n) in &series {
            let cell = rows
                .iter()
                .find(|r| r.end_round == round && r.learner == *learner && r.population == *n)
                .map_or_else(|| "?".to_string(), |r| r.mean_distance.to_string());
            out.push(' ');
            out.push_str(&cell);
        }
        out.push('\n');
    }
    out
}

/// Best-reply sequence: step, fixed, rho_0..rho_{k-1}.
pub fn br_sequence_csv(seq: &BestReplySequence, echo: &[(&str, String)]) -> Vec<u8> {
    let k = seq.steps[0].len();
    let header = ["step", "fixed"]
        .into_iter()
        .map(String::from)
        .chain(rho_columns(k))
        .collect();
    let rows = seq.steps.iter().enumerate().map(|(t, rho)| {
        let mut row = vec![
            t.to_string(),
            (seq.fixed_point_index == Some(t)).to_string(),
        ];
        row.extend(rho.weights().iter().map(f64::to_string));
        row
    });
    csv_bytes(echo_header(echo), header, rows)
}

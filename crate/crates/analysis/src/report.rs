//! Corpus-level analysis and its Markdown/CSV rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tinker_core::scaffold::question_frame_label;
use tinker_core::{Condition, SessionLog};

use crate::coding::{code_turns, CodedTurn, ManualAnnotations};
use crate::distribution::{contribution_distribution, CrossTab};
use crate::stats::{descriptive_stats, stats_by_condition, DescriptiveStats};
use crate::text::Stopwords;
use crate::uptake::{UptakeDetector, UptakeLabel, UptakeResult, DEFAULT_THRESHOLD};
use crate::AnalysisError;

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub threshold: f64,
    pub stopwords: Stopwords,
    pub manual: Option<ManualAnnotations>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            threshold: DEFAULT_THRESHOLD,
            stopwords: Stopwords::bundled(),
            manual: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageUptake {
    pub session_id: String,
    pub condition: Condition,
    pub result: UptakeResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub threshold: f64,
    pub logs: usize,
    pub stats: DescriptiveStats,
    pub by_condition: BTreeMap<Condition, DescriptiveStats>,
    pub coded: Vec<CodedTurn>,
    pub distribution: Option<CrossTab>,
    pub uptake: Vec<StageUptake>,
}

impl AnalysisReport {
    pub fn uptake_totals(&self) -> BTreeMap<(Condition, UptakeLabel), usize> {
        let mut out = BTreeMap::new();
        for u in &self.uptake {
            *out.entry((u.condition, u.result.label)).or_default() += 1;
        }
        out
    }
}

pub fn analyze(logs: &[SessionLog], options: &AnalysisOptions) -> Result<AnalysisReport, AnalysisError> {
    let stats = descriptive_stats(logs)?;
    let finished: Vec<&SessionLog> = logs.iter().filter(|l| l.is_finished()).collect();
    let mut coded = Vec::new();
    for log in &finished {
        coded.extend(code_turns(log, options.manual.as_ref())?);
    }
    let detector = UptakeDetector::new(options.threshold, options.stopwords.clone());
    let uptake = finished
        .iter()
        .flat_map(|log| {
            detector.session_uptake(log).into_iter().map(|result| StageUptake {
                session_id: log.session_id().to_string(),
                condition: log.condition(),
                result,
            })
        })
        .collect();
    Ok(AnalysisReport {
        threshold: detector.threshold,
        logs: logs.len(),
        stats,
        by_condition: stats_by_condition(logs),
        distribution: contribution_distribution(&coded).ok(),
        coded,
        uptake,
    })
}

fn stats_table(out: &mut String, title: &str, stats: &DescriptiveStats) {
    let _ = writeln!(out, "### {title} (n = {})\n", stats.sessions.len());
    let _ = writeln!(out, "| Measure | Mean (± SD; min–max) |\n|---|---|");
    for (name, value) in stats.rows() {
        let _ = writeln!(out, "| {name} | {value} |");
    }
    out.push('\n');
}

pub fn distribution_markdown(tab: &CrossTab) -> String {
    let cols = tab.columns();
    let mut out = String::from("| Question framing | n |");
    for c in &cols {
        let _ = write!(out, " {c} |");
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(cols.len()));
    out.push('\n');
    for (framing, row) in &tab.rows {
        let _ = write!(out, "| {} | {} |", question_frame_label(*framing), row.total);
        for c in &cols {
            let _ = write!(out, " {:.2} |", row.proportion(c));
        }
        out.push('\n');
    }
    out
}

impl AnalysisReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Session analysis\n\n");
        let _ = writeln!(
            out,
            "{} logs read, {} finished. Uptake: a contribution is taken up when at least {:.0}% of its novel \
             content terms (stemmed, stopwords removed) appear in the update; Full means every contribution \
             is reflected completely. Narrative functions flagged `heuristic` come from keyword rules, not \
             manual coding.\n",
            self.logs,
            self.stats.sessions.len(),
            self.threshold * 100.0
        );
        out.push_str("## Descriptive statistics\n\n");
        stats_table(&mut out, "All sessions", &self.stats);
        for (c, s) in &self.by_condition {
            stats_table(&mut out, &format!("{c:?}"), s);
        }
        out.push_str("## Contributions by question framing\n\n");
        match &self.distribution {
            Some(tab) => {
                let heuristic = self.coded.iter().filter(|c| c.source == crate::coding::CodeSource::Heuristic).count();
                let _ = writeln!(out, "{} coded answers ({heuristic} heuristic).\n", self.coded.len());
                out.push_str(&distribution_markdown(tab));
            }
            None => out.push_str("No scaffold answers.\n"),
        }
        out.push_str("\n## Uptake\n\n| Condition | Full | Partial | None | Not applicable |\n|---|---|---|---|---|\n");
        let totals = self.uptake_totals();
        for c in Condition::ALL {
            let n = |l| totals.get(&(c, l)).copied().unwrap_or(0);
            let _ = writeln!(
                out,
                "| {c:?} | {} | {} | {} | {} |",
                n(UptakeLabel::Full),
                n(UptakeLabel::Partial),
                n(UptakeLabel::None),
                n(UptakeLabel::NotApplicable)
            );
        }
        out
    }

    /// Writes `report.md`, `sessions.csv`, `coded_turns.csv`,
    /// `distribution.csv` and `uptake.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
        let io = |e: std::io::Error| AnalysisError::Io(e.to_string());
        let csv_err = |e: csv::Error| AnalysisError::Csv(e.to_string());
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut written = Vec::new();

        let md = dir.join("report.md");
        std::fs::write(&md, self.to_markdown()).map_err(io)?;
        written.push(md);

        let path = dir.join("sessions.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        for m in &self.stats.sessions {
            w.serialize(m).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
        written.push(path);

        let path = dir.join("coded_turns.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(["session_id", "turn_index", "phase", "node", "framing", "text", "functions", "source"])
            .map_err(csv_err)?;
        for c in &self.coded {
            w.write_record([
                c.session_id.clone(),
                c.turn_index.to_string(),
                c.phase.to_string(),
                c.node.to_string(),
                question_frame_label(c.framing).to_string(),
                c.text.clone(),
                c.functions.to_string(),
                format!("{:?}", c.source).to_lowercase(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
        written.push(path);

        let path = dir.join("distribution.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(["framing", "functions", "count", "proportion"]).map_err(csv_err)?;
        if let Some(tab) = &self.distribution {
            for (framing, row) in &tab.rows {
                for (set, n) in &row.counts {
                    w.write_record([
                        question_frame_label(*framing).to_string(),
                        set.to_string(),
                        n.to_string(),
                        format!("{:.6}", row.proportion(set)),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        w.flush().map_err(io)?;
        written.push(path);

        let path = dir.join("uptake.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(["session_id", "condition", "stage", "label", "coverage", "matched", "unmatched"])
            .map_err(csv_err)?;
        for u in &self.uptake {
            w.write_record([
                u.session_id.clone(),
                u.condition.as_str().to_string(),
                u.result.stage.map(|s| s.to_string()).unwrap_or_default(),
                u.result.label.as_str().to_string(),
                format!("{:.4}", u.result.coverage),
                u.result.matched.join(" "),
                u.result.unmatched.join(" "),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
        written.push(path);
        Ok(written)
    }
}

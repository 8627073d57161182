//! Leaderboards and cross-language deltas over a set of scorecards.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::scorecard::{ScoreError, Scorecard, ScorecardRole};
use crate::{Dimension, Language, ParseEnumError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Probe(Dimension),
    Fad,
    Psd,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Probe(Dimension::RR),
        Metric::Probe(Dimension::AF),
        Metric::Probe(Dimension::LF),
        Metric::Probe(Dimension::ZF),
        Metric::Fad,
        Metric::Psd,
    ];

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Probe(_))
    }

    pub fn code(self) -> &'static str {
        match self {
            Metric::Probe(d) => d.code(),
            Metric::Fad => "FAD",
            Metric::Psd => "PSD",
        }
    }

    pub fn value(self, card: &Scorecard) -> Option<f64> {
        match self {
            Metric::Probe(d) => card.dimension(d).map(|s| s.mean_fidelity),
            Metric::Fad => card.fad.result().map(|r| r.total),
            Metric::Psd => card.psd.result().map(|r| r.total),
        }
    }

    fn interval(self, card: &Scorecard) -> Option<(f64, f64)> {
        match self {
            Metric::Probe(d) => card.dimension(d).and_then(|s| s.ci_low.zip(s.ci_high)),
            _ => None,
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "table" => Ok(ReportFormat::Table),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(ParseEnumError {
                kind: "report format",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub system: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Leaderboard {
    pub language: Language,
    pub metric: Metric,
    pub rows: Vec<LeaderboardRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub system: String,
    pub metric: Metric,
    pub from: Language,
    pub to: Language,
    pub from_value: f64,
    pub to_value: f64,
    pub delta_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub leaderboards: Vec<Leaderboard>,
    pub deltas: Vec<DeltaRow>,
    pub warnings: Vec<String>,
}

/// Relative change in percent, `(to - from) / from * 100`.
pub fn percent_change(from: f64, to: f64) -> f64 {
    (to - from) / from * 100.0
}

pub fn format_delta(pct: f64) -> String {
    format!("{pct:+.0}%")
}

/// Ranks systems on one metric. Ties fall back to system name.
pub fn leaderboard(cards: &[&Scorecard], language: Language, metric: Metric) -> Leaderboard {
    let mut rows: Vec<(String, f64, Option<(f64, f64)>)> = cards
        .iter()
        .filter(|c| c.language == language)
        .filter_map(|c| metric.value(c).map(|v| (c.system.clone(), v, metric.interval(c))))
        .collect();
    rows.sort_by(|a, b| {
        let by_value = if metric.higher_is_better() {
            b.1.total_cmp(&a.1)
        } else {
            a.1.total_cmp(&b.1)
        };
        by_value.then_with(|| a.0.cmp(&b.0))
    });
    Leaderboard {
        language,
        metric,
        rows: rows
            .into_iter()
            .enumerate()
            .map(|(i, (system, value, ci))| LeaderboardRow {
                rank: i + 1,
                system,
                value,
                ci,
            })
            .collect(),
    }
}

const DELTA_PAIRS: [(Language, Language); 2] = [(Language::Hi, Language::Ta), (Language::Hi, Language::Te)];

pub fn build_report(cards: &[Scorecard]) -> Report {
    let mut warnings = Vec::new();

    // One scorecard per (language, system); later ones win.
    let mut latest: BTreeMap<(Language, &str), &Scorecard> = BTreeMap::new();
    for c in cards.iter().filter(|c| c.role == ScorecardRole::System) {
        if latest.insert((c.language, c.system.as_str()), c).is_some() {
            warnings.push(format!(
                "duplicate scorecard for {} / {}; using the last one",
                c.system, c.language
            ));
        }
    }
    let systems: Vec<&Scorecard> = latest.values().copied().collect();

    for language in Language::ALL {
        let mut fingerprints: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for c in cards.iter().filter(|c| c.language == language) {
            fingerprints
                .entry(c.config_fingerprint.as_str())
                .or_default()
                .push(c.system.as_str());
        }
        if fingerprints.len() > 1 {
            let groups: Vec<String> = fingerprints
                .iter()
                .map(|(fp, s)| format!("{}: {}", &fp[..fp.len().min(12)], s.join(", ")))
                .collect();
            warnings.push(format!(
                "fingerprint mismatch for {language}: scorecards were produced under different configurations ({})",
                groups.join("; ")
            ));
        }
    }

    let mut leaderboards = Vec::new();
    for language in Language::ALL {
        for metric in Metric::ALL {
            let board = leaderboard(&systems, language, metric);
            if !board.rows.is_empty() {
                leaderboards.push(board);
            }
        }
    }

    let mut deltas = Vec::new();
    for (from, to) in DELTA_PAIRS {
        for ((lang, system), a) in &latest {
            if *lang != from {
                continue;
            }
            let Some(b) = latest.get(&(to, system)) else { continue };
            for metric in Metric::ALL {
                if let (Some(x), Some(y)) = (metric.value(a), metric.value(b)) {
                    deltas.push(DeltaRow {
                        system: system.to_string(),
                        metric,
                        from,
                        to,
                        from_value: x,
                        to_value: y,
                        delta_pct: percent_change(x, y),
                    });
                }
            }
        }
    }

    Report {
        leaderboards,
        deltas,
        warnings,
    }
}

impl Report {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => crate::json::to_string_pretty(self).expect("report serializes") + "\n",
            ReportFormat::Table => self.render_text(false),
            ReportFormat::Markdown => self.render_text(true),
        }
    }

    fn render_text(&self, md: bool) -> String {
        let mut s = String::new();
        for board in &self.leaderboards {
            let arrow = if board.metric.higher_is_better() { "higher is better" } else { "lower is better" };
            let title = format!("{} {} ({arrow})", board.language.name(), board.metric);
            let rows: Vec<[String; 4]> = board
                .rows
                .iter()
                .map(|r| {
                    [
                        r.rank.to_string(),
                        r.system.clone(),
                        format!("{:.3}", r.value),
                        r.ci.map_or("-".into(), |(lo, hi)| format!("[{lo:.3}, {hi:.3}]")),
                    ]
                })
                .collect();
            write_table(&mut s, md, &title, &["rank", "system", board.metric.code(), "95% CI"], &rows);
        }
        if !self.deltas.is_empty() {
            let rows: Vec<[String; 4]> = self
                .deltas
                .iter()
                .map(|d| {
                    [
                        d.system.clone(),
                        d.metric.to_string(),
                        format!("{:.3} -> {:.3}", d.from_value, d.to_value),
                        format_delta(d.delta_pct),
                    ]
                })
                .collect();
            let mut pairs: Vec<String> = self.deltas.iter().map(|d| format!("{} -> {}", d.from, d.to)).collect();
            pairs.dedup();
            let title = format!("Cross-language change ({})", pairs.join(", "));
            write_table(&mut s, md, &title, &["system", "metric", "values", "change"], &rows);
        }
        for w in &self.warnings {
            let _ = writeln!(s, "{}warning: {w}", if md { "> " } else { "" });
        }
        s
    }
}

fn write_table(out: &mut String, md: bool, title: &str, header: &[&str; 4], rows: &[[String; 4]]) {
    if md {
        let _ = writeln!(out, "### {title}\n");
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(4));
        for r in rows {
            let _ = writeln!(out, "| {} |", r.join(" | "));
        }
    } else {
        let mut widths = header.map(|h| h.chars().count());
        for r in rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let _ = writeln!(out, "{title}");
        let line = |cells: [&str; 4]| {
            let mut l = String::new();
            for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
                let pad = w - c.chars().count();
                // left-align the system column, right-align the rest
                if i == 1 || (i == 0 && header[0] == "system") {
                    l.push_str(c);
                    l.push_str(&" ".repeat(pad));
                } else {
                    l.push_str(&" ".repeat(pad));
                    l.push_str(c);
                }
                l.push_str("  ");
            }
            l.trim_end().to_string()
        };
        let _ = writeln!(out, "{}", line(*header));
        for r in rows {
            let _ = writeln!(out, "{}", line([&r[0], &r[1], &r[2], &r[3]]));
        }
    }
    out.push('\n');
}

/// Loads scorecards from disk and renders the report.
pub fn cmd_report(paths: &[impl AsRef<Path>], format: ReportFormat) -> Result<Report, ScoreError> {
    let cards = paths.iter().map(Scorecard::load).collect::<Result<Vec<_>, _>>()?;
    let report = build_report(&cards);
    log::debug!("rendering {} scorecards as {format:?}", cards.len());
    Ok(report)
}

//! Result artifacts: CSV tables, SVG effect charts and a Markdown report.
//! Nothing here computes a statistic; every number comes from the bundle.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scoring::{EffectRecord, EffectSummary, PatternVerdict};
use crate::stats::{Analysis, LmmFit, Verdict};
use crate::{Construction, Sign};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("no {construction} summary for model `{model}` ({}gap,{}island)", gap.symbol(), island.symbol())]
    MissingSummary {
        model: String,
        construction: Construction,
        gap: Sign,
        island: Sign,
    },
}

pub type Result<T> = std::result::Result<T, ReportError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    SimpleDependency,
    IslandStringent,
    IslandRelative,
    BasicLicensing,
    IslandThreeWay,
    Fge,
    Uge,
}

impl Criterion {
    pub const ALL: [Criterion; 7] = [
        Criterion::SimpleDependency,
        Criterion::IslandStringent,
        Criterion::IslandRelative,
        Criterion::BasicLicensing,
        Criterion::IslandThreeWay,
        Criterion::Fge,
        Criterion::Uge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::SimpleDependency => "simple_dependency",
            Criterion::IslandStringent => "island_stringent",
            Criterion::IslandRelative => "island_relative",
            Criterion::BasicLicensing => "basic_licensing",
            Criterion::IslandThreeWay => "island_three_way",
            Criterion::Fge => "fge",
            Criterion::Uge => "uge",
        }
    }

    fn heading(self) -> &'static str {
        match self {
            Criterion::SimpleDependency => "Simple",
            Criterion::IslandStringent => "Island (stringent)",
            Criterion::IslandRelative => "Island (relative)",
            Criterion::BasicLicensing => "Licensing LMM",
            Criterion::IslandThreeWay => "3-way LMM",
            Criterion::Fge => "FGE",
            Criterion::Uge => "UGE",
        }
    }
}

impl From<Analysis> for Criterion {
    fn from(a: Analysis) -> Self {
        match a {
            Analysis::BasicLicensing => Criterion::BasicLicensing,
            Analysis::IslandThreeWay => Criterion::IslandThreeWay,
            Analysis::Fge => Criterion::Fge,
            Analysis::Uge => Criterion::Uge,
        }
    }
}

impl FromStr for Criterion {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown criterion `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    NotTested,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::NotTested => "not_tested",
        }
    }

    fn from_bool(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

impl FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pass" => Ok(Outcome::Pass),
            "fail" => Ok(Outcome::Fail),
            "not_tested" => Ok(Outcome::NotTested),
            _ => Err(format!("unknown outcome `{s}`")),
        }
    }
}

/// One row of `fits.csv`. Sigmas are standard deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct FitRow {
    pub model_id: String,
    pub construction: Construction,
    pub analysis: Analysis,
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
    pub sigma_item: f64,
    pub sigma_resid: f64,
    pub converged: bool,
}

impl FitRow {
    pub fn from_fit(model_id: &str, construction: Construction, analysis: Analysis, fit: &LmmFit) -> Vec<FitRow> {
        fit.terms
            .iter()
            .map(|t| FitRow {
                model_id: model_id.to_string(),
                construction,
                analysis,
                term: t.term.clone(),
                estimate: t.estimate,
                se: t.se,
                t: t.t,
                p: t.p,
                sigma_item: fit.sigma2_item.sqrt(),
                sigma_resid: fit.sigma2_resid.sqrt(),
                converged: fit.converged,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerdictRow {
    pub model_id: String,
    pub construction: Construction,
    pub criterion: Criterion,
    pub outcome: Outcome,
    pub detail: String,
}

impl VerdictRow {
    /// Rows for the qualitative criteria; island criteria are `not_tested`
    /// for constructions without island cells.
    pub fn from_pattern(model_id: &str, v: &PatternVerdict) -> Vec<VerdictRow> {
        let row = |criterion, outcome, detail: String| VerdictRow {
            model_id: model_id.to_string(),
            construction: v.construction,
            criterion,
            outcome,
            detail,
        };
        let mut out = vec![row(Criterion::SimpleDependency, Outcome::from_bool(v.simple_learned), String::new())];
        match &v.island {
            Some(i) => {
                out.push(row(
                    Criterion::IslandStringent,
                    Outcome::from_bool(i.stringent()),
                    format!("+gap {} / -gap {}", i.plus_gap.stringent, i.minus_gap.stringent),
                ));
                out.push(row(
                    Criterion::IslandRelative,
                    Outcome::from_bool(i.relative()),
                    format!("+gap {} / -gap {}", i.plus_gap.relative, i.minus_gap.relative),
                ));
            }
            None => {
                out.push(row(Criterion::IslandStringent, Outcome::NotTested, "no island items".into()));
                out.push(row(Criterion::IslandRelative, Outcome::NotTested, "no island items".into()));
            }
        }
        out
    }

    pub fn from_stats(model_id: &str, v: &Verdict) -> VerdictRow {
        VerdictRow {
            model_id: model_id.to_string(),
            construction: v.construction,
            criterion: v.analysis.into(),
            outcome: Outcome::from_bool(v.pass),
            detail: v.detail.clone(),
        }
    }

    pub fn not_tested(model_id: &str, construction: Construction, criterion: Criterion, why: &str) -> VerdictRow {
        VerdictRow {
            model_id: model_id.to_string(),
            construction,
            criterion,
            outcome: Outcome::NotTested,
            detail: why.to_string(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelResults {
    pub model_id: String,
    pub valid_perplexity: Option<f64>,
    pub effects: Vec<EffectRecord>,
    pub summaries: Vec<EffectSummary>,
    pub fits: Vec<FitRow>,
    pub verdicts: Vec<VerdictRow>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportBundle {
    pub title: String,
    /// Key/value run metadata (configs, seeds, model ids), in display order.
    pub metadata: Vec<(String, String)>,
    pub constructions: Vec<Construction>,
    pub models: Vec<ModelResults>,
}

pub const EFFECTS_HEADER: [&str; 6] = ["model_id", "construction", "item_id", "gap", "island", "filler_effect_bits"];
pub const SUMMARIES_HEADER: [&str; 7] = ["model_id", "construction", "gap", "island", "mean", "ci_half_width", "n"];
pub const FITS_HEADER: [&str; 11] = [
    "model_id",
    "construction",
    "analysis",
    "term",
    "estimate",
    "se",
    "t",
    "p",
    "sigma_item",
    "sigma_resid",
    "converged",
];
pub const VERDICTS_HEADER: [&str; 5] = ["model_id", "construction", "criterion", "result", "detail"];

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|source| ReportError::Csv {
            path: path.display().to_string(),
            source,
        })
}

fn write_table<const N: usize>(path: &Path, header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Result<()> {
    let err = |source| ReportError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `effects.csv`, `summaries.csv`, `fits.csv` and `verdicts.csv`
/// and returns their paths. Floats use the shortest representation that
/// parses back to the same value.
pub fn emit_tables(bundle: &ReportBundle, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let models = &bundle.models;
    let effects = out_dir.join("effects.csv");
    write_table(
        &effects,
        EFFECTS_HEADER,
        models.iter().flat_map(|m| {
            m.effects.iter().map(move |e| {
                [
                    m.model_id.clone(),
                    e.construction.to_string(),
                    e.item_id.to_string(),
                    e.gap.to_string(),
                    e.island.to_string(),
                    e.filler_effect_bits.to_string(),
                ]
            })
        }),
    )?;
    let summaries = out_dir.join("summaries.csv");
    write_table(
        &summaries,
        SUMMARIES_HEADER,
        models.iter().flat_map(|m| {
            m.summaries.iter().map(move |s| {
                [
                    m.model_id.clone(),
                    s.construction.to_string(),
                    s.gap.to_string(),
                    s.island.to_string(),
                    s.mean.to_string(),
                    s.ci_half_width.to_string(),
                    s.n.to_string(),
                ]
            })
        }),
    )?;
    let fits = out_dir.join("fits.csv");
    write_table(
        &fits,
        FITS_HEADER,
        models.iter().flat_map(|m| m.fits.iter()).map(|f| {
            [
                f.model_id.clone(),
                f.construction.to_string(),
                f.analysis.to_string(),
                f.term.clone(),
                f.estimate.to_string(),
                f.se.to_string(),
                f.t.to_string(),
                f.p.to_string(),
                f.sigma_item.to_string(),
                f.sigma_resid.to_string(),
                f.converged.to_string(),
            ]
        }),
    )?;
    let verdicts = out_dir.join("verdicts.csv");
    write_table(
        &verdicts,
        VERDICTS_HEADER,
        models.iter().flat_map(|m| m.verdicts.iter()).map(|v| {
            [
                v.model_id.clone(),
                v.construction.to_string(),
                v.criterion.name().to_string(),
                v.outcome.name().to_string(),
                v.detail.clone(),
            ]
        }),
    )?;
    Ok(vec![effects, summaries, fits, verdicts])
}

/// Tables parsed back from [`emit_tables`] output.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tables {
    pub effects: Vec<(String, EffectRecord)>,
    pub summaries: Vec<(String, EffectSummary)>,
    pub fits: Vec<FitRow>,
    pub verdicts: Vec<VerdictRow>,
}

fn read_table<const N: usize, T>(
    path: &Path,
    header: [&str; N],
    mut parse: impl FnMut(&csv::StringRecord) -> std::result::Result<T, String>,
) -> Result<Vec<T>> {
    let name = path.display().to_string();
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|source| ReportError::Csv {
            path: name.clone(),
            source,
        })?;
    let got = r.headers().map_err(|source| ReportError::Csv {
        path: name.clone(),
        source,
    })?;
    if got.iter().ne(header.iter().copied()) {
        return Err(ReportError::Parse {
            path: name,
            line: 1,
            message: format!("expected header {}", header.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|source| ReportError::Csv {
            path: name.clone(),
            source,
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push(parse(&rec).map_err(|message| ReportError::Parse {
            path: name.clone(),
            line,
            message,
        })?);
    }
    Ok(out)
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(i).ok_or_else(|| format!("missing column {name}"))?;
    raw.parse().map_err(|e| format!("column {name}: `{raw}`: {e}"))
}

pub fn read_tables(dir: &Path) -> Result<Tables> {
    let effects = read_table(&dir.join("effects.csv"), EFFECTS_HEADER, |r| {
        Ok((
            field(r, 0, "model_id")?,
            EffectRecord {
                construction: field(r, 1, "construction")?,
                item_id: field(r, 2, "item_id")?,
                gap: field(r, 3, "gap")?,
                island: field(r, 4, "island")?,
                filler_effect_bits: field(r, 5, "filler_effect_bits")?,
            },
        ))
    })?;
    let summaries = read_table(&dir.join("summaries.csv"), SUMMARIES_HEADER, |r| {
        Ok((
            field(r, 0, "model_id")?,
            EffectSummary {
                construction: field(r, 1, "construction")?,
                gap: field(r, 2, "gap")?,
                island: field(r, 3, "island")?,
                mean: field(r, 4, "mean")?,
                ci_half_width: field(r, 5, "ci_half_width")?,
                n: field(r, 6, "n")?,
            },
        ))
    })?;
    let fits = read_table(&dir.join("fits.csv"), FITS_HEADER, |r| {
        let analysis: String = field(r, 2, "analysis")?;
        Ok(FitRow {
            model_id: field(r, 0, "model_id")?,
            construction: field(r, 1, "construction")?,
            analysis: [Analysis::BasicLicensing, Analysis::IslandThreeWay, Analysis::Fge, Analysis::Uge]
                .into_iter()
                .find(|a| a.name() == analysis)
                .ok_or_else(|| format!("unknown analysis `{analysis}`"))?,
            term: field(r, 3, "term")?,
            estimate: field(r, 4, "estimate")?,
            se: field(r, 5, "se")?,
            t: field(r, 6, "t")?,
            p: field(r, 7, "p")?,
            sigma_item: field(r, 8, "sigma_item")?,
            sigma_resid: field(r, 9, "sigma_resid")?,
            converged: field(r, 10, "converged")?,
        })
    })?;
    let verdicts = read_table(&dir.join("verdicts.csv"), VERDICTS_HEADER, |r| {
        Ok(VerdictRow {
            model_id: field(r, 0, "model_id")?,
            construction: field(r, 1, "construction")?,
            criterion: field(r, 2, "criterion")?,
            outcome: field(r, 3, "result")?,
            detail: field(r, 4, "detail")?,
        })
    })?;
    Ok(Tables {
        effects,
        summaries,
        fits,
        verdicts,
    })
}

// Chart geometry, in SVG user units.
const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_T: f64 = 48.0;
const MARGIN_B: f64 = 56.0;
const BAR_W: f64 = 36.0;
const PLOT_H: f64 = PANEL_H - MARGIN_T - MARGIN_B;

const PLUS_GAP_FILL: &str = "#3b6fb6";
const MINUS_GAP_FILL: &str = "#e0873a";

fn cell<'a>(
    summaries: &'a [EffectSummary],
    construction: Construction,
    gap: Sign,
    island: Sign,
) -> Option<&'a EffectSummary> {
    summaries
        .iter()
        .find(|s| s.construction == construction && s.gap == gap && s.island == island)
}

/// Grouped bar chart of filler effects for one construction under two
/// models: one panel per model, one group per island level, a `+gap` and a
/// `-gap` bar per group, 95% CI whiskers and a zero line.
///
/// Every bar is a `<rect class="bar ...">` and every whisker a
/// `<line class="whisker ...">`, both carrying `data-*` attributes naming
/// their cell, so the geometry can be checked after rendering.
pub fn render_effect_chart(
    construction: Construction,
    model_a: (&str, &[EffectSummary]),
    model_b: (&str, &[EffectSummary]),
) -> Result<String> {
    let mut panels = Vec::new();
    for (model, summaries) in [model_a, model_b] {
        let mut groups = Vec::new();
        for island in [Sign::Minus, Sign::Plus] {
            let plus = cell(summaries, construction, Sign::Plus, island);
            let minus = cell(summaries, construction, Sign::Minus, island);
            match (plus, minus) {
                (Some(p), Some(m)) => groups.push((island, [p, m])),
                (None, None) if island == Sign::Plus => {}
                (p, _) => {
                    return Err(ReportError::MissingSummary {
                        model: model.to_string(),
                        construction,
                        gap: if p.is_none() { Sign::Plus } else { Sign::Minus },
                        island,
                    })
                }
            }
        }
        panels.push((model, groups));
    }

    // One shared scale so both panels are comparable.
    let extent = panels
        .iter()
        .flat_map(|(_, g)| g.iter().flat_map(|(_, cells)| cells.iter()))
        .map(|s| s.mean.abs() + s.ci_half_width)
        .fold(0.0f64, f64::max);
    let extent = if extent > 0.0 { extent * 1.1 } else { 1.0 };
    let px_per_bit = (PLOT_H / 2.0) / extent;
    let zero_y = MARGIN_T + PLOT_H / 2.0;
    let y = |v: f64| zero_y - v * px_per_bit;

    let width = PANEL_W * panels.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{PANEL_H:.0}" viewBox="0 0 {width:.0} {PANEL_H:.0}" data-px-per-bit="{px_per_bit:.6}">"#
    );
    let _ = writeln!(svg, r#"<title>{} filler effects</title>"#, escape(construction.label()));
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{width:.0}" height="{PANEL_H:.0}" fill="white"/>"#);
    for (k, (model, groups)) in panels.iter().enumerate() {
        let x0 = k as f64 * PANEL_W;
        let _ = writeln!(svg, r#"<g class="panel" data-model="{}">"#, escape(model));
        let _ = writeln!(
            svg,
            r#"<text x="{:.3}" y="20" font-family="sans-serif" font-size="13" text-anchor="middle">{} ({})</text>"#,
            x0 + PANEL_W / 2.0,
            escape(construction.label()),
            escape(model)
        );
        // y axis with ticks at the rounded extent
        let _ = writeln!(
            svg,
            r##"<line class="axis" x1="{:.3}" y1="{MARGIN_T:.3}" x2="{:.3}" y2="{:.3}" stroke="#333"/>"##,
            x0 + MARGIN_L,
            x0 + MARGIN_L,
            MARGIN_T + PLOT_H
        );
        for tick in [-extent / 1.1, 0.0, extent / 1.1] {
            let _ = writeln!(
                svg,
                r#"<text x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="10" text-anchor="end">{:.2}</text>"#,
                x0 + MARGIN_L - 4.0,
                y(tick) + 3.0,
                tick
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="10" transform="rotate(-90 {:.3} {:.3})" text-anchor="middle">filler effect (bits)</text>"#,
            x0 + 14.0,
            zero_y,
            x0 + 14.0,
            zero_y
        );
        let inner = PANEL_W - MARGIN_L - 16.0;
        let group_w = inner / 2.0;
        for (gi, (island, cells)) in groups.iter().enumerate() {
            let gx = x0 + MARGIN_L + gi as f64 * group_w + group_w / 2.0;
            let label = if *island == Sign::Plus { "island" } else { "simple" };
            for (bi, s) in cells.iter().enumerate() {
                let bx = gx - BAR_W - 2.0 + bi as f64 * (BAR_W + 4.0);
                let (top, h) = if s.mean >= 0.0 {
                    (y(s.mean), s.mean * px_per_bit)
                } else {
                    (zero_y, -s.mean * px_per_bit)
                };
                let fill = if s.gap == Sign::Plus { PLUS_GAP_FILL } else { MINUS_GAP_FILL };
                let gap_class = if s.gap == Sign::Plus { "gap-plus" } else { "gap-minus" };
                let attrs = format!(
                    r#"data-model="{}" data-gap="{}" data-island="{}" data-mean="{}" data-ci="{}""#,
                    escape(model),
                    s.gap,
                    s.island,
                    s.mean,
                    s.ci_half_width
                );
                let _ = writeln!(
                    svg,
                    r#"<rect class="bar {gap_class}" {attrs} x="{bx:.3}" y="{top:.3}" width="{BAR_W:.3}" height="{h:.3}" fill="{fill}"/>"#
                );
                let cx = bx + BAR_W / 2.0;
                let (lo, hi) = (y(s.mean - s.ci_half_width), y(s.mean + s.ci_half_width));
                let _ = writeln!(
                    svg,
                    r##"<line class="whisker {gap_class}" {attrs} x1="{cx:.3}" y1="{lo:.3}" x2="{cx:.3}" y2="{hi:.3}" stroke="#111"/>"##
                );
                for wy in [lo, hi] {
                    let _ = writeln!(
                        svg,
                        r##"<line class="whisker-cap" x1="{:.3}" y1="{wy:.3}" x2="{:.3}" y2="{wy:.3}" stroke="#111"/>"##,
                        cx - 5.0,
                        cx + 5.0
                    );
                }
            }
            let _ = writeln!(
                svg,
                r#"<text x="{gx:.3}" y="{:.3}" font-family="sans-serif" font-size="11" text-anchor="middle">{label}</text>"#,
                MARGIN_T + PLOT_H + 16.0
            );
        }
        let _ = writeln!(
            svg,
            r##"<line class="zero-line" x1="{:.3}" y1="{zero_y:.3}" x2="{:.3}" y2="{zero_y:.3}" stroke="#000" stroke-dasharray="3,2"/>"##,
            x0 + MARGIN_L,
            x0 + PANEL_W - 16.0
        );
        svg.push_str("</g>\n");
    }
    // legend
    let ly = PANEL_H - 14.0;
    for (k, (fill, text)) in [(PLUS_GAP_FILL, "+gap"), (MINUS_GAP_FILL, "-gap")].iter().enumerate() {
        let lx = MARGIN_L + k as f64 * 70.0;
        let _ = writeln!(svg, r#"<rect x="{lx:.3}" y="{:.3}" width="10" height="10" fill="{fill}"/>"#, ly - 9.0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.3}" y="{ly:.3}" font-family="sans-serif" font-size="11">{text}</text>"#,
            lx + 14.0
        );
    }
    let _ = writeln!(svg, r#"<text x="{:.3}" y="{ly:.3}" font-family="sans-serif" font-size="10">whiskers: 95% CI</text>"#, MARGIN_L + 150.0);
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |x| format!("{x:.3}"))
}

/// Markdown report: metadata, perplexities, the verdict matrix (one row per
/// model and construction) and links to `charts` (construction, relative
/// path).
pub fn render_report(bundle: &ReportBundle, charts: &[(Construction, String)]) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# {}\n", bundle.title);
    if !bundle.metadata.is_empty() {
        md.push_str("## Run\n\n| key | value |\n|---|---|\n");
        for (k, v) in &bundle.metadata {
            let _ = writeln!(md, "| {} | `{}` |", k, v.replace('|', "\\|"));
        }
        md.push('\n');
    }
    md.push_str("## Models\n\n| model | validation perplexity |\n|---|---|\n");
    for m in &bundle.models {
        let _ = writeln!(md, "| {} | {} |", m.model_id, fmt_opt(m.valid_perplexity));
    }
    md.push('\n');

    md.push_str("## Verdicts\n\n");
    let _ = write!(md, "| model | construction |");
    for c in Criterion::ALL {
        let _ = write!(md, " {} |", c.heading());
    }
    md.push_str("\n|---|---|");
    md.push_str(&"---|".repeat(Criterion::ALL.len()));
    md.push('\n');
    for m in &bundle.models {
        let index: BTreeMap<(Construction, Criterion), Outcome> = m
            .verdicts
            .iter()
            .map(|v| ((v.construction, v.criterion), v.outcome))
            .collect();
        for &construction in &bundle.constructions {
            let _ = write!(md, "| {} | {} |", m.model_id, construction.label());
            for c in Criterion::ALL {
                let cell = match index.get(&(construction, c)) {
                    Some(Outcome::Pass) => "pass",
                    Some(Outcome::Fail) => "fail",
                    Some(Outcome::NotTested) | None => "not tested",
                };
                let _ = write!(md, " {cell} |");
            }
            md.push('\n');
        }
    }
    md.push('\n');

    md.push_str("## Filler effects\n\n| model | construction | gap | island | mean (bits) | 95% CI | n |\n|---|---|---|---|---|---|---|\n");
    for m in &bundle.models {
        for s in &m.summaries {
            let (lo, hi) = s.ci();
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {:.3} | [{:.3}, {:.3}] | {} |",
                m.model_id,
                s.construction.label(),
                s.gap,
                s.island,
                s.mean,
                lo,
                hi,
                s.n
            );
        }
    }
    md.push('\n');

    if !charts.is_empty() {
        md.push_str("## Charts\n\n");
        for (construction, path) in charts {
            let _ = writeln!(md, "![{}]({})\n", construction.label(), path);
        }
    }
    md
}

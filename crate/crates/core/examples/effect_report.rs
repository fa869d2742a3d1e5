//! Analyze two models' region scores and write the CSV tables, the effect
//! chart and the Markdown report.
//!
//!     cargo run --example effect_report -- [out_dir]

use std::path::PathBuf;

use gaplab::orchestrator::analyze_model;
use gaplab::report::{emit_tables, render_effect_chart, render_report, ReportBundle};
use gaplab::scoring::RegionScore;
use gaplab::{Condition, Construction};

/// Region surprisals with a licensing interaction of `licensing` bits and
/// an island penalty that cancels `blocked` of it.
fn scores(licensing: f64, blocked: f64) -> Vec<RegionScore> {
    let c = Construction::WhMovement;
    let mut out = Vec::new();
    for item in 1..=24u32 {
        let wobble = (item as f64 * 0.9).sin();
        for cond in Condition::all() {
            let (f, g, i) = (cond.filler.code(), cond.gap.code(), cond.island.code());
            let island = if cond.island.is_plus() { blocked } else { 0.0 };
            out.push(RegionScore {
                construction: c,
                item_id: item,
                filler: cond.filler,
                gap: cond.gap,
                island: cond.island,
                region_surprisal_bits: 7.0 + wobble + licensing * (1.0 - island) * f * g + 0.2 * wobble * f + 0.3 * i,
            });
        }
    }
    out
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "effect_report".into()));
    let c = Construction::WhMovement;
    let base = analyze_model("base", &scores(-2.0, 0.3), &[c], 0.001)?;
    let aug = analyze_model("aug", &scores(-4.0, 0.95), &[c], 0.001)?;
    let chart = render_effect_chart(c, ("base", &base.summaries), ("aug", &aug.summaries))?;
    let bundle = ReportBundle {
        title: "Example report".into(),
        metadata: vec![("items".into(), "24".into())],
        constructions: vec![c],
        models: vec![base, aug],
    };
    std::fs::create_dir_all(&out)?;
    for path in emit_tables(&bundle, &out)? {
        println!("wrote {}", path.display());
    }
    std::fs::write(out.join(format!("{}.svg", c.name())), &chart)?;
    std::fs::write(out.join("report.md"), render_report(&bundle, &[(c, format!("{}.svg", c.name()))]))?;
    println!("wrote {}", out.join("report.md").display());
    Ok(())
}

use gaplab::report::{emit_tables, read_tables, render_effect_chart, render_report, FitRow, ModelResults, ReportBundle, VerdictRow};
use gaplab::scoring::{classify_pattern, compute_effects, effect_summary, EffectSummary, RegionScore};
use gaplab::stats::{basic_licensing_test, Analysis};
use gaplab::{Condition, Construction, Sign};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scores(c: Construction, items: u32, seed: u64) -> Vec<RegionScore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for item in 1..=items {
        for cond in Condition::all() {
            out.push(RegionScore {
                construction: c,
                item_id: item,
                filler: cond.filler,
                gap: cond.gap,
                island: cond.island,
                // awkward binary fractions exercise float round trips
                region_surprisal_bits: rng.gen_range(0.0..20.0) / 3.0 + if cond.filler == Sign::Plus { 0.1 } else { 0.0 },
            });
        }
    }
    out
}

fn model(id: &str, seed: u64) -> ModelResults {
    let c = Construction::Clefting;
    let s = scores(c, 12, seed);
    let effects = compute_effects(&s).unwrap();
    let summaries = effect_summary(&effects).unwrap();
    let (fit, v) = basic_licensing_test(&s, c, 0.001).unwrap();
    let mut verdicts: Vec<VerdictRow> = classify_pattern(&summaries)
        .unwrap()
        .iter()
        .flat_map(|p| VerdictRow::from_pattern(id, p))
        .collect();
    verdicts.push(VerdictRow::from_stats(id, &v));
    ModelResults {
        model_id: id.into(),
        valid_perplexity: Some(12.5),
        effects,
        summaries,
        fits: FitRow::from_fit(id, c, Analysis::BasicLicensing, &fit),
        verdicts,
    }
}

#[test]
fn tables_round_trip_exactly() {
    let bundle = ReportBundle {
        title: "t".into(),
        constructions: vec![Construction::Clefting],
        models: vec![model("base", 1), model("aug", 2)],
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let files = emit_tables(&bundle, dir.path()).unwrap();
    assert_eq!(files.len(), 4);
    let back = read_tables(dir.path()).unwrap();
    let mut n = 0;
    for m in &bundle.models {
        let effects: Vec<_> = back.effects.iter().filter(|(id, _)| *id == m.model_id).map(|(_, e)| e.clone()).collect();
        assert_eq!(effects, m.effects);
        let summaries: Vec<_> = back.summaries.iter().filter(|(id, _)| *id == m.model_id).map(|(_, s)| s.clone()).collect();
        assert_eq!(summaries, m.summaries);
        n += m.fits.len();
    }
    assert_eq!(back.fits.len(), n);
    assert_eq!(back.fits, [bundle.models[0].fits.clone(), bundle.models[1].fits.clone()].concat());
    assert_eq!(back.verdicts, [bundle.models[0].verdicts.clone(), bundle.models[1].verdicts.clone()].concat());

    // byte-deterministic
    let other = tempfile::tempdir().unwrap();
    emit_tables(&bundle, other.path()).unwrap();
    for f in ["effects.csv", "summaries.csv", "fits.csv", "verdicts.csv"] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(other.path().join(f)).unwrap());
    }
}

fn attr(node: &roxmltree::Node, name: &str) -> f64 {
    node.attribute(name).unwrap().parse().unwrap()
}

#[test]
fn chart_geometry_is_proportional_to_the_data() {
    let c = Construction::Clefting;
    let cell = |gap, island, mean, half| EffectSummary {
        construction: c,
        gap,
        island,
        mean,
        ci_half_width: half,
        n: 10,
    };
    let a = vec![
        cell(Sign::Plus, Sign::Minus, -2.0, 0.5),
        cell(Sign::Minus, Sign::Minus, 1.5, 0.25),
        cell(Sign::Plus, Sign::Plus, -0.5, 0.75),
        cell(Sign::Minus, Sign::Plus, 0.0, 0.1),
    ];
    let b = vec![
        cell(Sign::Plus, Sign::Minus, -3.0, 1.0),
        cell(Sign::Minus, Sign::Minus, 2.5, 0.5),
        cell(Sign::Plus, Sign::Plus, -1.0, 0.2),
        cell(Sign::Minus, Sign::Plus, 0.4, 0.3),
    ];
    let svg = render_effect_chart(c, ("base", &a), ("aug", &b)).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let zero: Vec<f64> = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("zero-line"))
        .map(|n| attr(&n, "y1"))
        .collect();
    assert_eq!(zero.len(), 2);
    let zero_y = zero[0];

    let mut scale = None::<f64>;
    let mut check = |px: f64, bits: f64| {
        if bits.abs() < 1e-12 {
            assert!(px.abs() < 2e-3);
            return;
        }
        let k = px / bits;
        let s = *scale.get_or_insert(k);
        assert!((k - s).abs() < 1e-3 * s, "{k} vs {s}");
    };
    let mut bars = 0;
    let mut whiskers = 0;
    for n in doc.descendants() {
        let class = n.attribute("class").unwrap_or("");
        if class.starts_with("bar ") {
            bars += 1;
            let mean: f64 = attr(&n, "data-mean");
            let (y, h) = (attr(&n, "y"), attr(&n, "height"));
            check(h, mean.abs());
            // bars start at the zero line and extend toward the sign of the mean
            if mean > 0.0 {
                assert!((y + h - zero_y).abs() < 2e-3);
            } else {
                assert!((y - zero_y).abs() < 2e-3);
            }
        } else if class.starts_with("whisker ") {
            whiskers += 1;
            let (mean, half) = (attr(&n, "data-mean"), attr(&n, "data-ci"));
            let (lo, hi) = (attr(&n, "y1"), attr(&n, "y2"));
            check(lo - hi, 2.0 * half);
            check(zero_y - (lo + hi) / 2.0, mean);
        }
    }
    assert_eq!((bars, whiskers), (8, 8));
    assert!(scale.unwrap() > 0.0);
}

#[test]
fn chart_without_island_cells_has_one_group_per_panel() {
    let c = Construction::TopicalizationNoIntro;
    let s = vec![
        EffectSummary { construction: c, gap: Sign::Plus, island: Sign::Minus, mean: -1.0, ci_half_width: 0.3, n: 5 },
        EffectSummary { construction: c, gap: Sign::Minus, island: Sign::Minus, mean: 0.7, ci_half_width: 0.3, n: 5 },
    ];
    let svg = render_effect_chart(c, ("a", &s), ("b", &s)).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let bars = doc.descendants().filter(|n| n.attribute("class").is_some_and(|c| c.starts_with("bar "))).count();
    assert_eq!(bars, 4);
    assert!(render_effect_chart(c, ("a", &s), ("b", &s[..1])).is_err());
}

#[test]
fn report_lists_every_model_and_construction() {
    let bundle = ReportBundle {
        title: "Run".into(),
        metadata: vec![("seed".into(), "7".into())],
        constructions: vec![Construction::Clefting, Construction::WhMovement],
        models: vec![model("base", 1), model("aug", 2)],
    };
    let md = render_report(&bundle, &[(Construction::Clefting, "clefting.svg".into())]);
    assert!(md.starts_with("# Run\n"));
    assert!(md.contains("| seed | `7` |"));
    assert!(md.contains("![Clefting](clefting.svg)"));
    for m in ["base", "aug"] {
        assert!(md.contains(&format!("| {m} | 12.500 |")));
        // wh-movement has no verdict rows at all, so every cell is untested
        let row = md.lines().find(|l| l.starts_with(&format!("| {m} | Wh-movement |"))).unwrap();
        assert_eq!(row.matches("not tested").count(), 7);
        let row = md.lines().find(|l| l.starts_with(&format!("| {m} | Clefting |"))).unwrap();
        assert_eq!(row.matches("not tested").count(), 3);
    }
}

//! Sum-coded linear mixed-effects regression with a per-item random
//! intercept, fitted by REML, and the verdict rules built on it.
//!
//! With `θ = σ²_item / σ²_resid`, each item's marginal covariance is
//! `σ²(I + θ11ᵀ)`, whose inverse and determinant have closed forms. The
//! fixed effects and `σ²` are profiled out and `log θ` is searched on a
//! coarse grid, then refined by golden-section search.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::scoring::RegionScore;
use crate::{Condition, Construction, Sign};

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("unknown factor level `{0}` (expected `+` or `-`)")]
    UnknownLevel(String),
    #[error("need at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("need more observations ({n}) than fixed effects ({p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("design matrix is rank deficient (rank {rank} < {p} columns: {terms})")]
    RankDeficient { rank: usize, p: usize, terms: String },
    #[error("design has {rows} rows but {responses} responses and {groups} group labels")]
    ShapeMismatch { rows: usize, responses: usize, groups: usize },
    #[error("{construction}: no scores for {condition}")]
    MissingCondition {
        construction: Construction,
        condition: Condition,
    },
    #[error("response for item {0} is not finite")]
    NonFiniteResponse(u32),
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// `+` codes as +0.5, `-` as -0.5.
pub fn sum_code(level: &str) -> Result<f64> {
    match level.trim() {
        "+" => Ok(0.5),
        "-" => Ok(-0.5),
        other => Err(StatsError::UnknownLevel(other.to_string())),
    }
}

impl Sign {
    pub fn code(self) -> f64 {
        match self {
            Sign::Plus => 0.5,
            Sign::Minus => -0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Filler,
    Gap,
    Island,
}

impl Factor {
    pub fn name(self) -> &'static str {
        match self {
            Factor::Filler => "filler",
            Factor::Gap => "gap",
            Factor::Island => "island",
        }
    }

    fn level(self, row: &DesignRow) -> Sign {
        match self {
            Factor::Filler => row.filler,
            Factor::Gap => row.gap,
            Factor::Island => row.island,
        }
    }
}

/// One observation. Factors not in the formula are ignored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignRow {
    pub item_id: u32,
    pub response: f64,
    pub filler: Sign,
    pub gap: Sign,
    pub island: Sign,
}

impl From<&RegionScore> for DesignRow {
    fn from(s: &RegionScore) -> Self {
        DesignRow {
            item_id: s.item_id,
            response: s.region_surprisal_bits,
            filler: s.filler,
            gap: s.gap,
            island: s.island,
        }
    }
}

/// Full-factorial terms over `factors`: intercept, main effects, then
/// interactions by increasing order, e.g. `filler:gap`.
pub fn factorial_terms(factors: &[Factor]) -> Vec<Vec<Factor>> {
    let k = factors.len();
    let mut subsets: Vec<Vec<Factor>> = (0u32..1 << k)
        .map(|mask| (0..k).filter(|i| mask & (1 << i) != 0).map(|i| factors[i]).collect())
        .collect();
    subsets.sort_by_key(|s| s.len());
    subsets
}

fn term_name(term: &[Factor]) -> String {
    if term.is_empty() {
        "(Intercept)".to_string()
    } else {
        term.iter().map(|f| f.name()).collect::<Vec<_>>().join(":")
    }
}

/// Fixed-effects design plus the grouping factor.
#[derive(Clone, Debug)]
pub struct Design {
    pub terms: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub groups: Vec<u32>,
}

impl Design {
    pub fn new(terms: Vec<String>, x: DMatrix<f64>, y: DVector<f64>, groups: Vec<u32>) -> Result<Design> {
        if x.nrows() != y.len() || x.nrows() != groups.len() || x.ncols() != terms.len() {
            return Err(StatsError::ShapeMismatch {
                rows: x.nrows(),
                responses: y.len(),
                groups: groups.len(),
            });
        }
        Ok(Design { terms, x, y, groups })
    }

    pub fn from_rows(rows: &[DesignRow], factors: &[Factor]) -> Result<Design> {
        let terms = factorial_terms(factors);
        let x = DMatrix::from_fn(rows.len(), terms.len(), |r, c| {
            terms[c].iter().map(|f| f.level(&rows[r]).code()).product()
        });
        if let Some(r) = rows.iter().find(|r| !r.response.is_finite()) {
            return Err(StatsError::NonFiniteResponse(r.item_id));
        }
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.response));
        Design::new(
            terms.iter().map(|t| term_name(t)).collect(),
            x,
            y,
            rows.iter().map(|r| r.item_id).collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermEstimate {
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

impl TermEstimate {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p < alpha
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmmFit {
    pub terms: Vec<TermEstimate>,
    pub sigma2_item: f64,
    pub sigma2_resid: f64,
    pub theta: f64,
    pub reml_loglik: f64,
    pub converged: bool,
    pub n_obs: usize,
    pub n_items: usize,
}

impl LmmFit {
    pub fn term(&self, name: &str) -> Option<&TermEstimate> {
        self.terms.iter().find(|t| t.term == name)
    }
}

/// Two-sided normal-approximation p-value `2 (1 - Φ(|t|))`.
pub fn wald_p(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    let n = Normal::new(0.0, 1.0).unwrap();
    (2.0 * n.cdf(-t.abs())).min(1.0)
}

struct GroupStats {
    n: f64,
    /// Column sums of the group's rows.
    s: DVector<f64>,
    /// Response sum.
    t: f64,
}

struct Sufficient {
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    groups: Vec<GroupStats>,
    /// Row indices per group, in group order.
    members: Vec<Vec<usize>>,
    n: usize,
    p: usize,
}

impl Sufficient {
    fn new(d: &Design) -> Sufficient {
        let p = d.x.ncols();
        let mut index: BTreeMap<u32, usize> = BTreeMap::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (r, g) in d.groups.iter().enumerate() {
            let k = *index.entry(*g).or_insert_with(|| {
                members.push(Vec::new());
                members.len() - 1
            });
            members[k].push(r);
        }
        let groups = members
            .iter()
            .map(|rows| {
                let mut s = DVector::zeros(p);
                let mut t = 0.0;
                for &r in rows {
                    s += d.x.row(r).transpose();
                    t += d.y[r];
                }
                GroupStats {
                    n: rows.len() as f64,
                    s,
                    t,
                }
            })
            .collect();
        Sufficient {
            xtx: d.x.transpose() * &d.x,
            xty: d.x.transpose() * &d.y,
            yty: d.y.dot(&d.y),
            groups,
            members,
            n: d.x.nrows(),
            p,
        }
    }

    /// `X'H⁻¹X`, `X'H⁻¹y`, `y'H⁻¹y` and `log|H|` at ratio `theta`.
    fn gls(&self, theta: f64) -> (DMatrix<f64>, DVector<f64>, f64, f64) {
        let mut a = self.xtx.clone();
        let mut b = self.xty.clone();
        let mut yhy = self.yty;
        let mut logdet = 0.0;
        if theta > 0.0 {
            for g in &self.groups {
                let c = theta / (1.0 + theta * g.n);
                a.ger(-c, &g.s, &g.s, 1.0);
                b.axpy(-c * g.t, &g.s, 1.0);
                yhy -= c * g.t * g.t;
                logdet += (theta * g.n).ln_1p();
            }
        }
        (a, b, yhy, logdet)
    }

    /// Profiled REML log-likelihood at `theta`.
    fn objective(&self, theta: f64) -> f64 {
        let (a, b, yhy, logdet_h) = self.gls(theta);
        let Some(chol) = a.cholesky() else {
            return f64::NEG_INFINITY;
        };
        let beta = chol.solve(&b);
        let rss = yhy - b.dot(&beta);
        let dof = (self.n - self.p) as f64;
        if !(rss > 0.0) {
            return f64::INFINITY;
        }
        let sigma2 = rss / dof;
        let logdet_a: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        -0.5 * (dof * (1.0 + (2.0 * PI * sigma2).ln()) + logdet_h + logdet_a)
    }

    /// Residual quadratic form `r'H⁻¹r`, computed from the residuals
    /// directly to avoid cancellation near an exact fit.
    fn residual_rss(&self, d: &Design, beta: &DVector<f64>, theta: f64) -> f64 {
        let r = &d.y - &d.x * beta;
        self.groups
            .iter()
            .zip(&self.members)
            .map(|(g, rows)| {
                let sum: f64 = rows.iter().map(|&i| r[i]).sum();
                let sq: f64 = rows.iter().map(|&i| r[i] * r[i]).sum();
                sq - theta / (1.0 + theta * g.n) * sum * sum
            })
            .sum()
    }
}

/// Profiled REML log-likelihood of a random-intercept model at variance
/// ratio `theta >= 0`.
pub fn reml_log_likelihood(design: &Design, theta: f64) -> f64 {
    Sufficient::new(design).objective(theta)
}

const PHI_MIN: f64 = -12.0;
const PHI_MAX: f64 = 10.0;
const GRID_STEP: f64 = 0.25;
const PHI_TOL: f64 = 1e-8;

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > PHI_TOL {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn check(design: &Design) -> Result<(usize, usize)> {
    let (n, p) = (design.x.nrows(), design.x.ncols());
    let items: std::collections::BTreeSet<u32> = design.groups.iter().copied().collect();
    if items.len() < 2 {
        return Err(StatsError::TooFewItems(items.len()));
    }
    if n <= p {
        return Err(StatsError::TooFewObservations { n, p });
    }
    let sv = design.x.clone().svd(false, false).singular_values;
    let max = sv.max();
    let rank = sv.iter().filter(|&&s| s > max * 1e-10).count();
    if rank < p {
        return Err(StatsError::RankDeficient {
            rank,
            p,
            terms: design.terms.join(", "),
        });
    }
    Ok((n, items.len()))
}

/// Fits at a fixed variance ratio. With `theta = 0` this is ordinary
/// least squares.
pub fn fit_at_theta(design: &Design, theta: f64) -> Result<LmmFit> {
    let (n, n_items) = check(design)?;
    let suff = Sufficient::new(design);
    Ok(finish(design, &suff, theta, true, n, n_items))
}

pub fn fit_design(design: &Design) -> Result<LmmFit> {
    let (n, n_items) = check(design)?;
    let suff = Sufficient::new(design);

    // An exact fit at θ = 0 is exact at every θ: the residual variance is
    // zero and the ratio is not identifiable.
    let (a0, b0, _, _) = suff.gls(0.0);
    let beta0 = a0.cholesky().expect("full rank").solve(&b0);
    let exact_tol = 1e-20 * suff.yty.max(f64::MIN_POSITIVE);
    if suff.residual_rss(design, &beta0, 0.0) <= exact_tol {
        return Ok(finish(design, &suff, 0.0, true, n, n_items));
    }

    let obj = |phi: f64| suff.objective(phi.exp());
    let steps = ((PHI_MAX - PHI_MIN) / GRID_STEP).round() as usize;
    let grid: Vec<(f64, f64)> = (0..=steps)
        .map(|k| {
            let phi = PHI_MIN + k as f64 * GRID_STEP;
            (phi, obj(phi))
        })
        .collect();
    let (k, _) = grid
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bk, bv), (k, &(_, v))| if v > bv { (k, v) } else { (bk, bv) });
    let lo = grid[k.saturating_sub(1)].0;
    let hi = grid[(k + 1).min(steps)].0;
    let (phi, best) = golden_max(obj, lo, hi);
    let at_zero = suff.objective(0.0);
    let (theta, converged) = if at_zero >= best {
        (0.0, at_zero.is_finite())
    } else {
        (phi.exp(), best.is_finite() && k < steps && phi < PHI_MAX - 2.0 * PHI_TOL)
    };
    Ok(finish(design, &suff, theta, converged, n, n_items))
}

fn finish(design: &Design, suff: &Sufficient, theta: f64, converged: bool, n: usize, n_items: usize) -> LmmFit {
    let (a, b, _, _) = suff.gls(theta);
    let chol = a.cholesky().expect("X'H⁻¹X is positive definite for a full-rank design");
    let beta = chol.solve(&b);
    let rss = suff.residual_rss(design, &beta, theta).max(0.0);
    let exact = rss <= 1e-20 * suff.yty.max(f64::MIN_POSITIVE);
    let sigma2 = if exact { 0.0 } else { rss / (n - suff.p) as f64 };
    let a_inv = chol.inverse();
    let scale = design.y.amax().max(1.0);
    let terms = design
        .terms
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let estimate = beta[j];
            let se = (sigma2 * a_inv[(j, j)]).max(0.0).sqrt();
            let t = if se > 0.0 {
                estimate / se
            } else if estimate.abs() <= 1e-9 * scale {
                0.0
            } else {
                estimate.signum() * f64::INFINITY
            };
            TermEstimate {
                term: name.clone(),
                estimate,
                se,
                t,
                p: wald_p(t),
            }
        })
        .collect();
    LmmFit {
        terms,
        sigma2_item: theta * sigma2,
        sigma2_resid: sigma2,
        theta,
        reml_loglik: if exact { f64::INFINITY } else { suff.objective(theta) },
        converged,
        n_obs: n,
        n_items,
    }
}

/// `response ~ full factorial of factors + (1 | item)`.
pub fn fit_lmm(rows: &[DesignRow], factors: &[Factor]) -> Result<LmmFit> {
    fit_design(&Design::from_rows(rows, factors)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    BasicLicensing,
    IslandThreeWay,
    Fge,
    Uge,
}

impl Analysis {
    pub fn name(self) -> &'static str {
        match self {
            Analysis::BasicLicensing => "basic_licensing",
            Analysis::IslandThreeWay => "island_three_way",
            Analysis::Fge => "fge",
            Analysis::Uge => "uge",
        }
    }
}

impl std::fmt::Display for Analysis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub construction: Construction,
    pub analysis: Analysis,
    pub pass: bool,
    pub detail: String,
}

/// Filler × gap interaction negative and significant.
pub fn licensing_rule(interaction: &TermEstimate, alpha: f64) -> bool {
    interaction.estimate < 0.0 && interaction.significant(alpha)
}

/// Filler × gap negative and filler × gap × island positive, both
/// significant.
pub fn three_way_rule(filler_gap: &TermEstimate, three_way: &TermEstimate, alpha: f64) -> bool {
    filler_gap.estimate < 0.0 && filler_gap.significant(alpha) && three_way.estimate > 0.0 && three_way.significant(alpha)
}

/// All terms positive and significant.
pub fn fge_rule(terms: &[&TermEstimate], alpha: f64) -> bool {
    terms.iter().all(|t| t.estimate > 0.0 && t.significant(alpha))
}

/// All terms negative and significant.
pub fn uge_rule(terms: &[&TermEstimate], alpha: f64) -> bool {
    terms.iter().all(|t| t.estimate < 0.0 && t.significant(alpha))
}

fn rows_for(scores: &[RegionScore], construction: Construction, keep: impl Fn(&RegionScore) -> bool) -> Vec<DesignRow> {
    scores
        .iter()
        .filter(|s| s.construction == construction && keep(s))
        .map(DesignRow::from)
        .collect()
}

fn describe(terms: &[&TermEstimate]) -> String {
    terms
        .iter()
        .map(|t| format!("{} {:+.3} (p={:.3e})", t.term, t.estimate, t.p))
        .collect::<Vec<_>>()
        .join("; ")
}

fn term<'a>(fit: &'a LmmFit, name: &str) -> &'a TermEstimate {
    fit.term(name).expect("term present in the factorial design")
}

/// `surprisal ~ filler * gap + (1 | item)` on non-island sentences.
pub fn basic_licensing_test(scores: &[RegionScore], construction: Construction, alpha: f64) -> Result<(LmmFit, Verdict)> {
    let rows = rows_for(scores, construction, |s| s.island == Sign::Minus);
    let fit = fit_lmm(&rows, &[Factor::Filler, Factor::Gap])?;
    let fg = term(&fit, "filler:gap");
    let verdict = Verdict {
        construction,
        analysis: Analysis::BasicLicensing,
        pass: licensing_rule(fg, alpha),
        detail: describe(&[fg]),
    };
    Ok((fit, verdict))
}

/// `surprisal ~ filler * gap * island + (1 | item)` on all eight cells.
pub fn island_three_way_test(scores: &[RegionScore], construction: Construction, alpha: f64) -> Result<(LmmFit, Verdict)> {
    let rows = rows_for(scores, construction, |_| true);
    for condition in Condition::all() {
        let present = rows
            .iter()
            .any(|r| r.filler == condition.filler && r.gap == condition.gap && r.island == condition.island);
        if !present {
            return Err(StatsError::MissingCondition {
                construction,
                condition,
            });
        }
    }
    let fit = fit_lmm(&rows, &[Factor::Filler, Factor::Gap, Factor::Island])?;
    let (fg, fgi) = (term(&fit, "filler:gap"), term(&fit, "filler:gap:island"));
    let verdict = Verdict {
        construction,
        analysis: Analysis::IslandThreeWay,
        pass: three_way_rule(fg, fgi, alpha),
        detail: describe(&[fg, fgi]),
    };
    Ok((fit, verdict))
}

/// `surprisal ~ filler * island + (1 | item)`, separately on gapless rows
/// (filled-gap effect, all terms expected positive) and gapped rows
/// (unlicensed-gap effect, all terms expected negative).
pub fn directional_island_tests(
    scores: &[RegionScore],
    construction: Construction,
    alpha: f64,
) -> Result<[(LmmFit, Verdict); 2]> {
    let factors = [Factor::Filler, Factor::Island];
    let names = ["filler", "island", "filler:island"];
    let fge = fit_lmm(&rows_for(scores, construction, |s| s.gap == Sign::Minus), &factors)?;
    let uge = fit_lmm(&rows_for(scores, construction, |s| s.gap == Sign::Plus), &factors)?;
    let fge_terms: Vec<&TermEstimate> = names.iter().map(|n| term(&fge, n)).collect();
    let uge_terms: Vec<&TermEstimate> = names.iter().map(|n| term(&uge, n)).collect();
    let fge_verdict = Verdict {
        construction,
        analysis: Analysis::Fge,
        pass: fge_rule(&fge_terms, alpha),
        detail: describe(&fge_terms),
    };
    let uge_verdict = Verdict {
        construction,
        analysis: Analysis::Uge,
        pass: uge_rule(&uge_terms, alpha),
        detail: describe(&uge_terms),
    };
    Ok([(fge, fge_verdict), (uge, uge_verdict)])
}

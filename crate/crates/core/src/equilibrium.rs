//! Pure-strategy price equilibria with correct expectations.
//!
//! Each firm's reaction to a rival price is a root of its equilibrium FOC
//! (expectations already set to posted prices). Iterating reactions from the
//! lowest and from the highest prices brackets all equilibria of the
//! supermodular game; the two limits are polished by Newton steps.

use rayon::prelude::*;
use serde::Serialize;

use crate::demand::{demand_pair, surplus, DemandBreakdown, Surplus};
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::firm::{self, best_response};
use crate::market::{Firm, MarketParams, PriceProfile, Variant};

/// Convergence tolerance of the reaction iteration on price updates.
pub const PRICE_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 10_000;
/// Extremal limits further apart than this are distinct equilibria.
pub const DISTINCT_TOL: f64 = 1e-6;
/// Points in the reaction-root scan.
const ROOT_SCAN: usize = 64;
/// Step of the best-response slope differences.
const SLOPE_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Multiplicity {
    UniqueFound,
    MultipleFound,
    /// A price sits at cost or at 1 without a vanishing FOC.
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Start {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub px: f64,
    pub py: f64,
    pub demands: [DemandBreakdown; 2],
    pub profits: [f64; 2],
    pub foc_residuals: [f64; 2],
    pub soc: [f64; 2],
    pub stable: bool,
    pub br_slopes: [f64; 2],
    pub br_slope_product: f64,
    /// `Π(−cross/soc)` from the analytic derivatives (known valuations only).
    pub ift_slope_product: Option<f64>,
    pub dp_ds: Option<[f64; 2]>,
    pub multiplicity: Multiplicity,
    pub start: Start,
    pub iterations: usize,
    pub surplus: Surplus,
}

impl EquilibriumResult {
    pub fn prices(&self) -> PriceProfile {
        PriceProfile::pure(self.px, self.py)
    }

    pub fn price(&self, i: Firm) -> f64 {
        match i {
            Firm::X => self.px,
            Firm::Y => self.py,
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.foc_residuals[0].abs().max(self.foc_residuals[1].abs())
    }
}

fn pair(i: Firm, p_i: f64, p_j: f64) -> (f64, f64) {
    match i {
        Firm::X => (p_i, p_j),
        Firm::Y => (p_j, p_i),
    }
}

fn foc_at(market: &MarketParams, i: Firm, p_i: f64, p_j: f64) -> Result<f64> {
    let (px, py) = pair(i, p_i, p_j);
    firm::equilibrium_foc(market, px, py, i)
}

fn residuals(market: &MarketParams, px: f64, py: f64) -> Result<[f64; 2]> {
    Ok([
        firm::equilibrium_foc(market, px, py, Firm::X)?,
        firm::equilibrium_foc(market, px, py, Firm::Y)?,
    ])
}

fn bisect_root<F: Fn(f64) -> Result<f64>>(mut pos: f64, mut neg: f64, g: F) -> Result<f64> {
    // g(pos) > 0, g(neg) ≤ 0; the interval may be oriented either way
    for _ in 0..100 {
        if (pos - neg).abs() <= 1e-15 {
            break;
        }
        let mid = 0.5 * (pos + neg);
        if g(mid)? > 0.0 {
            pos = mid;
        } else {
            neg = mid;
        }
    }
    Ok(0.5 * (pos + neg))
}

/// Smallest (`Start::Low`) or largest (`Start::High`) root in `[c_i, 1]` of
/// firm `i`'s equilibrium FOC against `p_j`.
pub fn reaction(market: &MarketParams, i: Firm, p_j: f64, start: Start) -> Result<f64> {
    let c = market.cost(i);
    let g = |p: f64| foc_at(market, i, p, p_j);
    let grid: Vec<f64> = (0..ROOT_SCAN)
        .map(|k| c + (1.0 - c) * k as f64 / (ROOT_SCAN - 1) as f64)
        .collect();
    match start {
        Start::Low => {
            let mut prev = grid[0];
            for (k, &x) in grid.iter().enumerate() {
                if g(x)? <= 0.0 {
                    return if k == 0 { Ok(x) } else { bisect_root(prev, x, g) };
                }
                prev = x;
            }
            Ok(1.0)
        }
        Start::High => {
            let mut next = 1.0;
            for (k, &x) in grid.iter().enumerate().rev() {
                if g(x)? >= 0.0 {
                    if k == grid.len() - 1 {
                        return Ok(x);
                    }
                    // the root is where g turns nonpositive above x
                    return if g(x)? > 0.0 { bisect_root(x, next, g) } else { Ok(x) };
                }
                next = x;
            }
            Ok(c)
        }
    }
}

/// Alternating reaction iteration from `(c_X, c_Y)` or `(1, 1)`.
/// Returns the limit and the number of rounds.
pub fn iterate(market: &MarketParams, start: Start) -> Result<((f64, f64), usize, Vec<(f64, f64)>)> {
    let mut p = match start {
        Start::Low => (market.cost(Firm::X), market.cost(Firm::Y)),
        Start::High => (1.0, 1.0),
    };
    let mut path = vec![p];
    for round in 1..=MAX_ITERATIONS {
        let px = reaction(market, Firm::X, p.1, start)?;
        let py = reaction(market, Firm::Y, px, start)?;
        let step = (px - p.0).abs().max((py - p.1).abs());
        p = (px, py);
        path.push(p);
        if step <= PRICE_TOL {
            return Ok((p, round, path));
        }
    }
    let tail = path[path.len().saturating_sub(10)..].to_vec();
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        tail,
    })
}

fn in_box(market: &MarketParams, p: (f64, f64)) -> bool {
    p.0 >= market.cost(Firm::X) && p.0 <= 1.0 && p.1 >= market.cost(Firm::Y) && p.1 <= 1.0
}

fn jacobian_fd(market: &MarketParams, p: (f64, f64), h: f64) -> Result<[[f64; 2]; 2]> {
    let mut j = [[0.0; 2]; 2];
    for col in 0..2 {
        let (mut up, mut dn) = (p, p);
        if col == 0 {
            up.0 += h;
            dn.0 -= h;
        } else {
            up.1 += h;
            dn.1 -= h;
        }
        let fu = residuals(market, up.0, up.1)?;
        let fd = residuals(market, dn.0, dn.1)?;
        for row in 0..2 {
            j[row][col] = (fu[row] - fd[row]) / (2.0 * h);
        }
    }
    Ok(j)
}

fn solve2(j: [[f64; 2]; 2], r: [f64; 2]) -> Option<[f64; 2]> {
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if !det.is_finite() || det.abs() < 1e-300 {
        return None;
    }
    Some([
        (r[0] * j[1][1] - r[1] * j[0][1]) / det,
        (j[0][0] * r[1] - j[1][0] * r[0]) / det,
    ])
}

fn norm(r: [f64; 2]) -> f64 {
    r[0].abs().max(r[1].abs())
}

/// Damped Newton on the pair of equilibrium FOCs. Steps leaving the price box
/// are halved; a step is kept only if it lowers the residual.
pub fn newton_polish(market: &MarketParams, p: (f64, f64)) -> Result<(f64, f64)> {
    let h = if market.variant == Variant::Unknown { 1e-5 } else { 1e-7 };
    let mut p = p;
    let mut r = residuals(market, p.0, p.1)?;
    for _ in 0..50 {
        if norm(r) <= 1e-13 {
            break;
        }
        let Some(step) = solve2(jacobian_fd(market, p, h)?, r) else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let q = (p.0 - t * step[0], p.1 - t * step[1]);
            if in_box(market, q) {
                let rq = residuals(market, q.0, q.1)?;
                if norm(rq) < norm(r) {
                    p = q;
                    r = rq;
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(p)
}

/// Slopes of the two best responses at an equilibrium: the rival price and
/// its expectation move together, the firm's own expectation stays put.
pub fn best_response_slopes(market: &MarketParams, px: f64, py: f64) -> Result<[f64; 2]> {
    let mut out = [0.0; 2];
    for i in Firm::BOTH {
        let j = i.other();
        let star = PriceProfile::pure(px, py);
        let br = |pj: f64| -> Result<f64> {
            let mut ce = (star.ce_x, star.ce_y);
            match j {
                Firm::X => ce.0 = pj,
                Firm::Y => ce.1 = pj,
            }
            Ok(best_response(market, pj, ce, i)?.price)
        };
        let pj = star.p(j);
        let h = SLOPE_STEP;
        let (lo, hi) = ((pj - h).max(0.0), (pj + h).min(1.0));
        out[i.index()] = (br(hi)? - br(lo)?) / (hi - lo);
    }
    Ok(out)
}

/// Stability from finite-difference best-response slopes.
pub fn stability(market: &MarketParams, px: f64, py: f64) -> Result<(bool, [f64; 2], f64)> {
    if market.effective_s() >= 1.0 && market.variant == Variant::Known {
        return Ok((true, [0.0, 0.0], 0.0));
    }
    let slopes = best_response_slopes(market, px, py)?;
    let product = slopes[0] * slopes[1];
    Ok((product.abs() < 1.0, slopes, product))
}

/// `Π_i (−cross_i / soc_i)` at pure prices.
pub fn ift_slope_product(market: &MarketParams, px: f64, py: f64) -> Result<f64> {
    let p = PriceProfile::pure(px, py);
    let mut prod = 1.0;
    for i in Firm::BOTH {
        prod *= -firm::cross_partial(market, &p, i)? / firm::soc(market, &p, i)?;
    }
    Ok(prod)
}

/// Jacobian of the equilibrium FOCs in `(p_X, p_Y)`.
pub fn foc_jacobian(market: &MarketParams, px: f64, py: f64) -> Result<[[f64; 2]; 2]> {
    match market.variant {
        Variant::Known => Ok([
            [
                firm::dfoc_star_dp_own(market, px, py, Firm::X)?,
                firm::dfoc_star_dp_rival(market, px, py, Firm::X)?,
            ],
            [
                firm::dfoc_star_dp_rival(market, px, py, Firm::Y)?,
                firm::dfoc_star_dp_own(market, px, py, Firm::Y)?,
            ],
        ]),
        Variant::FullInformation => jacobian_fd(market, (px, py), 1e-6),
        Variant::Unknown => jacobian_fd(market, (px, py), 1e-5),
    }
}

fn foc_ds(market: &MarketParams, px: f64, py: f64) -> Result<[f64; 2]> {
    match market.variant {
        Variant::Known => Ok([
            firm::dfoc_ds(market, px, py, Firm::X)?,
            firm::dfoc_ds(market, px, py, Firm::Y)?,
        ]),
        Variant::FullInformation => Ok([0.0, 0.0]),
        Variant::Unknown => {
            let h = 1e-5;
            let lo = (market.s - h).max(0.0);
            let hi = market.s + h;
            let a = residuals(&market.with_s(hi), px, py)?;
            let b = residuals(&market.with_s(lo), px, py)?;
            Ok([(a[0] - b[0]) / (hi - lo), (a[1] - b[1]) / (hi - lo)])
        }
    }
}

/// `dP*/ds` from `J · dP = −∂FOC*/∂s`.
pub fn price_sensitivity(market: &MarketParams, px: f64, py: f64) -> Result<Option<[f64; 2]>> {
    let rhs = foc_ds(market, px, py)?;
    if rhs == [0.0, 0.0] {
        return Ok(Some([0.0, 0.0]));
    }
    let j = foc_jacobian(market, px, py)?;
    Ok(solve2(j, [-rhs[0], -rhs[1]]))
}

fn soc_pair(market: &MarketParams, px: f64, py: f64) -> Result<[f64; 2]> {
    let p = PriceProfile::pure(px, py);
    let mut out = [0.0; 2];
    for i in Firm::BOTH {
        out[i.index()] = match market.variant {
            Variant::Known => firm::soc(market, &p, i)?,
            _ => {
                let h = 1e-4;
                let up = firm::price_derivative(market, &p.with_p(i, p.p(i) + h), i)?;
                let dn = firm::price_derivative(market, &p.with_p(i, p.p(i) - h), i)?;
                (up - dn) / (2.0 * h)
            }
        };
    }
    Ok(out)
}

fn at_boundary(market: &MarketParams, px: f64, py: f64, res: [f64; 2]) -> bool {
    Firm::BOTH.into_iter().any(|i| {
        let p = if i == Firm::X { px } else { py };
        let edge = (p - market.cost(i)).abs() < 1e-12 || (p - 1.0).abs() < 1e-12;
        edge && res[i.index()].abs() > 1e-8
    })
}

/// Full record of a candidate equilibrium.
pub fn evaluate(
    market: &MarketParams,
    px: f64,
    py: f64,
    start: Start,
    iterations: usize,
    multiplicity: Multiplicity,
) -> Result<EquilibriumResult> {
    let prices = PriceProfile::pure(px, py);
    let demands = demand_pair(market, &prices)?;
    let profits = [
        (px - market.cost(Firm::X)) * demands[0].total,
        (py - market.cost(Firm::Y)) * demands[1].total,
    ];
    let foc_residuals = residuals(market, px, py)?;
    let (stable, br_slopes, br_slope_product) = stability(market, px, py)?;
    let ift = match market.variant {
        Variant::Known => Some(ift_slope_product(market, px, py)?),
        _ => None,
    };
    let multiplicity = if multiplicity == Multiplicity::UniqueFound && at_boundary(market, px, py, foc_residuals) {
        Multiplicity::Boundary
    } else {
        multiplicity
    };
    let dp_ds = if multiplicity == Multiplicity::Boundary {
        None
    } else {
        price_sensitivity(market, px, py)?
    };
    Ok(EquilibriumResult {
        px,
        py,
        demands,
        profits,
        foc_residuals,
        soc: soc_pair(market, px, py)?,
        stable,
        br_slopes,
        br_slope_product,
        ift_slope_product: ift,
        dp_ds,
        multiplicity,
        start,
        iterations,
        surplus: surplus(market, &prices)?,
    })
}

/// Iteration limit polished by Newton. A symmetric market whose reaction
/// iteration cycles (kinked profits can make reactions jump) falls back to
/// the direct symmetric solve.
fn polished(market: &MarketParams, start: Start) -> Result<((f64, f64), usize)> {
    let (p, rounds) = match iterate(market, start) {
        Ok((p, rounds, _)) => (p, rounds),
        Err(e @ Error::NoConvergence { .. }) => return symmetric_fallback(market, start, e),
        Err(e) => return Err(e),
    };
    let r = residuals(market, p.0, p.1)?;
    let p = if norm(r) <= PRICE_TOL { p } else { newton_polish(market, p)? };
    Ok((p, rounds))
}

/// True when both firms share law, cost and share.
pub fn is_symmetric(market: &MarketParams) -> bool {
    let (x, y) = (market.firm(Firm::X), market.firm(Firm::Y));
    x.dist == y.dist && x.cost == y.cost && (x.mu - y.mu).abs() <= 1e-12
}

/// Symmetric equilibria `p_X = p_Y = p` of a symmetric market: roots of
/// `FOC*(p; p)` where it turns from positive to nonpositive. Jumps of the
/// FOC (kinked profit) are not roots and are discarded.
pub fn symmetric_roots(market: &MarketParams) -> Result<Vec<f64>> {
    let c = market.cost(Firm::X);
    let g = |p: f64| firm::equilibrium_foc(market, p, p, Firm::X);
    let n = 400;
    let mut roots = Vec::new();
    let mut prev = (c, g(c)?);
    if prev.1 <= 0.0 {
        roots.push(c);
    }
    for k in 1..=n {
        let x = c + (1.0 - c) * k as f64 / n as f64;
        let gx = g(x)?;
        if prev.1 > 0.0 && gx <= 0.0 {
            let r = bisect_root(prev.0, x, g)?;
            if g(r)?.abs() <= 1e-8 || r >= 1.0 - 1e-12 {
                roots.push(r);
            }
        }
        prev = (x, gx);
    }
    Ok(roots)
}

fn symmetric_fallback(market: &MarketParams, start: Start, err: Error) -> Result<((f64, f64), usize)> {
    if !is_symmetric(market) {
        return Err(err);
    }
    let roots = symmetric_roots(market)?;
    let p = match start {
        Start::Low => roots.first(),
        Start::High => roots.last(),
    };
    match p {
        Some(&p) => Ok(((p, p), 0)),
        None => Err(err),
    }
}

/// Extremal equilibria: one entry when both iterations meet, otherwise the
/// low-price and the high-price equilibrium.
pub fn solve(market: &MarketParams) -> Result<Vec<EquilibriumResult>> {
    let (lo, lo_rounds) = polished(market, Start::Low)?;
    let (hi, hi_rounds) = polished(market, Start::High)?;
    if (lo.0 - hi.0).abs().max((lo.1 - hi.1).abs()) > DISTINCT_TOL {
        Ok(vec![
            evaluate(market, lo.0, lo.1, Start::Low, lo_rounds, Multiplicity::MultipleFound)?,
            evaluate(market, hi.0, hi.1, Start::High, hi_rounds, Multiplicity::MultipleFound)?,
        ])
    } else {
        Ok(vec![evaluate(market, hi.0, hi.1, Start::High, hi_rounds, Multiplicity::UniqueFound)?])
    }
}

/// Highest-price equilibrium, the natural focal point.
pub fn solve_highest(market: &MarketParams) -> Result<EquilibriumResult> {
    Ok(solve(market)?.pop().expect("solve returns at least one equilibrium"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum SweepParam {
    S,
    CX,
    CY,
    MuX,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s" => Ok(SweepParam::S),
            "cX" | "cx" => Ok(SweepParam::CX),
            "cY" | "cy" => Ok(SweepParam::CY),
            "muX" | "mux" => Ok(SweepParam::MuX),
            _ => Err(Error::InvalidArgument(format!(
                "sweep parameter must be one of s, cX, cY, muX; got {s:?}"
            ))),
        }
    }
}

impl SweepParam {
    pub fn apply(self, market: &MarketParams, value: f64) -> Result<MarketParams> {
        match self {
            SweepParam::S => MarketParams::new(market.firms.clone(), value, market.variant),
            SweepParam::CX => market.with_cost(Firm::X, value),
            SweepParam::CY => market.with_cost(Firm::Y, value),
            SweepParam::MuX => market.with_mu_x(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub px: f64,
    pub py: f64,
    pub pi_x: f64,
    pub pi_y: f64,
    pub cs: f64,
    pub ts: f64,
    pub exit: f64,
    pub search: f64,
    pub switch_x: f64,
    pub switch_y: f64,
}

pub const SWEEP_HEADER: &str = "param,pX,pY,piX,piY,CS,TS,exit,search,switchX,switchY";

impl SweepRow {
    fn from_prices(market: &MarketParams, param: f64, px: f64, py: f64) -> Result<Self> {
        let sp = surplus(market, &PriceProfile::pure(px, py))?;
        Ok(Self {
            param,
            px,
            py,
            pi_x: sp.producer_profit_x,
            pi_y: sp.producer_profit_y,
            cs: sp.consumer_surplus,
            ts: sp.total_surplus,
            exit: sp.exit_mass,
            search: sp.search_mass,
            switch_x: sp.switch_share_x,
            switch_y: sp.switch_share_y,
        })
    }

    pub fn values(&self) -> [f64; 11] {
        [
            self.param,
            self.px,
            self.py,
            self.pi_x,
            self.pi_y,
            self.cs,
            self.ts,
            self.exit,
            self.search,
            self.switch_x,
            self.switch_y,
        ]
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.values().iter().map(|&v| crate::report::fmt_num(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn cold_point(market: &MarketParams, param: SweepParam, v: f64) -> Result<SweepRow> {
    let m = param.apply(market, v)?;
    let (p, _) = polished(&m, Start::High)?;
    SweepRow::from_prices(&m, v, p.0, p.1)
}

/// Highest-price equilibrium along `grid`. Sequential mode continues from the
/// previous point by Newton steps, falling back to a cold solve; parallel
/// mode solves every point cold.
pub fn sweep(market: &MarketParams, param: SweepParam, grid: &[f64], deterministic: bool) -> Result<Vec<SweepRow>> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("sweep grid must be sorted ascending".into()));
    }
    if !deterministic {
        return grid.par_iter().map(|&v| cold_point(market, param, v)).collect();
    }
    let mut rows = Vec::with_capacity(grid.len());
    let mut prev: Option<(f64, f64)> = None;
    for &v in grid {
        let m = param.apply(market, v)?;
        let warm = match prev {
            Some(p0) if in_box(&m, p0) => {
                let p = newton_polish(&m, p0)?;
                let ok = norm(residuals(&m, p.0, p.1)?) <= 1e-11 && stays_highest(&m, p)?;
                ok.then_some(p)
            }
            _ => None,
        };
        let p = match warm {
            Some(p) => p,
            None => polished(&m, Start::High)?.0,
        };
        rows.push(SweepRow::from_prices(&m, v, p.0, p.1)?);
        prev = Some(p);
    }
    Ok(rows)
}

/// A continued point is accepted only if no reaction lies above it, i.e.
/// the high iteration could not end higher.
fn stays_highest(market: &MarketParams, p: (f64, f64)) -> Result<bool> {
    let rx = reaction(market, Firm::X, p.1, Start::High)?;
    let ry = reaction(market, Firm::Y, p.0, Start::High)?;
    Ok((rx - p.0).abs() <= 1e-9 && (ry - p.1).abs() <= 1e-9)
}

/// Monopoly price `argmax (P − c)(1 − F(P))` on `[c, 1]`.
pub fn monopoly_price(dist: &Distribution, c: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::InvalidArgument(format!("cost must lie in [0,1), got {c}")));
    }
    let profit = |p: f64| (p - c) * (1.0 - dist.cdf(p));
    // left derivative, so a density drop at p counts against raising it
    let slope = |p: f64| -> Result<f64> {
        let f = if p > 0.0 { dist.pdf_left(p) } else { dist.pdf(p) };
        Ok(1.0 - dist.cdf(p) - (p - c) * f)
    };
    let n = 2000;
    let grid: Vec<f64> = (0..=n).map(|k| c + (1.0 - c) * k as f64 / n as f64).collect();
    let k = (0..=n)
        .max_by(|&a, &b| profit(grid[a]).total_cmp(&profit(grid[b])))
        .expect("nonempty grid");
    let lo = grid[k.saturating_sub(1)];
    let hi = grid[(k + 1).min(n)];
    let candidate = if slope(lo)? > 0.0 && slope(hi)? <= 0.0 {
        bisect_root(lo, hi, slope)?
    } else {
        golden_section_max(lo, hi, profit)
    };
    Ok(if profit(candidate) >= profit(grid[k]) { candidate } else { grid[k] })
}

fn golden_section_max<F: Fn(f64) -> f64>(mut a: f64, mut b: f64, f: F) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-12 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if f(x1) < f(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    0.5 * (a + b)
}

//! Exact demands, surplus accounting and decision-region maps.
//!
//! Demands are computed per initial population: consumers who start at
//! `home` either stay (with or without searching), switch to the rival, or
//! exit. A firm's demand is its own population's stayers plus the rival
//! population's switchers. Inner integrals over the home valuation are
//! closed-form through the cdf; the outer integral uses kink-split
//! Gauss–Legendre.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::market::{decide, ConsumerOutcome, Firm, MarketParams, PriceProfile, Variant};
use crate::quad::integrate_kinked;

/// Where the mass of one initial population ends up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopulationFlows {
    pub home: Firm,
    pub mass: f64,
    pub stay_no_search: f64,
    pub stay_after_search: f64,
    pub switch_out: f64,
    pub search: f64,
    pub exit: f64,
}

/// A firm's demand by origin, plus market-wide exit and search masses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DemandBreakdown {
    pub firm: Firm,
    pub loyal_no_search: f64,
    pub loyal_after_search: f64,
    pub switchers_in: f64,
    pub total: f64,
    /// Exit over both populations.
    pub exit_mass: f64,
    /// Searchers over both populations.
    pub search_mass: f64,
    /// Exit among this firm's initial population.
    pub home_exit: f64,
    /// Searchers among this firm's initial population.
    pub home_search: f64,
}

/// Masses below quadrature resolution are zero.
fn nonneg(x: f64) -> f64 {
    if x.abs() < 1e-13 {
        0.0
    } else {
        x
    }
}

/// Flows of the population initially at `home`, for any variant.
pub fn population_flows(
    market: &MarketParams,
    prices: &PriceProfile,
    home: Firm,
) -> Result<PopulationFlows> {
    let other = home.other();
    let mu = market.mu(home);
    let (fh, fo) = (market.dist(home), market.dist(other));
    let (ph, po, ce_o) = (prices.p(home), prices.p(other), prices.ce(other));
    let s = market.effective_s();

    let (stay_ns, stay_as, switch, search) = match market.variant {
        Variant::Known => {
            let stay_k = Kernel::new(fh, fo);
            let threshold = po.max(ce_o + s);
            let stay_total = 1.0 - stay_k.cdf_mass(ph, threshold)?;
            let stay_ns = 1.0 - stay_k.cdf_mass(ph, ce_o + s)?;
            let switch = 1.0 - Kernel::new(fo, fh).cdf_mass(threshold, ph)?;
            let search = stay_k.cdf_tail(ph, ce_o + s)?;
            (stay_ns, stay_total - stay_ns, switch, search)
        }
        Variant::FullInformation => {
            let stay = 1.0 - Kernel::new(fh, fo).cdf_mass(ph, po)?;
            let switch = 1.0 - Kernel::new(fo, fh).cdf_mass(po, ph)?;
            (stay, 0.0, switch, switch)
        }
        Variant::Unknown => {
            let r = fo.reservation_value(s) - ce_o;
            if r < 0.0 {
                (1.0 - fh.cdf(ph), 0.0, 0.0, 0.0)
            } else {
                let top = (ph + r).min(1.0);
                let mut kinks = fh.knots();
                kinks.push(ph);
                kinks.push(top);
                kinks.extend(fo.knots().into_iter().map(|b| b - po + ph));
                let stay_ns = 1.0 - fh.cdf(ph + r);
                let stay_as = integrate_kinked(ph, top, &kinks, |v| fo.cdf(po + v - ph) * fh.pdf(v))?;
                let switch = integrate_kinked(0.0, top, &kinks, |v| {
                    (1.0 - fo.cdf(po + (v - ph).max(0.0))) * fh.pdf(v)
                })?;
                (stay_ns, stay_as, switch, fh.cdf(ph + r))
            }
        }
    };
    let stay_ns = nonneg(mu * stay_ns);
    let stay_as = nonneg(mu * stay_as);
    let switch = nonneg(mu * switch);
    let search = nonneg(mu * search);
    let exit = nonneg(mu - stay_ns - stay_as - switch);
    for (name, v) in [
        ("stay", stay_ns),
        ("stay-after-search", stay_as),
        ("switch", switch),
        ("search", search),
        ("exit", exit),
    ] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Quadrature(format!(
                "population at {home}: {name} mass {v} is not a nonnegative number"
            )));
        }
    }
    Ok(PopulationFlows {
        home,
        mass: mu,
        stay_no_search: stay_ns,
        stay_after_search: stay_as,
        switch_out: switch,
        search,
        exit,
    })
}

fn combine(i: Firm, own: &PopulationFlows, rival: &PopulationFlows) -> DemandBreakdown {
    DemandBreakdown {
        firm: i,
        loyal_no_search: own.stay_no_search,
        loyal_after_search: own.stay_after_search,
        switchers_in: rival.switch_out,
        total: own.stay_no_search + own.stay_after_search + rival.switch_out,
        exit_mass: own.exit + rival.exit,
        search_mass: own.search + rival.search,
        home_exit: own.exit,
        home_search: own.search,
    }
}

/// Demand of firm `i` under whatever variant the market carries.
pub fn demand_breakdown(market: &MarketParams, prices: &PriceProfile, i: Firm) -> Result<DemandBreakdown> {
    let own = population_flows(market, prices, i)?;
    let rival = population_flows(market, prices, i.other())?;
    Ok(combine(i, &own, &rival))
}

/// Both firms' demands, X first.
pub fn demand_pair(market: &MarketParams, prices: &PriceProfile) -> Result<[DemandBreakdown; 2]> {
    let fx = population_flows(market, prices, Firm::X)?;
    let fy = population_flows(market, prices, Firm::Y)?;
    Ok([combine(Firm::X, &fx, &fy), combine(Firm::Y, &fy, &fx)])
}

/// Demand when consumers know both valuations before deciding to search.
pub fn demand(market: &MarketParams, prices: &PriceProfile, i: Firm) -> Result<DemandBreakdown> {
    demand_breakdown(&market.with_variant(Variant::Known), prices, i)
}

/// Full-information demand: mass with `v_i − p_i ≥ max(0, v_j − p_j)`.
pub fn demand_fullinfo(market: &MarketParams, px: f64, py: f64, i: Firm) -> Result<f64> {
    let m = market.with_variant(Variant::FullInformation);
    Ok(demand_breakdown(&m, &PriceProfile::pure(px, py), i)?.total)
}

/// Demand when the rival valuation is learned only by searching.
pub fn demand_unknown(market: &MarketParams, prices: &PriceProfile, i: Firm) -> Result<DemandBreakdown> {
    demand_breakdown(&market.with_variant(Variant::Unknown), prices, i)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Surplus {
    pub consumer_surplus: f64,
    pub producer_profit_x: f64,
    pub producer_profit_y: f64,
    pub total_surplus: f64,
    pub exit_mass: f64,
    pub search_mass: f64,
    pub switch_share_x: f64,
    pub switch_share_y: f64,
}

/// Expected utility of the population initially at `home`, as a mass-weighted total.
pub fn population_consumer_surplus(
    market: &MarketParams,
    prices: &PriceProfile,
    home: Firm,
) -> Result<f64> {
    let other = home.other();
    let mu = market.mu(home);
    let (fh, fo) = (market.dist(home), market.dist(other));
    let (ph, po, ce_o) = (prices.p(home), prices.p(other), prices.ce(other));
    let s = market.effective_s();
    // ∫_{v ≥ x} (v − ph) dF_h
    let net_above = |x: f64| fh.partial_net_mean(x, ph);

    let per_capita = match market.variant {
        Variant::FullInformation => {
            let mut kinks = fo.knots();
            kinks.push(po);
            kinks.extend(fh.knots().into_iter().map(|b| b - ph + po));
            integrate_kinked(0.0, 1.0, &kinks, |vo| {
                let q = (vo - po).max(0.0);
                (q + fh.expected_excess(ph + q)) * fo.pdf(vo)
            })?
        }
        Variant::Known => {
            let mut kinks = fo.knots();
            kinks.push(po);
            kinks.push(ce_o + s);
            for b in fh.knots() {
                kinks.push(b - ph + ce_o + s);
                kinks.push(b - ph + po);
            }
            integrate_kinked(0.0, 1.0, &kinks, |vo| {
                let t = vo - ce_o - s;
                let value = if t < 0.0 {
                    fh.expected_excess(ph)
                } else {
                    let a = ph + t;
                    let q = (vo - po).max(0.0);
                    let kink = ph + q;
                    let mut searched = q * fh.cdf(a.min(kink)) - s * fh.cdf(a);
                    if a > kink {
                        searched += net_above(kink) - net_above(a);
                    }
                    net_above(a) + searched
                };
                value * fo.pdf(vo)
            })?
        }
        Variant::Unknown => {
            let r = fo.reservation_value(s) - ce_o;
            let mut kinks = fh.knots();
            kinks.push(ph);
            if r.is_finite() {
                kinks.push(ph + r);
            }
            kinks.extend(fo.knots().into_iter().map(|b| b - po + ph));
            integrate_kinked(0.0, 1.0, &kinks, |vh| {
                let u = (vh - ph).max(0.0);
                let value = if r < 0.0 || u > r {
                    u
                } else {
                    u + fo.expected_excess(po + u) - s
                };
                value * fh.pdf(vh)
            })?
        }
    };
    Ok(mu * per_capita)
}

pub fn surplus(market: &MarketParams, prices: &PriceProfile) -> Result<Surplus> {
    let [dx, dy] = demand_pair(market, prices)?;
    let cs = population_consumer_surplus(market, prices, Firm::X)?
        + population_consumer_surplus(market, prices, Firm::Y)?;
    let px = (prices.px - market.cost(Firm::X)) * dx.total;
    let py = (prices.py - market.cost(Firm::Y)) * dy.total;
    let share = |d: &DemandBreakdown| {
        if d.total > 0.0 {
            d.switchers_in / d.total
        } else {
            0.0
        }
    };
    Ok(Surplus {
        consumer_surplus: cs,
        producer_profit_x: px,
        producer_profit_y: py,
        total_surplus: cs + px + py,
        exit_mass: dx.exit_mass,
        search_mass: dx.search_mass,
        switch_share_x: share(&dx),
        switch_share_y: share(&dy),
    })
}

/// Outcome of every cell centre of an `n × n` grid over `(v_X, v_Y)`.
/// Rows run over `v_Y`, columns over `v_X`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    pub grid_n: usize,
    pub home: Firm,
    pub cells: Vec<ConsumerOutcome>,
}

impl RegionMap {
    pub fn center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.grid_n as f64
    }

    pub fn at(&self, col_x: usize, row_y: usize) -> ConsumerOutcome {
        self.cells[row_y * self.grid_n + col_x]
    }

    /// Fraction of cells per outcome, in [`ConsumerOutcome::ALL`] order.
    pub fn fractions(&self) -> [f64; 5] {
        let mut counts = [0usize; 5];
        for c in &self.cells {
            counts[c.index()] += 1;
        }
        let n = self.cells.len() as f64;
        counts.map(|c| c as f64 / n)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("vx,vy,outcome\n");
        for row in 0..self.grid_n {
            for col in 0..self.grid_n {
                out.push_str(&format!(
                    "{},{},{}\n",
                    crate::report::fmt_num(self.center(col)),
                    crate::report::fmt_num(self.center(row)),
                    self.at(col, row)
                ));
            }
        }
        out
    }

    /// Flat-colour SVG, one rectangle per run of equal cells in a row.
    pub fn to_svg(&self, size_px: usize) -> String {
        let n = self.grid_n;
        let cell = size_px as f64 / n as f64;
        let legend_h = 5 * 18 + 10;
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size_px}\" height=\"{}\" shape-rendering=\"crispEdges\">\n",
            size_px + legend_h
        );
        for row in 0..n {
            // v_Y increases upwards
            let y = (n - 1 - row) as f64 * cell;
            let mut col = 0;
            while col < n {
                let o = self.at(col, row);
                let start = col;
                while col < n && self.at(col, row) == o {
                    col += 1;
                }
                out.push_str(&format!(
                    "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"{}\"/>\n",
                    start as f64 * cell,
                    y,
                    (col - start) as f64 * cell,
                    cell,
                    outcome_color(o)
                ));
            }
        }
        for (k, o) in ConsumerOutcome::ALL.iter().enumerate() {
            let y = size_px + 8 + k * 18;
            out.push_str(&format!(
                "<rect x=\"4\" y=\"{y}\" width=\"12\" height=\"12\" fill=\"{}\"/><text x=\"22\" y=\"{}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
                outcome_color(*o),
                y + 11,
                o
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}

pub fn outcome_color(o: ConsumerOutcome) -> &'static str {
    match o {
        ConsumerOutcome::BuyHomeNoSearch => "#e8a33d",
        ConsumerOutcome::ExitNoSearch => "#ffffff",
        ConsumerOutcome::SearchBuyHome => "#c9d94f",
        ConsumerOutcome::SearchSwitch => "#3d7fe8",
        ConsumerOutcome::SearchExit => "#b0b0b0",
    }
}

/// Classifies grid cell centres with the consumer decision rule.
pub fn region_map(
    market: &MarketParams,
    prices: &PriceProfile,
    home: Firm,
    grid_n: usize,
) -> Result<RegionMap> {
    if grid_n < 2 {
        return Err(Error::InvalidArgument(format!("grid_n must be at least 2, got {grid_n}")));
    }
    let center = |k: usize| (k as f64 + 0.5) / grid_n as f64;
    let cells: Vec<ConsumerOutcome> = (0..grid_n)
        .into_par_iter()
        .flat_map_iter(|row| {
            let vy = center(row);
            (0..grid_n).map(move |col| {
                let vx = center(col);
                let (vh, vo) = match home {
                    Firm::X => (vx, vy),
                    Firm::Y => (vy, vx),
                };
                decide(market, home, vh, vo, prices)
            })
        })
        .collect();
    Ok(RegionMap {
        grid_n,
        home,
        cells,
    })
}

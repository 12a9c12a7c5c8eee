//! Profit and its derivatives in own and rival price and in the search cost.
//!
//! Notation inside: firm `i` faces rival `j`. Consumers searching firm `k`
//! buy there only above the threshold `max(p_k, ce_k + s)`; the indicator
//! `p_i > ce_i + s` (strict, so the derivative at equality is the left
//! limit) switches on the hold-up margin among arriving switchers.
//!
//! Densities with jumps (every law drops to zero at 1) make the second
//! derivatives pick up point terms; those are included so that the analytic
//! values are the true derivatives of the quadrature profit.

use serde::Serialize;

use crate::demand::demand_breakdown;
use crate::error::Result;
use crate::kernel::Kernel;
use crate::market::{Firm, MarketParams, PriceProfile, Variant};
use crate::quad::integrate_kinked;

/// Grid size of the best-response scan.
pub const BR_GRID: usize = 400;
/// Step of the Richardson-extrapolated numeric price derivative.
pub const NUMERIC_FOC_STEP: f64 = 1e-6;

pub fn profit(market: &MarketParams, prices: &PriceProfile, i: Firm) -> Result<f64> {
    let d = demand_breakdown(market, prices, i)?;
    Ok((prices.p(i) - market.cost(i)) * d.total)
}

struct Terms<'a> {
    kernel: Kernel<'a>,
    mu_i: f64,
    mu_j: f64,
    margin: f64,
    p_i: f64,
    p_j: f64,
    /// Threshold in `v_j` above which home consumers leave for `j`.
    stay_kink: f64,
    /// Effective price faced by arriving switchers.
    switch_price: f64,
    holdup: bool,
}

impl<'a> Terms<'a> {
    fn new(market: &'a MarketParams, prices: &PriceProfile, i: Firm) -> Self {
        let j = i.other();
        let s = market.s;
        let (p_i, p_j) = (prices.p(i), prices.p(j));
        Self {
            kernel: Kernel::new(market.dist(i), market.dist(j)),
            mu_i: market.mu(i),
            mu_j: market.mu(j),
            margin: p_i - market.cost(i),
            p_i,
            p_j,
            stay_kink: p_j.max(prices.ce(j) + s),
            switch_price: p_i.max(prices.ce(i) + s),
            holdup: p_i > prices.ce(i) + s,
        }
    }

    /// Marginal buyers: `−∂D_i/∂p_i`.
    fn marginal(&self) -> Result<f64> {
        let mut m = self.mu_i * self.kernel.pdf_mass(self.p_i, self.stay_kink)?;
        if self.holdup {
            m += self.mu_j * self.kernel.pdf_mass(self.switch_price, self.p_j)?;
        }
        Ok(m)
    }
}

fn known(market: &MarketParams) -> MarketParams {
    market.with_variant(Variant::Known)
}

/// `∂π_i/∂p_i` with consumer expectations held fixed.
pub fn foc(market: &MarketParams, prices: &PriceProfile, i: Firm) -> Result<f64> {
    let m = known(market);
    let t = Terms::new(&m, prices, i);
    let d = demand_breakdown(&m, prices, i)?.total;
    Ok(d - t.margin * t.marginal()?)
}

/// `∂²π_i/∂p_i²` with expectations fixed.
pub fn soc(market: &MarketParams, prices: &PriceProfile, i: Firm) -> Result<f64> {
    let m = known(market);
    let t = Terms::new(&m, prices, i);
    let mut curvature = t.mu_i * t.kernel.pdf_mass_da(t.p_i, t.stay_kink)?;
    if t.holdup {
        curvature += t.mu_j * t.kernel.pdf_mass_da(t.switch_price, t.p_j)?;
    }
    Ok(-2.0 * t.marginal()? - t.margin * curvature)
}

/// `∂²π_i/∂p_i∂p_j` where the rival's price and the consumers' expectation
/// of it move together.
pub fn cross_partial(market: &MarketParams, prices: &PriceProfile, i: Firm) -> Result<f64> {
    let m = known(market);
    let t = Terms::new(&m, prices, i);
    let k = t.kernel;
    let demand_shift =
        t.mu_i * k.pdf_tail(t.p_i, t.stay_kink)? + t.mu_j * k.pdf_tail(t.switch_price, t.p_j)?;
    let mut marginal_shift = t.mu_i * k.pdf_mass_dm(t.p_i, t.stay_kink)?;
    if t.holdup {
        marginal_shift += t.mu_j * k.pdf_mass_dm(t.switch_price, t.p_j)?;
    }
    Ok(demand_shift - t.margin * marginal_shift)
}

/// First-order condition with expectations equal to posted prices, as one
/// integral over the rival valuation.
pub fn foc_star(market: &MarketParams, px: f64, py: f64, i: Firm) -> Result<f64> {
    let j = i.other();
    let prices = PriceProfile::pure(px, py);
    let (fi, fj) = (market.dist(i), market.dist(j));
    let (p_i, p_j) = (prices.p(i), prices.p(j));
    let (mu_i, mu_j) = (market.mu(i), market.mu(j));
    let margin = p_i - market.cost(i);
    let s = market.s;
    let mut kinks = fj.knots();
    kinks.push(p_j);
    kinks.push(p_j + s);
    for b in fi.knots() {
        kinks.push(b - p_i + p_j + s);
        kinks.push(b - p_i - s + p_j);
    }
    // own density from below, as in the two-integral form
    let own_pdf = |x: f64| if x > 0.0 { fi.pdf_left(x) } else { fi.pdf(x) };
    integrate_kinked(0.0, 1.0, &kinks, |v| {
        let stay_arg = p_i + (v - p_j - s).max(0.0);
        let switch_arg = p_i + s + (v - p_j).max(0.0);
        (1.0 - mu_i * fi.cdf(stay_arg) - mu_j * fi.cdf(switch_arg) - margin * mu_i * own_pdf(stay_arg))
            * fj.pdf(v)
    })
}

/// `∂FOC*_i/∂p_i`: own-price slope when expectations track the price.
pub fn dfoc_star_dp_own(market: &MarketParams, px: f64, py: f64, i: Firm) -> Result<f64> {
    let j = i.other();
    let prices = PriceProfile::pure(px, py);
    let k = Kernel::new(market.dist(i), market.dist(j));
    Ok(soc(market, &prices, i)? - market.mu(j) * k.pdf_mass(prices.p(i) + market.s, prices.p(j))?)
}

/// `∂FOC*_i/∂p_j`; equals the cross-partial at pure prices.
pub fn dfoc_star_dp_rival(market: &MarketParams, px: f64, py: f64, i: Firm) -> Result<f64> {
    cross_partial(market, &PriceProfile::pure(px, py), i)
}

/// `∂FOC*_i/∂s`.
pub fn dfoc_ds(market: &MarketParams, px: f64, py: f64, i: Firm) -> Result<f64> {
    let j = i.other();
    let prices = PriceProfile::pure(px, py);
    let (p_i, p_j) = (prices.p(i), prices.p(j));
    let s = market.s;
    let k = Kernel::new(market.dist(i), market.dist(j));
    let (mu_i, mu_j) = (market.mu(i), market.mu(j));
    let margin = p_i - market.cost(i);
    Ok(mu_i * k.pdf_tail(p_i, p_j + s)?
        - mu_j * k.pdf_mass(p_i + s, p_j)?
        - margin * mu_i * k.pdf_mass_dm(p_i, p_j + s)?)
}

/// Full-information first-order condition.
pub fn foc_fullinfo(market: &MarketParams, px: f64, py: f64, i: Firm) -> Result<f64> {
    let j = i.other();
    let prices = PriceProfile::pure(px, py);
    let (p_i, p_j) = (prices.p(i), prices.p(j));
    let k = Kernel::new(market.dist(i), market.dist(j));
    let demand = 1.0 - k.cdf_mass(p_i, p_j)?;
    Ok(demand - (p_i - market.cost(i)) * k.pdf_mass(p_i, p_j)?)
}

/// Richardson-extrapolated central difference of profit in own price,
/// expectations fixed.
pub fn foc_numeric(market: &MarketParams, prices: &PriceProfile, i: Firm) -> Result<f64> {
    let central = |h: f64| -> Result<f64> {
        let up = profit(market, &prices.with_p(i, prices.p(i) + h), i)?;
        let down = profit(market, &prices.with_p(i, prices.p(i) - h), i)?;
        Ok((up - down) / (2.0 * h))
    };
    let h = NUMERIC_FOC_STEP;
    let coarse = central(h)?;
    let fine = central(0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Own-price derivative of profit with expectations fixed, under the
/// market's variant.
pub fn price_derivative(market: &MarketParams, prices: &PriceProfile, i: Firm) -> Result<f64> {
    match market.variant {
        Variant::Known => foc(market, prices, i),
        Variant::FullInformation => foc_fullinfo(market, prices.px, prices.py, i),
        Variant::Unknown => foc_numeric(market, prices, i),
    }
}

/// The equilibrium condition of firm `i` at posted prices `(px, py)` with
/// expectations equal to them.
pub fn equilibrium_foc(market: &MarketParams, px: f64, py: f64, i: Firm) -> Result<f64> {
    match market.variant {
        Variant::Known => foc_star(market, px, py, i),
        Variant::FullInformation => foc_fullinfo(market, px, py, i),
        Variant::Unknown => foc_numeric(market, &PriceProfile::pure(px, py), i),
    }
}

/// True when the own price sits on the hold-up threshold, where the
/// derivative is one-sided.
pub fn near_indicator_threshold(market: &MarketParams, prices: &PriceProfile, i: Firm) -> bool {
    market.variant == Variant::Known && (prices.p(i) - prices.ce(i) - market.s).abs() < 1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirmCalculusReport {
    pub firm: Firm,
    pub profit: f64,
    pub foc: f64,
    pub soc: f64,
    pub cross_partial: f64,
    pub foc_star: f64,
    pub dfoc_ds: f64,
    /// Own price within 1e-12 of `ce + s`: derivatives there are left limits.
    pub one_sided: bool,
}

pub fn calculus_report(market: &MarketParams, prices: &PriceProfile, i: Firm) -> Result<FirmCalculusReport> {
    Ok(FirmCalculusReport {
        firm: i,
        profit: profit(market, prices, i)?,
        foc: foc(market, prices, i)?,
        soc: soc(market, prices, i)?,
        cross_partial: cross_partial(market, prices, i)?,
        foc_star: foc_star(market, prices.px, prices.py, i)?,
        dfoc_ds: dfoc_ds(market, prices.px, prices.py, i)?,
        one_sided: near_indicator_threshold(market, prices, i),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestResponse {
    pub price: f64,
    pub profit: f64,
    /// The maximiser is `c_i` or 1.
    pub boundary: bool,
    /// The grid scan found separated candidates within 1e-9 of the maximum.
    pub multiple_maxima: bool,
}

fn bisect<F: Fn(f64) -> Result<f64>>(mut lo: f64, mut hi: f64, f: F) -> Result<f64> {
    // f(lo) > 0 ≥ f(hi)
    for _ in 0..200 {
        if hi - lo <= 1e-15 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn golden_max<F: Fn(f64) -> Result<f64>>(mut a: f64, mut b: f64, f: F) -> Result<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while b - a > 1e-12 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Profit-maximising price of firm `i` against rival price `p_j`, with the
/// consumers' expectations `ce = (ce_X, ce_Y)` held fixed.
pub fn best_response(
    market: &MarketParams,
    p_j: f64,
    ce: (f64, f64),
    i: Firm,
) -> Result<BestResponse> {
    let c = market.cost(i);
    let base = {
        let mut p = PriceProfile::new(0.0, 0.0, ce.0, ce.1);
        p.set_p(i.other(), p_j);
        p
    };
    let at = |x: f64| base.with_p(i, x);
    let grid: Vec<f64> = (0..BR_GRID)
        .map(|k| c + (1.0 - c) * k as f64 / (BR_GRID - 1) as f64)
        .collect();
    let values = grid
        .iter()
        .map(|&x| profit(market, &at(x), i))
        .collect::<Result<Vec<_>>>()?;
    let (k, &best) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");
    let multiple_maxima = values
        .iter()
        .enumerate()
        .any(|(m, &v)| m.abs_diff(k) > 1 && v >= best - 1e-9 && best > 1e-9);

    let deriv = |x: f64| price_derivative(market, &at(x), i);
    let last = grid.len() - 1;
    let price = if k == 0 && deriv(grid[0])? <= 0.0 {
        grid[0]
    } else if k == last && deriv(grid[last])? >= 0.0 {
        grid[last]
    } else {
        let lo = grid[k.saturating_sub(1)];
        let hi = grid[(k + 1).min(last)];
        if deriv(lo)? > 0.0 && deriv(hi)? <= 0.0 {
            bisect(lo, hi, deriv)?
        } else {
            golden_max(lo, hi, |x| profit(market, &at(x), i))?
        }
    };
    let value = profit(market, &at(price), i)?;
    let (price, value) = if value >= best { (price, value) } else { (grid[k], best) };
    Ok(BestResponse {
        price,
        profit: value,
        boundary: price <= c || price >= 1.0,
        multiple_maxima,
    })
}

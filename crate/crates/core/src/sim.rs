//! Monte Carlo oracle: sampled consumers run `decide` and the counts are
//! compared with the quadrature demands.
//!
//! Consumer `k` draws from its own ChaCha stream (`stream = k`), so the
//! sample does not depend on how rayon schedules the work. Per-chunk tallies
//! are reduced in chunk order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::demand::DemandBreakdown;
use crate::error::{Error, Result};
use crate::market::{decide, utility, ConsumerOutcome, Firm, MarketParams, PriceProfile};

/// Smallest sample accepted by [`simulate`].
pub const MIN_SAMPLE: usize = 10_000;
/// Consumers per tally chunk.
const CHUNK: usize = 4096;
/// Pass threshold of [`compare`].
pub const Z_LIMIT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// A population share from a count, with the binomial standard error.
    fn share(count: u64, n: usize) -> Self {
        let p = count as f64 / n as f64;
        Self {
            value: p,
            se: (p * (1.0 - p) / n as f64).sqrt(),
        }
    }
}

/// Sampled counterpart of [`DemandBreakdown`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimBreakdown {
    pub firm: Firm,
    pub loyal_no_search: Estimate,
    pub loyal_after_search: Estimate,
    pub switchers_in: Estimate,
    pub total: Estimate,
    pub home_exit: Estimate,
    pub home_search: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub n: usize,
    pub seed: u64,
    pub demands: [SimBreakdown; 2],
    pub exit_mass: Estimate,
    pub search_mass: Estimate,
    pub consumer_surplus: Estimate,
}

impl SimReport {
    pub fn demand(&self, i: Firm) -> &SimBreakdown {
        &self.demands[i.index()]
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    // [home][outcome]
    counts: [[u64; 5]; 2],
    utility: f64,
    utility_sq: f64,
}

impl Tally {
    fn merge(mut self, o: &Tally) -> Tally {
        for h in 0..2 {
            for k in 0..5 {
                self.counts[h][k] += o.counts[h][k];
            }
        }
        self.utility += o.utility;
        self.utility_sq += o.utility_sq;
        self
    }
}

/// Pairwise reduction in slice order.
fn reduce(t: &[Tally]) -> Tally {
    match t.len() {
        0 => Tally::default(),
        1 => t[0],
        n => reduce(&t[..n / 2]).merge(&reduce(&t[n / 2..])),
    }
}

fn consumer(market: &MarketParams, prices: &PriceProfile, base: &ChaCha8Rng, k: u64) -> (Firm, ConsumerOutcome, f64) {
    let mut rng = base.clone();
    rng.set_stream(k);
    let home = if rng.gen::<f64>() < market.mu(Firm::X) {
        Firm::X
    } else {
        Firm::Y
    };
    let vx = market.dist(Firm::X).sample(&mut rng);
    let vy = market.dist(Firm::Y).sample(&mut rng);
    let (v_home, v_other) = match home {
        Firm::X => (vx, vy),
        Firm::Y => (vy, vx),
    };
    let o = decide(market, home, v_home, v_other, prices);
    (home, o, utility(o, home, v_home, v_other, prices, market.effective_s()))
}

/// Draws `n` consumers and tallies what they do at `prices`.
pub fn simulate(market: &MarketParams, prices: &PriceProfile, n: usize, seed: u64) -> Result<SimReport> {
    if n < MIN_SAMPLE {
        return Err(Error::InvalidArgument(format!(
            "sample size must be at least {MIN_SAMPLE}, got {n}"
        )));
    }
    prices.validate(market)?;
    let base = ChaCha8Rng::seed_from_u64(seed);
    let chunks = n.div_ceil(CHUNK);
    let tallies: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut t = Tally::default();
            for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let (home, o, u) = consumer(market, prices, &base, k as u64);
                t.counts[home.index()][o.index()] += 1;
                t.utility += u;
                t.utility_sq += u * u;
            }
            t
        })
        .collect();
    let t = reduce(&tallies);

    use ConsumerOutcome::*;
    let c = |h: Firm, o: ConsumerOutcome| t.counts[h.index()][o.index()];
    let breakdown = |i: Firm| {
        let j = i.other();
        let loyal_ns = c(i, BuyHomeNoSearch);
        let loyal_as = c(i, SearchBuyHome);
        let sw = c(j, SearchSwitch);
        SimBreakdown {
            firm: i,
            loyal_no_search: Estimate::share(loyal_ns, n),
            loyal_after_search: Estimate::share(loyal_as, n),
            switchers_in: Estimate::share(sw, n),
            total: Estimate::share(loyal_ns + loyal_as + sw, n),
            home_exit: Estimate::share(c(i, ExitNoSearch) + c(i, SearchExit), n),
            home_search: Estimate::share(c(i, SearchBuyHome) + c(i, SearchSwitch) + c(i, SearchExit), n),
        }
    };
    let demands = [breakdown(Firm::X), breakdown(Firm::Y)];
    let exit = [Firm::X, Firm::Y]
        .iter()
        .map(|&h| c(h, ExitNoSearch) + c(h, SearchExit))
        .sum();
    let search = [Firm::X, Firm::Y]
        .iter()
        .map(|&h| c(h, SearchBuyHome) + c(h, SearchSwitch) + c(h, SearchExit))
        .sum();
    let nf = n as f64;
    let mean = t.utility / nf;
    let var = (t.utility_sq / nf - mean * mean).max(0.0);
    Ok(SimReport {
        n,
        seed,
        demands,
        exit_mass: Estimate::share(exit, n),
        search_mass: Estimate::share(search, n),
        consumer_surplus: Estimate {
            value: mean,
            se: (var / nf).sqrt(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZRow {
    pub component: String,
    pub simulated: f64,
    pub exact: f64,
    pub se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZTable {
    pub rows: Vec<ZRow>,
    pub max_abs_z: f64,
    pub pass: bool,
}

/// Standardised gap. The binomial error is taken at the larger of the
/// sampled and exact shares so a component the sample missed entirely still
/// gets a finite score; both sides zero scores 0.
fn z_share(sim: f64, exact: f64, n: usize) -> (f64, f64) {
    let var = (sim * (1.0 - sim)).max(exact * (1.0 - exact)).max(0.0);
    let se = (var / n as f64).sqrt();
    let gap = sim - exact;
    let z = if gap == 0.0 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY.copysign(gap)
    } else {
        gap / se
    };
    (se, z)
}

/// z-scores of every demand component, and of consumer surplus when `cs` is
/// given. Passes iff every `|z| ≤ 4`.
pub fn compare(sim: &SimReport, exact: &[DemandBreakdown; 2], cs: Option<f64>) -> ZTable {
    let mut rows = Vec::new();
    let mut push = |component: String, s: f64, e: f64| {
        let (se, z) = z_share(s, e, sim.n);
        rows.push(ZRow {
            component,
            simulated: s,
            exact: e,
            se,
            z,
        });
    };
    for (d, e) in sim.demands.iter().zip(exact) {
        let f = d.firm;
        push(format!("{f}.loyal_no_search"), d.loyal_no_search.value, e.loyal_no_search);
        push(format!("{f}.loyal_after_search"), d.loyal_after_search.value, e.loyal_after_search);
        push(format!("{f}.switchers_in"), d.switchers_in.value, e.switchers_in);
        push(format!("{f}.total"), d.total.value, e.total);
        push(format!("{f}.home_exit"), d.home_exit.value, e.home_exit);
        push(format!("{f}.home_search"), d.home_search.value, e.home_search);
    }
    push("exit_mass".into(), sim.exit_mass.value, exact[0].exit_mass);
    push("search_mass".into(), sim.search_mass.value, exact[0].search_mass);
    if let Some(cs) = cs {
        let est = sim.consumer_surplus;
        let gap = est.value - cs;
        let z = if gap == 0.0 { 0.0 } else { gap / est.se };
        rows.push(ZRow {
            component: "consumer_surplus".into(),
            simulated: est.value,
            exact: cs,
            se: est.se,
            z,
        });
    }
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    ZTable {
        pass: max_abs_z <= Z_LIMIT,
        max_abs_z,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{demand_pair, surplus};
    use crate::dist::Distribution;
    use crate::market::Variant;

    fn fig1() -> (MarketParams, PriceProfile) {
        (
            MarketParams::symmetric(Distribution::uniform(), 0.0, 0.1, Variant::Known).unwrap(),
            PriceProfile::pure(0.6, 0.45),
        )
    }

    #[test]
    fn small_samples_rejected() {
        let (m, p) = fig1();
        assert!(simulate(&m, &p, 9_999, 1).is_err());
    }

    #[test]
    fn same_seed_same_report() {
        let (m, p) = fig1();
        let a = simulate(&m, &p, 50_000, 7).unwrap();
        let b = simulate(&m, &p, 50_000, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate(&m, &p, 50_000, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn schedule_does_not_matter() {
        let (m, p) = fig1();
        let a = simulate(&m, &p, 30_000, 3).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate(&m, &p, 30_000, 3).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn no_search_when_search_is_dear() {
        let (m, p) = fig1();
        let m = m.with_s(1.0);
        let r = simulate(&m, &p, 20_000, 1).unwrap();
        assert_eq!(r.search_mass.value, 0.0);
        assert_eq!(r.demand(Firm::X).switchers_in.value, 0.0);
        let t = compare(&r, &demand_pair(&m, &p).unwrap(), None);
        let row = t.rows.iter().find(|r| r.component == "X.switchers_in").unwrap();
        assert_eq!(row.z, 0.0);
    }

    #[test]
    fn matches_quadrature() {
        let (m, p) = fig1();
        let r = simulate(&m, &p, 200_000, 11).unwrap();
        let cs = surplus(&m, &p).unwrap().consumer_surplus;
        let t = compare(&r, &demand_pair(&m, &p).unwrap(), Some(cs));
        assert!(t.pass, "{t:#?}");
    }

    #[test]
    fn perturbed_exact_leg_is_caught() {
        let (m, p) = fig1();
        let r = simulate(&m, &p, 200_000, 11).unwrap();
        let off = demand_pair(&m, &PriceProfile::pure(0.62, 0.45)).unwrap();
        assert!(!compare(&r, &off, None).pass);
    }

    #[test]
    fn z_of_two_zeros_is_zero() {
        assert_eq!(z_share(0.0, 0.0, 10_000), (0.0, 0.0));
        assert!(z_share(0.0, 0.01, 10_000).1 < -9.0);
    }
}

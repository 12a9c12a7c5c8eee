//! Market records and the consumer decision rule.
//!
//! Ties (all measure-zero under continuous laws) resolve as: search at
//! indifference, buy over exit, home firm over rival. The Monte Carlo oracle
//! and the quadrature demands share these rules.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};

/// Firm identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Firm {
    X,
    Y,
}

impl Firm {
    pub const BOTH: [Firm; 2] = [Firm::X, Firm::Y];

    pub fn other(self) -> Firm {
        match self {
            Firm::X => Firm::Y,
            Firm::Y => Firm::X,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Firm::X => 0,
            Firm::Y => 1,
        }
    }
}

impl fmt::Display for Firm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Firm::X => "X",
            Firm::Y => "Y",
        })
    }
}

impl std::str::FromStr for Firm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" | "x" => Ok(Firm::X),
            "Y" | "y" => Ok(Firm::Y),
            _ => Err(Error::InvalidArgument(format!("unknown firm {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Variant {
    /// Consumers know both valuations before searching.
    #[default]
    #[serde(rename = "known")]
    Known,
    /// The rival valuation is learned together with its price.
    #[serde(rename = "unknown")]
    Unknown,
    /// Both prices observed for free.
    #[serde(rename = "full-information", alias = "full")]
    FullInformation,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Known => "known",
            Variant::Unknown => "unknown",
            Variant::FullInformation => "full-information",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmParams {
    pub cost: f64,
    pub mu: f64,
    pub dist: Distribution,
}

/// Two firms, a search cost and the information variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarket")]
pub struct MarketParams {
    pub firms: [FirmParams; 2],
    pub s: f64,
    #[serde(default)]
    pub variant: Variant,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    firms: Vec<FirmParams>,
    s: f64,
    #[serde(default)]
    variant: Variant,
}

impl TryFrom<RawMarket> for MarketParams {
    type Error = Error;

    fn try_from(raw: RawMarket) -> Result<Self> {
        let firms: [FirmParams; 2] = raw.firms.try_into().map_err(|v: Vec<FirmParams>| {
            Error::InvalidMarket(format!("expected exactly 2 firms, got {}", v.len()))
        })?;
        MarketParams::new(firms, raw.s, raw.variant)
    }
}

impl MarketParams {
    pub fn new(firms: [FirmParams; 2], s: f64, variant: Variant) -> Result<Self> {
        for (k, f) in firms.iter().enumerate() {
            if !(f.cost.is_finite() && (0.0..1.0).contains(&f.cost)) {
                return Err(Error::InvalidMarket(format!(
                    "firms[{k}].cost must lie in [0,1), got {}",
                    f.cost
                )));
            }
            if !(f.mu.is_finite() && (0.0..=1.0).contains(&f.mu)) {
                return Err(Error::InvalidMarket(format!(
                    "firms[{k}].mu must lie in [0,1], got {}",
                    f.mu
                )));
            }
        }
        if (firms[0].mu + firms[1].mu - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMarket(format!(
                "shares must sum to 1, got {} + {}",
                firms[0].mu, firms[1].mu
            )));
        }
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::InvalidMarket(format!(
                "search cost must be finite and nonnegative, got {s}"
            )));
        }
        Ok(Self { firms, s, variant })
    }

    /// Both firms share one law, cost and initial share `1/2`.
    pub fn symmetric(dist: Distribution, cost: f64, s: f64, variant: Variant) -> Result<Self> {
        Self::with_shares(dist, 0.5, [cost, cost], s, variant)
    }

    pub fn with_shares(
        dist: Distribution,
        mu_x: f64,
        costs: [f64; 2],
        s: f64,
        variant: Variant,
    ) -> Result<Self> {
        Self::new(
            [
                FirmParams {
                    cost: costs[0],
                    mu: mu_x,
                    dist: dist.clone(),
                },
                FirmParams {
                    cost: costs[1],
                    mu: 1.0 - mu_x,
                    dist,
                },
            ],
            s,
            variant,
        )
    }

    pub fn firm(&self, i: Firm) -> &FirmParams {
        &self.firms[i.index()]
    }

    pub fn firm_mut(&mut self, i: Firm) -> &mut FirmParams {
        &mut self.firms[i.index()]
    }

    pub fn mu(&self, i: Firm) -> f64 {
        self.firm(i).mu
    }

    pub fn cost(&self, i: Firm) -> f64 {
        self.firm(i).cost
    }

    pub fn dist(&self, i: Firm) -> &Distribution {
        &self.firm(i).dist
    }

    /// Search cost as seen by consumers; zero under full information.
    pub fn effective_s(&self) -> f64 {
        match self.variant {
            Variant::FullInformation => 0.0,
            _ => self.s,
        }
    }

    pub fn with_s(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.s = s;
        m
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        let mut m = self.clone();
        m.variant = variant;
        m
    }

    pub fn with_cost(&self, i: Firm, cost: f64) -> Result<Self> {
        let mut firms = self.firms.clone();
        firms[i.index()].cost = cost;
        Self::new(firms, self.s, self.variant)
    }

    pub fn with_mu_x(&self, mu_x: f64) -> Result<Self> {
        let mut firms = self.firms.clone();
        firms[0].mu = mu_x;
        firms[1].mu = 1.0 - mu_x;
        Self::new(firms, self.s, self.variant)
    }
}

/// Posted prices and the consumers' certainty-equivalent expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceProfile {
    pub px: f64,
    pub py: f64,
    pub ce_x: f64,
    pub ce_y: f64,
}

impl PriceProfile {
    /// Prices equal to expectations.
    pub fn pure(px: f64, py: f64) -> Self {
        Self {
            px,
            py,
            ce_x: px,
            ce_y: py,
        }
    }

    pub fn new(px: f64, py: f64, ce_x: f64, ce_y: f64) -> Self {
        Self { px, py, ce_x, ce_y }
    }

    pub fn p(&self, i: Firm) -> f64 {
        match i {
            Firm::X => self.px,
            Firm::Y => self.py,
        }
    }

    pub fn ce(&self, i: Firm) -> f64 {
        match i {
            Firm::X => self.ce_x,
            Firm::Y => self.ce_y,
        }
    }

    pub fn set_p(&mut self, i: Firm, v: f64) {
        match i {
            Firm::X => self.px = v,
            Firm::Y => self.py = v,
        }
    }

    pub fn set_ce(&mut self, i: Firm, v: f64) {
        match i {
            Firm::X => self.ce_x = v,
            Firm::Y => self.ce_y = v,
        }
    }

    /// Copy with firm `i`'s posted price replaced.
    pub fn with_p(mut self, i: Firm, v: f64) -> Self {
        self.set_p(i, v);
        self
    }

    /// Checks every price against `[c_i, 1]`.
    pub fn validate(&self, market: &MarketParams) -> Result<()> {
        for i in Firm::BOTH {
            let c = market.cost(i);
            for (name, v) in [("price", self.p(i)), ("expected price", self.ce(i))] {
                if !(v.is_finite() && v >= c - 1e-12 && v <= 1.0 + 1e-12) {
                    return Err(Error::InvalidArgument(format!(
                        "{name} of firm {i} is {v}, outside [{c}, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// What a single consumer ends up doing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsumerOutcome {
    BuyHomeNoSearch,
    ExitNoSearch,
    SearchBuyHome,
    SearchSwitch,
    SearchExit,
}

impl ConsumerOutcome {
    pub const ALL: [ConsumerOutcome; 5] = [
        ConsumerOutcome::BuyHomeNoSearch,
        ConsumerOutcome::ExitNoSearch,
        ConsumerOutcome::SearchBuyHome,
        ConsumerOutcome::SearchSwitch,
        ConsumerOutcome::SearchExit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConsumerOutcome::BuyHomeNoSearch => "buy-home-no-search",
            ConsumerOutcome::ExitNoSearch => "exit-no-search",
            ConsumerOutcome::SearchBuyHome => "search-buy-home",
            ConsumerOutcome::SearchSwitch => "search-switch",
            ConsumerOutcome::SearchExit => "search-exit",
        }
    }

    pub fn searched(self) -> bool {
        matches!(
            self,
            ConsumerOutcome::SearchBuyHome | ConsumerOutcome::SearchSwitch | ConsumerOutcome::SearchExit
        )
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ConsumerOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The pure-strategy certainty-equivalent price: the expected price itself.
/// Mixed expectations would replace this with a conditional mean.
pub fn ce_price(expected: f64) -> f64 {
    expected
}

/// Payoff differences within this are ties, so that prices like 0.6 − 0.5
/// compare as intended.
pub const TIE_TOL: f64 = 1e-12;

/// Final choice among exit, home and rival with the tie rules above.
fn choose_after_search(u_home: f64, u_other: f64) -> ConsumerOutcome {
    if u_home >= -TIE_TOL && u_home >= u_other - TIE_TOL {
        ConsumerOutcome::SearchBuyHome
    } else if u_other >= -TIE_TOL {
        ConsumerOutcome::SearchSwitch
    } else {
        ConsumerOutcome::SearchExit
    }
}

/// Decision of a consumer whose initial firm is `home`, with valuations
/// `v_home` for it and `v_other` for the rival.
pub fn decide(
    market: &MarketParams,
    home: Firm,
    v_home: f64,
    v_other: f64,
    prices: &PriceProfile,
) -> ConsumerOutcome {
    let other = home.other();
    let u_home = v_home - prices.p(home);
    let u_other = v_other - prices.p(other);
    match market.variant {
        Variant::FullInformation => {
            if u_home >= -TIE_TOL && u_home >= u_other - TIE_TOL {
                ConsumerOutcome::BuyHomeNoSearch
            } else if u_other >= -TIE_TOL {
                ConsumerOutcome::SearchSwitch
            } else {
                ConsumerOutcome::ExitNoSearch
            }
        }
        Variant::Known => {
            let s = market.s;
            let stay = u_home.max(0.0);
            if v_other - ce_price(prices.ce(other)) - s >= stay - TIE_TOL {
                choose_after_search(u_home, u_other)
            } else if u_home >= -TIE_TOL {
                ConsumerOutcome::BuyHomeNoSearch
            } else {
                ConsumerOutcome::ExitNoSearch
            }
        }
        Variant::Unknown => {
            let s = market.s;
            let stay = u_home.max(0.0);
            // E[max(stay, t − ce)] − stay = E[(t − ce − stay)^+]
            let gain = market
                .dist(other)
                .expected_excess(ce_price(prices.ce(other)) + stay);
            if gain - s >= -TIE_TOL {
                choose_after_search(u_home, u_other)
            } else if u_home >= -TIE_TOL {
                ConsumerOutcome::BuyHomeNoSearch
            } else {
                ConsumerOutcome::ExitNoSearch
            }
        }
    }
}

/// Realised payoff of an outcome. Search outcomes pay `s`.
pub fn utility(
    outcome: ConsumerOutcome,
    home: Firm,
    v_home: f64,
    v_other: f64,
    prices: &PriceProfile,
    s: f64,
) -> f64 {
    let other = home.other();
    match outcome {
        ConsumerOutcome::BuyHomeNoSearch => v_home - prices.p(home),
        ConsumerOutcome::ExitNoSearch => 0.0,
        ConsumerOutcome::SearchBuyHome => v_home - prices.p(home) - s,
        ConsumerOutcome::SearchSwitch => v_other - prices.p(other) - s,
        ConsumerOutcome::SearchExit => -s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig1(s: f64) -> (MarketParams, PriceProfile) {
        (
            MarketParams::symmetric(Distribution::uniform(), 0.0, s, Variant::Known).unwrap(),
            PriceProfile::pure(0.6, 0.45),
        )
    }

    #[test]
    fn fig1_points() {
        let (m, p) = fig1(0.1);
        assert_eq!(decide(&m, Firm::X, 0.9, 0.2, &p), ConsumerOutcome::BuyHomeNoSearch);
        assert_eq!(decide(&m, Firm::X, 0.1, 0.9, &p), ConsumerOutcome::SearchSwitch);
        assert_eq!(decide(&m, Firm::X, 0.0, 0.0, &p), ConsumerOutcome::ExitNoSearch);
        assert_eq!(decide(&m, Firm::Y, 0.0, 0.0, &p), ConsumerOutcome::ExitNoSearch);
    }

    #[test]
    fn utilities() {
        let (_, p) = fig1(0.1);
        let u = utility(ConsumerOutcome::SearchSwitch, Firm::X, 0.1, 0.9, &p, 0.1);
        assert!((u - 0.35).abs() < 1e-15);
        assert_eq!(utility(ConsumerOutcome::ExitNoSearch, Firm::X, 0.3, 0.3, &p, 0.1), 0.0);
        assert_eq!(utility(ConsumerOutcome::SearchExit, Firm::X, 0.3, 0.3, &p, 0.1), -0.1);
    }

    #[test]
    fn ce_price_is_identity() {
        for x in [0.6, 0.0, 0.2, 1.0] {
            assert_eq!(ce_price(x), x);
        }
    }

    #[test]
    fn tie_rules() {
        let (m, _) = fig1(0.1);
        // indifferent to searching: searches
        let p = PriceProfile::pure(0.5, 0.5);
        assert!(decide(&m, Firm::X, 0.5, 0.6, &p).searched());
        // searched and indifferent between home and rival: home
        let p = PriceProfile::new(0.5, 0.5, 0.5, 0.3);
        assert_eq!(decide(&m, Firm::X, 0.7, 0.7, &p), ConsumerOutcome::SearchBuyHome);
        // zero surplus at home without search: buys
        let p = PriceProfile::pure(0.5, 0.9);
        assert_eq!(decide(&m, Firm::X, 0.5, 0.0, &p), ConsumerOutcome::BuyHomeNoSearch);
    }

    #[test]
    fn holdup_buyers_act_on_posted_prices() {
        // expected rival price 0.3 makes searching worthwhile; the posted 0.7
        // then sends the searcher back home
        let (m, _) = fig1(0.1);
        let p = PriceProfile::new(0.5, 0.7, 0.5, 0.3);
        assert_eq!(decide(&m, Firm::X, 0.6, 0.8, &p), ConsumerOutcome::SearchBuyHome);
        assert_eq!(decide(&m, Firm::X, 0.4, 0.8, &p), ConsumerOutcome::SearchSwitch);
        assert_eq!(decide(&m, Firm::X, 0.4, 0.65, &p), ConsumerOutcome::SearchExit);
    }

    #[test]
    fn unknown_variant_searches_on_expected_gain() {
        let m = MarketParams::symmetric(Distribution::uniform(), 0.0, 0.05, Variant::Unknown)
            .unwrap();
        let p = PriceProfile::pure(0.5, 0.5);
        // stay = 0: gain = (1 − 0.5)²/2 = 0.125 ≥ 0.05
        assert!(decide(&m, Firm::X, 0.2, 0.0, &p).searched());
        // stay = 0.3: gain = 0.2²/2 = 0.02 < 0.05
        assert_eq!(decide(&m, Firm::X, 0.8, 1.0, &p), ConsumerOutcome::BuyHomeNoSearch);
    }

    #[test]
    fn full_information_choice() {
        let m = MarketParams::symmetric(Distribution::uniform(), 0.0, 0.3, Variant::FullInformation)
            .unwrap();
        let p = PriceProfile::pure(0.4, 0.4);
        assert_eq!(decide(&m, Firm::X, 0.5, 0.9, &p), ConsumerOutcome::SearchSwitch);
        assert_eq!(decide(&m, Firm::X, 0.9, 0.5, &p), ConsumerOutcome::BuyHomeNoSearch);
        assert_eq!(decide(&m, Firm::X, 0.1, 0.2, &p), ConsumerOutcome::ExitNoSearch);
        assert_eq!(m.effective_s(), 0.0);
    }

    #[test]
    fn market_validation() {
        let d = Distribution::uniform();
        assert!(MarketParams::with_shares(d.clone(), 0.5, [1.0, 0.0], 0.1, Variant::Known).is_err());
        assert!(MarketParams::with_shares(d.clone(), 1.2, [0.0, 0.0], 0.1, Variant::Known).is_err());
        assert!(MarketParams::with_shares(d.clone(), 0.5, [0.0, 0.0], -0.1, Variant::Known).is_err());
        let bad = r#"{"firms":[{"cost":0,"mu":0.6,"dist":{"type":"uniform"}},
                               {"cost":0,"mu":0.5,"dist":{"type":"uniform"}}],"s":0.1}"#;
        assert!(serde_json::from_str::<MarketParams>(bad).is_err());
        let good = r#"{"firms":[{"cost":0,"mu":0.5,"dist":{"type":"uniform"}},
                                {"cost":0,"mu":0.5,"dist":{"type":"uniform"}}],"s":0.1,"variant":"known"}"#;
        let m: MarketParams = serde_json::from_str(good).unwrap();
        assert_eq!(m.variant, Variant::Known);
        let extra = r#"{"firms":[{"cost":0,"mu":0.5,"dist":{"type":"uniform"}},
                                 {"cost":0,"mu":0.5,"dist":{"type":"uniform"}}],"s":0.1,"foo":1}"#;
        assert!(serde_json::from_str::<MarketParams>(extra).is_err());
    }

    proptest! {
        #[test]
        fn nobody_searches_at_large_cost(vh in 0.0..=1.0f64, vo in 0.0..=1.0f64,
                                         px in 0.0..=1.0f64, py in 0.0..=1.0f64,
                                         s in 1.0..3.0f64) {
            let m = MarketParams::symmetric(Distribution::uniform(), 0.0, s, Variant::Known).unwrap();
            let p = PriceProfile::pure(px, py);
            for home in Firm::BOTH {
                prop_assert!(!decide(&m, home, vh, vo, &p).searched());
            }
        }

        #[test]
        fn full_information_depends_on_net_values_only(vh in 0.0..=1.0f64, vo in 0.0..=1.0f64,
                                                        px in 0.0..=1.0f64, py in 0.0..=1.0f64,
                                                        shift in -0.3..0.3f64) {
            let m = MarketParams::symmetric(Distribution::uniform(), 0.0, 0.2, Variant::FullInformation).unwrap();
            let a = decide(&m, Firm::X, vh, vo, &PriceProfile::pure(px, py));
            let b = decide(&m, Firm::X, vh + shift, vo + shift, &PriceProfile::pure(px + shift, py + shift));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn utility_of_chosen_outcome_is_best_ex_post(vh in 0.0..=1.0f64, vo in 0.0..=1.0f64,
                                                       px in 0.0..=1.0f64, py in 0.0..=1.0f64,
                                                       s in 0.0..0.5f64) {
            let m = MarketParams::symmetric(Distribution::uniform(), 0.0, s, Variant::Known).unwrap();
            let p = PriceProfile::pure(px, py);
            let o = decide(&m, Firm::X, vh, vo, &p);
            let u = utility(o, Firm::X, vh, vo, &p, s);
            if o.searched() {
                let best = (vh - px).max(vo - py).max(0.0) - s;
                prop_assert!((u - best).abs() < 1e-12);
            } else {
                prop_assert!((u - (vh - px).max(0.0)).abs() < 1e-12);
            }
        }
    }
}

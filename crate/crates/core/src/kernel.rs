//! One-dimensional integrals over the rival valuation that every demand and
//! derivative reduces to.
//!
//! For a firm with law `F_i` facing a rival with law `F_j`, the inner
//! integral over `v_i` is always `F_i` or `f_i` at `a + max(0, v_j − m)`,
//! where `a` is the firm's effective price and `m` the kink in `v_j`.
//! The outer integral over `v_j` is split at `m`, at every breakpoint of
//! `f_j`, and wherever the inner argument crosses a breakpoint of `f_i`
//! (including 1, where `F_i` saturates).

use crate::dist::Distribution;
use crate::error::Result;
use crate::quad::integrate_kinked;

#[derive(Clone, Copy)]
pub(crate) struct Kernel<'a> {
    pub own: &'a Distribution,
    pub rival: &'a Distribution,
}

impl<'a> Kernel<'a> {
    pub fn new(own: &'a Distribution, rival: &'a Distribution) -> Self {
        Self { own, rival }
    }

    fn kinks(&self, a: f64, m: f64) -> Vec<f64> {
        let mut k = self.rival.knots();
        k.push(m);
        k.extend(self.own.knots().into_iter().map(|b| m + b - a));
        k
    }

    fn arg(a: f64, m: f64, v: f64) -> f64 {
        a + (v - m).max(0.0)
    }

    /// `∫ F_i(a + max(0, v − m)) dF_j(v)`.
    pub fn cdf_mass(&self, a: f64, m: f64) -> Result<f64> {
        integrate_kinked(0.0, 1.0, &self.kinks(a, m), |v| {
            self.own.cdf(Self::arg(a, m, v)) * self.rival.pdf(v)
        })
    }

    /// `∫ f_i(a + max(0, v − m)) dF_j(v)`: the left derivative of
    /// [`Self::cdf_mass`] in `a` (at a density break the own density is taken
    /// from below).
    pub fn pdf_mass(&self, a: f64, m: f64) -> Result<f64> {
        Ok(self.rival.cdf(m) * self.own_pdf(a) + self.pdf_tail(a, m)?)
    }

    fn own_pdf(&self, a: f64) -> f64 {
        if a > 0.0 {
            self.own.pdf_left(a)
        } else {
            self.own.pdf(a)
        }
    }

    /// `∫_{v > m} f_i(a + v − m) dF_j(v)`.
    pub fn pdf_tail(&self, a: f64, m: f64) -> Result<f64> {
        integrate_kinked(m.max(0.0), 1.0, &self.kinks(a, m), |v| {
            self.own.pdf(a + v - m) * self.rival.pdf(v)
        })
    }

    /// `∫_{v > m} F_i(a + v − m) dF_j(v)`.
    pub fn cdf_tail(&self, a: f64, m: f64) -> Result<f64> {
        integrate_kinked(m.max(0.0), 1.0, &self.kinks(a, m), |v| {
            self.own.cdf(a + v - m) * self.rival.pdf(v)
        })
    }

    /// Jump contributions `Σ Δ_b f_j(m + b − a)` over density jumps at or
    /// above `a` (a jump exactly at `a > 0` is crossed from below).
    fn jump_terms(&self, a: f64, m: f64) -> f64 {
        self.own
            .jumps()
            .into_iter()
            .filter(|&(b, _)| b > a || (b == a && a > 0.0))
            .map(|(b, delta)| delta * self.rival.pdf(m + b - a))
            .sum()
    }

    /// Left `∂/∂a` of [`Self::pdf_mass`], including density jumps.
    pub fn pdf_mass_da(&self, a: f64, m: f64) -> Result<f64> {
        let slope = if a > 0.0 { self.own.dpdf_left(a) } else { self.own.dpdf(a) };
        let tail = integrate_kinked(m.max(0.0), 1.0, &self.kinks(a, m), |v| {
            self.own.dpdf(a + v - m) * self.rival.pdf(v)
        })?;
        Ok(self.rival.cdf(m) * slope + tail + self.jump_terms(a, m))
    }

    /// `∂/∂m` of [`Self::pdf_mass`], including density jumps.
    pub fn pdf_mass_dm(&self, a: f64, m: f64) -> Result<f64> {
        let smooth = integrate_kinked(m.max(0.0), 1.0, &self.kinks(a, m), |v| {
            self.own.dpdf(a + v - m) * self.rival.pdf(v)
        })?;
        Ok(-smooth - self.jump_terms(a, m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laws() -> Vec<Distribution> {
        vec![
            Distribution::uniform(),
            Distribution::truncated_exponential(1.7).unwrap(),
            Distribution::step(vec![0.5], vec![1.5, 0.5]).unwrap(),
            Distribution::step(vec![0.3, 0.8], vec![0.6, 1.4, 0.6]).unwrap(),
        ]
    }

    #[test]
    fn uniform_closed_forms() {
        let u = Distribution::uniform();
        let k = Kernel::new(&u, &u);
        // ∫ F(0.6 + max(0, v − 0.55)) dv = 0.55·0.6 + ∫_0^0.4 (0.6 + x) dx + 0.05
        let expected = 0.55 * 0.6 + (0.6 * 0.4 + 0.08) + 0.05;
        assert!((k.cdf_mass(0.6, 0.55).unwrap() - expected).abs() < 1e-14);
        assert!((k.pdf_mass(0.6, 0.55).unwrap() - 0.95).abs() < 1e-14);
        assert!((k.pdf_tail(0.6, 0.55).unwrap() - 0.4).abs() < 1e-14);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for own in laws() {
            for rival in laws() {
                let k = Kernel::new(&own, &rival);
                for &(a, m) in &[(0.33, 0.41), (0.62, 0.27), (0.12, 0.9), (0.45, 1.2)] {
                    let fd_a = (k.pdf_mass(a + h, m).unwrap() - k.pdf_mass(a - h, m).unwrap())
                        / (2.0 * h);
                    let fd_m = (k.pdf_mass(a, m + h).unwrap() - k.pdf_mass(a, m - h).unwrap())
                        / (2.0 * h);
                    assert!((fd_a - k.pdf_mass_da(a, m).unwrap()).abs() < 1e-6);
                    assert!((fd_m - k.pdf_mass_dm(a, m).unwrap()).abs() < 1e-6);
                    let fd_cdf_a =
                        (k.cdf_mass(a + h, m).unwrap() - k.cdf_mass(a - h, m).unwrap()) / (2.0 * h);
                    assert!((fd_cdf_a - k.pdf_mass(a, m).unwrap()).abs() < 1e-7);
                    let fd_cdf_m =
                        (k.cdf_mass(a, m + h).unwrap() - k.cdf_mass(a, m - h).unwrap()) / (2.0 * h);
                    assert!((fd_cdf_m + k.pdf_tail(a, m).unwrap()).abs() < 1e-7);
                }
            }
        }
    }
}

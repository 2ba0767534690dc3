use serde::{Deserialize, Serialize};

/// A normalized power-law arc on the unit interval.
///
/// Maps a local coordinate `λ ∈ [0, 1]` to `(τ^p − t_lo^p) / (t_hi^p − t_lo^p)`
/// with `τ = t_lo + (t_hi − t_lo)·λ`. The full arc (`t_lo = 0`, `t_hi = 1`) is
/// `λ^p`; restricting a piece to a sub-interval only moves `[t_lo, t_hi]`, so
/// splitting distributions and curves stays exact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerArc {
    pub exponent: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

const LINEAR_EPS: f64 = 1e-14;

impl PowerArc {
    pub const LINEAR: PowerArc = PowerArc { exponent: 1.0, t_lo: 0.0, t_hi: 1.0 };

    pub fn full(exponent: f64) -> Self {
        PowerArc { exponent, t_lo: 0.0, t_hi: 1.0 }
    }

    pub fn is_linear(&self) -> bool {
        (self.exponent - 1.0).abs() < LINEAR_EPS
    }

    fn width(&self) -> f64 {
        self.t_hi - self.t_lo
    }

    /// `expm1(p·ln(1 + x/t_lo))`, i.e. `((t_lo + x)/t_lo)^p − 1`, for `t_lo > 0`.
    fn rel_growth(&self, x: f64, p: f64) -> f64 {
        (p * (x / self.t_lo).ln_1p()).exp_m1()
    }

    pub fn value(&self, lam: f64) -> f64 {
        let lam = lam.clamp(0.0, 1.0);
        if self.is_linear() {
            return lam;
        }
        let p = self.exponent;
        let x = self.width() * lam;
        if self.t_lo > 0.0 {
            self.rel_growth(x, p) / self.rel_growth(self.width(), p)
        } else {
            (x / self.t_hi).powf(p)
        }
    }

    pub fn inverse_value(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        if self.is_linear() {
            return v;
        }
        let p = self.exponent;
        if self.t_lo > 0.0 {
            let e = self.rel_growth(self.width(), p);
            let x = self.t_lo * ((v * e).ln_1p() / p).exp_m1();
            (x / self.width()).clamp(0.0, 1.0)
        } else {
            v.powf(1.0 / p)
        }
    }

    /// The arc describing the inverse function `v ↦ inverse_value(v)`.
    pub fn inverse(&self) -> PowerArc {
        if self.is_linear() {
            return PowerArc::LINEAR;
        }
        let p = self.exponent;
        PowerArc { exponent: 1.0 / p, t_lo: self.t_lo.powf(p), t_hi: self.t_hi.powf(p) }
    }

    /// `d value / d λ`; infinite at a zero-phase start with exponent below one.
    pub fn derivative(&self, lam: f64) -> f64 {
        if self.is_linear() {
            return 1.0;
        }
        let p = self.exponent;
        let lam = lam.clamp(0.0, 1.0);
        let tau = self.t_lo + self.width() * lam;
        if tau <= 0.0 {
            return if p < 1.0 { f64::INFINITY } else { 0.0 };
        }
        if self.t_lo > 0.0 {
            let span_rel = self.rel_growth(self.width(), p);
            p * (tau / self.t_lo).powf(p - 1.0) * self.width() / self.t_lo / span_rel
        } else {
            p * (tau / self.t_hi).powf(p - 1.0)
        }
    }

    /// `∫_0^λ value(s) ds`.
    pub fn integral(&self, lam: f64) -> f64 {
        let lam = lam.clamp(0.0, 1.0);
        if self.is_linear() {
            return 0.5 * lam * lam;
        }
        let p = self.exponent;
        if self.t_lo > 0.0 {
            let w = self.width();
            let r = w * lam / self.t_lo;
            let span_rel = self.rel_growth(w, p);
            let grown = ((p + 1.0) * r.ln_1p()).exp_m1() / (p + 1.0);
            // t_lo^{p+1}/w·[grown − r] over t_lo^p·span_rel
            self.t_lo / w * (grown - r) / span_rel
        } else {
            let x = lam * self.t_hi;
            (x / self.t_hi).powf(p + 1.0) / (p + 1.0)
        }
    }

    /// The same curve restricted to local coordinates `[l1, l2]`, re-normalized.
    pub fn restrict(&self, l1: f64, l2: f64) -> PowerArc {
        if self.is_linear() {
            return PowerArc::LINEAR;
        }
        let w = self.width();
        PowerArc { exponent: self.exponent, t_lo: self.t_lo + w * l1, t_hi: self.t_lo + w * l2 }
    }

    /// Relative second-order shape: positive for convex, negative for concave.
    pub fn curvature_sign(&self) -> i8 {
        if self.is_linear() {
            0
        } else if self.exponent > 1.0 {
            1
        } else {
            -1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::integrate;

    fn arcs() -> Vec<PowerArc> {
        vec![
            PowerArc::full(2.0),
            PowerArc::full(0.5),
            PowerArc::full(3.7).restrict(0.2, 0.9),
            PowerArc::full(0.3).restrict(0.5, 0.500_01),
            PowerArc::full(1.0 / 2.73),
        ]
    }

    #[test]
    fn inverse_round_trips() {
        for arc in arcs() {
            for i in 0..=20 {
                let l = i as f64 / 20.0;
                let v = arc.value(l);
                assert!((arc.inverse_value(v) - l).abs() < 1e-9, "{arc:?} {l}");
                assert!((arc.inverse().value(v) - l).abs() < 1e-9, "{arc:?} {l}");
            }
        }
    }

    #[test]
    fn integral_matches_quadrature() {
        for arc in arcs() {
            let q = integrate(|l| arc.value(l), 0.0, 0.7, 1e-12);
            assert!((arc.integral(0.7) - q).abs() < 1e-9, "{arc:?}");
        }
    }

    #[test]
    fn restriction_is_a_reparametrized_piece() {
        let arc = PowerArc::full(2.0);
        let sub = arc.restrict(0.5, 1.0);
        // value on [0.5,1] of λ² normalized: (λ² − 0.25)/0.75
        let l = 0.8;
        let expected = (l * l - 0.25) / 0.75;
        assert!((sub.value((l - 0.5) / 0.5) - expected).abs() < 1e-14);
    }

    #[test]
    fn derivative_by_finite_difference() {
        for arc in arcs() {
            let l = 0.4;
            let h = 1e-6;
            let fd = (arc.value(l + h) - arc.value(l - h)) / (2.0 * h);
            assert!((arc.derivative(l) - fd).abs() < 1e-5 * fd.abs().max(1.0), "{arc:?}");
        }
        assert!(PowerArc::full(0.5).derivative(0.0).is_infinite());
    }
}
